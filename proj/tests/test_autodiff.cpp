#include <catch2/catch_amalgamated.hpp>

#include "sgs/gradcheck.hpp"

using namespace sgs;

namespace {

// Independent largest-singular-value oracle: Jacobi eigenvalue iteration
// on W^T W.
double svd_sigma_max(const Tensor& w) {
    i64 rows = w.dim(0), cols = w.dim(1);
    std::vector<double> a(static_cast<size_t>(cols * cols), 0.0);
    for (i64 i = 0; i < cols; ++i)
        for (i64 j = 0; j < cols; ++j) {
            double s = 0;
            for (i64 r = 0; r < rows; ++r) s += w[r * cols + i] * w[r * cols + j];
            a[static_cast<size_t>(i * cols + j)] = s;
        }
    auto at = [&](i64 i, i64 j) -> double& { return a[static_cast<size_t>(i * cols + j)]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (i64 i = 0; i < cols; ++i)
            for (i64 j = i + 1; j < cols; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-18) break;
        for (i64 p = 0; p < cols; ++p)
            for (i64 q = p + 1; q < cols; ++q) {
                if (std::abs(at(p, q)) < 1e-15) continue;
                double theta = 0.5 * std::atan2(2 * at(p, q), at(q, q) - at(p, p));
                double c = std::cos(theta), s = std::sin(theta);
                for (i64 k = 0; k < cols; ++k) {
                    double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (i64 k = 0; k < cols; ++k) {
                    double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    double lam = 0;
    for (i64 i = 0; i < cols; ++i) lam = std::max(lam, at(i, i));
    return std::sqrt(lam);
}

}  // namespace

TEST_CASE("gradient of the identity map is one") {
    Graph g;
    auto x = g.input(Tensor::scalar(3.5), true);
    auto y = g.sum(x);
    g.backward(y);
    REQUIRE(g.grad(x)[0] == 1.0);
}

TEST_CASE("gradient of a Hadamard product w.r.t. one factor is the other") {
    Rng rng(2);
    Tensor zs = Tensor::randn({8}, rng), zr = Tensor::randn({8}, rng);
    Graph g;
    auto a = g.input(zs, true);
    auto b = g.constant(zr);
    auto prod = g.mul(a, b);
    g.backward(g.sum(prod));
    for (i64 i = 0; i < 8; ++i) REQUIRE_THAT(g.grad(a)[i], Catch::Matchers::WithinAbs(zr[i], 1e-15));
}

TEST_CASE("every primitive matches central finite differences") {
    auto reports = run_primitive_gradchecks(2024, 3, 5);
    REQUIRE(reports.size() >= 20);
    for (const auto& r : reports) {
        INFO(r.name << " max rel error " << r.max_rel_error << " over " << r.probes
                    << " probes");
        CHECK(r.pass);
    }
}

TEST_CASE("a corrupted backward implementation is caught by the checker") {
    // Negative control: mul with a deliberately wrong adjoint.
    auto builder = [](Graph& g, const std::vector<Graph::NodeId>& in) {
        const Tensor& av = g.value(in[0]);
        const Tensor& bv = g.value(in[1]);
        Tensor out = av;
        for (i64 i = 0; i < out.numel(); ++i) out[i] *= bv[i];
        auto bad = g.make_node(std::move(out), {in[0], in[1]}, [](Graph& g, Graph::NodeId id) {
            const Tensor& gy = g.node(id).grad;
            // Wrong on purpose: ignores the other factor.
            g.accumulate(g.node(id).inputs[0], gy);
            g.accumulate(g.node(id).inputs[1], gy);
        });
        return g.sum(bad);
    };
    Rng rng(5);
    auto report = check_gradients("corrupted_mul", builder,
                                  {Tensor::randn({6}, rng), Tensor::randn({6}, rng)}, 10,
                                  rng.fork("p"));
    REQUIRE_FALSE(report.pass);
    REQUIRE(report.name == "corrupted_mul");
}

TEST_CASE("softmax output sums to one per position") {
    Rng rng(7);
    Graph g;
    auto x = g.input(Tensor::randn({5, 9}, rng), false);
    auto y = g.softmax_channels(x);
    for (i64 p = 0; p < 9; ++p) {
        double s = 0;
        for (i64 c = 0; c < 5; ++c) s += g.value(y)[c * 9 + p];
        REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("spectral normalization identity cases") {
    SECTION("identity matrix is unchanged") {
        Tensor w({4, 4});
        for (i64 i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
        Rng rng(1);
        Tensor u = Tensor::randn({4}, rng), v = Tensor::randn({4}, rng);
        u.scale_(1.0 / u.norm2());
        v.scale_(1.0 / v.norm2());
        for (int i = 0; i < 50; ++i) spectral_power_iterate(w, 4, 4, u, v);
        Tensor n = spectral_normalize(w, u, v);
        for (i64 i = 0; i < 16; ++i) REQUIRE_THAT(n[i], Catch::Matchers::WithinAbs(w[i], 1e-9));
    }

    SECTION("twice the identity is halved") {
        Tensor w({3, 3});
        for (i64 i = 0; i < 3; ++i) w[i * 3 + i] = 2.0;
        Rng rng(2);
        Tensor u = Tensor::randn({3}, rng), v = Tensor::randn({3}, rng);
        for (int i = 0; i < 50; ++i) spectral_power_iterate(w, 3, 3, u, v);
        Tensor n = spectral_normalize(w, u, v);
        for (i64 i = 0; i < 3; ++i)
            REQUIRE_THAT(n[i * 3 + i], Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("power iteration estimate matches the SVD oracle within 1%") {
    Rng rng(42);
    Tensor w = Tensor::randn({64, 64}, rng);
    Tensor u = Tensor::randn({64}, rng), v = Tensor::randn({64}, rng);
    u.scale_(1.0 / u.norm2());
    v.scale_(1.0 / v.norm2());
    double sigma = 0;
    for (int i = 0; i < 50; ++i) sigma = spectral_power_iterate(w, 64, 64, u, v);
    double oracle = svd_sigma_max(w);
    REQUIRE_THAT(sigma, Catch::Matchers::WithinRel(oracle, 0.01));
}

TEST_CASE("operator norm after normalization stays near or below one") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor w = Tensor::randn({16, 24}, rng);
        Tensor u = Tensor::randn({16}, rng), v = Tensor::randn({24}, rng);
        u.scale_(1.0 / u.norm2());
        v.scale_(1.0 / v.norm2());
        for (int i = 0; i < 20; ++i) spectral_power_iterate(w, 16, 24, u, v);
        Tensor n = spectral_normalize(w, u, v);
        REQUIRE(svd_sigma_max(n) <= 1.0 + 1e-2);
    }
}

TEST_CASE("backward requires a scalar loss") {
    Graph g;
    Rng rng(3);
    auto x = g.input(Tensor::randn({4}, rng), true);
    REQUIRE_THROWS_AS(g.backward(x), ConfigError);
}
