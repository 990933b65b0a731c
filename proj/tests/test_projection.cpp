#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "sgs/projection.hpp"
#include "sgs/rng.hpp"

using namespace sgs;

namespace {

SemanticVolume random_volume(const GridSpec& grid, const LabelSpace& labels, Rng& rng) {
    SemanticVolume v(grid, labels);
    const i64 n = grid.num_voxels();
    const int ch = labels.channels();
    for (i64 vox = 0; vox < n; ++vox) {
        double sum = 0;
        std::vector<double> raw(ch);
        for (int c = 0; c < ch; ++c) {
            raw[c] = rng.uniform(0.05, 1.0);
            sum += raw[c];
        }
        for (int c = 0; c < ch; ++c) v.probs[static_cast<size_t>(c) * n + vox] = raw[c] / sum;
    }
    return v;
}

Camera random_camera(const GridSpec& grid, Rng& rng, int width = 8, int height = 5) {
    Vec3 center{grid.extent_x() / 2, grid.extent_y() / 2, grid.extent_z() / 2};
    double ang = rng.uniform(0, 2 * M_PI);
    Vec3 pos = center + Vec3{std::cos(ang), std::sin(ang), rng.uniform(-0.2, 0.4)} *
                            (0.6 * grid.extent_x());
    return make_camera_looking(pos, center, width, height, rng.uniform(70.0, 120.0),
                               grid.diagonal());
}

}  // namespace

TEST_CASE("axis-aligned ray traverses a full voxel row with stride-spaced entries") {
    GridSpec grid{4, 2, 2, 0.25};
    Vec3 origin{-0.3, 0.125, 0.125};
    RayTrace t = traverse_ray(grid, origin, {1, 0, 0}, 100.0);
    REQUIRE(t.size() == 4);
    for (int i = 0; i < 4; ++i) {
        REQUIRE(t.voxels[static_cast<size_t>(i)] == grid.voxel_index(i, 0, 0));
        REQUIRE_THAT(t.entry_depths[static_cast<size_t>(i)],
                     Catch::Matchers::WithinAbs(0.3 + 0.25 * i, 1e-12));
    }
}

TEST_CASE("ray pointing away from the grid yields an empty trace") {
    GridSpec grid{4, 2, 2, 0.25};
    RayTrace t = traverse_ray(grid, {-0.3, 0.125, 0.125}, {-1, 0, 0}, 100.0);
    REQUIRE(t.empty());
}

TEST_CASE("diagonal ray through the shared corner of a 2x2x1 grid") {
    // Tie-break steps X before Y, so the corner crossing visits three
    // cells; the middle one has zero chord length.
    GridSpec grid{2, 2, 1, 1.0};
    double inv = 1.0 / std::sqrt(2.0);
    RayTrace t = traverse_ray(grid, {-0.5, -0.5, 0.5}, {inv, inv, 0}, 100.0);
    REQUIRE(t.size() == 3);
    REQUIRE(t.voxels[0] == grid.voxel_index(0, 0, 0));
    REQUIRE(t.voxels[1] == grid.voxel_index(1, 0, 0));
    REQUIRE(t.voxels[2] == grid.voxel_index(1, 1, 0));
    double corner_t = 1.5 * std::sqrt(2.0);
    REQUIRE_THAT(t.entry_depths[0], Catch::Matchers::WithinAbs(0.5 * std::sqrt(2.0), 1e-12));
    REQUIRE_THAT(t.entry_depths[1], Catch::Matchers::WithinAbs(corner_t, 1e-12));
    REQUIRE_THAT(t.entry_depths[2], Catch::Matchers::WithinAbs(corner_t, 1e-12));
}

TEST_CASE("traverse truncates at far depth") {
    GridSpec grid{4, 2, 2, 0.25};
    RayTrace t = traverse_ray(grid, {-0.3, 0.125, 0.125}, {1, 0, 0}, 0.6);
    REQUIRE(t.size() == 2);  // entries at 0.3 and 0.55; 0.8 is beyond far
}

TEST_CASE("termination distribution examples") {
    GridSpec grid{4, 2, 2, 0.25};
    LabelSpace labels{{"a"}};

    SECTION("all-empty volume: no termination mass") {
        SemanticVolume v(grid, labels);
        RayTrace t = traverse_ray(grid, {-0.3, 0.125, 0.125}, {1, 0, 0}, 100.0);
        TerminationDistribution td = terminate(v, t);
        for (double q : td.q) REQUIRE(q == 0.0);
        REQUIRE(td.q_escape == 1.0);
    }

    SECTION("fully occupied first voxel takes all the mass") {
        SemanticVolume v(grid, labels);
        v.set_one_hot(0, 0, 0, 0);
        RayTrace t = traverse_ray(grid, {-0.3, 0.125, 0.125}, {1, 0, 0}, 100.0);
        TerminationDistribution td = terminate(v, t);
        REQUIRE(td.q[0] == 1.0);
        REQUIRE(td.q[1] == 0.0);
        REQUIRE(td.q_escape == 0.0);
    }

    SECTION("two half-occupied voxels: 0.5, 0.25, escape 0.25") {
        GridSpec g2{2, 2, 2, 0.25};
        SemanticVolume v(g2, labels);
        for (int i = 0; i < 2; ++i) {
            v.at(0, i, 0, 0) = 0.5;
            v.at(1, i, 0, 0) = 0.5;
        }
        RayTrace t = traverse_ray(g2, {-0.3, 0.125, 0.125}, {1, 0, 0}, 100.0);
        REQUIRE(t.size() == 2);
        TerminationDistribution td = terminate(v, t);
        REQUIRE_THAT(td.q[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
        REQUIRE_THAT(td.q[1], Catch::Matchers::WithinAbs(0.25, 1e-15));
        REQUIRE_THAT(td.q_escape, Catch::Matchers::WithinAbs(0.25, 1e-15));
    }
}

TEST_CASE("termination normalization holds on random volumes and rays") {
    GridSpec grid{8, 8, 4, 0.2};
    LabelSpace labels{{"a", "b", "c"}};
    Rng rng(101);
    SemanticVolume v = random_volume(grid, labels, rng);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Camera cam = random_camera(grid, rng);
        for (int px = 0; px < 5; ++px) {
            int u = rng.uniform_int(0, cam.width - 1), w = rng.uniform_int(0, cam.height - 1);
            RayTrace t = traverse(grid, cam, u, w);
            TerminationDistribution td = terminate(v, t);
            REQUIRE_THAT(td.total(), Catch::Matchers::WithinAbs(1.0, 1e-6));
            ++checked;
        }
    }
    REQUIRE(checked == 1000);
}

TEST_CASE("raising first-voxel occupancy never lowers q1 nor raises escape") {
    GridSpec grid{6, 6, 4, 0.25};
    LabelSpace labels{{"a"}};
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        SemanticVolume v = random_volume(grid, labels, rng);
        Camera cam = random_camera(grid, rng);
        RayTrace t = traverse(grid, cam, cam.width / 2, cam.height / 2);
        if (t.empty()) continue;
        TerminationDistribution before = terminate(v, t);
        i64 first = t.voxels[0];
        double pe = v.at(labels.empty_index(), first);
        double delta = pe * rng.uniform(0.1, 0.9);
        v.at(labels.empty_index(), first) = pe - delta;  // occupancy up
        v.at(0, first) += delta;
        TerminationDistribution after = terminate(v, t);
        REQUIRE(after.q[0] >= before.q[0]);
        REQUIRE(after.q_escape <= before.q_escape);
    }
}

TEST_CASE("render_pixel examples") {
    LabelSpace labels{{"a", "b"}};

    SECTION("empty trace renders the escape pixel") {
        GridSpec grid{4, 4, 2, 0.25};
        SemanticVolume v(grid, labels);
        PixelSample px = render_pixel(v, RayTrace{}, 4.0);
        REQUIRE(px.depth == 4.0);
        REQUIRE(px.sem[0] == 0.0);
        REQUIRE(px.sem[1] == 0.0);
        REQUIRE(px.sem[2] == 1.0);
    }

    SECTION("one-hot first voxel pins depth and class") {
        GridSpec grid{4, 2, 2, 0.25};
        SemanticVolume v(grid, labels);
        v.set_one_hot(0, 0, 0, 1);
        RayTrace t = traverse_ray(grid, {-0.3, 0.125, 0.125}, {1, 0, 0}, 100.0);
        PixelSample px = render_pixel(v, t, 4.0);
        REQUIRE(px.depth == t.entry_depths[0]);
        REQUIRE(px.sem[1] == 1.0);
        REQUIRE(px.sem[0] == 0.0);
        REQUIRE(px.sem[2] == 0.0);
    }

    SECTION("hand-evaluated mixed ray: depth 2.0, sem (0.5, 0.25, 0.25)") {
        // Two voxels, occupancies 0.5/0.5, one-hot classes a then b,
        // entry depths 1m and 2m, far 4m.
        GridSpec grid{2, 2, 2, 1.0};
        SemanticVolume v(grid, labels);
        v.at(0, 0, 0, 0) = 0.5;
        v.at(2, 0, 0, 0) = 0.5;
        v.at(1, 1, 0, 0) = 0.5;
        v.at(2, 1, 0, 0) = 0.5;
        RayTrace t;
        t.voxels = {grid.voxel_index(0, 0, 0), grid.voxel_index(1, 0, 0)};
        t.entry_depths = {1.0, 2.0};
        PixelSample px = render_pixel(v, t, 4.0);
        REQUIRE_THAT(px.depth, Catch::Matchers::WithinAbs(2.0, 1e-15));
        REQUIRE_THAT(px.sem[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
        REQUIRE_THAT(px.sem[1], Catch::Matchers::WithinAbs(0.25, 1e-15));
        REQUIRE_THAT(px.sem[2], Catch::Matchers::WithinAbs(0.25, 1e-15));
    }
}

TEST_CASE("render_view of an all-empty volume is constant far depth") {
    GridSpec grid{8, 8, 4, 0.2};
    LabelSpace labels{{"a", "b"}};
    SemanticVolume v(grid, labels);
    Rng rng(5);
    Camera cam = random_camera(grid, rng, 32, 18);
    SemanticDepthImage img = render_view(v, cam);
    REQUIRE(img.width == 32);
    REQUIRE(img.height == 18);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            REQUIRE(img.depth_at(x, y) == cam.far_depth);
            REQUIRE(img.sem_at(img.empty_index(), x, y) == 1.0);
        }
}

TEST_CASE("rendered pixel distributions sum to one") {
    GridSpec grid{8, 8, 4, 0.2};
    LabelSpace labels{{"a", "b", "c"}};
    Rng rng(55);
    SemanticVolume v = random_volume(grid, labels, rng);
    Camera cam = random_camera(grid, rng, 16, 9);
    SemanticDepthImage img = render_view(v, cam);
    REQUIRE(img.max_sem_sum_deviation() < 1e-9);
    for (double d : img.depth) {
        REQUIRE(d > 0.0);
        REQUIRE(d <= cam.far_depth + 1e-12);
    }
}

TEST_CASE("one-hot volumes render first-hit depth bitwise from any camera") {
    GridSpec grid{8, 8, 4, 0.25};
    LabelSpace labels{{"a", "b"}};
    Rng rng(77);
    // Deterministic volume: every voxel either empty or one-hot class.
    SemanticVolume v(grid, labels);
    for (int k = 0; k < grid.d; ++k)
        for (int j = 0; j < grid.h; ++j)
            for (int i = 0; i < grid.w; ++i)
                if (rng.uniform() < 0.3) v.set_one_hot(i, j, k, rng.uniform_int(0, 1));

    for (int trial = 0; trial < 10; ++trial) {
        Camera cam = random_camera(grid, rng, 12, 7);
        SemanticDepthImage img = render_view(v, cam);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                // Independent first-hit ray cast over the same trace.
                RayTrace t = traverse(grid, cam, x, y);
                double expected = cam.far_depth;
                for (size_t i = 0; i < t.size(); ++i) {
                    if (v.empty_prob(t.voxels[i]) == 0.0) {
                        expected = t.entry_depths[i];
                        break;
                    }
                }
                REQUIRE(img.depth_at(x, y) == expected);  // bitwise
            }
    }
}

TEST_CASE("zero adjoint produces a zero gradient volume") {
    GridSpec grid{6, 6, 4, 0.25};
    LabelSpace labels{{"a", "b"}};
    Rng rng(9);
    SemanticVolume v = random_volume(grid, labels, rng);
    Camera cam = random_camera(grid, rng);
    ImageAdjoint adj = ImageAdjoint::zeros(cam.width, cam.height, labels.num_classes());
    std::vector<double> grad = render_backward(v, cam, adj);
    for (double gv : grad) REQUIRE(gv == 0.0);
}

TEST_CASE("single-voxel trace depth gradient is entry minus far") {
    // Camera inside the top voxel of a column looking up: the trace is
    // exactly one voxel entered at depth 0, so d(depth)/d(occupancy) =
    // d_1 - far = -far, i.e. +far with respect to p_empty.
    GridSpec grid{2, 2, 2, 1.0};
    LabelSpace labels{{"a"}};
    SemanticVolume v(grid, labels);
    v.at(labels.empty_index(), 0, 0, 1) = 0.5;
    v.at(0, 0, 0, 1) = 0.5;

    Camera cam = make_camera_looking({0.5, 0.5, 1.5}, {0.5, 0.5, 5.0}, 1, 1, 90.0, 7.0);
    RayTrace t = traverse(grid, cam, 0, 0);
    REQUIRE(t.size() == 1);
    REQUIRE(t.entry_depths[0] == 0.0);

    ImageAdjoint adj = ImageAdjoint::zeros(1, 1, 1);
    adj.depth[0] = 1.0;
    std::vector<double> grad = render_backward(v, cam, adj);
    i64 voxel = grid.voxel_index(0, 0, 1);
    double g_pe = grad[static_cast<size_t>(labels.empty_index()) * grid.num_voxels() + voxel];
    REQUIRE_THAT(g_pe, Catch::Matchers::WithinAbs(cam.far_depth, 1e-12));
}

TEST_CASE("analytic projection gradients match finite differences") {
    GridSpec grid{6, 6, 4, 0.25};
    LabelSpace labels{{"a", "b"}};
    Rng rng(123);
    SemanticVolume v = random_volume(grid, labels, rng);
    Camera cam = random_camera(grid, rng, 8, 5);

    for (auto mode : {SemanticPixelMode::kConditioned, SemanticPixelMode::kRaw}) {
        // Random linear functional over the rendered image.
        ImageAdjoint adj = ImageAdjoint::zeros(cam.width, cam.height, labels.num_classes());
        for (double& x : adj.depth) x = rng.normal();
        for (double& x : adj.semantics) x = rng.normal();

        auto loss = [&](const SemanticVolume& vol) {
            SemanticDepthImage img = render_view(vol, cam, mode);
            double s = 0;
            for (size_t i = 0; i < img.depth.size(); ++i) s += img.depth[i] * adj.depth[i];
            for (size_t i = 0; i < img.semantics.size(); ++i)
                s += img.semantics[i] * adj.semantics[i];
            return s;
        };

        std::vector<double> analytic = render_backward(v, cam, adj, mode);

        const double eps = 1e-4;
        double worst = 0;
        for (int probe = 0; probe < 100; ++probe) {
            size_t idx = static_cast<size_t>(rng.next_below(v.probs.size()));
            SemanticVolume vp = v;
            vp.probs[idx] += eps;
            double fp = loss(vp);
            vp.probs[idx] -= 2 * eps;
            double fm = loss(vp);
            double fd = (fp - fm) / (2 * eps);
            double an = analytic[idx];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            if (std::abs(an - fd) <= 1e-8) rel = 0;
            worst = std::max(worst, rel);
        }
        INFO("mode " << (mode == SemanticPixelMode::kConditioned ? "conditioned" : "raw"));
        REQUIRE(worst < 1e-4);
    }
}

TEST_CASE("SGSI round trip preserves image and camera") {
    GridSpec grid{8, 8, 4, 0.2};
    LabelSpace labels{{"a", "b"}};
    Rng rng(31);
    SemanticVolume v = random_volume(grid, labels, rng);
    Camera cam = random_camera(grid, rng, 16, 9);
    SemanticDepthImage img = render_view(v, cam);
    auto path = std::filesystem::temp_directory_path() / "sgs_test_image.sgsi";
    save_image(img, path, 7);
    u64 hash = 0;
    SemanticDepthImage loaded = load_image(path, &hash);
    REQUIRE(hash == 7);
    REQUIRE(loaded.width == img.width);
    REQUIRE(loaded.height == img.height);
    REQUIRE(loaded.num_classes == img.num_classes);
    for (size_t i = 0; i < img.depth.size(); ++i)
        REQUIRE_THAT(loaded.depth[i], Catch::Matchers::WithinRel(img.depth[i], 1e-6));
    REQUIRE_THAT(loaded.camera.fx, Catch::Matchers::WithinRel(cam.fx, 1e-6));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            REQUIRE_THAT(loaded.camera.pose.rotation(r, c),
                         Catch::Matchers::WithinAbs(cam.pose.rotation(r, c), 1e-6));
    std::filesystem::remove(path);
}

TEST_CASE("debug image exports write valid netpbm headers") {
    GridSpec grid{8, 8, 4, 0.2};
    LabelSpace labels{{"a"}};
    Rng rng(3);
    SemanticVolume v = random_volume(grid, labels, rng);
    Camera cam = random_camera(grid, rng, 8, 5);
    SemanticDepthImage img = render_view(v, cam);
    auto pgm = std::filesystem::temp_directory_path() / "sgs_test_depth.pgm";
    auto ppm = std::filesystem::temp_directory_path() / "sgs_test_class.ppm";
    export_depth_pgm(img, pgm);
    export_class_ppm(img, ppm);
    REQUIRE(std::filesystem::file_size(pgm) > 15);
    REQUIRE(std::filesystem::file_size(ppm) > 15);
    std::filesystem::remove(pgm);
    std::filesystem::remove(ppm);
}
