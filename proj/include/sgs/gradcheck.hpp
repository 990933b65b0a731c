#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sgs/autodiff.hpp"
#include "sgs/graph_ops.hpp"
#include "sgs/neural.hpp"
#include "sgs/rng.hpp"

namespace sgs {

struct GradCheckReport {
    std::string name;
    int probes = 0;
    double max_rel_error = 0.0;
    bool pass = true;
};

// Builds a scalar loss from graph inputs bound to the given tensors.
using LossBuilder = std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

// Central finite differences against the analytic backward pass. Probes
// random coordinates of every input; relative error uses an absolute
// floor so exactly-zero gradients do not divide by zero.
inline GradCheckReport check_gradients(const std::string& name, const LossBuilder& builder,
                                       std::vector<Tensor> inputs, int probes_per_input, Rng rng,
                                       double eps = 1e-4, double tol = 1e-4) {
    GradCheckReport report;
    report.name = name;

    auto eval = [&](const std::vector<Tensor>& ins) {
        Graph g;
        std::vector<Graph::NodeId> ids;
        for (const auto& t : ins) ids.push_back(g.input(t, true));
        return g.value(builder(g, ids))[0];
    };

    // Analytic gradients once.
    Graph g;
    std::vector<Graph::NodeId> ids;
    for (const auto& t : inputs) ids.push_back(g.input(t, true));
    Graph::NodeId loss = builder(g, ids);
    g.backward(loss);
    std::vector<Tensor> analytic;
    for (auto id : ids) {
        const Tensor& gr = g.grad(id);
        analytic.push_back(gr.data.empty() ? Tensor(g.value(id).shape) : gr);
    }

    for (size_t which = 0; which < inputs.size(); ++which) {
        for (int p = 0; p < probes_per_input; ++p) {
            i64 coord = static_cast<i64>(rng.next_below(static_cast<u64>(inputs[which].numel())));
            std::vector<Tensor> probe = inputs;
            double x0 = probe[which][coord];
            probe[which][coord] = x0 + eps;
            double fp = eval(probe);
            probe[which][coord] = x0 - eps;
            double fm = eval(probe);
            double fd = (fp - fm) / (2.0 * eps);
            double an = analytic[which][coord];
            double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
            double rel = std::abs(an - fd) / denom;
            if (std::abs(an - fd) <= 1e-8) rel = 0.0;  // both effectively zero
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.probes;
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

// Finite-difference coverage of every autodiff primitive plus the two
// custom operations that close the training loop (projection rendering
// and the room-mask penalty). Each entry draws fresh random inputs per
// case; kinked activations are sampled away from their kinks.
inline std::vector<GradCheckReport> run_primitive_gradchecks(u64 seed, int cases_per_op = 5,
                                                             int probes_per_input = 7,
                                                             double tol = 1e-4) {
    Rng root(seed);
    std::vector<GradCheckReport> reports;

    auto merge = [&](GradCheckReport&& r) {
        for (auto& existing : reports) {
            if (existing.name == r.name) {
                existing.probes += r.probes;
                existing.max_rel_error = std::max(existing.max_rel_error, r.max_rel_error);
                existing.pass = existing.pass && r.pass;
                return;
            }
        }
        reports.push_back(std::move(r));
    };

    auto randt = [](std::vector<i64> shape, Rng& rng) { return Tensor::randn(shape, rng); };
    // Keeps samples away from activation kinks at 0.
    auto rand_nokink = [](std::vector<i64> shape, Rng& rng) {
        Tensor t = Tensor::randn(shape, rng);
        for (double& x : t.data)
            if (std::abs(x) < 0.05) x += x >= 0 ? 0.05 : -0.05;
        return t;
    };

    for (int c = 0; c < cases_per_op; ++c) {
        Rng rng = root.fork("case" + std::to_string(c));

        // A fixed random weighting folds any output into a scalar loss.
        // Snapshot the stream so every (re-)evaluation of a builder sees
        // the same weights; finite differences need a fixed functional.
        const Rng weight_rng = rng.fork("loss-weights");
        auto weighted = [weight_rng](Graph& g, Graph::NodeId out) {
            Rng local = weight_rng;
            Tensor w = Tensor::randn(g.value(out).shape, local);
            return g.dot(out, g.constant(w));
        };

        merge(check_gradients(
            "add", [&](Graph& g, const auto& in) { return weighted(g, g.add(in[0], in[1])); },
            {randt({3, 4}, rng), randt({3, 4}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "sub", [&](Graph& g, const auto& in) { return weighted(g, g.sub(in[0], in[1])); },
            {randt({5}, rng), randt({5}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "mul", [&](Graph& g, const auto& in) { return weighted(g, g.mul(in[0], in[1])); },
            {randt({4, 3}, rng), randt({4, 3}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "scale", [&](Graph& g, const auto& in) { return weighted(g, g.scale(in[0], -1.7)); },
            {randt({7}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "leaky_relu",
            [&](Graph& g, const auto& in) { return weighted(g, g.leaky_relu(in[0], 0.2)); },
            {rand_nokink({4, 5}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "relu", [&](Graph& g, const auto& in) { return weighted(g, g.relu(in[0])); },
            {rand_nokink({9}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "sigmoid", [&](Graph& g, const auto& in) { return weighted(g, g.sigmoid(in[0])); },
            {randt({6}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "softplus", [&](Graph& g, const auto& in) { return weighted(g, g.softplus(in[0])); },
            {randt({6}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "sum", [&](Graph& g, const auto& in) { return g.sum(in[0]); }, {randt({11}, rng)},
            probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "mean", [&](Graph& g, const auto& in) { return g.mean(in[0]); }, {randt({8}, rng)},
            probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "dot", [&](Graph& g, const auto& in) { return g.dot(in[0], in[1]); },
            {randt({10}, rng), randt({10}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "mul_by_scalar_node",
            [&](Graph& g, const auto& in) {
                return weighted(g, g.mul_by_scalar_node(in[0], in[1]));
            },
            {randt({6}, rng), randt({1}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        {
            Tensor s = randt({1}, rng);
            s[0] = s[0] > 0 ? s[0] + 0.5 : s[0] - 0.5;  // away from zero
            merge(check_gradients(
                "div_by_scalar_node",
                [&](Graph& g, const auto& in) {
                    return weighted(g, g.div_by_scalar_node(in[0], in[1]));
                },
                {randt({6}, rng), s}, probes_per_input, rng.fork("p"), 1e-4, tol));
        }
        merge(check_gradients(
            "linear",
            [&](Graph& g, const auto& in) { return weighted(g, g.linear(in[0], in[1], in[2])); },
            {randt({4, 6}, rng), randt({6}, rng), randt({4}, rng)}, probes_per_input,
            rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "reshape",
            [&](Graph& g, const auto& in) { return weighted(g, g.reshape(in[0], {6, 2})); },
            {randt({3, 4}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "concat",
            [&](Graph& g, const auto& in) { return weighted(g, g.concat({in[0], in[1]})); },
            {randt({5}, rng), randt({3}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "slice_channels",
            [&](Graph& g, const auto& in) { return weighted(g, g.slice_channels(in[0], 1, 3)); },
            {randt({4, 5}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "softmax_channels",
            [&](Graph& g, const auto& in) { return weighted(g, g.softmax_channels(in[0])); },
            {randt({5, 6}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "instance_norm",
            [&](Graph& g, const auto& in) { return weighted(g, g.instance_norm(in[0])); },
            {randt({3, 14}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "channel_affine",
            [&](Graph& g, const auto& in) {
                return weighted(g, g.channel_affine(in[0], in[1], in[2]));
            },
            {randt({3, 7}, rng), randt({3}, rng), randt({3}, rng)}, probes_per_input,
            rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "modulate_channels",
            [&](Graph& g, const auto& in) {
                return weighted(g, g.modulate_channels(in[0], in[1]));
            },
            {randt({4, 6}, rng), randt({2, 6}, rng)}, probes_per_input, rng.fork("p"), 1e-4,
            tol));
        merge(check_gradients(
            "conv3d",
            [&](Graph& g, const auto& in) {
                return weighted(g, g.conv3d(in[0], in[1], in[2], {2, 2, 2}, {1, 1, 1}));
            },
            {randt({2, 4, 4, 4}, rng), randt({3, 2, 4, 4, 4}, rng), randt({3}, rng)},
            probes_per_input, rng.fork("p"), 1e-4, tol));
        merge(check_gradients(
            "deconv3d",
            [&](Graph& g, const auto& in) {
                return weighted(g, g.deconv3d(in[0], in[1], in[2], {2, 2, 2}, {1, 1, 1}));
            },
            {randt({2, 2, 2, 2}, rng), randt({2, 3, 4, 4, 4}, rng), randt({3}, rng)},
            probes_per_input, rng.fork("p"), 1e-4, tol));
        {
            Tensor u = Tensor::randn({4}, rng), v = Tensor::randn({5}, rng);
            u.scale_(1.0 / u.norm2());
            v.scale_(1.0 / v.norm2());
            merge(check_gradients(
                "spectral_norm_weight",
                [&, u, v](Graph& g, const auto& in) {
                    auto wv = g.linear(in[0], g.constant(v), -1);
                    auto sigma = g.dot(g.constant(u), wv);
                    return weighted(g, g.div_by_scalar_node(in[0], sigma));
                },
                {randt({4, 5}, rng)}, probes_per_input, rng.fork("p"), 1e-4, tol));
        }

        // Projection layer, both semantic modes. Probabilities sampled
        // inside (0.15, 0.85) so clamps and kinks stay inactive.
        {
            GridSpec grid{4, 4, 2, 0.25};
            LabelSpace labels{{"a", "b"}};
            Tensor vol({labels.channels(), grid.d, grid.h, grid.w});
            for (i64 v = 0; v < grid.num_voxels(); ++v) {
                double p0 = rng.uniform(0.15, 0.4);
                double p1 = rng.uniform(0.15, 0.4);
                vol[v] = p0;
                vol[grid.num_voxels() + v] = p1;
                vol[2 * grid.num_voxels() + v] = 1.0 - p0 - p1;
            }
            std::vector<Camera> cams;
            for (int i = 0; i < 2; ++i) {
                double ang = rng.uniform(0, 2 * M_PI);
                Vec3 center{grid.extent_x() / 2, grid.extent_y() / 2, grid.extent_z() / 2};
                Vec3 pos = center + Vec3{std::cos(ang), std::sin(ang), 0.2} *
                                        (0.45 * grid.extent_x());
                cams.push_back(make_camera_looking(pos, center, 6, 4, 100.0, grid.diagonal()));
            }
            for (auto mode : {SemanticPixelMode::kConditioned, SemanticPixelMode::kRaw}) {
                std::string name = mode == SemanticPixelMode::kConditioned
                                       ? "render_views(conditioned)"
                                       : "render_views(raw)";
                merge(check_gradients(
                    name,
                    [&](Graph& g, const auto& in) {
                        auto views = render_views_op(g, in[0], grid, labels, cams, mode);
                        return weighted(g, views);
                    },
                    {vol}, probes_per_input, rng.fork("p"), 1e-4, tol));
            }

            RoomSpec room{0.6, 0.7, 0.4};
            RoomMaskVolume mask = make_room_mask(room, grid);
            merge(check_gradients(
                "mask_empty_penalty",
                [&](Graph& g, const auto& in) {
                    return mask_empty_penalty_op(g, in[0], mask, labels);
                },
                {vol}, probes_per_input, rng.fork("p"), 1e-4, tol));
        }
    }
    return reports;
}

}  // namespace sgs
