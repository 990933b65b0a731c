#pragma once

#include <vector>

#include "sgs/autodiff.hpp"
#include "sgs/core.hpp"
#include "sgs/projection.hpp"

namespace sgs {

// Volume tensors on the graph are [C+1, d, h, w], which is byte-for-byte
// the SemanticVolume::probs layout.
inline SemanticVolume volume_from_tensor(const Tensor& t, const GridSpec& grid,
                                         const LabelSpace& labels) {
    SemanticVolume v(grid, labels);
    if (t.numel() != static_cast<i64>(v.probs.size()))
        throw ConfigError("volume tensor size mismatch");
    v.probs = t.data;
    return v;
}

inline Tensor tensor_from_volume(const SemanticVolume& v) {
    return Tensor({v.labels.channels(), v.grid.d, v.grid.h, v.grid.w},
                  std::vector<double>(v.probs));
}

// Cross-entropy against "empty" over voxels outside the room, averaged,
// as a differentiable graph node. Probabilities below the log clamp get
// zero gradient (the clamped value is constant there).
inline Graph::NodeId mask_empty_penalty_op(Graph& g, Graph::NodeId volume_node,
                                           const RoomMaskVolume& mask, const LabelSpace& labels) {
    const Tensor& t = g.value(volume_node);
    const i64 nvox = mask.grid.num_voxels();
    if (t.numel() != nvox * labels.channels())
        throw ConfigError("mask_empty_penalty_op: volume/mask mismatch");
    const i64 empty_off = static_cast<i64>(labels.num_classes()) * nvox;

    i64 outside = 0;
    double sum = 0;
    for (i64 v = 0; v < nvox; ++v) {
        if (mask.mask[static_cast<size_t>(v)]) continue;
        ++outside;
        sum -= std::log(std::max(t[empty_off + v], kLogClamp));
    }
    double value = outside == 0 ? 0.0 : sum / static_cast<double>(outside);

    auto mask_copy = mask.mask;
    return g.make_node(
        Tensor::scalar(value), {volume_node},
        [mask_copy, empty_off, nvox, outside](Graph& g, Graph::NodeId id) {
            if (outside == 0) return;
            double gy = g.node(id).grad[0];
            Graph::NodeId vol = g.node(id).inputs[0];
            const Tensor& t = g.value(vol);
            Tensor gv(t.shape);
            for (i64 v = 0; v < nvox; ++v) {
                if (mask_copy[static_cast<size_t>(v)]) continue;
                double pe = t[empty_off + v];
                if (pe > kLogClamp)
                    gv[empty_off + v] = -gy / (pe * static_cast<double>(outside));
            }
            g.accumulate(vol, gv);
        });
}

// Renders N views of the volume node and stacks them as a
// [N, C+2, H, W] tensor: channel 0 is depth (meters), channels 1..C+1
// the semantic distribution. Backward routes the image adjoints through
// the exact projection adjoint, camera by camera in order.
inline Graph::NodeId render_views_op(Graph& g, Graph::NodeId volume_node, const GridSpec& grid,
                                     const LabelSpace& labels, const std::vector<Camera>& cameras,
                                     SemanticPixelMode mode = SemanticPixelMode::kConditioned) {
    if (cameras.empty()) throw ConfigError("render_views_op: no cameras");
    const int width = cameras.front().width, height = cameras.front().height;
    for (const Camera& c : cameras)
        if (c.width != width || c.height != height)
            throw ConfigError("render_views_op: mixed view resolutions");

    const int channels = labels.channels();  // semantic channels
    const i64 n = static_cast<i64>(cameras.size());
    const i64 plane = static_cast<i64>(width) * height;

    SemanticVolume volume = volume_from_tensor(g.value(volume_node), grid, labels);
    Tensor out({n, channels + 1, height, width});
    for (i64 i = 0; i < n; ++i) {
        SemanticDepthImage img = render_view(volume, cameras[static_cast<size_t>(i)], mode);
        double* dst = &out.data[static_cast<size_t>(i * (channels + 1) * plane)];
        std::copy(img.depth.begin(), img.depth.end(), dst);
        std::copy(img.semantics.begin(), img.semantics.end(), dst + plane);
    }

    return g.make_node(std::move(out), {volume_node},
                       [grid, labels, cameras, mode, channels, plane](Graph& g,
                                                                      Graph::NodeId id) {
                           const Tensor& gy = g.node(id).grad;
                           Graph::NodeId vol = g.node(id).inputs[0];
                           SemanticVolume volume =
                               volume_from_tensor(g.value(vol), grid, labels);
                           Tensor gv(g.value(vol).shape);
                           for (size_t i = 0; i < cameras.size(); ++i) {
                               ImageAdjoint adj;
                               const double* src =
                                   &gy.data[i * static_cast<size_t>((channels + 1) * plane)];
                               adj.depth.assign(src, src + plane);
                               adj.semantics.assign(src + plane,
                                                    src + plane + static_cast<i64>(channels) *
                                                                      plane);
                               std::vector<double> grad =
                                   render_backward(volume, cameras[i], adj, mode);
                               for (size_t k = 0; k < grad.size(); ++k) gv.data[k] += grad[k];
                           }
                           g.accumulate(vol, gv);
                       });
}

}  // namespace sgs
