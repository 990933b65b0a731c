#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <vector>

#include "sgs/core.hpp"
#include "sgs/parallel.hpp"
#include "sgs/vec.hpp"

namespace sgs {

// Pinhole camera with a rigid camera-to-room transform. Camera frame is
// +X right, +Y down, +Z forward; room frame is Z-up. Depth values are
// distances along the (normalized) pixel ray, not z-coordinates.
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 32, height = 18;
    Pose pose;               // camera -> room
    double far_depth = 0;    // escape depth, meters

    Vec3 position() const { return pose.translation; }
    Vec3 optical_axis() const { return pose.rotate({0, 0, 1}); }

    Vec3 pixel_ray(int u, int v) const {
        Vec3 dc{(u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0};
        return pose.rotate(dc.normalized());
    }

    void validate() const {
        if (!(fx > 0 && fy > 0)) throw ConfigError("camera focal lengths must be positive");
        if (!(far_depth > 0)) throw ConfigError("camera far_depth must be positive");
        if (width < 1 || height < 1) throw ConfigError("camera image size must be positive");
        if (pose.rotation.orthonormality_error() > 1e-6)
            throw ConfigError("camera rotation is not orthonormal");
    }
};

// Camera at `position` looking at `target`, level with the floor plane
// (image rows horizontal). Horizontal field of view in degrees.
inline Camera make_camera_looking(const Vec3& position, const Vec3& target, int width, int height,
                                  double hfov_degrees, double far_depth) {
    Vec3 fwd = (target - position).normalized();
    Vec3 world_up{0, 0, 1};
    Vec3 right = fwd.cross(world_up);
    if (right.norm() < 1e-9) right = Vec3{1, 0, 0};  // looking straight up/down
    right = right.normalized();
    Vec3 down = fwd.cross(right);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = width / (2.0 * std::tan(hfov_degrees * M_PI / 180.0 / 2.0));
    cam.fy = cam.fx;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    // Columns of R are the camera axes expressed in room coordinates.
    cam.pose.rotation = Mat3{{right.x, down.x, fwd.x, right.y, down.y, fwd.y, right.z, down.z,
                              fwd.z}};
    cam.pose.translation = position;
    cam.far_depth = far_depth;
    return cam;
}

// Ordered voxel walk of one ray: linear voxel ids and the ray depth at
// which each voxel was entered.
struct RayTrace {
    std::vector<i64> voxels;
    std::vector<double> entry_depths;

    size_t size() const { return voxels.size(); }
    bool empty() const { return voxels.empty(); }
};

// Exact amortized 3D DDA through the grid box [0,w]x[0,h]x[0,d] (voxel
// units, scaled by the stride). When the ray hits a shared voxel boundary
// exactly, the step order is X before Y before Z, so traces are
// bit-reproducible. Truncated at grid exit or far_depth.
inline RayTrace traverse_ray(const GridSpec& grid, const Vec3& origin, const Vec3& direction,
                             double far_depth) {
    RayTrace trace;
    const double g = grid.stride;
    const double ext[3] = {grid.extent_x(), grid.extent_y(), grid.extent_z()};
    const double o[3] = {origin.x, origin.y, origin.z};
    const double u[3] = {direction.x, direction.y, direction.z};

    // Slab intersection with the grid box.
    double t_enter = 0.0, t_exit = far_depth;
    for (int a = 0; a < 3; ++a) {
        if (u[a] == 0.0) {
            if (o[a] < 0.0 || o[a] > ext[a]) return trace;
            continue;
        }
        double t0 = (0.0 - o[a]) / u[a];
        double t1 = (ext[a] - o[a]) / u[a];
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    if (t_enter > t_exit) return trace;

    // Starting voxel: take the cell the ray occupies just after t_enter.
    // The epsilon only disambiguates boundary starts; recorded depths are
    // the exact crossing parameters.
    const double eps = 1e-12 * std::max(1.0, std::abs(t_enter));
    int v[3], dims[3] = {grid.w, grid.h, grid.d};
    for (int a = 0; a < 3; ++a) {
        double pos = o[a] + (t_enter + eps) * u[a];
        v[a] = static_cast<int>(std::floor(pos / g));
        v[a] = std::clamp(v[a], 0, dims[a] - 1);
    }

    int step[3];
    double t_max[3], t_delta[3];
    for (int a = 0; a < 3; ++a) {
        if (u[a] > 0) {
            step[a] = 1;
            t_delta[a] = g / u[a];
            t_max[a] = ((v[a] + 1) * g - o[a]) / u[a];
        } else if (u[a] < 0) {
            step[a] = -1;
            t_delta[a] = -g / u[a];
            t_max[a] = (v[a] * g - o[a]) / u[a];
        } else {
            step[a] = 0;
            t_delta[a] = std::numeric_limits<double>::infinity();
            t_max[a] = std::numeric_limits<double>::infinity();
        }
    }

    double t = t_enter;
    while (t < far_depth) {
        trace.voxels.push_back(grid.voxel_index(v[0], v[1], v[2]));
        trace.entry_depths.push_back(t);
        // Tie-break: step X before Y before Z.
        int axis = 0;
        if (t_max[1] < t_max[0]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        t = t_max[axis];
        v[axis] += step[axis];
        if (v[axis] < 0 || v[axis] >= dims[axis]) break;
        t_max[axis] += t_delta[axis];
    }
    return trace;
}

inline RayTrace traverse(const GridSpec& grid, const Camera& camera, int u, int v) {
    if (u < 0 || u >= camera.width || v < 0 || v >= camera.height)
        throw DataError("pixel outside image bounds");
    return traverse_ray(grid, camera.position(), camera.pixel_ray(u, v), camera.far_depth);
}

// Ray-stopping probabilities: q_i = o_i * prod_{j<i}(1-o_j) with
// o = 1 - p_empty, plus the escape mass.
struct TerminationDistribution {
    std::vector<double> q;
    double q_escape = 1.0;

    double total() const {
        double s = q_escape;
        for (double x : q) s += x;
        return s;
    }
};

inline TerminationDistribution terminate(const SemanticVolume& volume, const RayTrace& trace) {
    TerminationDistribution td;
    td.q.reserve(trace.size());
    double survival = 1.0;
    for (i64 voxel : trace.voxels) {
        double occ = 1.0 - volume.empty_prob(voxel);
        td.q.push_back(occ * survival);
        survival *= 1.0 - occ;
    }
    td.q_escape = survival;
    return td;
}

enum class SemanticPixelMode {
    // Class channels conditioned on occupancy; pixel vectors sum to 1.
    kConditioned,
    // Raw per-channel ray-consistency expectations (comparison variant).
    kRaw,
};

// Depth image plus per-pixel class distributions, row-major with the
// semantic planes channel-planar like SemanticVolume.
struct SemanticDepthImage {
    int width = 0, height = 0;
    int num_classes = 0;
    Camera camera;
    std::vector<double> depth;      // height*width
    std::vector<double> semantics;  // (num_classes+1)*height*width

    SemanticDepthImage() = default;
    SemanticDepthImage(int w, int h, int classes) : width(w), height(h), num_classes(classes) {
        depth.assign(static_cast<size_t>(w) * h, 0.0);
        semantics.assign(static_cast<size_t>(classes + 1) * w * h, 0.0);
    }

    int channels() const { return num_classes + 1; }
    int empty_index() const { return num_classes; }
    size_t pixel_index(int u, int v) const { return static_cast<size_t>(v) * width + u; }

    double& depth_at(int u, int v) { return depth[pixel_index(u, v)]; }
    double depth_at(int u, int v) const { return depth[pixel_index(u, v)]; }
    double& sem_at(int c, int u, int v) {
        return semantics[static_cast<size_t>(c) * width * height + pixel_index(u, v)];
    }
    double sem_at(int c, int u, int v) const {
        return semantics[static_cast<size_t>(c) * width * height + pixel_index(u, v)];
    }

    int argmax_class(int u, int v) const {
        int best = 0;
        double best_p = sem_at(0, u, v);
        for (int c = 1; c < channels(); ++c)
            if (sem_at(c, u, v) > best_p) {
                best_p = sem_at(c, u, v);
                best = c;
            }
        return best;
    }

    double max_sem_sum_deviation() const {
        double worst = 0;
        size_t n = static_cast<size_t>(width) * height;
        for (size_t p = 0; p < n; ++p) {
            double s = 0;
            for (int c = 0; c < channels(); ++c) s += semantics[static_cast<size_t>(c) * n + p];
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return worst;
    }
};

struct PixelSample {
    double depth = 0;
    std::vector<double> sem;
};

// Differentiable ray-consistency rendering of one pixel. The conditioned
// class value q_i * p_c/(1-p_e) telescopes to survival * p_c, which is
// the exact limit of the clamped division as p_e -> 1.
inline PixelSample render_pixel(const SemanticVolume& volume, const RayTrace& trace,
                                double far_depth,
                                SemanticPixelMode mode = SemanticPixelMode::kConditioned) {
    const int classes = volume.labels.num_classes();
    PixelSample out;
    out.sem.assign(classes + 1, 0.0);
    double survival = 1.0;
    for (size_t i = 0; i < trace.size(); ++i) {
        const i64 voxel = trace.voxels[i];
        const double pe = volume.empty_prob(voxel);
        const double occ = 1.0 - pe;
        out.depth += occ * survival * trace.entry_depths[i];
        for (int c = 0; c < classes; ++c) {
            double pc = volume.at(c, voxel);
            out.sem[c] += (mode == SemanticPixelMode::kConditioned) ? survival * pc
                                                                    : occ * survival * pc;
        }
        survival *= pe;
    }
    out.depth += survival * far_depth;
    out.sem[classes] = survival;
    return out;
}

inline SemanticDepthImage render_view(const SemanticVolume& volume, const Camera& camera,
                                      SemanticPixelMode mode = SemanticPixelMode::kConditioned) {
    camera.validate();
    SemanticDepthImage img(camera.width, camera.height, volume.labels.num_classes());
    img.camera = camera;
    const size_t plane = static_cast<size_t>(camera.width) * camera.height;
    parallel_for(camera.height, [&](i64 v) {
        for (int u = 0; u < camera.width; ++u) {
            RayTrace trace = traverse_ray(volume.grid, camera.position(),
                                          camera.pixel_ray(u, static_cast<int>(v)),
                                          camera.far_depth);
            PixelSample px = render_pixel(volume, trace, camera.far_depth, mode);
            size_t p = static_cast<size_t>(v) * camera.width + u;
            img.depth[p] = px.depth;
            for (int c = 0; c <= volume.labels.num_classes(); ++c)
                img.semantics[static_cast<size_t>(c) * plane + p] = px.sem[c];
        }
    });
    return img;
}

// Per-pixel adjoints of a scalar loss with respect to the rendered image.
struct ImageAdjoint {
    std::vector<double> depth;      // height*width
    std::vector<double> semantics;  // (C+1)*height*width

    static ImageAdjoint zeros(int width, int height, int classes) {
        ImageAdjoint a;
        a.depth.assign(static_cast<size_t>(width) * height, 0.0);
        a.semantics.assign(static_cast<size_t>(classes + 1) * width * height, 0.0);
        return a;
    }
};

namespace detail {

// Accumulates one pixel's exact adjoint into `grad` (same layout as
// SemanticVolume::probs). Backward sweep over suffix expectations; no
// divisions, so fully-occupied and fully-empty voxels are exact.
inline void pixel_backward(const SemanticVolume& volume, const RayTrace& trace, double far_depth,
                           SemanticPixelMode mode, double gd, const double* gsem,
                           const std::function<void(size_t, double)>& emit) {
    const int classes = volume.labels.num_classes();
    const i64 nvox = volume.grid.num_voxels();
    const int n = static_cast<int>(trace.size());
    if (n == 0) return;

    // Suffix quantities after voxel i (computed at i-1 position while
    // sweeping backward): expected depth, per-class value, escape mass.
    std::vector<double> suffix_sem(classes, 0.0);
    double suffix_depth = far_depth;
    double suffix_escape = 1.0;

    // Prefix survivals.
    std::vector<double> survival(n);
    double s = 1.0;
    for (int i = 0; i < n; ++i) {
        survival[i] = s;
        s *= volume.empty_prob(trace.voxels[i]);
    }

    for (int i = n - 1; i >= 0; --i) {
        const i64 voxel = trace.voxels[i];
        const double pe = volume.empty_prob(voxel);
        const double occ = 1.0 - pe;
        const double di = trace.entry_depths[i];
        const double si = survival[i];

        // d loss / d occupancy_i.
        double docc = gd * si * (di - suffix_depth);
        if (mode == SemanticPixelMode::kConditioned) {
            for (int c = 0; c < classes; ++c) docc -= gsem[c] * si * suffix_sem[c];
        } else {
            for (int c = 0; c < classes; ++c)
                docc += gsem[c] * si * (volume.at(c, voxel) - suffix_sem[c]);
        }
        docc -= gsem[classes] * si * suffix_escape;

        emit(static_cast<size_t>(classes) * nvox + voxel, -docc);  // p_empty
        const double class_w = (mode == SemanticPixelMode::kConditioned) ? si : occ * si;
        for (int c = 0; c < classes; ++c)
            emit(static_cast<size_t>(c) * nvox + voxel, gsem[c] * class_w);

        // Roll suffixes to "after voxel i-1".
        suffix_depth = occ * di + pe * suffix_depth;
        suffix_escape = pe * suffix_escape;
        if (mode == SemanticPixelMode::kConditioned) {
            for (int c = 0; c < classes; ++c)
                suffix_sem[c] = volume.at(c, voxel) + pe * suffix_sem[c];
        } else {
            for (int c = 0; c < classes; ++c)
                suffix_sem[c] = occ * volume.at(c, voxel) + pe * suffix_sem[c];
        }
    }
}

}  // namespace detail

// Exact analytic adjoint of render_view: gradients of the loss with
// respect to every voxel probability. Rows are processed in parallel into
// private buffers and folded in row order, so accumulation is
// deterministic regardless of the worker count.
inline std::vector<double> render_backward(
    const SemanticVolume& volume, const Camera& camera, const ImageAdjoint& adjoint,
    SemanticPixelMode mode = SemanticPixelMode::kConditioned) {
    const int classes = volume.labels.num_classes();
    const size_t plane = static_cast<size_t>(camera.width) * camera.height;
    if (adjoint.depth.size() != plane || adjoint.semantics.size() != plane * (classes + 1))
        throw DataError("adjoint shape mismatch");

    using Contribution = std::pair<size_t, double>;
    std::vector<std::vector<Contribution>> per_row(camera.height);
    parallel_for(camera.height, [&](i64 v) {
        auto& row = per_row[v];
        std::vector<double> gsem(classes + 1);
        for (int u = 0; u < camera.width; ++u) {
            size_t p = static_cast<size_t>(v) * camera.width + u;
            double gd = adjoint.depth[p];
            for (int c = 0; c <= classes; ++c)
                gsem[c] = adjoint.semantics[static_cast<size_t>(c) * plane + p];
            RayTrace trace = traverse_ray(volume.grid, camera.position(),
                                          camera.pixel_ray(u, static_cast<int>(v)),
                                          camera.far_depth);
            detail::pixel_backward(volume, trace, camera.far_depth, mode, gd, gsem.data(),
                                   [&](size_t idx, double val) { row.emplace_back(idx, val); });
        }
    });

    std::vector<double> grad(volume.probs.size(), 0.0);
    for (const auto& row : per_row)
        for (const auto& [idx, val] : row) grad[idx] += val;
    return grad;
}

// ---------------------------------------------------------------------------
// SGSI container: header with camera, then the f32 depth plane and the
// f32 semantic planes.

inline void save_image(const SemanticDepthImage& img, const std::filesystem::path& path,
                       u64 config_hash = 0) {
    BinaryWriter w(path);
    w.magic("SGSI");
    w.write_u16(kFormatVersion);
    w.write_u16(static_cast<u16>(img.width));
    w.write_u16(static_cast<u16>(img.height));
    w.write_u16(static_cast<u16>(img.num_classes));
    w.write_f32(static_cast<float>(img.camera.far_depth));
    w.write_f32(static_cast<float>(img.camera.fx));
    w.write_f32(static_cast<float>(img.camera.fy));
    w.write_f32(static_cast<float>(img.camera.cx));
    w.write_f32(static_cast<float>(img.camera.cy));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) w.write_f32(static_cast<float>(img.camera.pose.rotation(r, c)));
    for (int a = 0; a < 3; ++a) w.write_f32(static_cast<float>(img.camera.pose.translation[a]));
    w.write_u64(config_hash);
    for (double v : img.depth) w.write_f32(static_cast<float>(v));
    for (double v : img.semantics) w.write_f32(static_cast<float>(v));
    w.close();
}

inline SemanticDepthImage load_image(const std::filesystem::path& path,
                                     u64* config_hash = nullptr) {
    BinaryReader r(path);
    r.expect_magic("SGSI");
    if (r.read_u16() != kFormatVersion) throw DataError("unsupported SGSI version");
    int width = r.read_u16();
    int height = r.read_u16();
    int classes = r.read_u16();
    SemanticDepthImage img(width, height, classes);
    img.camera.width = width;
    img.camera.height = height;
    img.camera.far_depth = r.read_f32();
    img.camera.fx = r.read_f32();
    img.camera.fy = r.read_f32();
    img.camera.cx = r.read_f32();
    img.camera.cy = r.read_f32();
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) img.camera.pose.rotation(row, col) = r.read_f32();
    for (int a = 0; a < 3; ++a) img.camera.pose.translation[a] = r.read_f32();
    u64 hash = r.read_u64();
    if (config_hash) *config_hash = hash;
    for (double& v : img.depth) v = r.read_f32();
    for (double& v : img.semantics) v = r.read_f32();
    return img;
}

// Lossless-inspection exports: depth as a 16-bit PGM (scaled by far
// depth), argmax classes as a PPM with a fixed small palette.
inline void export_depth_pgm(const SemanticDepthImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
            double norm = std::clamp(img.depth_at(u, v) / img.camera.far_depth, 0.0, 1.0);
            u16 q = static_cast<u16>(std::lround(norm * 65535.0));
            out.put(static_cast<char>(q >> 8));
            out.put(static_cast<char>(q & 0xff));
        }
}

inline void export_class_ppm(const SemanticDepthImage& img, const std::filesystem::path& path) {
    static const int palette[12][3] = {{230, 25, 75}, {60, 180, 75},   {255, 225, 25},
                                       {0, 130, 200}, {245, 130, 48},  {145, 30, 180},
                                       {70, 240, 240}, {240, 50, 230}, {210, 245, 60},
                                       {250, 190, 190}, {0, 128, 128}, {128, 128, 0}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
            int c = img.argmax_class(u, v);
            if (c == img.empty_index()) {
                out.put(0);
                out.put(0);
                out.put(0);
            } else {
                const int* rgb = palette[c % 12];
                out.put(static_cast<char>(rgb[0]));
                out.put(static_cast<char>(rgb[1]));
                out.put(static_cast<char>(rgb[2]));
            }
        }
}

}  // namespace sgs
