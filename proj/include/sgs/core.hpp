#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sgs/common.hpp"
#include "sgs/io.hpp"

namespace sgs {

// Floor applied to every probability before it enters a log; keeps
// cross-entropy terms finite without noticeably biasing them.
inline constexpr double kLogClamp = 1e-7;

// Ordered object classes; the implicit last channel is "empty".
struct LabelSpace {
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int empty_index() const { return num_classes(); }
    int channels() const { return num_classes() + 1; }

    int index_of(const std::string& name) const {
        for (int i = 0; i < num_classes(); ++i)
            if (class_names[i] == name) return i;
        throw DataError("unknown class name: " + name);
    }

    void validate() const {
        if (class_names.empty()) throw ConfigError("label space needs at least one class");
        for (size_t i = 0; i < class_names.size(); ++i)
            for (size_t j = i + 1; j < class_names.size(); ++j)
                if (class_names[i] == class_names[j])
                    throw ConfigError("duplicate class name: " + class_names[i]);
    }

    bool operator==(const LabelSpace&) const = default;
};

// Fixed voxelization of the maximal representable room. X runs along the
// width w, Y along h (both horizontal), Z up through d layers. Voxel
// (i,j,k) spans [i,i+1)x[j,j+1)x[k,k+1) in units of the stride, with the
// floor plane at z=0 and the floor center at (w/2, h/2, 0).
struct GridSpec {
    int w = 32, h = 32, d = 16;
    double stride = 0.2;  // meters per voxel

    i64 num_voxels() const { return static_cast<i64>(w) * h * d; }
    double extent_x() const { return w * stride; }
    double extent_y() const { return h * stride; }
    double extent_z() const { return d * stride; }
    double diagonal() const {
        return stride * std::sqrt(double(w) * w + double(h) * h + double(d) * d);
    }

    i64 voxel_index(int i, int j, int k) const {
        return (static_cast<i64>(k) * h + j) * w + i;
    }
    bool in_bounds(int i, int j, int k) const {
        return i >= 0 && i < w && j >= 0 && j < h && k >= 0 && k < d;
    }

    void validate() const {
        if (w < 2 || h < 2 || d < 2) throw ConfigError("grid dims must be >= 2");
        if (!(stride > 0)) throw ConfigError("grid stride must be positive");
    }

    bool operator==(const GridSpec&) const = default;
};

// Physical room size in meters, centered horizontally on the grid with
// its base on the floor plane.
struct RoomSpec {
    double size_x = 0, size_y = 0, size_z = 0;

    void validate(const GridSpec& grid) const {
        if (!(size_x > 0 && size_y > 0 && size_z > 0))
            throw DataError("room size must be positive");
        if (size_x > grid.extent_x() + 1e-9 || size_y > grid.extent_y() + 1e-9 ||
            size_z > grid.extent_z() + 1e-9)
            throw DataError("room size exceeds grid extent");
    }
};

// Dense per-voxel distribution over C classes plus "empty".
// Layout: channel-planar, x fastest: probs[((c*d + k)*h + j)*w + i].
struct SemanticVolume {
    GridSpec grid;
    LabelSpace labels;
    std::vector<double> probs;

    SemanticVolume() = default;
    SemanticVolume(const GridSpec& g, const LabelSpace& l) : grid(g), labels(l) {
        probs.assign(static_cast<size_t>(g.num_voxels()) * l.channels(), 0.0);
        // Default to certainly-empty.
        int e = labels.empty_index();
        std::fill(probs.begin() + static_cast<size_t>(e) * g.num_voxels(),
                  probs.begin() + static_cast<size_t>(e + 1) * g.num_voxels(), 1.0);
    }

    double& at(int c, int i, int j, int k) {
        return probs[static_cast<size_t>(c) * grid.num_voxels() + grid.voxel_index(i, j, k)];
    }
    double at(int c, int i, int j, int k) const {
        return probs[static_cast<size_t>(c) * grid.num_voxels() + grid.voxel_index(i, j, k)];
    }
    double& at(int c, i64 voxel) {
        return probs[static_cast<size_t>(c) * grid.num_voxels() + voxel];
    }
    double at(int c, i64 voxel) const {
        return probs[static_cast<size_t>(c) * grid.num_voxels() + voxel];
    }

    double empty_prob(i64 voxel) const { return at(labels.empty_index(), voxel); }

    void set_one_hot(int i, int j, int k, int class_id) {
        for (int c = 0; c < labels.channels(); ++c) at(c, i, j, k) = (c == class_id) ? 1.0 : 0.0;
    }

    // Per-voxel distributions must sum to 1.
    double max_sum_deviation() const {
        i64 n = grid.num_voxels();
        int ch = labels.channels();
        double worst = 0;
        for (i64 v = 0; v < n; ++v) {
            double s = 0;
            for (int c = 0; c < ch; ++c) {
                double p = probs[static_cast<size_t>(c) * n + v];
                if (p < -1e-12 || p > 1.0 + 1e-12) return 1.0;
                s += p;
            }
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return worst;
    }

    void validate() const {
        grid.validate();
        labels.validate();
        if (probs.size() != static_cast<size_t>(grid.num_voxels()) * labels.channels())
            throw DataError("volume buffer size mismatch");
        if (max_sum_deviation() > 1e-6)
            throw DataError("voxel probabilities do not sum to 1");
    }
};

// Argmax-decoded volume; id == num_classes means empty.
struct LabelVolume {
    GridSpec grid;
    int num_classes = 0;
    std::vector<u8> ids;

    LabelVolume() = default;
    LabelVolume(const GridSpec& g, int classes)
        : grid(g), num_classes(classes),
          ids(static_cast<size_t>(g.num_voxels()), static_cast<u8>(classes)) {}

    u8& at(int i, int j, int k) { return ids[grid.voxel_index(i, j, k)]; }
    u8 at(int i, int j, int k) const { return ids[grid.voxel_index(i, j, k)]; }
    int empty_id() const { return num_classes; }
};

struct RoomMaskVolume {
    GridSpec grid;
    std::vector<u8> mask;  // 1 inside the room box

    u8 at(int i, int j, int k) const { return mask[grid.voxel_index(i, j, k)]; }
    i64 count_inside() const {
        i64 n = 0;
        for (u8 m : mask) n += m;
        return n;
    }
};

// A voxel is inside iff its center lies within the axis-aligned box of
// the given size, centered horizontally on the grid, base on z=0.
// Comparison is closed so that growing the room never removes voxels.
inline RoomMaskVolume make_room_mask(const RoomSpec& room, const GridSpec& grid) {
    room.validate(grid);
    RoomMaskVolume out;
    out.grid = grid;
    out.mask.assign(static_cast<size_t>(grid.num_voxels()), 0);
    const double hx = room.size_x / (2.0 * grid.stride);  // half-size in voxel units
    const double hy = room.size_y / (2.0 * grid.stride);
    const double hz = room.size_z / grid.stride;
    const double cx = grid.w / 2.0, cy = grid.h / 2.0;
    for (int k = 0; k < grid.d; ++k)
        for (int j = 0; j < grid.h; ++j)
            for (int i = 0; i < grid.w; ++i) {
                bool in = std::abs(i + 0.5 - cx) <= hx && std::abs(j + 0.5 - cy) <= hy &&
                          (k + 0.5) <= hz;
                if (in) out.mask[grid.voxel_index(i, j, k)] = 1;
            }
    return out;
}

// Ties broken toward the lowest class index so decoding is deterministic.
inline LabelVolume label_argmax(const SemanticVolume& volume) {
    LabelVolume out(volume.grid, volume.labels.num_classes());
    const i64 n = volume.grid.num_voxels();
    const int ch = volume.labels.channels();
    for (i64 v = 0; v < n; ++v) {
        int best = 0;
        double best_p = volume.probs[v];
        for (int c = 1; c < ch; ++c) {
            double p = volume.probs[static_cast<size_t>(c) * n + v];
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        out.ids[v] = static_cast<u8>(best);
    }
    return out;
}

// Mean cross-entropy against "empty" over voxels outside the room mask;
// zero when no voxel is outside.
inline double mask_empty_penalty(const SemanticVolume& volume, const RoomMaskVolume& mask) {
    if (!(volume.grid == mask.grid)) throw DataError("volume/mask grid mismatch");
    const i64 n = volume.grid.num_voxels();
    i64 outside = 0;
    double sum = 0;
    for (i64 v = 0; v < n; ++v) {
        if (mask.mask[v]) continue;
        ++outside;
        sum -= std::log(std::max(volume.empty_prob(v), kLogClamp));
    }
    return outside == 0 ? 0.0 : sum / static_cast<double>(outside);
}

// ---------------------------------------------------------------------------
// Volume containers. SGSV: f32 probabilities, channel planes in x-fastest
// order. SGSL: u8 label ids. Headers carry the pipeline config hash.

inline constexpr u16 kFormatVersion = 1;

inline void save_volume(const SemanticVolume& volume, const std::filesystem::path& path,
                        u64 config_hash = 0) {
    BinaryWriter w(path);
    w.magic("SGSV");
    w.write_u16(kFormatVersion);
    w.write_u16(static_cast<u16>(volume.grid.w));
    w.write_u16(static_cast<u16>(volume.grid.h));
    w.write_u16(static_cast<u16>(volume.grid.d));
    w.write_u16(static_cast<u16>(volume.labels.num_classes()));
    w.write_f32(static_cast<float>(volume.grid.stride));
    w.write_u64(config_hash);
    w.write_u16(static_cast<u16>(volume.labels.class_names.size()));
    for (const auto& name : volume.labels.class_names) w.write_string(name);
    for (double p : volume.probs) w.write_f32(static_cast<float>(p));
    w.close();
}

inline SemanticVolume load_volume(const std::filesystem::path& path, u64* config_hash = nullptr) {
    BinaryReader r(path);
    r.expect_magic("SGSV");
    u16 version = r.read_u16();
    if (version != kFormatVersion) throw DataError("unsupported SGSV version");
    GridSpec grid;
    grid.w = r.read_u16();
    grid.h = r.read_u16();
    grid.d = r.read_u16();
    u16 classes = r.read_u16();
    grid.stride = r.read_f32();
    u64 hash = r.read_u64();
    if (config_hash) *config_hash = hash;
    LabelSpace labels;
    u16 names = r.read_u16();
    if (names != classes) throw DataError("class name count mismatch");
    for (u16 i = 0; i < names; ++i) labels.class_names.push_back(r.read_string());
    SemanticVolume volume(grid, labels);
    for (double& p : volume.probs) p = r.read_f32();
    // Renormalize f32 quantization so invariants hold after a round trip.
    const i64 n = grid.num_voxels();
    const int ch = labels.channels();
    for (i64 v = 0; v < n; ++v) {
        double s = 0;
        for (int c = 0; c < ch; ++c) s += volume.probs[static_cast<size_t>(c) * n + v];
        if (s > 0)
            for (int c = 0; c < ch; ++c) volume.probs[static_cast<size_t>(c) * n + v] /= s;
    }
    return volume;
}

inline void save_labels(const LabelVolume& labels, const std::filesystem::path& path,
                        u64 config_hash = 0) {
    BinaryWriter w(path);
    w.magic("SGSL");
    w.write_u16(kFormatVersion);
    w.write_u16(static_cast<u16>(labels.grid.w));
    w.write_u16(static_cast<u16>(labels.grid.h));
    w.write_u16(static_cast<u16>(labels.grid.d));
    w.write_u16(static_cast<u16>(labels.num_classes));
    w.write_f32(static_cast<float>(labels.grid.stride));
    w.write_u64(config_hash);
    for (u8 id : labels.ids) w.write_u8(id);
    w.close();
}

inline LabelVolume load_labels(const std::filesystem::path& path, u64* config_hash = nullptr) {
    BinaryReader r(path);
    r.expect_magic("SGSL");
    if (r.read_u16() != kFormatVersion) throw DataError("unsupported SGSL version");
    GridSpec grid;
    grid.w = r.read_u16();
    grid.h = r.read_u16();
    grid.d = r.read_u16();
    u16 classes = r.read_u16();
    grid.stride = r.read_f32();
    u64 hash = r.read_u64();
    if (config_hash) *config_hash = hash;
    LabelVolume out(grid, classes);
    for (u8& id : out.ids) {
        id = r.read_u8();
        if (id > classes) throw DataError("label id out of range");
    }
    return out;
}

}  // namespace sgs
