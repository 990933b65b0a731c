#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sgs/core.hpp"
#include "sgs/rng.hpp"
#include "sgs/vec.hpp"

namespace sgs {

// ---------------------------------------------------------------------------
// Object instances: 6-connected components of equal-label voxels.

struct InstanceVolume {
    GridSpec grid;
    int class_id = -1;
    std::vector<i64> voxels;  // linear ids in discovery (lexicographic) order
    int min_i = 0, min_j = 0, min_k = 0, max_i = 0, max_j = 0, max_k = 0;

    size_t size() const { return voxels.size(); }

    Vec3 extent() const {
        return Vec3{(max_i - min_i + 1) * grid.stride, (max_j - min_j + 1) * grid.stride,
                    (max_k - min_k + 1) * grid.stride};
    }

    Vec3 bbox_center() const {
        return Vec3{(min_i + max_i + 1) * 0.5 * grid.stride,
                    (min_j + max_j + 1) * 0.5 * grid.stride,
                    (min_k + max_k + 1) * 0.5 * grid.stride};
    }

    // Occupied voxel centers in meters.
    std::vector<Vec3> points() const {
        std::vector<Vec3> pts;
        pts.reserve(voxels.size());
        for (i64 v : voxels) {
            i64 i = v % grid.w, j = (v / grid.w) % grid.h, k = v / (static_cast<i64>(grid.w) * grid.h);
            pts.push_back(Vec3{(i + 0.5) * grid.stride, (j + 0.5) * grid.stride,
                               (k + 0.5) * grid.stride});
        }
        return pts;
    }
};

// Flood fill over face-adjacent equal-label voxels. Components are
// emitted in order of their lexicographically smallest (i,j,k) member,
// which is the scan order here.
inline std::vector<InstanceVolume> extract_instances(const LabelVolume& labels) {
    const GridSpec& grid = labels.grid;
    const int empty = labels.empty_id();
    std::vector<u8> seen(static_cast<size_t>(grid.num_voxels()), 0);
    std::vector<InstanceVolume> out;

    for (int i = 0; i < grid.w; ++i)
        for (int j = 0; j < grid.h; ++j)
            for (int k = 0; k < grid.d; ++k) {
                i64 start = grid.voxel_index(i, j, k);
                if (seen[static_cast<size_t>(start)] || labels.ids[start] == empty) continue;
                InstanceVolume inst;
                inst.grid = grid;
                inst.class_id = labels.ids[start];
                inst.min_i = inst.max_i = i;
                inst.min_j = inst.max_j = j;
                inst.min_k = inst.max_k = k;
                std::deque<std::array<int, 3>> frontier{{i, j, k}};
                seen[static_cast<size_t>(start)] = 1;
                while (!frontier.empty()) {
                    auto [ci, cj, ck] = frontier.front();
                    frontier.pop_front();
                    inst.voxels.push_back(grid.voxel_index(ci, cj, ck));
                    inst.min_i = std::min(inst.min_i, ci);
                    inst.max_i = std::max(inst.max_i, ci);
                    inst.min_j = std::min(inst.min_j, cj);
                    inst.max_j = std::max(inst.max_j, cj);
                    inst.min_k = std::min(inst.min_k, ck);
                    inst.max_k = std::max(inst.max_k, ck);
                    static const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                                 {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
                    for (const auto& d : nb) {
                        int ni = ci + d[0], nj = cj + d[1], nk = ck + d[2];
                        if (!grid.in_bounds(ni, nj, nk)) continue;
                        i64 nv = grid.voxel_index(ni, nj, nk);
                        if (seen[static_cast<size_t>(nv)]) continue;
                        if (labels.ids[nv] != inst.class_id) continue;
                        seen[static_cast<size_t>(nv)] = 1;
                        frontier.push_back({ni, nj, nk});
                    }
                }
                std::sort(inst.voxels.begin(), inst.voxels.end());
                out.push_back(std::move(inst));
            }
    return out;
}

// ---------------------------------------------------------------------------
// Object database.

struct DbEntry {
    std::string id;
    int class_id = -1;
    std::vector<Vec3> points;   // canonical surface sample, centered at origin
    Vec3 size;                  // physical extent, meters
    // Canonical solid voxelization at the grid stride, used for collision.
    int vox_nx = 0, vox_ny = 0, vox_nz = 0;
    double vox_stride = 0;
    std::vector<u8> vox;

    bool vox_at(int i, int j, int k) const {
        return vox[static_cast<size_t>((k * vox_ny + j) * vox_nx + i)] != 0;
    }
};

struct ObjectDatabase {
    LabelSpace labels;
    std::vector<DbEntry> entries;

    std::vector<const DbEntry*> of_class(int class_id) const {
        std::vector<const DbEntry*> out;
        for (const auto& e : entries)
            if (e.class_id == class_id) out.push_back(&e);
        return out;
    }

    // Componentwise minimum extent over a class.
    Vec3 class_min_size(int class_id) const {
        Vec3 m{0, 0, 0};
        bool any = false;
        for (const auto& e : entries)
            if (e.class_id == class_id) {
                if (!any) {
                    m = e.size;
                    any = true;
                } else {
                    m.x = std::min(m.x, e.size.x);
                    m.y = std::min(m.y, e.size.y);
                    m.z = std::min(m.z, e.size.z);
                }
            }
        if (!any) throw DataError("no database entries for class " + std::to_string(class_id));
        return m;
    }
};

// Removes instances strictly smaller than the class minimum on every
// axis. An instance matching the minimum exactly is kept.
inline std::vector<InstanceVolume> filter_instances(const std::vector<InstanceVolume>& instances,
                                                    const ObjectDatabase& db,
                                                    i64* dropped = nullptr) {
    std::vector<InstanceVolume> kept;
    i64 drop_count = 0;
    for (const auto& inst : instances) {
        Vec3 minimum = db.class_min_size(inst.class_id);
        Vec3 ext = inst.extent();
        bool smaller_everywhere =
            ext.x < minimum.x - 1e-9 && ext.y < minimum.y - 1e-9 && ext.z < minimum.z - 1e-9;
        if (smaller_everywhere)
            ++drop_count;
        else
            kept.push_back(inst);
    }
    if (dropped) *dropped = drop_count;
    return kept;
}

// ---------------------------------------------------------------------------
// Chamfer distance. The bucketed nearest-neighbor search must return the
// same squared distances as brute force; distances per pair use one fixed
// expression, so the resulting means are bitwise identical.

namespace detail {

inline double dist2(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

class PointBuckets {
public:
    explicit PointBuckets(const std::vector<Vec3>& pts) : pts_(pts) {
        Vec3 lo = pts[0], hi = pts[0];
        for (const Vec3& p : pts) {
            lo.x = std::min(lo.x, p.x);
            lo.y = std::min(lo.y, p.y);
            lo.z = std::min(lo.z, p.z);
            hi.x = std::max(hi.x, p.x);
            hi.y = std::max(hi.y, p.y);
            hi.z = std::max(hi.z, p.z);
        }
        origin_ = lo;
        double vol = std::max((hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z), 1e-12);
        cell_ = std::max(std::cbrt(vol / static_cast<double>(pts.size())), 1e-6);
        nx_ = static_cast<int>((hi.x - lo.x) / cell_) + 1;
        ny_ = static_cast<int>((hi.y - lo.y) / cell_) + 1;
        nz_ = static_cast<int>((hi.z - lo.z) / cell_) + 1;
        cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
        for (size_t i = 0; i < pts.size(); ++i) {
            auto [ci, cj, ck] = cell_of(pts[i]);
            cells_[cell_index(ci, cj, ck)].push_back(static_cast<int>(i));
        }
    }

    double nearest_dist2(const Vec3& q) const {
        auto [qi, qj, qk] = cell_of(q);
        double best = std::numeric_limits<double>::infinity();
        int max_ring = std::max({nx_, ny_, nz_}) + 1;
        for (int r = 0;; ++r) {
            // Ring r cells are at Chebyshev distance r from the query
            // cell; any point in them is at least (r-1)*cell away.
            if (r > 0 && best <= square((r - 1) * cell_)) break;
            bool any_cell = false;
            for (int ci = qi - r; ci <= qi + r; ++ci)
                for (int cj = qj - r; cj <= qj + r; ++cj)
                    for (int ck = qk - r; ck <= qk + r; ++ck) {
                        if (std::max({std::abs(ci - qi), std::abs(cj - qj),
                                      std::abs(ck - qk)}) != r)
                            continue;
                        if (ci < 0 || cj < 0 || ck < 0 || ci >= nx_ || cj >= ny_ || ck >= nz_)
                            continue;
                        any_cell = true;
                        for (int idx : cells_[cell_index(ci, cj, ck)])
                            best = std::min(best, dist2(q, pts_[static_cast<size_t>(idx)]));
                    }
            if (!any_cell && r > max_ring) break;
        }
        return best;
    }

private:
    static double square(double x) { return x * x; }
    std::tuple<int, int, int> cell_of(const Vec3& p) const {
        int i = std::clamp(static_cast<int>((p.x - origin_.x) / cell_), 0, nx_ - 1);
        int j = std::clamp(static_cast<int>((p.y - origin_.y) / cell_), 0, ny_ - 1);
        int k = std::clamp(static_cast<int>((p.z - origin_.z) / cell_), 0, nz_ - 1);
        return {i, j, k};
    }
    size_t cell_index(int i, int j, int k) const {
        return (static_cast<size_t>(k) * ny_ + j) * nx_ + i;
    }

    const std::vector<Vec3>& pts_;
    Vec3 origin_;
    double cell_ = 1;
    int nx_ = 1, ny_ = 1, nz_ = 1;
    std::vector<std::vector<int>> cells_;
};

}  // namespace detail

// Symmetric Chamfer distance in meters: mean nearest-neighbor distance
// from a to b plus the reverse.
inline double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw DataError("chamfer distance of an empty point set");
    detail::PointBuckets bb(b), ba(a);
    double sum_ab = 0;
    for (const Vec3& p : a) sum_ab += std::sqrt(bb.nearest_dist2(p));
    double sum_ba = 0;
    for (const Vec3& p : b) sum_ba += std::sqrt(ba.nearest_dist2(p));
    return sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size());
}

// ---------------------------------------------------------------------------
// Retrieval.

// Transforms a database entry into the scene: yaw rotation, uniform
// scale, then translation of the model center to `center`.
inline std::vector<Vec3> place_points(const DbEntry& entry, double phi_deg, double scale,
                                      const Vec3& center) {
    Mat3 rot = Mat3::rot_z(phi_deg * M_PI / 180.0);
    std::vector<Vec3> out;
    out.reserve(entry.points.size());
    for (const Vec3& p : entry.points) out.push_back(rot * p * scale + center);
    return out;
}

// Scene cells occupied by the placed model voxelization. Each solid
// canonical voxel is sampled at 8 sub-points so upscaling leaves no gaps.
inline std::set<i64> placed_model_cells(const DbEntry& entry, double phi_deg, double scale,
                                        const Vec3& center, const GridSpec& grid) {
    Mat3 rot = Mat3::rot_z(phi_deg * M_PI / 180.0);
    std::set<i64> cells;
    Vec3 half{entry.vox_nx * entry.vox_stride / 2, entry.vox_ny * entry.vox_stride / 2,
              entry.vox_nz * entry.vox_stride / 2};
    for (int k = 0; k < entry.vox_nz; ++k)
        for (int j = 0; j < entry.vox_ny; ++j)
            for (int i = 0; i < entry.vox_nx; ++i) {
                if (!entry.vox_at(i, j, k)) continue;
                for (int s = 0; s < 8; ++s) {
                    Vec3 p{(i + 0.25 + 0.5 * (s & 1)) * entry.vox_stride - half.x,
                           (j + 0.25 + 0.5 * ((s >> 1) & 1)) * entry.vox_stride - half.y,
                           (k + 0.25 + 0.5 * ((s >> 2) & 1)) * entry.vox_stride - half.z};
                    Vec3 q = rot * p * scale + center;
                    int ci = static_cast<int>(std::floor(q.x / grid.stride));
                    int cj = static_cast<int>(std::floor(q.y / grid.stride));
                    int ck = static_cast<int>(std::floor(q.z / grid.stride));
                    if (grid.in_bounds(ci, cj, ck)) cells.insert(grid.voxel_index(ci, cj, ck));
                }
            }
    return cells;
}

// IoU between the placed model cells and the scene voxels holding any
// class other than self_class.
inline double collision_penalty(const DbEntry& entry, double phi_deg, double scale,
                                const Vec3& center, const LabelVolume& labels, int self_class) {
    std::set<i64> model = placed_model_cells(entry, phi_deg, scale, center, labels.grid);
    i64 inter = 0, foreign = 0;
    for (i64 v = 0; v < labels.grid.num_voxels(); ++v) {
        int id = labels.ids[static_cast<size_t>(v)];
        if (id == labels.empty_id() || id == self_class) continue;
        ++foreign;
        if (model.count(v)) ++inter;
    }
    i64 uni = foreign + static_cast<i64>(model.size()) - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct RetrievalResult {
    int entry_index = -1;
    std::string entry_id;
    double phi_deg = 0;
    double scale = 1;
    double cost = 0;
};

// Rotation set: |phi_count| yaw angles evenly spaced over 360 degrees.
inline std::vector<double> rotation_set(int phi_count) {
    std::vector<double> out;
    for (int i = 0; i < phi_count; ++i) out.push_back(360.0 * i / phi_count);
    return out;
}

// Exhaustive argmin over same-class entries and the rotation set of
// Chamfer distance plus the weighted collision penalty. The model is
// uniformly scaled so its rotated bounding box fits the instance box and
// centered on the instance before scoring. Ties resolve to the lowest
// (entry, rotation) pair.
inline RetrievalResult retrieve(const InstanceVolume& instance, const ObjectDatabase& db,
                                const LabelVolume& labels, const std::vector<double>& phis,
                                double lambda = 1.0) {
    std::vector<Vec3> inst_points = instance.points();
    Vec3 inst_extent = instance.extent();
    Vec3 center = instance.bbox_center();

    RetrievalResult best;
    bool found = false;
    for (size_t e = 0; e < db.entries.size(); ++e) {
        const DbEntry& entry = db.entries[e];
        if (entry.class_id != instance.class_id) continue;
        for (double phi : phis) {
            // Rotated canonical bbox extent (yaw only, z unchanged).
            double rad = phi * M_PI / 180.0;
            double c = std::abs(std::cos(rad)), s = std::abs(std::sin(rad));
            Vec3 rot_extent{entry.size.x * c + entry.size.y * s,
                            entry.size.x * s + entry.size.y * c, entry.size.z};
            double scale = std::min({inst_extent.x / std::max(rot_extent.x, 1e-9),
                                     inst_extent.y / std::max(rot_extent.y, 1e-9),
                                     inst_extent.z / std::max(rot_extent.z, 1e-9)});
            std::vector<Vec3> model = place_points(entry, phi, scale, center);
            double cost = chamfer(inst_points, model) +
                          lambda * collision_penalty(entry, phi, scale, center, labels,
                                                     instance.class_id);
            if (!found || cost < best.cost) {
                found = true;
                best.entry_index = static_cast<int>(e);
                best.entry_id = entry.id;
                best.phi_deg = phi;
                best.scale = scale;
                best.cost = cost;
            }
        }
    }
    if (!found)
        throw DataError("no database entries for class " + std::to_string(instance.class_id));
    return best;
}

// ---------------------------------------------------------------------------
// Scene assembly.

struct Placement {
    std::string entry_id;
    int class_id = -1;
    std::string class_name;
    double rotation_deg = 0;
    double scale = 1;
    Vec3 translation;  // placed model center, meters
    Vec3 extent;       // scaled rotated bbox, for proxy meshes
};

struct SceneDescription {
    RoomSpec room;
    std::vector<Placement> placements;
    i64 instances_total = 0;
    i64 instances_dropped = 0;
    i64 instances_unresolved = 0;
};

struct AssembleConfig {
    int phi_count = 8;
    double lambda = 1.0;
};

inline SceneDescription assemble(const SemanticVolume& volume, const ObjectDatabase& db,
                                 const AssembleConfig& cfg = {},
                                 const RoomSpec* room = nullptr) {
    LabelVolume labels = label_argmax(volume);
    std::vector<InstanceVolume> instances = extract_instances(labels);
    SceneDescription scene;
    scene.instances_total = static_cast<i64>(instances.size());
    scene.room = room ? *room
                      : RoomSpec{volume.grid.extent_x(), volume.grid.extent_y(),
                                 volume.grid.extent_z()};

    std::vector<InstanceVolume> kept;
    for (const auto& inst : instances) {
        bool has_class = !db.of_class(inst.class_id).empty();
        if (!has_class) {
            ++scene.instances_unresolved;
            continue;
        }
        kept.push_back(inst);
    }
    i64 dropped = 0;
    kept = filter_instances(kept, db, &dropped);
    scene.instances_dropped = dropped;

    std::vector<double> phis = rotation_set(cfg.phi_count);
    for (const auto& inst : kept) {
        RetrievalResult r = retrieve(inst, db, labels, phis, cfg.lambda);
        const DbEntry& entry = db.entries[static_cast<size_t>(r.entry_index)];
        double rad = r.phi_deg * M_PI / 180.0;
        double c = std::abs(std::cos(rad)), s = std::abs(std::sin(rad));
        Placement p;
        p.entry_id = r.entry_id;
        p.class_id = inst.class_id;
        p.class_name = db.labels.class_names[static_cast<size_t>(inst.class_id)];
        p.rotation_deg = r.phi_deg;
        p.scale = r.scale;
        p.translation = inst.bbox_center();
        p.extent = Vec3{(entry.size.x * c + entry.size.y * s) * r.scale,
                        (entry.size.x * s + entry.size.y * c) * r.scale,
                        entry.size.z * r.scale};
        scene.placements.push_back(std::move(p));
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Persistence: database directory and scene exports.

inline void save_database(const ObjectDatabase& db, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json index;
    index["labels"] = db.labels.class_names;
    std::vector<std::string> ids;
    for (const auto& e : db.entries) ids.push_back(e.id);
    index["entries"] = ids;
    std::ofstream(dir / "index.json") << index.dump(2) << "\n";
    for (const auto& e : db.entries) {
        nlohmann::json meta;
        meta["class"] = db.labels.class_names[static_cast<size_t>(e.class_id)];
        meta["size"] = {e.size.x, e.size.y, e.size.z};
        std::ofstream(dir / (e.id + ".json")) << meta.dump(2) << "\n";
        BinaryWriter w(dir / (e.id + ".bin"));
        w.write_u32(static_cast<u32>(e.points.size()));
        for (const Vec3& p : e.points) {
            w.write_f32(static_cast<float>(p.x));
            w.write_f32(static_cast<float>(p.y));
            w.write_f32(static_cast<float>(p.z));
        }
        w.write_u16(static_cast<u16>(e.vox_nx));
        w.write_u16(static_cast<u16>(e.vox_ny));
        w.write_u16(static_cast<u16>(e.vox_nz));
        w.write_f32(static_cast<float>(e.vox_stride));
        for (u8 b : e.vox) w.write_u8(b);
        w.close();
    }
}

inline ObjectDatabase load_database(const std::filesystem::path& dir) {
    std::ifstream in(dir / "index.json");
    if (!in) throw DataError("cannot open database index: " + (dir / "index.json").string());
    nlohmann::json index = nlohmann::json::parse(in);
    ObjectDatabase db;
    db.labels.class_names = index["labels"].get<std::vector<std::string>>();
    for (const auto& id : index["entries"].get<std::vector<std::string>>()) {
        DbEntry e;
        e.id = id;
        std::ifstream min(dir / (id + ".json"));
        if (!min) throw DataError("missing database entry header: " + id);
        nlohmann::json meta = nlohmann::json::parse(min);
        e.class_id = db.labels.index_of(meta["class"]);
        e.size = Vec3{meta["size"][0], meta["size"][1], meta["size"][2]};
        BinaryReader r(dir / (id + ".bin"));
        u32 n = r.read_u32();
        for (u32 i = 0; i < n; ++i) {
            Vec3 p;
            p.x = r.read_f32();
            p.y = r.read_f32();
            p.z = r.read_f32();
            e.points.push_back(p);
        }
        e.vox_nx = r.read_u16();
        e.vox_ny = r.read_u16();
        e.vox_nz = r.read_u16();
        e.vox_stride = r.read_f32();
        e.vox.resize(static_cast<size_t>(e.vox_nx) * e.vox_ny * e.vox_nz);
        for (u8& b : e.vox) b = r.read_u8();
        db.entries.push_back(std::move(e));
    }
    return db;
}

inline void save_scene_json(const SceneDescription& scene, const std::filesystem::path& path) {
    nlohmann::json j;
    j["room"] = {scene.room.size_x, scene.room.size_y, scene.room.size_z};
    j["instances_total"] = scene.instances_total;
    j["instances_dropped"] = scene.instances_dropped;
    j["instances_unresolved"] = scene.instances_unresolved;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : scene.placements) {
        nlohmann::json jp;
        jp["object"] = p.entry_id;
        jp["class"] = p.class_name;
        jp["rotation_deg"] = p.rotation_deg;
        jp["scale"] = p.scale;
        jp["translation"] = {p.translation.x, p.translation.y, p.translation.z};
        arr.push_back(jp);
    }
    j["placements"] = arr;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scene: " + path.string());
    out << j.dump(2) << "\n";
}

// Wavefront OBJ with one rotated cuboid proxy per placement.
inline void export_scene_obj(const SceneDescription& scene, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write mesh: " + path.string());
    out << "# assembled scene, cuboid proxies\n";
    int base = 1;
    for (const auto& p : scene.placements) {
        Mat3 rot = Mat3::rot_z(p.rotation_deg * M_PI / 180.0);
        // Half extents before rotation (extent already includes rotation,
        // so recover the axis-aligned body box from scale and entry size).
        Vec3 h = p.extent / 2.0;
        out << "o " << p.class_name << "_" << base / 8 << "\n";
        for (int s = 0; s < 8; ++s) {
            Vec3 corner{(s & 1) ? h.x : -h.x, (s & 2) ? h.y : -h.y, (s & 4) ? h.z : -h.z};
            Vec3 v = p.translation + corner;
            (void)rot;  // bbox proxies are axis-aligned post-rotation extents
            out << "v " << v.x << " " << v.y << " " << v.z << "\n";
        }
        static const int faces[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                                        {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
        for (const auto& f : faces)
            out << "f " << base + f[0] << " " << base + f[1] << " " << base + f[2] << " "
                << base + f[3] << "\n";
        base += 8;
    }
}

// ---------------------------------------------------------------------------
// Procedural database construction: box and L-shaped canonical models per
// class, surface-sampled with a fixed seed.

inline std::vector<Vec3> sample_box_surface(const Vec3& size, int n, Rng& rng) {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<size_t>(n));
    double ax = size.y * size.z, ay = size.x * size.z, az = size.x * size.y;
    double total = 2 * (ax + ay + az);
    for (int i = 0; i < n; ++i) {
        double r = rng.uniform() * total;
        double u = rng.uniform() - 0.5, v = rng.uniform() - 0.5;
        Vec3 p;
        if (r < 2 * ax) {
            p = Vec3{r < ax ? -0.5 : 0.5, u, v};
        } else if (r < 2 * ax + 2 * ay) {
            p = Vec3{u, (r - 2 * ax) < ay ? -0.5 : 0.5, v};
        } else {
            p = Vec3{u, v, (r - 2 * ax - 2 * ay) < az ? -0.5 : 0.5};
        }
        pts.push_back(Vec3{p.x * size.x, p.y * size.y, p.z * size.z});
    }
    return pts;
}

// A canonical box entry (optionally L-shaped: one quadrant notched away).
inline DbEntry make_box_entry(const std::string& id, int class_id, const Vec3& size,
                              double stride, bool l_shaped, Rng rng, int num_points = 512) {
    DbEntry e;
    e.id = id;
    e.class_id = class_id;
    e.size = size;
    e.vox_stride = stride;
    e.vox_nx = std::max(1, static_cast<int>(std::lround(size.x / stride)));
    e.vox_ny = std::max(1, static_cast<int>(std::lround(size.y / stride)));
    e.vox_nz = std::max(1, static_cast<int>(std::lround(size.z / stride)));
    e.vox.assign(static_cast<size_t>(e.vox_nx) * e.vox_ny * e.vox_nz, 1);
    auto inside_notch = [&](double x, double y) {
        return l_shaped && x > 0 && y > 0;  // notch the +x,+y quadrant
    };
    if (l_shaped) {
        for (int k = 0; k < e.vox_nz; ++k)
            for (int j = 0; j < e.vox_ny; ++j)
                for (int i = 0; i < e.vox_nx; ++i) {
                    double x = (i + 0.5) * stride - size.x / 2;
                    double y = (j + 0.5) * stride - size.y / 2;
                    if (inside_notch(x, y))
                        e.vox[static_cast<size_t>((k * e.vox_ny + j) * e.vox_nx + i)] = 0;
                }
    }
    // Surface sample; reject points inside the notch.
    while (static_cast<int>(e.points.size()) < num_points) {
        std::vector<Vec3> cand = sample_box_surface(size, num_points, rng);
        for (const Vec3& p : cand) {
            if (static_cast<int>(e.points.size()) >= num_points) break;
            if (inside_notch(p.x, p.y)) continue;
            e.points.push_back(p);
        }
    }
    return e;
}

}  // namespace sgs
