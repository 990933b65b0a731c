#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sgs/core.hpp"
#include "sgs/parallel.hpp"
#include "sgs/pool.hpp"
#include "sgs/projection.hpp"
#include "sgs/rng.hpp"

namespace sgs {

// ---------------------------------------------------------------------------
// Co-occurrence statistics.

struct CooccurrenceMap {
    int num_classes = 0;
    std::vector<double> values;  // row-major C x C

    double at(int row, int col) const { return values[static_cast<size_t>(row) * num_classes + col]; }
};

// Entry (a,b) = |scenes containing a and b| / |scenes containing a|.
// The alternative "alone" denominator (scenes containing only a) is kept
// as a diagnostic; it can push entries above 1, which is exactly the
// inconsistency that rules it out as the default reading.
inline CooccurrenceMap cooccurrence(const std::vector<std::set<int>>& scenes, int num_classes,
                                    bool alone_denominator = false) {
    if (scenes.empty()) throw DataError("cooccurrence needs at least one scene");
    CooccurrenceMap map;
    map.num_classes = num_classes;
    map.values.assign(static_cast<size_t>(num_classes) * num_classes, 0.0);
    std::vector<i64> denom(static_cast<size_t>(num_classes), 0);
    std::vector<i64> both(static_cast<size_t>(num_classes) * num_classes, 0);
    for (const auto& s : scenes) {
        for (int a : s) {
            if (a < 0 || a >= num_classes) throw DataError("class id out of range in scene set");
            if (!alone_denominator || s.size() == 1) ++denom[static_cast<size_t>(a)];
            for (int b : s) ++both[static_cast<size_t>(a) * num_classes + b];
        }
    }
    for (int a = 0; a < num_classes; ++a) {
        if (denom[static_cast<size_t>(a)] == 0) continue;
        for (int b = 0; b < num_classes; ++b)
            map.values[static_cast<size_t>(a) * num_classes + b] =
                static_cast<double>(both[static_cast<size_t>(a) * num_classes + b]) /
                static_cast<double>(denom[static_cast<size_t>(a)]);
    }
    return map;
}

// Mean absolute entrywise difference.
inline double cooccurrence_diff(const CooccurrenceMap& a, const CooccurrenceMap& b) {
    if (a.num_classes != b.num_classes || a.values.size() != b.values.size())
        throw DataError("cooccurrence maps have different label spaces");
    double s = 0;
    for (size_t i = 0; i < a.values.size(); ++i) s += std::abs(a.values[i] - b.values[i]);
    return s / static_cast<double>(a.values.size());
}

// ---------------------------------------------------------------------------
// Depth-distribution diagnostics.

struct DepthHistogram {
    double bin_width = 0;
    double range_max = 0;
    std::vector<double> mass;  // normalized to sum 1 when any sample fell in

    double total() const {
        double s = 0;
        for (double m : mass) s += m;
        return s;
    }
};

// Histogram over all non-escape pixel depths (depth strictly below the
// image far depth).
inline DepthHistogram depth_distribution(const std::vector<SemanticDepthImage>& images,
                                         int bins, double range_max = 0) {
    if (images.empty()) throw DataError("depth_distribution needs at least one image");
    if (bins < 1) throw ConfigError("depth_distribution needs at least one bin");
    if (range_max <= 0) range_max = images.front().camera.far_depth;
    DepthHistogram h;
    h.range_max = range_max;
    h.bin_width = range_max / bins;
    h.mass.assign(static_cast<size_t>(bins), 0.0);
    i64 count = 0;
    for (const auto& img : images) {
        for (double d : img.depth) {
            if (!(d < img.camera.far_depth)) continue;  // escape pixel
            int b = std::min(bins - 1, static_cast<int>(d / h.bin_width));
            h.mass[static_cast<size_t>(std::max(b, 0))] += 1.0;
            ++count;
        }
    }
    if (count > 0)
        for (double& m : h.mass) m /= static_cast<double>(count);
    return h;
}

// 1-Wasserstein distance between two histograms on the same support.
inline double wasserstein1(const DepthHistogram& a, const DepthHistogram& b) {
    if (a.mass.size() != b.mass.size() || std::abs(a.bin_width - b.bin_width) > 1e-12)
        throw DataError("histograms are not on the same support");
    double cdf_a = 0, cdf_b = 0, dist = 0;
    for (size_t i = 0; i < a.mass.size(); ++i) {
        cdf_a += a.mass[i];
        cdf_b += b.mass[i];
        dist += std::abs(cdf_a - cdf_b) * a.bin_width;
    }
    return dist;
}

// ---------------------------------------------------------------------------
// Procedural scene synthesis: the desk-scale stand-in for an annotated
// scene corpus. Boxes (optionally L-shaped) with per-class priors, walls
// flush to the room boundary, everything one-hot and inside the room.

struct ClassPrior {
    std::string name;
    double presence_prob = 1.0;
    int min_count = 1, max_count = 1;
    Vec3 min_size{0.4, 0.4, 0.4};  // meters
    Vec3 max_size{1.0, 1.0, 1.0};
    bool wall_affine = false;   // flush against a wall
    bool at_ceiling = false;    // hangs from the ceiling (e.g. lamps)
    double l_shape_prob = 0.0;  // carve a corner notch
    bool is_wall_shell = false; // 1-voxel shell on the room's vertical faces
};

struct SyntheticSceneSpec {
    std::vector<ClassPrior> priors;  // aligned with the LabelSpace order
    double min_room_frac = 0.55, max_room_frac = 0.95;
    int max_place_retries = 40;

    LabelSpace label_space() const {
        LabelSpace l;
        for (const auto& p : priors) l.class_names.push_back(p.name);
        return l;
    }
};

// A compact bedroom-flavored default used by tests and the CLI demos.
inline SyntheticSceneSpec default_scene_spec() {
    SyntheticSceneSpec spec;
    spec.priors = {
        {"wall", 1.0, 1, 1, {}, {}, false, false, 0.0, true},
        {"bed", 0.9, 1, 1, {1.4, 1.8, 0.4}, {2.0, 2.2, 0.7}, true, false, 0.25, false},
        {"cabinet", 0.7, 1, 2, {0.4, 0.6, 1.0}, {0.8, 1.4, 2.0}, true, false, 0.0, false},
        {"table", 0.5, 1, 1, {0.6, 0.6, 0.5}, {1.2, 1.2, 0.9}, false, false, 0.0, false},
        {"lamp", 0.6, 1, 2, {0.2, 0.2, 0.2}, {0.5, 0.5, 0.6}, false, true, 0.0, false},
    };
    return spec;
}

struct SyntheticScene {
    SemanticVolume volume;
    RoomSpec room;
    std::set<int> classes;
};

namespace detail {

struct RoomBounds {
    int x0, x1, y0, y1, z0, z1;  // half-open voxel ranges
};

inline RoomBounds room_bounds(const RoomMaskVolume& mask) {
    RoomBounds b{mask.grid.w, 0, mask.grid.h, 0, mask.grid.d, 0};
    for (int k = 0; k < mask.grid.d; ++k)
        for (int j = 0; j < mask.grid.h; ++j)
            for (int i = 0; i < mask.grid.w; ++i)
                if (mask.at(i, j, k)) {
                    b.x0 = std::min(b.x0, i);
                    b.x1 = std::max(b.x1, i + 1);
                    b.y0 = std::min(b.y0, j);
                    b.y1 = std::max(b.y1, j + 1);
                    b.z0 = std::min(b.z0, k);
                    b.z1 = std::max(b.z1, k + 1);
                }
    return b;
}

}  // namespace detail

inline std::vector<SyntheticScene> synth_scenes(const SyntheticSceneSpec& spec,
                                                const GridSpec& grid, int n, Rng rng) {
    LabelSpace labels = spec.label_space();
    labels.validate();
    std::vector<SyntheticScene> out;
    out.reserve(static_cast<size_t>(n));

    for (int scene_i = 0; scene_i < n; ++scene_i) {
        Rng srng = rng.fork("scene" + std::to_string(scene_i));
        for (int attempt = 0;; ++attempt) {
            Rng arng = srng.fork("attempt" + std::to_string(attempt));
            SyntheticScene scene;
            scene.room = RoomSpec{
                arng.uniform(spec.min_room_frac, spec.max_room_frac) * grid.extent_x(),
                arng.uniform(spec.min_room_frac, spec.max_room_frac) * grid.extent_y(),
                arng.uniform(spec.min_room_frac, spec.max_room_frac) * grid.extent_z()};
            RoomMaskVolume mask = make_room_mask(scene.room, grid);
            detail::RoomBounds rb = detail::room_bounds(mask);
            if (rb.x1 - rb.x0 < 4 || rb.y1 - rb.y0 < 4 || rb.z1 - rb.z0 < 3) continue;

            LabelVolume ids(grid, labels.num_classes());
            auto paint_box = [&](int cls, int x0, int x1, int y0, int y1, int z0, int z1) {
                for (int k = z0; k < z1; ++k)
                    for (int j = y0; j < y1; ++j)
                        for (int i = x0; i < x1; ++i) ids.at(i, j, k) = static_cast<u8>(cls);
            };
            auto overlaps_same_class = [&](int cls, int x0, int x1, int y0, int y1, int z0,
                                           int z1) {
                for (int k = z0; k < z1; ++k)
                    for (int j = y0; j < y1; ++j)
                        for (int i = x0; i < x1; ++i)
                            if (ids.at(i, j, k) == cls) return true;
                return false;
            };

            bool scene_ok = true;
            for (size_t c = 0; c < spec.priors.size() && scene_ok; ++c) {
                const ClassPrior& prior = spec.priors[c];
                int cls = static_cast<int>(c);
                if (prior.is_wall_shell) {
                    // One-voxel walls on the four vertical faces of the room.
                    paint_box(cls, rb.x0, rb.x1, rb.y0, rb.y0 + 1, rb.z0, rb.z1);
                    paint_box(cls, rb.x0, rb.x1, rb.y1 - 1, rb.y1, rb.z0, rb.z1);
                    paint_box(cls, rb.x0, rb.x0 + 1, rb.y0, rb.y1, rb.z0, rb.z1);
                    paint_box(cls, rb.x1 - 1, rb.x1, rb.y0, rb.y1, rb.z0, rb.z1);
                    scene.classes.insert(cls);
                    continue;
                }
                if (arng.uniform() > prior.presence_prob) continue;
                int count = arng.uniform_int(prior.min_count, prior.max_count);
                for (int inst = 0; inst < count; ++inst) {
                    // Interior region (inside the wall shell when present).
                    int ix0 = rb.x0 + 1, ix1 = rb.x1 - 1, iy0 = rb.y0 + 1, iy1 = rb.y1 - 1;
                    int sx = std::clamp(
                        static_cast<int>(std::lround(
                            arng.uniform(prior.min_size.x, prior.max_size.x) / grid.stride)),
                        1, std::max(1, ix1 - ix0));
                    int sy = std::clamp(
                        static_cast<int>(std::lround(
                            arng.uniform(prior.min_size.y, prior.max_size.y) / grid.stride)),
                        1, std::max(1, iy1 - iy0));
                    int sz = std::clamp(
                        static_cast<int>(std::lround(
                            arng.uniform(prior.min_size.z, prior.max_size.z) / grid.stride)),
                        1, std::max(1, rb.z1 - rb.z0 - 1));
                    bool placed = false;
                    for (int retry = 0; retry < spec.max_place_retries && !placed; ++retry) {
                        int x0, y0;
                        if (prior.wall_affine) {
                            int side = arng.uniform_int(0, 3);
                            if (side == 0) {  // against y0 wall
                                x0 = arng.uniform_int(ix0, std::max(ix0, ix1 - sx));
                                y0 = iy0;
                            } else if (side == 1) {
                                x0 = arng.uniform_int(ix0, std::max(ix0, ix1 - sx));
                                y0 = std::max(iy0, iy1 - sy);
                            } else if (side == 2) {
                                x0 = ix0;
                                y0 = arng.uniform_int(iy0, std::max(iy0, iy1 - sy));
                            } else {
                                x0 = std::max(ix0, ix1 - sx);
                                y0 = arng.uniform_int(iy0, std::max(iy0, iy1 - sy));
                            }
                        } else {
                            x0 = arng.uniform_int(ix0, std::max(ix0, ix1 - sx));
                            y0 = arng.uniform_int(iy0, std::max(iy0, iy1 - sy));
                        }
                        int x1 = std::min(x0 + sx, ix1), y1 = std::min(y0 + sy, iy1);
                        int z0 = prior.at_ceiling ? rb.z1 - sz : rb.z0;
                        int z1 = prior.at_ceiling ? rb.z1 : rb.z0 + sz;
                        if (x1 <= x0 || y1 <= y0 || z1 <= z0) continue;
                        if (overlaps_same_class(cls, x0, x1, y0, y1, z0, z1)) continue;
                        paint_box(cls, x0, x1, y0, y1, z0, z1);
                        if (arng.uniform() < prior.l_shape_prob && x1 - x0 >= 2 && y1 - y0 >= 2) {
                            // Carve a quarter notch back to empty.
                            paint_box(labels.num_classes(), x0 + (x1 - x0) / 2, x1,
                                      y0 + (y1 - y0) / 2, y1, z0, z1);
                        }
                        placed = true;
                    }
                    if (!placed && inst == 0 && prior.presence_prob >= 1.0) {
                        scene_ok = false;  // mandatory class failed: fresh attempt
                        break;
                    }
                }
                // Class may have been partially carved away; presence is
                // recomputed below from the ids.
            }
            if (!scene_ok) continue;

            scene.volume = SemanticVolume(grid, labels);
            scene.classes.clear();
            for (int k = 0; k < grid.d; ++k)
                for (int j = 0; j < grid.h; ++j)
                    for (int i = 0; i < grid.w; ++i) {
                        int cls = ids.at(i, j, k);
                        if (cls == labels.num_classes()) continue;
                        scene.volume.set_one_hot(i, j, k, cls);
                        scene.classes.insert(cls);
                    }
            out.push_back(std::move(scene));
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// View-configuration study: how well random view combinations approximate
// scene-level class statistics, as a function of view count and coverage.

// First-hit class-visibility set of a horizontal wedge seen from the room
// center. A class counts as present with at least `min_hits` ray hits.
inline std::set<int> wedge_visibility(const SemanticVolume& volume, const RoomSpec& room,
                                      double azimuth_start_deg, double coverage_deg,
                                      int min_hits = 4) {
    const GridSpec& grid = volume.grid;
    Vec3 eye{grid.extent_x() / 2, grid.extent_y() / 2, std::min(1.5, room.size_z * 0.75)};
    std::vector<int> hits(static_cast<size_t>(volume.labels.num_classes()), 0);
    const double az_step = 2.0, el_step = 10.0;
    for (double el = -50.0; el <= 50.0 + 1e-9; el += el_step) {
        double ce = std::cos(el * M_PI / 180.0), se = std::sin(el * M_PI / 180.0);
        for (double az = azimuth_start_deg; az < azimuth_start_deg + coverage_deg - 1e-9;
             az += az_step) {
            double a = az * M_PI / 180.0;
            Vec3 dir{ce * std::cos(a), ce * std::sin(a), se};
            RayTrace t = traverse_ray(grid, eye, dir, grid.diagonal());
            for (size_t i = 0; i < t.size(); ++i) {
                if (volume.empty_prob(t.voxels[i]) < 0.5) {
                    int best = 0;
                    double bp = volume.at(0, t.voxels[i]);
                    for (int c = 1; c < volume.labels.num_classes(); ++c)
                        if (volume.at(c, t.voxels[i]) > bp) {
                            bp = volume.at(c, t.voxels[i]);
                            best = c;
                        }
                    ++hits[static_cast<size_t>(best)];
                    break;
                }
            }
        }
    }
    std::set<int> visible;
    for (size_t c = 0; c < hits.size(); ++c)
        if (hits[c] >= min_hits) visible.insert(static_cast<int>(c));
    return visible;
}

struct ViewConfigReport {
    std::vector<int> view_counts;
    std::vector<double> coverages_deg;
    std::vector<double> scores;  // row = count index, col = coverage index
    double viz_clamp = 1.5e-2;

    double at(size_t count_idx, size_t cov_idx) const {
        return scores[count_idx * coverages_deg.size() + cov_idx];
    }

    void write_csv(std::ostream& out, bool clamped) const {
        out << "views";
        for (double c : coverages_deg) out << "," << c;
        out << "\n";
        for (size_t r = 0; r < view_counts.size(); ++r) {
            out << view_counts[r];
            for (size_t c = 0; c < coverages_deg.size(); ++c) {
                double v = at(r, c);
                if (clamped) v = std::min(v, viz_clamp);
                out << "," << v;
            }
            out << "\n";
        }
    }
};

// For each (view count, coverage) cell: sample random view combinations,
// build their class-presence sets, and compare the combination
// co-occurrence map against the ground-truth scene map. `single_scene`
// restricts each combination's views to one scene (the regime available
// for generated scenes).
inline ViewConfigReport view_config_study(const std::vector<SyntheticScene>& scenes,
                                          std::vector<int> view_counts,
                                          std::vector<double> coverages_deg, int samples,
                                          Rng rng, bool single_scene = false) {
    if (scenes.empty()) throw DataError("view study needs scenes");
    const int num_classes = scenes.front().volume.labels.num_classes();

    std::vector<std::set<int>> gt_sets;
    for (const auto& s : scenes) gt_sets.push_back(s.classes);
    CooccurrenceMap gt_map = cooccurrence(gt_sets, num_classes);

    ViewConfigReport report;
    report.view_counts = view_counts;
    report.coverages_deg = coverages_deg;
    report.scores.assign(view_counts.size() * coverages_deg.size(), 0.0);

    for (size_t ci = 0; ci < coverages_deg.size(); ++ci) {
        double coverage = coverages_deg[ci];
        int wedges = static_cast<int>(std::ceil(360.0 / coverage));
        double spacing = 360.0 / wedges;

        // Wedge visibility sets per scene, computed once per coverage.
        std::vector<std::vector<std::set<int>>> vis(scenes.size());
        parallel_for(static_cast<i64>(scenes.size()), [&](i64 s) {
            auto& per_scene = vis[static_cast<size_t>(s)];
            per_scene.resize(static_cast<size_t>(wedges));
            for (int w = 0; w < wedges; ++w)
                per_scene[static_cast<size_t>(w)] =
                    wedge_visibility(scenes[static_cast<size_t>(s)].volume,
                                     scenes[static_cast<size_t>(s)].room, w * spacing, coverage);
        });

        for (size_t ni = 0; ni < view_counts.size(); ++ni) {
            int n = view_counts[ni];
            Rng cell_rng = rng.fork("cell" + std::to_string(ni) + "_" + std::to_string(ci));
            std::vector<std::set<int>> combos;
            combos.reserve(static_cast<size_t>(samples));
            for (int s = 0; s < samples; ++s) {
                std::set<int> combo;
                if (single_scene) {
                    size_t scene = static_cast<size_t>(cell_rng.next_below(scenes.size()));
                    for (int v = 0; v < n; ++v) {
                        int w = static_cast<int>(cell_rng.next_below(
                            static_cast<u64>(wedges)));
                        const auto& set = vis[scene][static_cast<size_t>(w)];
                        combo.insert(set.begin(), set.end());
                    }
                } else {
                    for (int v = 0; v < n; ++v) {
                        size_t scene = static_cast<size_t>(cell_rng.next_below(scenes.size()));
                        int w = static_cast<int>(cell_rng.next_below(
                            static_cast<u64>(wedges)));
                        const auto& set = vis[scene][static_cast<size_t>(w)];
                        combo.insert(set.begin(), set.end());
                    }
                }
                combos.push_back(std::move(combo));
            }
            CooccurrenceMap approx = cooccurrence(combos, num_classes);
            report.scores[ni * coverages_deg.size() + ci] = cooccurrence_diff(gt_map, approx);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Synthetic training pools: render each procedural scene from a few
// inward-looking cameras, mimicking the real capture geometry.

struct SyntheticPoolOptions {
    int scenes = 125;
    int views_per_scene = 4;
    int image_width = 32, image_height = 18;
    double hfov_degrees = 110.0;
    double camera_height = 1.5;
    double max_view_angle_deg = 45.0;  // toward room center, by construction
};

inline TrainingPool make_synthetic_pool(const SyntheticSceneSpec& spec, const GridSpec& grid,
                                        const SyntheticPoolOptions& opt, Rng rng,
                                        std::vector<SyntheticScene>* scenes_out = nullptr) {
    std::vector<SyntheticScene> scenes = synth_scenes(spec, grid, opt.scenes, rng.fork("scenes"));
    TrainingPool pool;
    pool.grid = grid;
    pool.labels = spec.label_space();
    pool.far_depth = grid.diagonal();

    Rng cam_rng = rng.fork("cameras");
    Vec3 grid_center{grid.extent_x() / 2, grid.extent_y() / 2, 0};
    for (size_t s = 0; s < scenes.size(); ++s) {
        const SyntheticScene& scene = scenes[s];
        // Cameras must stay strictly inside the room interior, clear of
        // the one-voxel wall shell.
        double inner_x = std::max(0.5 * scene.room.size_x - 1.5 * grid.stride, 0.2);
        double inner_y = std::max(0.5 * scene.room.size_y - 1.5 * grid.stride, 0.2);
        double eye_z = std::min(opt.camera_height, 0.75 * scene.room.size_z);
        for (int v = 0; v < opt.views_per_scene; ++v) {
            double ang = cam_rng.uniform(0, 2 * M_PI);
            double frac = cam_rng.uniform(0.55, 0.9);
            Vec3 pos{grid_center.x + std::cos(ang) * frac * inner_x,
                     grid_center.y + std::sin(ang) * frac * inner_y, eye_z};
            double jitter = opt.max_view_angle_deg * 0.6;
            Vec3 target{grid_center.x + cam_rng.uniform(-1.0, 1.0) * jitter / 90.0 * inner_x,
                        grid_center.y + cam_rng.uniform(-1.0, 1.0) * jitter / 90.0 * inner_y,
                        eye_z};
            Camera cam = make_camera_looking(pos, target, opt.image_width, opt.image_height,
                                             opt.hfov_degrees, pool.far_depth);
            PoolEntry entry;
            entry.image = render_view(scene.volume, cam);
            entry.scene_tag = "scene" + std::to_string(s);
            entry.room = scene.room;
            pool.entries.push_back(std::move(entry));
        }
    }
    if (scenes_out) *scenes_out = std::move(scenes);
    return pool;
}

}  // namespace sgs
