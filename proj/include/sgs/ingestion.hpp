#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sgs/core.hpp"
#include "sgs/projection.hpp"
#include "sgs/rng.hpp"

namespace sgs {

struct LabeledPointCloud {
    std::vector<Vec3> points;
    std::vector<int> class_ids;
    i64 skipped_pixels = 0;  // non-finite depth

    size_t size() const { return points.size(); }
};

// Each non-empty pixel becomes one point at its depth along the pixel
// ray, tagged with the argmax class. The depth is nudged forward by a
// hair so points rendered exactly on a voxel entry face land inside the
// voxel the ray was entering; 1e-9 m is far above f64 rounding at room
// scale and far below any voxel stride.
inline LabeledPointCloud backproject(const SemanticDepthImage& image) {
    constexpr double kFaceNudge = 1e-9;
    image.camera.validate();
    LabeledPointCloud cloud;
    const Vec3 origin = image.camera.position();
    for (int v = 0; v < image.height; ++v)
        for (int u = 0; u < image.width; ++u) {
            int cls = image.argmax_class(u, v);
            if (cls == image.empty_index()) continue;
            double depth = image.depth_at(u, v);
            if (!std::isfinite(depth) || depth <= 0) {
                ++cloud.skipped_pixels;
                continue;
            }
            Vec3 dir = image.camera.pixel_ray(u, v);
            cloud.points.push_back(origin + dir * (depth + kFaceNudge));
            cloud.class_ids.push_back(cls);
        }
    return cloud;
}

struct VoxelizeStats {
    i64 dropped_outside = 0;
    i64 occupied_voxels = 0;
};

// Majority vote per voxel, ties toward the lowest class index; voxels
// without points stay certainly-empty. Points outside the grid are
// dropped and counted.
inline SemanticVolume voxelize(const LabeledPointCloud& cloud, const GridSpec& grid,
                               const LabelSpace& labels, VoxelizeStats* stats = nullptr) {
    if (cloud.points.size() != cloud.class_ids.size())
        throw DataError("point/class length mismatch");
    const i64 n = grid.num_voxels();
    const int classes = labels.num_classes();
    std::vector<u32> votes(static_cast<size_t>(n) * classes, 0);
    VoxelizeStats local;
    for (size_t p = 0; p < cloud.points.size(); ++p) {
        const Vec3& pt = cloud.points[p];
        int i = static_cast<int>(std::floor(pt.x / grid.stride));
        int j = static_cast<int>(std::floor(pt.y / grid.stride));
        int k = static_cast<int>(std::floor(pt.z / grid.stride));
        if (!grid.in_bounds(i, j, k)) {
            ++local.dropped_outside;
            continue;
        }
        int cls = cloud.class_ids[p];
        if (cls < 0 || cls >= classes) throw DataError("point class id out of range");
        ++votes[static_cast<size_t>(grid.voxel_index(i, j, k)) * classes + cls];
    }
    SemanticVolume out(grid, labels);
    for (i64 v = 0; v < n; ++v) {
        const u32* row = &votes[static_cast<size_t>(v) * classes];
        int best = -1;
        u32 best_votes = 0;
        for (int c = 0; c < classes; ++c)
            if (row[c] > best_votes) {
                best_votes = row[c];
                best = c;
            }
        if (best < 0) continue;
        ++local.occupied_voxels;
        for (int c = 0; c <= classes; ++c) out.at(c, v) = (c == best) ? 1.0 : 0.0;
    }
    if (stats) *stats = local;
    return out;
}

// ---------------------------------------------------------------------------
// Pose from a visible wall. The camera is assumed level (gravity from the
// capture device), so wall planes are vertical: normals have no camera-Y
// component. RANSAC over back-projected wall pixels, then a least-squares
// refinement of the horizontal line fit.

struct PoseEstimate {
    Pose pose;          // camera -> room; wall becomes the plane y = distance
    double distance = 0;  // perpendicular camera-to-wall distance, meters
    double yaw = 0;       // wall-normal bearing in the camera frame, radians
    int inliers = 0;
};

inline PoseEstimate estimate_pose_from_wall(const SemanticDepthImage& image, int wall_class,
                                            u64 seed = 12345) {
    constexpr int kMinWallPixels = 50;
    constexpr double kInlierThreshold = 0.05;  // meters
    constexpr int kIterations = 200;

    std::vector<Vec3> pts;  // camera frame
    for (int v = 0; v < image.height; ++v)
        for (int u = 0; u < image.width; ++u) {
            if (image.argmax_class(u, v) != wall_class) continue;
            double depth = image.depth_at(u, v);
            if (!std::isfinite(depth) || depth <= 0) continue;
            Vec3 dc{(u + 0.5 - image.camera.cx) / image.camera.fx,
                    (v + 0.5 - image.camera.cy) / image.camera.fy, 1.0};
            pts.push_back(dc.normalized() * depth);
        }
    if (static_cast<int>(pts.size()) < kMinWallPixels)
        throw DataError("pose estimation failed: only " + std::to_string(pts.size()) +
                        " wall pixels");

    Rng rng(seed);
    int best_inliers = -1;
    double best_nx = 0, best_nz = 1, best_c = 0;
    for (int it = 0; it < kIterations; ++it) {
        size_t a = static_cast<size_t>(rng.next_below(pts.size()));
        size_t b = static_cast<size_t>(rng.next_below(pts.size()));
        if (a == b) continue;
        // Vertical plane through two points: horizontal normal orthogonal
        // to their horizontal difference.
        double dx = pts[b].x - pts[a].x, dz = pts[b].z - pts[a].z;
        double len = std::hypot(dx, dz);
        if (len < 1e-6) continue;
        double nx = -dz / len, nz = dx / len;
        double c = nx * pts[a].x + nz * pts[a].z;
        if (c < 0) {
            nx = -nx;
            nz = -nz;
            c = -c;
        }
        int inl = 0;
        for (const Vec3& p : pts)
            if (std::abs(nx * p.x + nz * p.z - c) <= kInlierThreshold) ++inl;
        if (inl > best_inliers) {
            best_inliers = inl;
            best_nx = nx;
            best_nz = nz;
            best_c = c;
        }
    }
    if (best_inliers < kMinWallPixels / 2)
        throw DataError("pose estimation failed: degenerate wall fit");

    // Least-squares refinement: orthogonal line fit in the horizontal
    // plane over the inliers.
    double sx = 0, sz = 0;
    int m = 0;
    std::vector<size_t> inlier_idx;
    for (size_t i = 0; i < pts.size(); ++i)
        if (std::abs(best_nx * pts[i].x + best_nz * pts[i].z - best_c) <= kInlierThreshold) {
            sx += pts[i].x;
            sz += pts[i].z;
            inlier_idx.push_back(i);
            ++m;
        }
    sx /= m;
    sz /= m;
    double cxx = 0, cxz = 0, czz = 0;
    for (size_t i : inlier_idx) {
        double ex = pts[i].x - sx, ez = pts[i].z - sz;
        cxx += ex * ex;
        cxz += ex * ez;
        czz += ez * ez;
    }
    // Smallest-eigenvalue direction of the 2x2 covariance is the normal.
    double theta = 0.5 * std::atan2(2 * cxz, cxx - czz);
    // theta is the direction of maximal variance (the wall line).
    double nx = -std::sin(theta), nz = std::cos(theta);
    {
        // Of the two eigen-directions pick the one with smaller variance.
        double v1 = cxx * std::cos(theta) * std::cos(theta) +
                    2 * cxz * std::sin(theta) * std::cos(theta) +
                    czz * std::sin(theta) * std::sin(theta);
        double v2 = cxx * nx * nx + 2 * cxz * nx * nz + czz * nz * nz;
        if (v1 < v2) {
            nx = std::cos(theta);
            nz = std::sin(theta);
        }
    }
    double c = nx * sx + nz * sz;
    if (c < 0) {
        nx = -nx;
        nz = -nz;
        c = -c;
    }

    PoseEstimate est;
    est.distance = c;
    est.yaw = std::atan2(nx, nz);
    est.inliers = m;
    // Rotation sending the wall normal to room +Y with Z up; camera at
    // the room origin so the wall is the plane y = distance.
    double ca = std::cos(est.yaw), sa = std::sin(est.yaw);
    est.pose.rotation = Mat3{{ca, 0, -sa, sa, 0, ca, 0, -1, 0}};
    est.pose.translation = Vec3{0, 0, 0};
    return est;
}

// ---------------------------------------------------------------------------
// Dataset manifests.

struct ManifestEntry {
    std::string image_path;
    Camera camera;          // pose may come from the manifest or estimation
    std::string scene_tag;  // empty when unknown
    Vec3 room_center{0, 0, 0};
    bool has_pose = false;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    // raw class id -> target class id, or -1 for "drop" (rendered as empty).
    std::vector<std::pair<int, int>> label_remap;

    int remap_of(int raw) const {
        for (auto& [from, to] : label_remap)
            if (from == raw) return to;
        return -1;
    }
};

// Line format: path r00..r33 (4x4 pose, row-major) fx fy cx cy [scene_tag]
// Lines starting with '#' are comments. A pose of all zeros means
// "estimate from the wall".
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());
    DatasetManifest manifest;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        double m[16];
        if (!(ss >> e.image_path)) continue;
        for (int i = 0; i < 16; ++i)
            if (!(ss >> m[i]))
                throw DataError("manifest line " + std::to_string(lineno) + ": bad pose");
        if (!(ss >> e.camera.fx >> e.camera.fy >> e.camera.cx >> e.camera.cy))
            throw DataError("manifest line " + std::to_string(lineno) + ": bad intrinsics");
        ss >> e.scene_tag;
        bool all_zero = true;
        for (double x : m)
            if (x != 0) all_zero = false;
        if (!all_zero) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) e.camera.pose.rotation(r, c) = m[r * 4 + c];
            e.camera.pose.translation = {m[3], m[7], m[11]};
            e.has_pose = true;
        }
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open manifest for writing: " + path.string());
    out.precision(17);
    for (const auto& e : manifest.entries) {
        out << e.image_path;
        double m[16] = {0};
        if (e.has_pose) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) m[r * 4 + c] = e.camera.pose.rotation(r, c);
            m[3] = e.camera.pose.translation.x;
            m[7] = e.camera.pose.translation.y;
            m[11] = e.camera.pose.translation.z;
            m[15] = 1;
        }
        for (double x : m) out << " " << x;
        out << " " << e.camera.fx << " " << e.camera.fy << " " << e.camera.cx << " "
            << e.camera.cy;
        if (!e.scene_tag.empty()) out << " " << e.scene_tag;
        out << "\n";
    }
}

// Remap table: "<raw_id> <class_name>" or "<raw_id> drop" per line.
inline std::vector<std::pair<int, int>> load_remap(const std::filesystem::path& path,
                                                   const LabelSpace& labels) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open remap table: " + path.string());
    std::vector<std::pair<int, int>> remap;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        int raw;
        std::string target;
        if (!(ss >> raw >> target)) throw DataError("bad remap line: " + line);
        remap.emplace_back(raw, target == "drop" ? -1 : labels.index_of(target));
    }
    return remap;
}

// Applies a label remap to an image: argmax raw class -> target one-hot,
// dropped classes become empty.
inline SemanticDepthImage remap_image(const SemanticDepthImage& raw,
                                      const std::vector<std::pair<int, int>>& remap,
                                      const LabelSpace& target) {
    SemanticDepthImage out(raw.width, raw.height, target.num_classes());
    out.camera = raw.camera;
    out.depth = raw.depth;
    const size_t plane = static_cast<size_t>(raw.width) * raw.height;
    for (int v = 0; v < raw.height; ++v)
        for (int u = 0; u < raw.width; ++u) {
            int cls = raw.argmax_class(u, v);
            int mapped = target.num_classes();  // empty
            if (cls != raw.empty_index()) {
                for (auto& [from, to] : remap)
                    if (from == cls) {
                        mapped = to < 0 ? target.num_classes() : to;
                        break;
                    }
            }
            out.semantics[static_cast<size_t>(mapped) * plane + out.pixel_index(u, v)] = 1.0;
        }
    return out;
}

// Keeps entries whose optical axis deviates from the ray to the room
// center by at most max_angle degrees.
inline DatasetManifest filter_by_view_angle(const DatasetManifest& manifest,
                                            double max_angle_degrees = 45.0) {
    DatasetManifest out;
    out.label_remap = manifest.label_remap;
    for (const auto& e : manifest.entries) {
        Vec3 to_center = (e.room_center - e.camera.position()).normalized();
        double cosang = to_center.dot(e.camera.optical_axis());
        double angle = std::acos(std::clamp(cosang, -1.0, 1.0)) * 180.0 / M_PI;
        if (angle <= max_angle_degrees) out.entries.push_back(e);
    }
    return out;
}

// Resamples camera intrinsics to a new pixel grid.
inline Camera rescale_camera(const Camera& cam, int out_width, int out_height) {
    Camera out = cam;
    double sx = static_cast<double>(out_width) / cam.width;
    double sy = static_cast<double>(out_height) / cam.height;
    out.fx *= sx;
    out.cx *= sx;
    out.fy *= sy;
    out.cy *= sy;
    out.width = out_width;
    out.height = out_height;
    return out;
}

// The voxelize-and-rerender downsampling: back-project the image, bin it
// into the grid, and render the volume from the original viewpoint at the
// training resolution.
inline SemanticDepthImage downsample_to_training(const SemanticDepthImage& image,
                                                 const GridSpec& grid, const LabelSpace& labels,
                                                 int out_width = 32, int out_height = 18) {
    LabeledPointCloud cloud = backproject(image);
    SemanticVolume volume = voxelize(cloud, grid, labels);
    Camera cam = rescale_camera(image.camera, out_width, out_height);
    if (cam.far_depth <= 0) cam.far_depth = grid.diagonal();
    return render_view(volume, cam);
}

struct IngestReport {
    i64 input_entries = 0;
    i64 ingested_images = 0;
    i64 dropped_angle = 0;
    i64 dropped_pose = 0;
    i64 dropped_bad_data = 0;
    i64 scenes = 0;   // distinct scene tags, when present
    i64 classes = 0;  // target classes that appear in the ingested pool
};

}  // namespace sgs
