#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgs/core.hpp"
#include "sgs/projection.hpp"

namespace sgs {

// One ingested training sample: a semantic-segmented depth image with its
// camera, plus whatever scene metadata survived ingestion.
struct PoolEntry {
    SemanticDepthImage image;
    std::string scene_tag;                 // empty when unknown
    std::optional<RoomSpec> room;          // known for synthetic data
    std::string file;                      // relative path inside the pool dir
};

struct TrainingPool {
    GridSpec grid;
    LabelSpace labels;
    double far_depth = 0;
    std::vector<PoolEntry> entries;

    size_t size() const { return entries.size(); }
};

inline void save_pool(const TrainingPool& pool, const std::filesystem::path& dir,
                      u64 config_hash = 0) {
    std::filesystem::create_directories(dir / "images");
    nlohmann::json meta;
    meta["grid"] = {{"w", pool.grid.w},
                    {"h", pool.grid.h},
                    {"d", pool.grid.d},
                    {"stride", pool.grid.stride}};
    meta["labels"] = pool.labels.class_names;
    meta["far_depth"] = pool.far_depth;
    meta["config_hash"] = config_hash;
    nlohmann::json entries = nlohmann::json::array();
    for (size_t i = 0; i < pool.entries.size(); ++i) {
        const PoolEntry& e = pool.entries[i];
        char name[32];
        std::snprintf(name, sizeof(name), "images/%06zu.sgsi", i);
        save_image(e.image, dir / name, config_hash);
        nlohmann::json je;
        je["file"] = name;
        if (!e.scene_tag.empty()) je["scene"] = e.scene_tag;
        if (e.room) je["room"] = {e.room->size_x, e.room->size_y, e.room->size_z};
        entries.push_back(je);
    }
    meta["entries"] = entries;
    std::ofstream out(dir / "pool.json");
    out << meta.dump(2) << "\n";
}

inline TrainingPool load_pool(const std::filesystem::path& dir) {
    std::ifstream in(dir / "pool.json");
    if (!in) throw DataError("cannot open pool index: " + (dir / "pool.json").string());
    nlohmann::json meta = nlohmann::json::parse(in);
    TrainingPool pool;
    pool.grid.w = meta["grid"]["w"];
    pool.grid.h = meta["grid"]["h"];
    pool.grid.d = meta["grid"]["d"];
    pool.grid.stride = meta["grid"]["stride"];
    pool.labels.class_names = meta["labels"].get<std::vector<std::string>>();
    pool.far_depth = meta["far_depth"];
    for (const auto& je : meta["entries"]) {
        PoolEntry e;
        e.file = je["file"];
        e.image = load_image(dir / e.file);
        if (je.contains("scene")) e.scene_tag = je["scene"];
        if (je.contains("room")) {
            auto r = je["room"];
            e.room = RoomSpec{r[0], r[1], r[2]};
        }
        pool.entries.push_back(std::move(e));
    }
    return pool;
}

}  // namespace sgs
