#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "sgs/core.hpp"
#include "sgs/rng.hpp"

using namespace sgs;

namespace {

LabelSpace two_classes() { return LabelSpace{{"bed", "lamp"}}; }

SemanticVolume random_volume(const GridSpec& grid, const LabelSpace& labels, Rng& rng) {
    SemanticVolume v(grid, labels);
    const i64 n = grid.num_voxels();
    const int ch = labels.channels();
    for (i64 vox = 0; vox < n; ++vox) {
        double sum = 0;
        std::vector<double> raw(ch);
        for (int c = 0; c < ch; ++c) {
            raw[c] = -std::log(std::max(rng.uniform(), 1e-12));
            sum += raw[c];
        }
        for (int c = 0; c < ch; ++c) v.probs[static_cast<size_t>(c) * n + vox] = raw[c] / sum;
    }
    return v;
}

}  // namespace

TEST_CASE("room mask fills the whole grid at maximal size") {
    GridSpec grid{8, 8, 4, 0.25};
    RoomSpec room{grid.extent_x(), grid.extent_y(), grid.extent_z()};
    RoomMaskVolume mask = make_room_mask(room, grid);
    REQUIRE(mask.count_inside() == grid.num_voxels());
}

TEST_CASE("half-size room mask matches direct enumeration of voxel centers") {
    GridSpec grid{32, 32, 16, 0.2};
    RoomSpec room{0.5 * grid.extent_x(), 0.5 * grid.extent_y(), grid.extent_z()};
    RoomMaskVolume mask = make_room_mask(room, grid);

    // Oracle: count voxel centers inside the box by enumeration.
    i64 expected = 0;
    for (int k = 0; k < grid.d; ++k)
        for (int j = 0; j < grid.h; ++j)
            for (int i = 0; i < grid.w; ++i) {
                double x = (i + 0.5) * grid.stride, y = (j + 0.5) * grid.stride,
                       z = (k + 0.5) * grid.stride;
                bool in = std::abs(x - grid.extent_x() / 2) <= room.size_x / 2 &&
                          std::abs(y - grid.extent_y() / 2) <= room.size_y / 2 &&
                          z <= room.size_z;
                if (in) {
                    ++expected;
                    REQUIRE(mask.at(i, j, k) == 1);
                } else {
                    REQUIRE(mask.at(i, j, k) == 0);
                }
            }
    REQUIRE(expected == grid.num_voxels() / 4);  // w/2 * h/2 * d
    REQUIRE(mask.count_inside() == expected);
}

TEST_CASE("default grid produces the 32x32x16 mask shape") {
    GridSpec grid;  // paper defaults
    RoomSpec room{3.0, 4.0, 2.4};
    RoomMaskVolume mask = make_room_mask(room, grid);
    REQUIRE(mask.grid.w == 32);
    REQUIRE(mask.grid.h == 32);
    REQUIRE(mask.grid.d == 16);
    REQUIRE(mask.mask.size() == static_cast<size_t>(32 * 32 * 16));
}

TEST_CASE("room mask rejects rooms larger than the grid") {
    GridSpec grid{8, 8, 4, 0.25};
    RoomSpec room{grid.extent_x() + 0.1, 1.0, 1.0};
    REQUIRE_THROWS_AS(make_room_mask(room, grid), DataError);
}

TEST_CASE("room mask is monotone in the room size") {
    GridSpec grid{16, 16, 8, 0.2};
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        RoomSpec small{rng.uniform(0.2, grid.extent_x()), rng.uniform(0.2, grid.extent_y()),
                       rng.uniform(0.2, grid.extent_z())};
        RoomSpec big{rng.uniform(small.size_x, grid.extent_x()),
                     rng.uniform(small.size_y, grid.extent_y()),
                     rng.uniform(small.size_z, grid.extent_z())};
        RoomMaskVolume a = make_room_mask(small, grid), b = make_room_mask(big, grid);
        for (size_t i = 0; i < a.mask.size(); ++i) REQUIRE(a.mask[i] <= b.mask[i]);
    }
}

TEST_CASE("label argmax picks the max and breaks ties toward low indices") {
    GridSpec grid{2, 2, 2, 0.5};
    LabelSpace labels = two_classes();
    SemanticVolume v(grid, labels);

    v.at(0, 0, 0, 0) = 0.1;
    v.at(1, 0, 0, 0) = 0.2;
    v.at(2, 0, 0, 0) = 0.7;

    double third = 1.0 / 3.0;
    v.at(0, 1, 0, 0) = third;
    v.at(1, 1, 0, 0) = third;
    v.at(2, 1, 0, 0) = third;

    LabelVolume ids = label_argmax(v);
    REQUIRE(ids.at(0, 0, 0) == 2);  // empty wins
    REQUIRE(ids.at(1, 0, 0) == 0);  // uniform tie -> class 0
}

TEST_CASE("label argmax of a one-hot volume is a round trip") {
    GridSpec grid{6, 5, 4, 0.3};
    LabelSpace labels{{"a", "b", "c"}};
    Rng rng(7);
    SemanticVolume v(grid, labels);
    LabelVolume want(grid, labels.num_classes());
    for (int k = 0; k < grid.d; ++k)
        for (int j = 0; j < grid.h; ++j)
            for (int i = 0; i < grid.w; ++i) {
                int id = rng.uniform_int(0, labels.num_classes());
                want.at(i, j, k) = static_cast<u8>(id);
                v.set_one_hot(i, j, k, id);
            }
    LabelVolume got = label_argmax(v);
    REQUIRE(got.ids == want.ids);
}

TEST_CASE("mask penalty examples") {
    GridSpec grid{4, 4, 2, 0.25};
    LabelSpace labels = two_classes();

    SECTION("all outside voxels certainly empty -> zero") {
        SemanticVolume v(grid, labels);  // defaults to empty
        RoomSpec room{0.5, 0.5, 0.25};
        REQUIRE(mask_empty_penalty(v, make_room_mask(room, grid)) == 0.0);
    }

    SECTION("single outside voxel at p_e = exp(-1) contributes 1") {
        SemanticVolume v(grid, labels);
        RoomMaskVolume mask = make_room_mask(RoomSpec{0.5, 0.5, 0.25}, grid);
        // Make every outside voxel p_e = 1 except one with p_e = e^-1.
        i64 outside = grid.num_voxels() - mask.count_inside();
        double pe = std::exp(-1.0);
        v.at(labels.empty_index(), 0, 0, 1) = pe;
        v.at(0, 0, 0, 1) = 1.0 - pe;
        REQUIRE(mask.at(0, 0, 1) == 0);
        REQUIRE_THAT(mask_empty_penalty(v, mask),
                     Catch::Matchers::WithinAbs(1.0 / static_cast<double>(outside), 1e-12));
    }

    SECTION("all-ones mask -> zero regardless of volume") {
        Rng rng(3);
        SemanticVolume v = random_volume(grid, labels, rng);
        RoomSpec room{grid.extent_x(), grid.extent_y(), grid.extent_z()};
        REQUIRE(mask_empty_penalty(v, make_room_mask(room, grid)) == 0.0);
    }

    SECTION("penalty is nonnegative, zero only at p_e = 1 outside") {
        Rng rng(5);
        for (int t = 0; t < 10; ++t) {
            SemanticVolume v = random_volume(grid, labels, rng);
            RoomMaskVolume mask = make_room_mask(RoomSpec{0.6, 0.6, 0.4}, grid);
            double pen = mask_empty_penalty(v, mask);
            REQUIRE(pen >= 0.0);
            REQUIRE(pen > 0.0);  // random volume never exactly empty outside
        }
    }
}

TEST_CASE("random volumes satisfy the unit-sum invariant scan") {
    GridSpec grid{8, 8, 4, 0.2};
    LabelSpace labels{{"a", "b", "c", "d"}};
    Rng rng(11);
    SemanticVolume v = random_volume(grid, labels, rng);
    REQUIRE(v.max_sum_deviation() < 1e-9);
    REQUIRE_NOTHROW(v.validate());
}

TEST_CASE("SGSV round trip preserves grid, labels, and probabilities") {
    GridSpec grid{8, 8, 4, 0.25};
    LabelSpace labels{{"bed", "lamp", "desk"}};
    Rng rng(13);
    SemanticVolume v = random_volume(grid, labels, rng);
    auto path = std::filesystem::temp_directory_path() / "sgs_test_volume.sgsv";
    save_volume(v, path, 0xabcdef);
    u64 hash = 0;
    SemanticVolume loaded = load_volume(path, &hash);
    REQUIRE(hash == 0xabcdef);
    REQUIRE(loaded.grid == grid);
    REQUIRE(loaded.labels == labels);
    REQUIRE(loaded.probs.size() == v.probs.size());
    for (size_t i = 0; i < v.probs.size(); ++i)
        REQUIRE_THAT(loaded.probs[i], Catch::Matchers::WithinAbs(v.probs[i], 1e-6));
    REQUIRE_NOTHROW(loaded.validate());
    std::filesystem::remove(path);
}

TEST_CASE("SGSL round trip is exact") {
    GridSpec grid{5, 6, 3, 0.4};
    Rng rng(17);
    LabelVolume ids(grid, 4);
    for (auto& id : ids.ids) id = static_cast<u8>(rng.uniform_int(0, 4));
    auto path = std::filesystem::temp_directory_path() / "sgs_test_labels.sgsl";
    save_labels(ids, path);
    LabelVolume loaded = load_labels(path);
    REQUIRE(loaded.ids == ids.ids);
    REQUIRE(loaded.num_classes == 4);
    std::filesystem::remove(path);
}
