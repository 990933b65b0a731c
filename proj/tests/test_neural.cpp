#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sgs/neural.hpp"

using namespace sgs;

namespace {

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.grid = GridSpec{8, 8, 4, 0.25};
    cfg.num_classes = 2;
    cfg.latent_dim = 8;
    cfg.gen_base_channels = 8;
    cfg.disc_base_channels = 4;
    cfg.head_hidden = 16;
    cfg.num_views = 4;
    return cfg;
}

std::vector<SemanticDepthImage> random_views(const NetConfig& cfg, Rng& rng, int n) {
    std::vector<SemanticDepthImage> views;
    for (int i = 0; i < n; ++i) {
        SemanticDepthImage img(cfg.image_width(), cfg.image_height(), cfg.num_classes);
        img.camera.width = img.width;
        img.camera.height = img.height;
        img.camera.fx = img.camera.fy = 4;
        img.camera.cx = img.width / 2.0;
        img.camera.cy = img.height / 2.0;
        img.camera.far_depth = cfg.grid.diagonal();
        for (double& d : img.depth) d = rng.uniform(0.2, img.camera.far_depth);
        size_t plane = static_cast<size_t>(img.width) * img.height;
        for (size_t p = 0; p < plane; ++p) {
            double sum = 0;
            std::vector<double> raw(static_cast<size_t>(img.channels()));
            for (auto& x : raw) {
                x = rng.uniform(0.05, 1.0);
                sum += x;
            }
            for (int c = 0; c < img.channels(); ++c)
                img.semantics[static_cast<size_t>(c) * plane + p] = raw[static_cast<size_t>(c)] / sum;
        }
        views.push_back(std::move(img));
    }
    return views;
}

}  // namespace

TEST_CASE("generator emits a valid semantic volume of the right shape") {
    NetConfig cfg = tiny_config();
    Rng rng(1);
    GeneratorParams gen = init_generator(cfg, rng);
    RoomEncoderParams room = init_room_encoder(cfg, rng);
    LabelSpace labels{{"a", "b"}};

    Tensor z = Tensor::randn({cfg.latent_dim}, rng);
    RoomMaskVolume mask = make_room_mask(RoomSpec{1.5, 1.5, 0.75}, cfg.grid);
    SemanticVolume vol = generate(z, mask, gen, room, labels);
    REQUIRE(vol.grid == cfg.grid);
    REQUIRE(vol.max_sum_deviation() < 1e-9);  // softmax forces unit sums
    REQUIRE_NOTHROW(vol.validate());
}

TEST_CASE("room encoding has the latent length and a generator-aligned pyramid") {
    NetConfig cfg = tiny_config();
    Rng rng(2);
    RoomEncoderParams room = init_room_encoder(cfg, rng);
    RoomMaskVolume mask = make_room_mask(RoomSpec{1.0, 1.6, 0.9}, cfg.grid);
    RoomEncoding enc = room_encode(mask, room);
    REQUIRE(enc.z_r.numel() == cfg.latent_dim);
    REQUIRE(enc.pyramid.size() == static_cast<size_t>(cfg.num_blocks()));
    // Channel counts are exactly a quarter of the generator's at the same
    // resolution.
    for (int i = 0; i < cfg.num_blocks(); ++i) {
        const Tensor& feat = enc.pyramid[static_cast<size_t>(i)];
        int gen_ch = cfg.gen_base_channels >> (cfg.num_blocks() - 1 - i);
        REQUIRE(feat.dim(0) * 4 == gen_ch);
    }
}

TEST_CASE("zero-weight encoder maps every mask to a zero latent") {
    NetConfig cfg = tiny_config();
    Rng rng(3);
    RoomEncoderParams room = init_room_encoder(cfg, rng);
    for (auto& e : room.store.entries()) e.tensor.zero_();
    RoomMaskVolume mask = make_room_mask(RoomSpec{1.2, 1.2, 0.8}, cfg.grid);
    RoomEncoding enc = room_encode(mask, room);
    for (i64 i = 0; i < enc.z_r.numel(); ++i) REQUIRE(enc.z_r[i] == 0.0);
}

TEST_CASE("different room masks give different encodings and volumes") {
    NetConfig cfg = tiny_config();
    Rng rng(4);
    GeneratorParams gen = init_generator(cfg, rng);
    RoomEncoderParams room = init_room_encoder(cfg, rng);
    LabelSpace labels{{"a", "b"}};

    RoomMaskVolume small = make_room_mask(RoomSpec{1.0, 1.0, 0.5}, cfg.grid);
    RoomMaskVolume large = make_room_mask(RoomSpec{1.9, 1.9, 1.0}, cfg.grid);
    RoomEncoding enc_small = room_encode(small, room);
    RoomEncoding enc_large = room_encode(large, room);
    double diff = 0;
    for (i64 i = 0; i < enc_small.z_r.numel(); ++i)
        diff += std::abs(enc_small.z_r[i] - enc_large.z_r[i]);
    REQUIRE(diff > 1e-9);

    Tensor z = Tensor::randn({cfg.latent_dim}, rng);
    SemanticVolume a = generate(z, small, gen, room, labels);
    SemanticVolume b = generate(z, large, gen, room, labels);
    double vdiff = 0;
    for (size_t i = 0; i < a.probs.size(); ++i) vdiff += std::abs(a.probs[i] - b.probs[i]);
    REQUIRE(vdiff > 1e-9);  // conditioning is live
}

TEST_CASE("discriminator scores are deterministic and order-sensitive") {
    NetConfig cfg = tiny_config();
    Rng rng(5);
    DiscriminatorParams disc = init_discriminator(cfg, rng);
    Rng vr(6);
    auto views = random_views(cfg, vr, 4);

    // Identical parameter state (including the spectral iteration
    // vectors) must reproduce the score bitwise.
    DiscriminatorParams clone = disc;
    double s1 = discriminate(views, disc, cfg.grid.diagonal());
    double s2 = discriminate(views, clone, cfg.grid.diagonal());
    REQUIRE(std::isfinite(s1));
    REQUIRE(s1 == s2);

    DiscriminatorParams clone2 = disc;
    std::swap(views[0], views[3]);
    double s3 = discriminate(views, clone2, cfg.grid.diagonal());
    REQUIRE(std::abs(s3 - s1) > 1e-12);  // concatenation is ordered
}

TEST_CASE("wrong view count is rejected") {
    NetConfig cfg = tiny_config();
    Rng rng(7);
    DiscriminatorParams disc = init_discriminator(cfg, rng);
    Rng vr(8);
    auto views = random_views(cfg, vr, 3);
    REQUIRE_THROWS_AS(discriminate(views, disc, cfg.grid.diagonal()), ConfigError);
}

TEST_CASE("ablation wirings instantiate and score finitely") {
    Rng vr(9);
    for (auto arch : {DiscArch::kSeparateEncoders, DiscArch::kUnifiedEncoder,
                      DiscArch::kSeparateDiscriminators}) {
        for (int n : {1, 2, 4, 6, 8}) {
            NetConfig cfg = tiny_config();
            cfg.disc_arch = arch;
            cfg.num_views = n;
            Rng rng(10 + n);
            DiscriminatorParams disc = init_discriminator(cfg, rng);
            auto views = random_views(cfg, vr, n);
            double s = discriminate(views, disc, cfg.grid.diagonal());
            REQUIRE(std::isfinite(s));
        }
    }
}

TEST_CASE("single-view configuration reproduces the SV-D wiring") {
    NetConfig cfg = tiny_config();
    cfg.num_views = 1;
    Rng rng(11);
    DiscriminatorParams disc = init_discriminator(cfg, rng);
    Rng vr(12);
    auto views = random_views(cfg, vr, 1);
    REQUIRE(std::isfinite(discriminate(views, disc, cfg.grid.diagonal())));
}

TEST_CASE("parameter counts are locked functions of the configuration") {
    // Independent re-derivation of every layer shape.
    auto expected_counts = [](const NetConfig& cfg) {
        i64 gen = 0, room = 0, disc = 0;
        int n = cfg.num_blocks();
        gen += static_cast<i64>(cfg.gen_base_channels) * 1 * 2 * 2;  // seed
        for (int b = 0; b < n; ++b) {
            i64 cin = cfg.gen_channels_in(b), cout = cfg.gen_channels_out(b);
            gen += cin * cout * 64 + cout;                              // deconv
            gen += static_cast<i64>(cfg.latent_dim) * cfg.latent_dim + cfg.latent_dim;  // mlp1
            gen += 2 * cout * cfg.latent_dim + 2 * cout;                // mlp2
        }
        i64 cin = 1;
        for (int i = 0; i < n; ++i) {
            room += static_cast<i64>(cfg.enc_channels(i)) * cin * 64 + cfg.enc_channels(i);
            cin = cfg.enc_channels(i);
        }
        room += static_cast<i64>(cfg.latent_dim) * (cfg.enc_channels(n - 1) * 4) +
                cfg.latent_dim;
        auto encoder = [&](int in_ch) {
            i64 total = 0;
            int c = in_ch;
            for (int i = 0; i < n; ++i) {
                int co = cfg.disc_base_channels << i;
                total += static_cast<i64>(co) * c * 16 + co;
                c = co;
            }
            return total;
        };
        auto head = [&](i64 in_len) {
            return static_cast<i64>(cfg.head_hidden) * in_len + cfg.head_hidden +
                   cfg.head_hidden + 1;
        };
        i64 feat = cfg.feature_len();
        switch (cfg.disc_arch) {
            case DiscArch::kSeparateEncoders:
                disc = encoder(1) + encoder(cfg.num_classes + 1) +
                       head(static_cast<i64>(cfg.num_views) * 2 * feat);
                break;
            case DiscArch::kUnifiedEncoder:
                disc = encoder(cfg.num_classes + 2) +
                       head(static_cast<i64>(cfg.num_views) * feat);
                break;
            case DiscArch::kSeparateDiscriminators:
                disc = encoder(1) + encoder(cfg.num_classes + 1) +
                       2 * head(static_cast<i64>(cfg.num_views) * feat);
                break;
        }
        return std::array<i64, 3>{gen, room, disc};
    };

    NetConfig cfg = tiny_config();
    Rng rng(13);
    auto exp = expected_counts(cfg);
    REQUIRE(init_generator(cfg, rng).store.trainable_count() == exp[0]);
    REQUIRE(init_room_encoder(cfg, rng).store.trainable_count() == exp[1]);
    REQUIRE(init_discriminator(cfg, rng).store.trainable_count() == exp[2]);

    // Regression locks for the tiny test configuration.
    REQUIRE(exp[0] == 8 * 4 + (8 * 4 * 64 + 4 + 8 * 8 + 8 + 2 * 4 * 8 + 2 * 4) +
                          (4 * 3 * 64 + 3 + 8 * 8 + 8 + 2 * 3 * 8 + 2 * 3));
    REQUIRE(init_generator(cfg, rng).store.trainable_count() == 3125);
    REQUIRE(init_room_encoder(cfg, rng).store.trainable_count() == 267);
    REQUIRE(init_discriminator(cfg, rng).store.trainable_count() == 3385);

    // Paper-scale locks.
    {
        NetConfig paper_cfg;
        paper_cfg.num_classes = 9;
        Rng prng(19);
        REQUIRE(init_generator(paper_cfg, prng).store.trainable_count() == 11237726);
        REQUIRE(init_room_encoder(paper_cfg, prng).store.trainable_count() == 755056);
        REQUIRE(init_discriminator(paper_cfg, prng).store.trainable_count() == 3481025);
    }

    // Paper-scale configuration counts are locked too.
    NetConfig paper;
    paper.num_classes = 9;
    auto paper_exp = expected_counts(paper);
    Rng rng2(14);
    REQUIRE(init_generator(paper, rng2).store.trainable_count() == paper_exp[0]);
    REQUIRE(init_room_encoder(paper, rng2).store.trainable_count() == paper_exp[1]);
    REQUIRE(init_discriminator(paper, rng2).store.trainable_count() == paper_exp[2]);
}

TEST_CASE("checkpoints round-trip parameters exactly") {
    NetConfig cfg = tiny_config();
    Rng rng(15);
    GeneratorParams gen = init_generator(cfg, rng);
    Checkpoint ckpt;
    ckpt.meta.emplace_back("epoch", 7);
    store_params(ckpt, gen.store);
    auto path = std::filesystem::temp_directory_path() / "sgs_test_ckpt.sgsc";
    save_checkpoint(ckpt, path, 99);

    u64 hash = 0;
    Checkpoint loaded = load_checkpoint(path, &hash);
    REQUIRE(hash == 99);
    REQUIRE(loaded.meta_value("epoch") == 7);

    Rng rng2(16);
    GeneratorParams gen2 = init_generator(cfg, rng2);
    load_params(loaded, gen2.store);
    for (size_t i = 0; i < gen.store.entries().size(); ++i) {
        const auto& a = gen.store.entries()[i].tensor;
        const auto& b = gen2.store.entries()[i].tensor;
        REQUIRE(a.data == b.data);  // bit-exact f64 round trip
    }
    std::filesystem::remove(path);
}

TEST_CASE("scalar-gate latent fusion is available behind the flag") {
    NetConfig cfg = tiny_config();
    cfg.fusion = LatentFusion::kScalarGate;
    Rng rng(17);
    GeneratorParams gen = init_generator(cfg, rng);
    RoomEncoderParams room = init_room_encoder(cfg, rng);
    LabelSpace labels{{"a", "b"}};
    Tensor z = Tensor::randn({cfg.latent_dim}, rng);
    RoomMaskVolume mask = make_room_mask(RoomSpec{1.5, 1.0, 0.75}, cfg.grid);
    SemanticVolume vol = generate(z, mask, gen, room, labels);
    REQUIRE(vol.max_sum_deviation() < 1e-9);
}
