#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sgs/training.hpp"

using namespace sgs;

namespace {

NetConfig tiny_net() {
    NetConfig cfg;
    cfg.grid = GridSpec{8, 8, 4, 0.25};
    cfg.num_classes = 3;
    cfg.latent_dim = 8;
    cfg.gen_base_channels = 8;
    cfg.disc_base_channels = 4;
    cfg.head_hidden = 16;
    cfg.num_views = 2;
    return cfg;
}

SyntheticSceneSpec tiny_spec() {
    SyntheticSceneSpec spec;
    spec.priors = {
        {"wall", 1.0, 1, 1, {}, {}, false, false, 0.0, true},
        {"bed", 0.8, 1, 1, {0.6, 0.8, 0.3}, {1.0, 1.2, 0.5}, true, false, 0.0, false},
        {"table", 0.5, 1, 1, {0.3, 0.3, 0.3}, {0.6, 0.6, 0.5}, false, false, 0.0, false},
    };
    return spec;
}

TrainingPool tiny_pool(int scenes = 8) {
    SyntheticPoolOptions opt;
    opt.scenes = scenes;
    opt.views_per_scene = 3;
    opt.image_width = 8;
    opt.image_height = 4;
    return make_synthetic_pool(tiny_spec(), GridSpec{8, 8, 4, 0.25}, opt, Rng(99));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("real combinations draw uniformly without replacement") {
    TrainingPool pool = tiny_pool();
    Rng rng(1);
    ViewCombination combo = sample_real_combination(pool, 4, rng);
    REQUIRE(combo.views.size() == 4);
    REQUIRE(combo.real);

    SECTION("a pool of exactly N returns the whole pool") {
        TrainingPool small = pool;
        small.entries.resize(3);
        Rng r2(2);
        ViewCombination c = sample_real_combination(small, 3, r2);
        REQUIRE(c.views.size() == 3);
    }

    SECTION("undersized pools are rejected") {
        TrainingPool small = pool;
        small.entries.resize(2);
        Rng r3(3);
        REQUIRE_THROWS_AS(sample_real_combination(small, 3, r3), DataError);
    }

    SECTION("fixed seeds reproduce the combination sequence") {
        Rng a(7), b(7);
        for (int i = 0; i < 5; ++i) {
            ViewCombination ca = sample_real_combination(pool, 3, a);
            ViewCombination cb = sample_real_combination(pool, 3, b);
            for (size_t v = 0; v < ca.views.size(); ++v)
                REQUIRE(ca.views[v].depth == cb.views[v].depth);
        }
    }
}

TEST_CASE("fake views render one volume with cameras replayed from the pool") {
    TrainingPool pool = tiny_pool();
    LabelSpace labels = pool.labels;
    SemanticVolume volume(pool.grid, labels);
    volume.set_one_hot(4, 4, 1, 1);
    Rng rng(5);
    ViewCombination combo = sample_fake_views(volume, pool, 4, rng);
    REQUIRE(combo.views.size() == 4);
    REQUIRE_FALSE(combo.real);
    for (const auto& v : combo.views) {
        bool member = false;
        for (const auto& e : pool.entries) {
            const Camera &a = v.camera, &b = e.image.camera;
            if (a.fx == b.fx && a.pose.translation.x == b.pose.translation.x &&
                a.pose.translation.y == b.pose.translation.y &&
                a.pose.rotation(0, 0) == b.pose.rotation(0, 0)) {
                member = true;
                break;
            }
        }
        REQUIRE(member);  // cameras come from the empirical pool records
    }
}

TEST_CASE("GAN loss values at reference scores") {
    // D_sigma(real)=1, D_sigma(fake)=0 -> loss 0 (up to clamp); both 0.5
    // -> 2 log 2. Scores of +-40 saturate the logistic far below 1e-12.
    Graph g;
    auto big = g.constant(Tensor::scalar(40.0));
    auto neg = g.constant(Tensor::scalar(-40.0));
    auto loss_perfect = g.add(g.softplus(g.scale(big, -1.0)), g.softplus(neg));
    REQUIRE_THAT(g.value(loss_perfect)[0], Catch::Matchers::WithinAbs(0.0, 1e-12));

    auto zero = g.constant(Tensor::scalar(0.0));
    auto loss_even = g.add(g.softplus(g.scale(zero, -1.0)), g.softplus(zero));
    REQUIRE_THAT(g.value(loss_even)[0],
                 Catch::Matchers::WithinAbs(2.0 * std::log(2.0), 1e-12));
}

TEST_CASE("room sampling follows the pool when sizes are known") {
    TrainingPool pool = tiny_pool();
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
        RoomSpec room = sample_room(pool, pool.grid, rng);
        bool member = false;
        for (const auto& e : pool.entries)
            if (e.room && e.room->size_x == room.size_x && e.room->size_y == room.size_y)
                member = true;
        REQUIRE(member);
    }

    TrainingPool bare = pool;
    for (auto& e : bare.entries) e.room.reset();
    for (int i = 0; i < 10; ++i) {
        RoomSpec room = sample_room(bare, pool.grid, rng);
        REQUIRE(room.size_x >= 0.5 * pool.grid.extent_x() - 1e-9);
        REQUIRE(room.size_x <= pool.grid.extent_x() + 1e-9);
    }
}

TEST_CASE("one generator step descends the loss against a frozen discriminator") {
    TrainingPool pool = tiny_pool();
    NetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    cfg.learning_rate = 1e-5;
    cfg.seed = 21;
    Trainer trainer(pool, net, cfg);
    // Converge the spectral iteration vectors so the critic is a fixed
    // function across the three evaluations below.
    for (int i = 0; i < 200; ++i) refresh_spectral(trainer.discriminator().store);

    Rng step(77);
    double before = trainer.generator_loss(step);
    trainer.generator_step(step);
    double after = trainer.generator_loss(step);
    REQUIRE(after < before);
}

TEST_CASE("a generator emitting empty outside the room pays no mask penalty") {
    GridSpec grid{8, 8, 4, 0.25};
    LabelSpace labels{{"a"}};
    SemanticVolume v(grid, labels);  // everywhere certainly empty
    RoomMaskVolume mask = make_room_mask(RoomSpec{1.0, 1.0, 0.5}, grid);
    Graph g;
    auto vol = g.input(tensor_from_volume(v), true);
    auto pen = mask_empty_penalty_op(g, vol, mask, labels);
    REQUIRE(g.value(pen)[0] == 0.0);
}

TEST_CASE("alternating steps separate real and fake scores on a toy pool") {
    TrainingPool pool = tiny_pool(10);
    NetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.learning_rate = 2e-4;
    cfg.seed = 31;
    Trainer trainer(pool, net, cfg);

    Rng master(cfg.seed);
    for (int step = 0; step < 200; ++step) {
        Rng sr = master.fork("sep-step" + std::to_string(step));
        trainer.discriminator_step(sr.fork("D"));
        trainer.generator_step(sr.fork("G"));
    }

    // Score a few real and fake combinations with the trained critic.
    Rng eval(99);
    double real_mean = 0, fake_mean = 0;
    const int probes = 8;
    for (int i = 0; i < probes; ++i) {
        ViewCombination real = sample_real_combination(pool, net.num_views, eval);
        DiscriminatorParams dcopy = trainer.discriminator();
        real_mean += discriminate(real.views, dcopy, pool.far_depth);
        Rng zr = eval.fork("z" + std::to_string(i));
        Tensor z = Tensor::randn({net.latent_dim}, zr);
        RoomSpec room = sample_room(pool, net.grid, eval);
        SemanticVolume vol = generate(z, make_room_mask(room, net.grid), trainer.generator(),
                                      trainer.room_encoder(), pool.labels);
        ViewCombination fake = sample_fake_views(vol, pool, net.num_views, eval);
        DiscriminatorParams dcopy2 = trainer.discriminator();
        fake_mean += discriminate(fake.views, dcopy2, pool.far_depth);
    }
    real_mean /= probes;
    fake_mean /= probes;
    REQUIRE(real_mean > fake_mean);  // critic separates the pools
}

TEST_CASE("training runs are bitwise reproducible and resumable") {
    TrainingPool pool = tiny_pool(6);
    NetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.epochs = 2;
    cfg.checkpoint_every = 1;
    cfg.eval_volumes = 4;
    cfg.seed = 41;

    auto base = std::filesystem::temp_directory_path() / "sgs_train_repro";
    std::filesystem::remove_all(base);
    auto run_a = base / "a", run_b = base / "b", run_c = base / "c";

    {
        Trainer t(pool, net, cfg);
        t.run(run_a, false);
    }
    {
        Trainer t(pool, net, cfg);
        t.run(run_b, false);
    }
    REQUIRE(slurp(run_a / "metrics.jsonl") == slurp(run_b / "metrics.jsonl"));
    REQUIRE(slurp(run_a / "checkpoint_latest.sgsc") == slurp(run_b / "checkpoint_latest.sgsc"));

    // Interrupted-and-resumed run reproduces the straight run bitwise.
    {
        TrainConfig half = cfg;
        half.epochs = 1;
        Trainer t(pool, net, half);
        t.run(run_c, false);
    }
    {
        Trainer t(pool, net, cfg);
        t.run(run_c, true);
    }
    REQUIRE(slurp(run_a / "checkpoint_latest.sgsc") == slurp(run_c / "checkpoint_latest.sgsc"));
    REQUIRE(slurp(run_a / "metrics.jsonl") == slurp(run_c / "metrics.jsonl"));
    std::filesystem::remove_all(base);
}

TEST_CASE("literal printed losses stay finite for a few steps") {
    TrainingPool pool = tiny_pool(6);
    NetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.literal_losses = true;
    cfg.seed = 51;
    Trainer trainer(pool, net, cfg);
    Rng master(cfg.seed);
    for (int step = 0; step < 3; ++step) {
        Rng sr = master.fork("lit" + std::to_string(step));
        REQUIRE(std::isfinite(trainer.discriminator_step(sr.fork("D"))));
        auto [gl, pen] = trainer.generator_step(sr.fork("G"));
        REQUIRE(std::isfinite(gl));
        REQUIRE(std::isfinite(pen));
    }
}
