#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sgs/analytics.hpp"
#include "sgs/graph_ops.hpp"
#include "sgs/neural.hpp"
#include "sgs/parallel.hpp"
#include "sgs/pool.hpp"

namespace sgs {

struct TrainConfig {
    double learning_rate = 2e-4;
    int batch_size = 128;          // acceptance scale uses 16
    int epochs = 2000;             // acceptance scale uses <= 200
    double view_coverage_degrees = 110.0;
    double adam_beta1 = 0.5, adam_beta2 = 0.999;
    double mask_penalty_weight = 1.0;
    bool literal_losses = false;   // loss signs exactly as printed, for comparison
    int checkpoint_every = 25;
    int eval_volumes = 48;         // generated scenes per metric evaluation
    u64 seed = 0;

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
    }
};

struct ViewCombination {
    std::vector<SemanticDepthImage> views;
    bool real = false;
};

// N images drawn uniformly without replacement; combinations deliberately
// mix scenes, approximating unknown ground-truth layouts.
inline ViewCombination sample_real_combination(const TrainingPool& pool, int n, Rng& rng) {
    if (static_cast<int>(pool.size()) < n)
        throw DataError("pool smaller than requested combination size");
    ViewCombination combo;
    combo.real = true;
    std::set<size_t> chosen;
    while (static_cast<int>(chosen.size()) < n) {
        size_t idx = static_cast<size_t>(rng.next_below(pool.size()));
        if (chosen.insert(idx).second)
            combo.views.push_back(pool.entries[idx].image);
    }
    return combo;
}

// Cameras replayed from the empirical training pool; all N views rendered
// from the one generated volume.
inline std::vector<Camera> sample_pool_cameras(const TrainingPool& pool, int n, Rng& rng) {
    std::vector<Camera> cams;
    for (int i = 0; i < n; ++i) {
        size_t idx = static_cast<size_t>(rng.next_below(pool.size()));
        cams.push_back(pool.entries[idx].image.camera);
    }
    return cams;
}

inline ViewCombination sample_fake_views(const SemanticVolume& volume, const TrainingPool& pool,
                                         int n, Rng& rng) {
    ViewCombination combo;
    combo.real = false;
    for (const Camera& cam : sample_pool_cameras(pool, n, rng))
        combo.views.push_back(render_view(volume, cam));
    return combo;
}

// Empirical room-size distribution when the pool carries sizes, otherwise
// uniform over [0.5, 1.0] of the grid extent per axis.
inline RoomSpec sample_room(const TrainingPool& pool, const GridSpec& grid, Rng& rng) {
    std::vector<const RoomSpec*> known;
    for (const auto& e : pool.entries)
        if (e.room) known.push_back(&*e.room);
    if (!known.empty()) return *known[static_cast<size_t>(rng.next_below(known.size()))];
    return RoomSpec{rng.uniform(0.5, 1.0) * grid.extent_x(),
                    rng.uniform(0.5, 1.0) * grid.extent_y(),
                    rng.uniform(0.5, 1.0) * grid.extent_z()};
}

inline double mean_outside_occupancy(const SemanticVolume& volume, const RoomMaskVolume& mask) {
    i64 outside = 0;
    double occ = 0;
    for (i64 v = 0; v < volume.grid.num_voxels(); ++v) {
        if (mask.mask[static_cast<size_t>(v)]) continue;
        ++outside;
        occ += 1.0 - volume.empty_prob(v);
    }
    return outside == 0 ? 0.0 : occ / static_cast<double>(outside);
}

// Class-presence set of a decoded volume; a class counts with at least
// `min_voxels` argmax voxels (the same noise guard the image statistics
// use for pixels).
inline std::set<int> volume_class_set(const SemanticVolume& volume, int min_voxels = 4) {
    LabelVolume ids = label_argmax(volume);
    std::vector<int> counts(static_cast<size_t>(volume.labels.num_classes()), 0);
    for (u8 id : ids.ids)
        if (id < volume.labels.num_classes()) ++counts[id];
    std::set<int> out;
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] >= min_voxels) out.insert(static_cast<int>(c));
    return out;
}

inline std::set<int> image_class_set(const SemanticDepthImage& image, int min_pixels = 4) {
    std::vector<int> counts(static_cast<size_t>(image.num_classes), 0);
    for (int v = 0; v < image.height; ++v)
        for (int u = 0; u < image.width; ++u) {
            int c = image.argmax_class(u, v);
            if (c < image.num_classes) ++counts[static_cast<size_t>(c)];
        }
    std::set<int> out;
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] >= min_pixels) out.insert(static_cast<int>(c));
    return out;
}

// Scene-level class sets of the pool: views grouped by scene tag (each
// image is its own scene when untagged).
inline std::vector<std::set<int>> pool_scene_class_sets(const TrainingPool& pool) {
    std::vector<std::set<int>> sets;
    std::vector<std::string> tags;
    for (const auto& e : pool.entries) {
        std::set<int> view_set = image_class_set(e.image);
        if (e.scene_tag.empty()) {
            sets.push_back(std::move(view_set));
            continue;
        }
        bool merged = false;
        for (size_t i = 0; i < tags.size(); ++i)
            if (tags[i] == e.scene_tag) {
                sets[i].insert(view_set.begin(), view_set.end());
                merged = true;
                break;
            }
        if (!merged) {
            tags.push_back(e.scene_tag);
            sets.push_back(std::move(view_set));
        }
    }
    return sets;
}

// ---------------------------------------------------------------------------
// Adam over a ParamStore's trainable entries.

class Adam {
public:
    Adam(ParamStore& store, double lr, double beta1, double beta2)
        : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2) {
        for (auto& e : store.entries())
            if (e.trainable) {
                m_.emplace_back(e.name, Tensor(e.tensor.shape));
                v_.emplace_back(e.name, Tensor(e.tensor.shape));
            }
    }

    void update(const std::vector<std::pair<std::string, Tensor>>& grads) {
        ++step_;
        double bc1 = 1.0 - std::pow(beta1_, step_);
        double bc2 = 1.0 - std::pow(beta2_, step_);
        for (size_t i = 0; i < m_.size(); ++i) {
            const Tensor* g = nullptr;
            for (const auto& [name, grad] : grads)
                if (name == m_[i].first) {
                    g = &grad;
                    break;
                }
            if (!g) continue;
            Tensor& p = store_.get(m_[i].first);
            Tensor& m = m_[i].second;
            Tensor& v = v_[i].second;
            for (i64 k = 0; k < p.numel(); ++k) {
                double gk = (*g)[k];
                m[k] = beta1_ * m[k] + (1 - beta1_) * gk;
                v[k] = beta2_ * v[k] + (1 - beta2_) * gk * gk;
                p[k] -= lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + 1e-8);
            }
        }
    }

    i64 step_count() const { return step_; }
    void restore(i64 step) { step_ = step; }

    std::vector<std::pair<std::string, Tensor>>& moment1() { return m_; }
    std::vector<std::pair<std::string, Tensor>>& moment2() { return v_; }

private:
    ParamStore& store_;
    double lr_, beta1_, beta2_;
    i64 step_ = 0;
    std::vector<std::pair<std::string, Tensor>> m_, v_;
};

// ---------------------------------------------------------------------------

struct MetricRecord {
    int epoch = 0;
    double g_loss = 0;
    double d_loss = 0;
    double mask_penalty = 0;
    double depth_w1 = 0;
    double cooc_diff = 0;
    double outside_occupancy = 0;
};

struct GradAccumulator {
    std::vector<std::pair<std::string, Tensor>> grads;

    void add(const std::string& name, const Tensor& g) {
        for (auto& [n, t] : grads)
            if (n == name) {
                t.add_(g);
                return;
            }
        grads.emplace_back(name, g);
    }
    void add(const GradAccumulator& other) {
        for (const auto& [n, t] : other.grads) add(n, t);
    }
    void scale(double s) {
        for (auto& [n, t] : grads) t.scale_(s);
    }
};

// Alternating-step adversarial trainer. Batch elements build independent
// graphs in parallel; their gradients are reduced in element order, so
// runs are bit-reproducible for any worker count.
class Trainer {
public:
    Trainer(const TrainingPool& pool, const NetConfig& net, const TrainConfig& cfg)
        : pool_(pool), net_(net), cfg_(cfg) {
        net_.validate();
        cfg_.validate();
        if (!(pool.grid == net.grid)) throw ConfigError("pool grid does not match network grid");
        if (pool.labels.num_classes() != net.num_classes)
            throw ConfigError("pool label space does not match network config");
        Rng init(cfg.seed);
        Rng gi = init.fork("init-generator");
        Rng ri = init.fork("init-room");
        Rng di = init.fork("init-discriminator");
        gen_ = init_generator(net_, gi);
        room_ = init_room_encoder(net_, ri);
        disc_ = init_discriminator(net_, di);
        adam_g_ = std::make_unique<Adam>(gen_.store, cfg.learning_rate, cfg.adam_beta1,
                                         cfg.adam_beta2);
        adam_r_ = std::make_unique<Adam>(room_.store, cfg.learning_rate, cfg.adam_beta1,
                                         cfg.adam_beta2);
        adam_d_ = std::make_unique<Adam>(disc_.store, cfg.learning_rate, cfg.adam_beta1,
                                         cfg.adam_beta2);
        real_depth_hist_ = pool_depth_histogram();
        gt_scene_sets_ = pool_scene_class_sets(pool_);
        gt_cooc_ = cooccurrence(gt_scene_sets_, net_.num_classes);
    }

    GeneratorParams& generator() { return gen_; }
    RoomEncoderParams& room_encoder() { return room_; }
    DiscriminatorParams& discriminator() { return disc_; }
    const NetConfig& net_config() const { return net_; }
    int epoch() const { return epoch_; }

    // Loss of one generator batch without updating, for descent checks.
    double generator_loss(const Rng& step_rng) {
        auto [loss, pen, grads] = generator_pass(step_rng, false);
        (void)pen;
        (void)grads;
        return loss;
    }

    // One optimizer update on the generator and room encoder; the
    // discriminator stays frozen. Returns (loss, mask penalty) means.
    std::pair<double, double> generator_step(const Rng& step_rng) {
        auto [loss, pen, grads] = generator_pass(step_rng, true);
        if (!std::isfinite(loss)) abort_with_diagnostics("generator", loss);
        grads.scale(1.0 / cfg_.batch_size);
        adam_g_->update(grads.grads);
        adam_r_->update(grads.grads);
        return {loss, pen};
    }

    // One optimizer update on the discriminator against a frozen
    // generator.
    double discriminator_step(const Rng& step_rng) {
        refresh_spectral(disc_.store);
        const int B = cfg_.batch_size;
        std::vector<GradAccumulator> grads(static_cast<size_t>(B));
        std::vector<double> losses(static_cast<size_t>(B), 0.0);
        parallel_for(B, [&](i64 b) {
            Rng er = step_rng.fork("d-elem" + std::to_string(b));
            Rng zr = er.fork("z");
            Tensor z = Tensor::randn({net_.latent_dim}, zr);
            Rng rr = er.fork("room");
            RoomSpec room = sample_room(pool_, net_.grid, rr);
            RoomMaskVolume mask = make_room_mask(room, net_.grid);
            Rng cr = er.fork("cams");
            std::vector<Camera> cams = sample_pool_cameras(pool_, net_.num_views, cr);
            SemanticVolume volume = generate(z, mask, gen_, room_, pool_.labels);
            std::vector<SemanticDepthImage> fake;
            for (const Camera& cam : cams) fake.push_back(render_view(volume, cam, net_.projection_mode));
            Rng pr = er.fork("real");
            ViewCombination real = sample_real_combination(pool_, net_.num_views, pr);

            Graph g;
            ParamBinder pb(g, true);
            auto s_real = discriminator_graph(g, pb, disc_, g.constant(stack_views(real.views)),
                                              pool_.far_depth, false);
            auto s_fake = discriminator_graph(g, pb, disc_, g.constant(stack_views(fake)),
                                              pool_.far_depth, false);
            Graph::NodeId loss;
            if (!cfg_.literal_losses) {
                // -log D(real) - log(1 - D(fake))
                loss = g.add(g.softplus(g.scale(s_real, -1.0)), g.softplus(s_fake));
            } else {
                // As printed: (1 - log D(fake)) + log D(real).
                loss = g.add(g.add(g.constant(Tensor::scalar(1.0)), g.softplus(g.scale(s_fake, -1.0))),
                             g.scale(g.softplus(g.scale(s_real, -1.0)), -1.0));
            }
            g.backward(loss);
            losses[static_cast<size_t>(b)] = g.value(loss)[0];
            for (const auto& [name, id] : pb.bound()) {
                const Tensor& gr = g.grad(id);
                if (!gr.data.empty()) grads[static_cast<size_t>(b)].add(name, gr);
            }
        });
        GradAccumulator total;
        double loss = 0;
        for (int b = 0; b < B; ++b) {
            total.add(grads[static_cast<size_t>(b)]);
            loss += losses[static_cast<size_t>(b)];
        }
        loss /= B;
        if (!std::isfinite(loss)) abort_with_diagnostics("discriminator", loss);
        total.scale(1.0 / B);
        adam_d_->update(total.grads);
        return loss;
    }

    // Metric snapshot from freshly generated scenes at a fixed per-epoch
    // evaluation stream.
    MetricRecord eval_metrics(int epoch) {
        MetricRecord rec;
        rec.epoch = epoch;
        Rng eval(cfg_.seed);
        eval = eval.fork("eval-epoch" + std::to_string(epoch));
        const int K = cfg_.eval_volumes;
        std::vector<SemanticDepthImage> fake_views(static_cast<size_t>(K) * net_.num_views);
        std::vector<std::set<int>> gen_sets(static_cast<size_t>(K));
        std::vector<double> outside(static_cast<size_t>(K), 0.0);
        std::vector<Rng> streams;
        for (int i = 0; i < K; ++i) streams.push_back(eval.fork("vol" + std::to_string(i)));
        parallel_for(K, [&](i64 i) {
            Rng er = streams[static_cast<size_t>(i)];
            Rng zr = er.fork("z");
            Tensor z = Tensor::randn({net_.latent_dim}, zr);
            Rng rr = er.fork("room");
            RoomSpec room = sample_room(pool_, net_.grid, rr);
            RoomMaskVolume mask = make_room_mask(room, net_.grid);
            SemanticVolume volume = generate(z, mask, gen_, room_, pool_.labels);
            Rng cr = er.fork("cams");
            std::vector<Camera> cams = sample_pool_cameras(pool_, net_.num_views, cr);
            for (int v = 0; v < net_.num_views; ++v)
                fake_views[static_cast<size_t>(i * net_.num_views + v)] =
                    render_view(volume, cams[static_cast<size_t>(v)], net_.projection_mode);
            gen_sets[static_cast<size_t>(i)] = volume_class_set(volume);
            outside[static_cast<size_t>(i)] = mean_outside_occupancy(volume, mask);
        });
        DepthHistogram fake_hist = depth_distribution(fake_views, kDepthBins, pool_.far_depth);
        rec.depth_w1 = wasserstein1(fake_hist, real_depth_hist_);
        rec.cooc_diff = cooccurrence_diff(gt_cooc_, cooccurrence(gen_sets, net_.num_classes));
        double mo = 0;
        for (double o : outside) mo += o;
        rec.outside_occupancy = mo / K;
        return rec;
    }

    // Alternating loop with per-epoch metric logging and periodic
    // checkpoints; resumable from the latest checkpoint in out_dir.
    std::vector<MetricRecord> run(const std::filesystem::path& out_dir, bool resume = false,
                                  u64 config_hash = 0, std::ostream* progress = nullptr) {
        std::filesystem::create_directories(out_dir);
        const auto log_path = out_dir / "metrics.jsonl";
        std::vector<MetricRecord> log;
        int start_epoch = 0;
        if (resume && std::filesystem::exists(out_dir / "checkpoint_latest.sgsc")) {
            start_epoch = load_state(out_dir / "checkpoint_latest.sgsc") + 1;
        } else if (std::filesystem::exists(log_path)) {
            std::filesystem::remove(log_path);
        }
        std::ofstream log_out(log_path, std::ios::app);

        if (start_epoch == 0) {
            MetricRecord rec = eval_metrics(0);
            MetricRecord zero = rec;
            zero.g_loss = zero.d_loss = zero.mask_penalty = 0;
            append_log(log_out, zero);
            log.push_back(zero);
        }

        const int steps = std::max<int>(1, static_cast<int>(pool_.size()) / cfg_.batch_size);
        Rng master(cfg_.seed);
        for (int epoch = std::max(start_epoch, 1); epoch <= cfg_.epochs; ++epoch) {
            double gsum = 0, dsum = 0, psum = 0;
            for (int step = 0; step < steps; ++step) {
                Rng sr = master.fork("e" + std::to_string(epoch) + "s" + std::to_string(step));
                dsum += discriminator_step(sr.fork("D"));
                auto [gl, pen] = generator_step(sr.fork("G"));
                gsum += gl;
                psum += pen;
            }
            MetricRecord rec = eval_metrics(epoch);
            rec.g_loss = gsum / steps;
            rec.d_loss = dsum / steps;
            rec.mask_penalty = psum / steps;
            append_log(log_out, rec);
            log.push_back(rec);
            if (progress)
                (*progress) << "epoch " << epoch << " g=" << rec.g_loss << " d=" << rec.d_loss
                            << " mask=" << rec.mask_penalty << " w1=" << rec.depth_w1
                            << " cooc=" << rec.cooc_diff << "\n";
            if (epoch % cfg_.checkpoint_every == 0 || epoch == cfg_.epochs)
                save_state(out_dir, epoch, config_hash);
        }
        return log;
    }

    void save_state(const std::filesystem::path& out_dir, int epoch, u64 config_hash) const {
        Checkpoint ckpt;
        ckpt.meta.emplace_back("epoch", static_cast<u64>(epoch));
        ckpt.meta.emplace_back("adam_g_step", static_cast<u64>(adam_g_->step_count()));
        ckpt.meta.emplace_back("adam_r_step", static_cast<u64>(adam_r_->step_count()));
        ckpt.meta.emplace_back("adam_d_step", static_cast<u64>(adam_d_->step_count()));
        store_params(ckpt, gen_.store);
        store_params(ckpt, room_.store);
        store_params(ckpt, disc_.store);
        for (auto& [name, t] : adam_g_->moment1()) ckpt.arrays.emplace_back("opt.g.m." + name, t);
        for (auto& [name, t] : adam_g_->moment2()) ckpt.arrays.emplace_back("opt.g.v." + name, t);
        for (auto& [name, t] : adam_r_->moment1()) ckpt.arrays.emplace_back("opt.r.m." + name, t);
        for (auto& [name, t] : adam_r_->moment2()) ckpt.arrays.emplace_back("opt.r.v." + name, t);
        for (auto& [name, t] : adam_d_->moment1()) ckpt.arrays.emplace_back("opt.d.m." + name, t);
        for (auto& [name, t] : adam_d_->moment2()) ckpt.arrays.emplace_back("opt.d.v." + name, t);
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_e%05d.sgsc", epoch);
        save_checkpoint(ckpt, out_dir / name, config_hash);
        save_checkpoint(ckpt, out_dir / "checkpoint_latest.sgsc", config_hash);
        save_arch_config(out_dir / "arch.json");
    }

    int load_state(const std::filesystem::path& path) {
        Checkpoint ckpt = load_checkpoint(path);
        load_params(ckpt, gen_.store);
        load_params(ckpt, room_.store);
        load_params(ckpt, disc_.store);
        auto load_opt = [&](const char* tag, Adam& adam) {
            for (auto& [name, t] : adam.moment1()) {
                const Tensor* src = ckpt.find(std::string("opt.") + tag + ".m." + name);
                if (src) t = *src;
            }
            for (auto& [name, t] : adam.moment2()) {
                const Tensor* src = ckpt.find(std::string("opt.") + tag + ".v." + name);
                if (src) t = *src;
            }
        };
        load_opt("g", *adam_g_);
        load_opt("r", *adam_r_);
        load_opt("d", *adam_d_);
        adam_g_->restore(static_cast<i64>(ckpt.meta_value("adam_g_step")));
        adam_r_->restore(static_cast<i64>(ckpt.meta_value("adam_r_step")));
        adam_d_->restore(static_cast<i64>(ckpt.meta_value("adam_d_step")));
        epoch_ = static_cast<int>(ckpt.meta_value("epoch"));
        return epoch_;
    }

    void save_arch_config(const std::filesystem::path& path) const {
        nlohmann::json j;
        j["grid"] = {{"w", net_.grid.w}, {"h", net_.grid.h}, {"d", net_.grid.d},
                     {"stride", net_.grid.stride}};
        j["num_classes"] = net_.num_classes;
        j["latent_dim"] = net_.latent_dim;
        j["gen_base_channels"] = net_.gen_base_channels;
        j["disc_base_channels"] = net_.disc_base_channels;
        j["head_hidden"] = net_.head_hidden;
        j["num_views"] = net_.num_views;
        j["disc_arch"] = static_cast<int>(net_.disc_arch);
        j["labels"] = pool_.labels.class_names;
        std::ofstream(path) << j.dump(2) << "\n";
    }

    static constexpr int kDepthBins = 32;

private:
    std::tuple<double, double, GradAccumulator> generator_pass(const Rng& step_rng,
                                                               bool want_grads) {
        refresh_spectral(disc_.store);
        const int B = cfg_.batch_size;
        std::vector<GradAccumulator> grads(static_cast<size_t>(B));
        std::vector<double> losses(static_cast<size_t>(B), 0.0), pens(static_cast<size_t>(B),
                                                                      0.0);
        parallel_for(B, [&](i64 b) {
            Rng er = step_rng.fork("g-elem" + std::to_string(b));
            Rng zr = er.fork("z");
            Tensor z = Tensor::randn({net_.latent_dim}, zr);
            Rng rr = er.fork("room");
            RoomSpec room = sample_room(pool_, net_.grid, rr);
            RoomMaskVolume mask = make_room_mask(room, net_.grid);
            Rng cr = er.fork("cams");
            std::vector<Camera> cams = sample_pool_cameras(pool_, net_.num_views, cr);

            Graph g;
            ParamBinder gen_binder(g, want_grads);
            ParamBinder disc_binder(g, false);
            auto z_node = g.constant(z);
            GeneratorOut gen_out = generator_graph(g, gen_binder, gen_, room_, z_node, mask);
            auto views = render_views_op(g, gen_out.volume, net_.grid, pool_.labels, cams,
                                         net_.projection_mode);
            auto score = discriminator_graph(g, disc_binder, disc_, views, pool_.far_depth,
                                             false);
            auto pen = mask_empty_penalty_op(g, gen_out.volume, mask, pool_.labels);
            Graph::NodeId adv;
            if (!cfg_.literal_losses) {
                adv = g.softplus(g.scale(score, -1.0));  // -log D(fake)
            } else {
                adv = g.scale(g.softplus(g.scale(score, -1.0)), -1.0);  // log D(fake)
            }
            auto loss = g.add(adv, g.scale(pen, cfg_.mask_penalty_weight));
            losses[static_cast<size_t>(b)] = g.value(loss)[0];
            pens[static_cast<size_t>(b)] = g.value(pen)[0];
            if (want_grads) {
                g.backward(loss);
                for (const auto& [name, id] : gen_binder.bound()) {
                    const Tensor& gr = g.grad(id);
                    if (!gr.data.empty()) grads[static_cast<size_t>(b)].add(name, gr);
                }
            }
        });
        GradAccumulator total;
        double loss = 0, pen = 0;
        for (int b = 0; b < B; ++b) {
            if (want_grads) total.add(grads[static_cast<size_t>(b)]);
            loss += losses[static_cast<size_t>(b)];
            pen += pens[static_cast<size_t>(b)];
        }
        return {loss / B, pen / B, std::move(total)};
    }

    DepthHistogram pool_depth_histogram() const {
        std::vector<SemanticDepthImage> imgs;
        for (const auto& e : pool_.entries) imgs.push_back(e.image);
        return depth_distribution(imgs, kDepthBins, pool_.far_depth);
    }

    void abort_with_diagnostics(const std::string& which, double loss) {
        nlohmann::json j;
        j["failed_network"] = which;
        j["loss"] = loss;
        j["epoch"] = epoch_;
        auto norms = [&](const ParamStore& s) {
            nlohmann::json out;
            for (const auto& e : s.entries()) out[e.name] = e.tensor.norm2();
            return out;
        };
        j["generator_norms"] = norms(gen_.store);
        j["discriminator_norms"] = norms(disc_.store);
        std::ofstream("sgs_diagnostics.json") << j.dump(2) << "\n";
        throw NumericalError("non-finite " + which + " loss; diagnostics dumped to "
                             "sgs_diagnostics.json");
    }

    void append_log(std::ofstream& out, const MetricRecord& rec) {
        nlohmann::json j;
        j["epoch"] = rec.epoch;
        j["g_loss"] = rec.g_loss;
        j["d_loss"] = rec.d_loss;
        j["mask_penalty"] = rec.mask_penalty;
        j["depth_w1"] = rec.depth_w1;
        j["cooc_diff"] = rec.cooc_diff;
        j["outside_occupancy"] = rec.outside_occupancy;
        out << j.dump() << "\n";
        out.flush();
    }

    TrainingPool pool_;
    NetConfig net_;
    TrainConfig cfg_;
    GeneratorParams gen_;
    RoomEncoderParams room_;
    DiscriminatorParams disc_;
    std::unique_ptr<Adam> adam_g_, adam_r_, adam_d_;
    DepthHistogram real_depth_hist_;
    std::vector<std::set<int>> gt_scene_sets_;
    CooccurrenceMap gt_cooc_;
    int epoch_ = 0;
};

}  // namespace sgs
