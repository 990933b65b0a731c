#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sgs/autodiff.hpp"
#include "sgs/core.hpp"
#include "sgs/graph_ops.hpp"
#include "sgs/io.hpp"
#include "sgs/rng.hpp"

namespace sgs {

// Discriminator wiring variants used by the ablation configurations.
//   kSeparateEncoders      - depth and semantic encoders with independent
//                            weights feeding one joint scoring head.
//   kUnifiedEncoder        - one encoder over stacked depth+semantic
//                            channels (USD-MV-D).
//   kSeparateDiscriminators- full depth-only and semantics-only
//                            discriminators whose scores are summed
//                            (SD-MV-D).
enum class DiscArch { kSeparateEncoders, kUnifiedEncoder, kSeparateDiscriminators };

// How the room feature gates the latent. The elementwise product is the
// default; the scalar-gate reading z = (z_s . z_r) z_s is kept for
// comparison.
enum class LatentFusion { kHadamard, kScalarGate };

struct NetConfig {
    GridSpec grid{32, 32, 16, 0.2};
    int num_classes = 9;
    int latent_dim = 128;
    int gen_base_channels = 512;  // channels of the 2x2x1 seed volume
    int disc_base_channels = 32;  // first conv block output channels
    int head_hidden = 512;
    int num_views = 4;
    DiscArch disc_arch = DiscArch::kSeparateEncoders;
    LatentFusion fusion = LatentFusion::kHadamard;
    SemanticPixelMode projection_mode = SemanticPixelMode::kConditioned;
    double leaky_slope = 0.2;

    int channels() const { return num_classes + 1; }

    // Deconv blocks needed to grow the 2x2x1 seed to the full grid.
    int num_blocks() const {
        int n = 0;
        for (int s = grid.w; s > 2; s /= 2) ++n;
        return n;
    }

    int image_width() const { return grid.w; }
    int image_height() const { return grid.w * 9 / 16; }

    // Generator feature channels entering block b (b=0 is the seed).
    int gen_channels_in(int b) const { return gen_base_channels >> b; }
    // Channels leaving block b; the last block emits the class channels.
    int gen_channels_out(int b) const {
        return b == num_blocks() - 1 ? channels() : gen_base_channels >> (b + 1);
    }
    // Room encoder block i output channels: a quarter of the generator's
    // at the same resolution.
    int enc_channels(int i) const {
        int gen_ch = gen_base_channels >> (num_blocks() - 1 - i);
        return gen_ch / 4;
    }

    int feature_len() const {  // per-view, per-encoder flattened feature
        int ch = disc_base_channels << (num_blocks() - 1);
        int w = image_width(), h = image_height();
        for (int i = 0; i < num_blocks(); ++i) {
            w = (w + 2 - 4) / 2 + 1;
            h = (h + 2 - 4) / 2 + 1;
        }
        return ch * w * h;
    }

    void validate() const {
        grid.validate();
        if (grid.w != grid.h || grid.d * 2 != grid.w)
            throw ConfigError("network grids must satisfy w == h == 2d");
        if ((grid.w & (grid.w - 1)) != 0 || grid.w < 8)
            throw ConfigError("grid width must be a power of two >= 8");
        if (num_classes < 1) throw ConfigError("need at least one object class");
        if (latent_dim < 1) throw ConfigError("latent_dim must be positive");
        if (num_views < 1) throw ConfigError("num_views must be >= 1");
        int n = num_blocks();
        if (gen_base_channels % (4 << (n - 1)) != 0)
            throw ConfigError("gen_base_channels must be divisible by 4*2^(blocks-1)");
        int h = image_height();
        for (int i = 0; i < n; ++i) {
            if (h < 2) throw ConfigError("image height too small for discriminator depth");
            h = (h + 2 - 4) / 2 + 1;
        }
        if (h < 1) throw ConfigError("image height too small for discriminator depth");
    }
};

// ---------------------------------------------------------------------------
// Parameter containers. Tensors are visited in a fixed order; names are
// stable and double as checkpoint keys. Spectral-norm iteration vectors
// are persistent buffers, not trainable parameters.

struct NamedTensor {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t, bool trainable = true) {
        entries_.push_back({name, std::move(t), trainable});
        return entries_.back().tensor;
    }

    Tensor& get(const std::string& name) {
        for (auto& e : entries_)
            if (e.name == name) return e.tensor;
        throw ConfigError("unknown parameter: " + name);
    }
    const Tensor& get(const std::string& name) const {
        return const_cast<ParamStore*>(this)->get(name);
    }
    bool has(const std::string& name) const {
        for (auto& e : entries_)
            if (e.name == name) return true;
        return false;
    }

    std::vector<NamedTensor>& entries() { return entries_; }
    const std::vector<NamedTensor>& entries() const { return entries_; }

    i64 trainable_count() const {
        i64 n = 0;
        for (const auto& e : entries_)
            if (e.trainable) n += e.tensor.numel();
        return n;
    }

private:
    std::vector<NamedTensor> entries_;
};

// One power-iteration step with persistent vectors; returns the largest
// singular value estimate for the weight reshaped to [rows, cols].
inline double spectral_power_iterate(const Tensor& w, i64 rows, i64 cols, Tensor& u, Tensor& v) {
    auto normalize = [](Tensor& t) {
        double n = t.norm2();
        if (n > 1e-12) t.scale_(1.0 / n);
    };
    // v = W^T u
    for (i64 c = 0; c < cols; ++c) {
        double s = 0;
        for (i64 r = 0; r < rows; ++r) s += w[r * cols + c] * u[r];
        v[c] = s;
    }
    normalize(v);
    // u = W v
    for (i64 r = 0; r < rows; ++r) {
        double s = 0;
        const double* row = &w.data[static_cast<size_t>(r * cols)];
        for (i64 c = 0; c < cols; ++c) s += row[c] * v[c];
        u[r] = s;
    }
    normalize(u);
    double sigma = 0;
    for (i64 r = 0; r < rows; ++r) {
        double s = 0;
        const double* row = &w.data[static_cast<size_t>(r * cols)];
        for (i64 c = 0; c < cols; ++c) s += row[c] * v[c];
        sigma += u[r] * s;
    }
    return sigma;
}

// Weight divided by its largest singular value estimate (one iteration
// refresh per call).
inline Tensor spectral_normalize(const Tensor& w2d, Tensor& u, Tensor& v) {
    if (w2d.ndim() != 2) throw ConfigError("spectral_normalize expects a 2D weight");
    double sigma = spectral_power_iterate(w2d, w2d.dim(0), w2d.dim(1), u, v);
    Tensor out = w2d;
    out.scale_(1.0 / sigma);
    return out;
}

// ---------------------------------------------------------------------------
// Network parameter construction. All weights N(0, 0.02), biases zero.

struct GeneratorParams {
    ParamStore store;
    NetConfig config;
};

struct RoomEncoderParams {
    ParamStore store;
    NetConfig config;
};

struct DiscriminatorParams {
    ParamStore store;
    NetConfig config;
};

namespace detail {

inline void add_conv(ParamStore& s, const std::string& prefix, i64 cout, i64 cin,
                     std::array<i64, 3> kernel, Rng& rng, bool spectral) {
    s.add(prefix + ".w", Tensor::randn({cout, cin, kernel[0], kernel[1], kernel[2]}, rng, 0.02));
    s.add(prefix + ".b", Tensor({cout}));
    if (spectral) {
        i64 cols = cin * kernel[0] * kernel[1] * kernel[2];
        Tensor u = Tensor::randn({cout}, rng);
        Tensor v = Tensor::randn({cols}, rng);
        u.scale_(1.0 / std::max(u.norm2(), 1e-12));
        v.scale_(1.0 / std::max(v.norm2(), 1e-12));
        s.add(prefix + ".u", std::move(u), false);
        s.add(prefix + ".v", std::move(v), false);
    }
}

inline void add_linear(ParamStore& s, const std::string& prefix, i64 out, i64 in, Rng& rng,
                       bool spectral) {
    s.add(prefix + ".w", Tensor::randn({out, in}, rng, 0.02));
    s.add(prefix + ".b", Tensor({out}));
    if (spectral) {
        Tensor u = Tensor::randn({out}, rng);
        Tensor v = Tensor::randn({in}, rng);
        u.scale_(1.0 / std::max(u.norm2(), 1e-12));
        v.scale_(1.0 / std::max(v.norm2(), 1e-12));
        s.add(prefix + ".u", std::move(u), false);
        s.add(prefix + ".v", std::move(v), false);
    }
}

}  // namespace detail

inline GeneratorParams init_generator(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    GeneratorParams p;
    p.config = cfg;
    const int L = cfg.latent_dim;
    p.store.add("gen.seed", Tensor::randn({cfg.gen_base_channels, 1, 2, 2}, rng, 0.02));
    for (int b = 0; b < cfg.num_blocks(); ++b) {
        std::string prefix = "gen.block" + std::to_string(b);
        i64 cin = cfg.gen_channels_in(b), cout = cfg.gen_channels_out(b);
        // Transposed conv weight: [Cin, Cout, kd, kh, kw].
        p.store.add(prefix + ".deconv.w", Tensor::randn({cin, cout, 4, 4, 4}, rng, 0.02));
        p.store.add(prefix + ".deconv.b", Tensor({cout}));
        detail::add_linear(p.store, prefix + ".mlp1", L, L, rng, false);
        detail::add_linear(p.store, prefix + ".mlp2", 2 * cout, L, rng, false);
    }
    return p;
}

inline RoomEncoderParams init_room_encoder(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    RoomEncoderParams p;
    p.config = cfg;
    int cin = 1;
    for (int i = 0; i < cfg.num_blocks(); ++i) {
        detail::add_conv(p.store, "room.block" + std::to_string(i), cfg.enc_channels(i), cin,
                         {4, 4, 4}, rng, false);
        cin = cfg.enc_channels(i);
    }
    // Deepest feature (2x2x1 spatial) flattened into z_r.
    i64 flat = static_cast<i64>(cfg.enc_channels(cfg.num_blocks() - 1)) * 2 * 2 * 1;
    detail::add_linear(p.store, "room.fc", cfg.latent_dim, flat, rng, false);
    return p;
}

inline DiscriminatorParams init_discriminator(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    DiscriminatorParams p;
    p.config = cfg;
    auto add_encoder = [&](const std::string& name, int in_channels) {
        int cin = in_channels;
        for (int i = 0; i < cfg.num_blocks(); ++i) {
            int cout = cfg.disc_base_channels << i;
            detail::add_conv(p.store, name + ".block" + std::to_string(i), cout, cin, {1, 4, 4},
                             rng, true);
            cin = cout;
        }
    };
    auto add_head = [&](const std::string& name, i64 in_len) {
        detail::add_linear(p.store, name + ".fc1", cfg.head_hidden, in_len, rng, true);
        detail::add_linear(p.store, name + ".fc2", 1, cfg.head_hidden, rng, true);
    };
    const i64 feat = cfg.feature_len();
    switch (cfg.disc_arch) {
        case DiscArch::kSeparateEncoders:
            add_encoder("disc.depth", 1);
            add_encoder("disc.sem", cfg.channels());
            add_head("disc.head", static_cast<i64>(cfg.num_views) * 2 * feat);
            break;
        case DiscArch::kUnifiedEncoder:
            add_encoder("disc.joint", 1 + cfg.channels());
            add_head("disc.head", static_cast<i64>(cfg.num_views) * feat);
            break;
        case DiscArch::kSeparateDiscriminators:
            add_encoder("disc.depth", 1);
            add_head("disc.depth_head", static_cast<i64>(cfg.num_views) * feat);
            add_encoder("disc.sem", cfg.channels());
            add_head("disc.sem_head", static_cast<i64>(cfg.num_views) * feat);
            break;
    }
    return p;
}

// One power-iteration refresh of every spectral-norm buffer pair in the
// store, against the current weights.
inline void refresh_spectral(ParamStore& store) {
    for (auto& e : store.entries()) {
        if (e.name.size() < 2 || e.name.substr(e.name.size() - 2) != ".u") continue;
        std::string prefix = e.name.substr(0, e.name.size() - 2);
        Tensor& w = store.get(prefix + ".w");
        Tensor& u = e.tensor;
        Tensor& v = store.get(prefix + ".v");
        spectral_power_iterate(w, w.dim(0), w.numel() / w.dim(0), u, v);
    }
}

// ---------------------------------------------------------------------------
// Graph builders. A binder records which node corresponds to which named
// parameter so the training loop can collect gradients afterwards.

class ParamBinder {
public:
    ParamBinder(Graph& g, bool trainable) : graph_(g), trainable_(trainable) {}

    Graph::NodeId bind(ParamStore& store, const std::string& name) {
        for (auto& [n, id] : bound_)
            if (n == name) return id;
        Tensor& t = store.get(name);
        Graph::NodeId id = graph_.input(t, trainable_);
        bound_.emplace_back(name, id);
        return id;
    }

    const std::vector<std::pair<std::string, Graph::NodeId>>& bound() const { return bound_; }

private:
    Graph& graph_;
    bool trainable_;
    std::vector<std::pair<std::string, Graph::NodeId>> bound_;
};

namespace detail {

inline Graph::NodeId adain(Graph& g, ParamBinder& pb, ParamStore& store,
                           const std::string& prefix, Graph::NodeId x, Graph::NodeId z,
                           double slope) {
    auto h = g.leaky_relu(
        g.linear(pb.bind(store, prefix + ".mlp1.w"), z, pb.bind(store, prefix + ".mlp1.b")),
        slope);
    auto ss = g.linear(pb.bind(store, prefix + ".mlp2.w"), h, pb.bind(store, prefix + ".mlp2.b"));
    i64 c = g.value(ss).numel() / 2;
    auto scale_raw = g.slice_channels(ss, 0, c);
    auto shift = g.slice_channels(ss, c, 2 * c);
    auto scale_v = g.add(scale_raw, g.constant(Tensor::full({c}, 1.0)));
    return g.channel_affine(g.instance_norm(x), scale_v, shift);
}

inline Graph::NodeId sn_weight(Graph& g, ParamBinder& pb, ParamStore& store,
                               const std::string& prefix, bool refresh) {
    Tensor& w = store.get(prefix + ".w");
    Tensor& u = store.get(prefix + ".u");
    Tensor& v = store.get(prefix + ".v");
    i64 rows = w.dim(0), cols = w.numel() / w.dim(0);
    // One power-iteration step against the current weight, outside the
    // recorded graph. Training refreshes once per step before fanning out
    // over batch elements, so element graphs must not re-iterate.
    if (refresh) spectral_power_iterate(w, rows, cols, u, v);
    auto w_node = pb.bind(store, prefix + ".w");
    auto w2d = g.reshape(w_node, {rows, cols});
    auto wv = g.linear(w2d, g.constant(v), -1);
    auto sigma = g.dot(g.constant(u), wv);
    return g.div_by_scalar_node(w_node, sigma);
}

}  // namespace detail

struct RoomEncoderOut {
    Graph::NodeId z_r = -1;
    std::vector<Graph::NodeId> pyramid;  // block outputs, fine to coarse
};

inline RoomEncoderOut room_encoder_graph(Graph& g, ParamBinder& pb, RoomEncoderParams& params,
                                         const RoomMaskVolume& mask) {
    const NetConfig& cfg = params.config;
    if (!(mask.grid == cfg.grid)) throw ConfigError("room mask grid mismatch");
    Tensor input({1, cfg.grid.d, cfg.grid.h, cfg.grid.w});
    for (i64 i = 0; i < cfg.grid.num_voxels(); ++i)
        input[i] = mask.mask[static_cast<size_t>(i)];
    RoomEncoderOut out;
    Graph::NodeId x = g.constant(std::move(input));
    for (int i = 0; i < cfg.num_blocks(); ++i) {
        std::string prefix = "room.block" + std::to_string(i);
        x = g.conv3d(x, pb.bind(params.store, prefix + ".w"), pb.bind(params.store, prefix + ".b"),
                     {2, 2, 2}, {1, 1, 1});
        x = g.leaky_relu(x, cfg.leaky_slope);
        out.pyramid.push_back(x);
    }
    auto flat = g.reshape(x, {g.value(x).numel()});
    out.z_r = g.linear(pb.bind(params.store, "room.fc.w"), flat,
                       pb.bind(params.store, "room.fc.b"));
    return out;
}

struct GeneratorOut {
    Graph::NodeId volume = -1;  // [C+1, d, h, w], softmax-normalized
    Graph::NodeId z_r = -1;
};

// Full conditional generator: room-encode the mask, fuse the latent,
// run the deconvolution stack with AdaIN after every block, modulate a
// quarter of the channels with the room pyramid at each resolution, and
// close with a channelwise softmax.
inline GeneratorOut generator_graph(Graph& g, ParamBinder& pb, GeneratorParams& gen,
                                    RoomEncoderParams& room, Graph::NodeId z_s,
                                    const RoomMaskVolume& mask) {
    const NetConfig& cfg = gen.config;
    RoomEncoderOut enc = room_encoder_graph(g, pb, room, mask);

    Graph::NodeId z;
    if (cfg.fusion == LatentFusion::kHadamard) {
        z = g.mul(z_s, enc.z_r);
    } else {
        z = g.mul_by_scalar_node(z_s, g.dot(z_s, enc.z_r));
    }

    const int n = cfg.num_blocks();
    Graph::NodeId x = pb.bind(gen.store, "gen.seed");
    // Seed is modulated by the deepest (2x2x1) room feature.
    x = g.modulate_channels(x, enc.pyramid[static_cast<size_t>(n - 1)]);
    for (int b = 0; b < n; ++b) {
        std::string prefix = "gen.block" + std::to_string(b);
        x = g.deconv3d(x, pb.bind(gen.store, prefix + ".deconv.w"),
                       pb.bind(gen.store, prefix + ".deconv.b"), {2, 2, 2}, {1, 1, 1});
        x = detail::adain(g, pb, gen.store, prefix, x, z, cfg.leaky_slope);
        if (b < n - 1) {
            x = g.leaky_relu(x, cfg.leaky_slope);
            // Room feature at this resolution: pyramid index n-2-b.
            x = g.modulate_channels(x, enc.pyramid[static_cast<size_t>(n - 2 - b)]);
        } else {
            x = g.softmax_channels(x);
        }
    }
    return GeneratorOut{x, enc.z_r};
}

// Multi-view discriminator over a [N, C+2, H, W] views tensor (channel 0
// depth in meters, the rest the semantic distribution). Returns the raw
// score node.
inline Graph::NodeId discriminator_graph(Graph& g, ParamBinder& pb, DiscriminatorParams& disc,
                                         Graph::NodeId views, double far_depth,
                                         bool refresh_sn = true) {
    const NetConfig& cfg = disc.config;
    const Tensor& v = g.value(views);
    if (v.ndim() != 4 || v.dim(0) != cfg.num_views || v.dim(1) != cfg.channels() + 1)
        throw ConfigError("discriminator: views tensor must be [N, C+2, H, W], got " +
                          g.value(views).shape_str());
    const i64 height = v.dim(2), width = v.dim(3);

    auto encode = [&](const std::string& name, Graph::NodeId img) {
        Graph::NodeId x = img;
        for (int i = 0; i < cfg.num_blocks(); ++i) {
            std::string prefix = name + ".block" + std::to_string(i);
            auto w_sn = detail::sn_weight(g, pb, disc.store, prefix, refresh_sn);
            x = g.conv3d(x, w_sn, pb.bind(disc.store, prefix + ".b"), {1, 2, 2}, {0, 1, 1});
            x = g.relu(x);
        }
        return g.reshape(x, {g.value(x).numel()});
    };
    auto head = [&](const std::string& name, Graph::NodeId features) {
        auto h = g.relu(g.linear(detail::sn_weight(g, pb, disc.store, name + ".fc1", refresh_sn),
                                 features, pb.bind(disc.store, name + ".fc1.b")));
        return g.linear(detail::sn_weight(g, pb, disc.store, name + ".fc2", refresh_sn), h,
                        pb.bind(disc.store, name + ".fc2.b"));
    };

    const i64 view_ch = cfg.channels() + 1;
    auto flat = g.reshape(views, {static_cast<i64>(cfg.num_views) * view_ch, height, width});
    std::vector<Graph::NodeId> depth_imgs, sem_imgs;
    for (int i = 0; i < cfg.num_views; ++i) {
        auto depth = g.slice_channels(flat, i * view_ch, i * view_ch + 1);
        depth = g.scale(depth, 1.0 / far_depth);  // meters -> [0,1]
        auto sem = g.slice_channels(flat, i * view_ch + 1, (i + 1) * view_ch);
        depth_imgs.push_back(g.reshape(depth, {1, 1, height, width}));
        sem_imgs.push_back(g.reshape(sem, {static_cast<i64>(cfg.channels()), 1, height, width}));
    }

    switch (cfg.disc_arch) {
        case DiscArch::kSeparateEncoders: {
            std::vector<Graph::NodeId> feats;
            for (int i = 0; i < cfg.num_views; ++i) {
                feats.push_back(encode("disc.depth", depth_imgs[static_cast<size_t>(i)]));
                feats.push_back(encode("disc.sem", sem_imgs[static_cast<size_t>(i)]));
            }
            return head("disc.head", g.concat(feats));
        }
        case DiscArch::kUnifiedEncoder: {
            std::vector<Graph::NodeId> feats;
            for (int i = 0; i < cfg.num_views; ++i) {
                auto stacked = g.concat({depth_imgs[static_cast<size_t>(i)],
                                         sem_imgs[static_cast<size_t>(i)]});
                stacked = g.reshape(stacked, {1 + cfg.channels(), 1, height, width});
                feats.push_back(encode("disc.joint", stacked));
            }
            return head("disc.head", g.concat(feats));
        }
        case DiscArch::kSeparateDiscriminators: {
            std::vector<Graph::NodeId> dfeats, sfeats;
            for (int i = 0; i < cfg.num_views; ++i) {
                dfeats.push_back(encode("disc.depth", depth_imgs[static_cast<size_t>(i)]));
                sfeats.push_back(encode("disc.sem", sem_imgs[static_cast<size_t>(i)]));
            }
            auto sd = head("disc.depth_head", g.concat(dfeats));
            auto ss = head("disc.sem_head", g.concat(sfeats));
            return g.add(sd, ss);
        }
    }
    throw ConfigError("unreachable discriminator arch");
}

// ---------------------------------------------------------------------------
// Plain-value wrappers.

struct RoomEncoding {
    Tensor z_r;
    std::vector<Tensor> pyramid;
};

inline RoomEncoding room_encode(const RoomMaskVolume& mask, RoomEncoderParams& params) {
    Graph g;
    ParamBinder pb(g, false);
    RoomEncoderOut out = room_encoder_graph(g, pb, params, mask);
    RoomEncoding enc;
    enc.z_r = g.value(out.z_r);
    for (auto id : out.pyramid) enc.pyramid.push_back(g.value(id));
    return enc;
}

inline SemanticVolume generate(const Tensor& z_s, const RoomMaskVolume& mask,
                               GeneratorParams& gen, RoomEncoderParams& room,
                               const LabelSpace& labels) {
    if (z_s.numel() != gen.config.latent_dim) throw ConfigError("latent size mismatch");
    Graph g;
    ParamBinder pb(g, false);
    auto z_node = g.constant(z_s);
    GeneratorOut out = generator_graph(g, pb, gen, room, z_node, mask);
    return volume_from_tensor(g.value(out.volume), gen.config.grid, labels);
}

// Stacks N rendered or real views into the discriminator input layout.
inline Tensor stack_views(const std::vector<SemanticDepthImage>& views) {
    if (views.empty()) throw ConfigError("stack_views: no views");
    const int width = views.front().width, height = views.front().height;
    const int channels = views.front().channels();
    Tensor out({static_cast<i64>(views.size()), channels + 1, height, width});
    const i64 plane = static_cast<i64>(width) * height;
    for (size_t i = 0; i < views.size(); ++i) {
        const auto& v = views[i];
        if (v.width != width || v.height != height || v.channels() != channels)
            throw ConfigError("stack_views: mixed view shapes");
        double* dst = &out.data[i * static_cast<size_t>((channels + 1) * plane)];
        std::copy(v.depth.begin(), v.depth.end(), dst);
        std::copy(v.semantics.begin(), v.semantics.end(), dst + plane);
    }
    return out;
}

inline double discriminate(const std::vector<SemanticDepthImage>& views,
                           DiscriminatorParams& disc, double far_depth) {
    if (static_cast<int>(views.size()) != disc.config.num_views)
        throw ConfigError("discriminate: expected " + std::to_string(disc.config.num_views) +
                          " views, got " + std::to_string(views.size()));
    Graph g;
    ParamBinder pb(g, false);
    auto v = g.constant(stack_views(views));
    auto score = discriminator_graph(g, pb, disc, v, far_depth);
    return g.value(score)[0];
}

// ---------------------------------------------------------------------------
// Checkpoint container (SGSC): named f64 arrays plus u64 metadata.

struct Checkpoint {
    std::vector<std::pair<std::string, u64>> meta;
    std::vector<std::pair<std::string, Tensor>> arrays;

    u64 meta_value(const std::string& name, u64 fallback = 0) const {
        for (const auto& [k, v] : meta)
            if (k == name) return v;
        return fallback;
    }
    const Tensor* find(const std::string& name) const {
        for (const auto& [k, t] : arrays)
            if (k == name) return &t;
        return nullptr;
    }
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                            u64 config_hash = 0) {
    BinaryWriter w(path);
    w.magic("SGSC");
    w.write_u16(kFormatVersion);
    w.write_u64(config_hash);
    w.write_u32(static_cast<u32>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        w.write_string(k);
        w.write_u64(v);
    }
    w.write_u32(static_cast<u32>(ckpt.arrays.size()));
    for (const auto& [k, t] : ckpt.arrays) {
        w.write_string(k);
        w.write_u16(static_cast<u16>(t.ndim()));
        for (i64 d : t.shape) w.write_u32(static_cast<u32>(d));
        w.write_f64_array(t.data.data(), t.data.size());
    }
    w.close();
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, u64* config_hash = nullptr) {
    BinaryReader r(path);
    r.expect_magic("SGSC");
    if (r.read_u16() != kFormatVersion) throw DataError("unsupported SGSC version");
    u64 hash = r.read_u64();
    if (config_hash) *config_hash = hash;
    Checkpoint ckpt;
    u32 metas = r.read_u32();
    for (u32 i = 0; i < metas; ++i) {
        std::string k = r.read_string();
        ckpt.meta.emplace_back(k, r.read_u64());
    }
    u32 arrays = r.read_u32();
    for (u32 i = 0; i < arrays; ++i) {
        std::string k = r.read_string();
        u16 ndim = r.read_u16();
        std::vector<i64> shape(ndim);
        for (u16 d = 0; d < ndim; ++d) shape[d] = r.read_u32();
        Tensor t(shape);
        r.read_f64_array(t.data.data(), t.data.size());
        ckpt.arrays.emplace_back(k, std::move(t));
    }
    return ckpt;
}

inline void store_params(Checkpoint& ckpt, const ParamStore& store) {
    for (const auto& e : store.entries()) ckpt.arrays.emplace_back(e.name, e.tensor);
}

inline void load_params(const Checkpoint& ckpt, ParamStore& store) {
    for (auto& e : store.entries()) {
        const Tensor* t = ckpt.find(e.name);
        if (!t) throw DataError("checkpoint missing parameter: " + e.name);
        if (t->shape != e.tensor.shape)
            throw DataError("checkpoint shape mismatch for " + e.name + ": " + t->shape_str() +
                            " vs " + e.tensor.shape_str());
        e.tensor = *t;
    }
}

}  // namespace sgs
