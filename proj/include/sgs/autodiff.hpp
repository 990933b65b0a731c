#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "sgs/parallel.hpp"
#include "sgs/tensor.hpp"

namespace sgs {

// Reverse-mode differentiation over a flat tape of primitive operations.
// Nodes are appended in program order, so reverse iteration is a valid
// topological order for the backward sweep. Every primitive's adjoint is
// exact; the gradcheck suite verifies each one against central finite
// differences.
class Graph {
public:
    using NodeId = int;

    struct Node {
        Tensor value;
        Tensor grad;  // allocated on demand during backward
        std::vector<NodeId> inputs;
        std::function<void(Graph&, NodeId)> backward_fn;
        bool needs_grad = false;
    };

    NodeId input(Tensor value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    NodeId constant(Tensor value) { return input(std::move(value), false); }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }

    // Core extension point: custom operations (the projection layer, the
    // room-mask penalty) register through this just like built-ins.
    NodeId make_node(Tensor value, std::vector<NodeId> inputs,
                     std::function<void(Graph&, NodeId)> backward_fn) {
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        for (NodeId i : n.inputs)
            if (nodes_[static_cast<size_t>(i)].needs_grad) n.needs_grad = true;
        if (n.needs_grad) n.backward_fn = std::move(backward_fn);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    // Reverse accumulation from a scalar loss node.
    void backward(NodeId loss) {
        Node& ln = node(loss);
        if (ln.value.numel() != 1) throw ConfigError("backward requires a scalar loss");
        ensure_grad(loss);
        ln.grad.data[0] = 1.0;
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = node(id);
            if (!n.needs_grad || !n.backward_fn) continue;
            if (n.grad.data.empty()) continue;  // not on any path to the loss
            n.backward_fn(*this, id);
        }
    }

    Tensor& grad_buffer(NodeId id) {
        ensure_grad(id);
        return node(id).grad;
    }

    // ------------------------------------------------------------------
    // Elementwise primitives.

    NodeId add(NodeId a, NodeId b) {
        check_same_shape(a, b);
        Tensor out = value(a);
        out.add_(value(b));
        return make_node(std::move(out), {a, b}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            g.accumulate(g.node(id).inputs[0], gy);
            g.accumulate(g.node(id).inputs[1], gy);
        });
    }

    NodeId sub(NodeId a, NodeId b) {
        check_same_shape(a, b);
        Tensor out = value(a);
        for (i64 i = 0; i < out.numel(); ++i) out[i] -= value(b)[i];
        return make_node(std::move(out), {a, b}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            g.accumulate(g.node(id).inputs[0], gy);
            if (g.wants(g.node(id).inputs[1])) {
                Tensor neg = gy;
                neg.scale_(-1.0);
                g.accumulate(g.node(id).inputs[1], neg);
            }
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        check_same_shape(a, b);
        Tensor out = value(a);
        for (i64 i = 0; i < out.numel(); ++i) out[i] *= value(b)[i];
        return make_node(std::move(out), {a, b}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            NodeId a = g.node(id).inputs[0], b = g.node(id).inputs[1];
            if (g.wants(a)) {
                Tensor ga = gy;
                for (i64 i = 0; i < ga.numel(); ++i) ga[i] *= g.value(b)[i];
                g.accumulate(a, ga);
            }
            if (g.wants(b)) {
                Tensor gb = gy;
                for (i64 i = 0; i < gb.numel(); ++i) gb[i] *= g.value(a)[i];
                g.accumulate(b, gb);
            }
        });
    }

    NodeId scale(NodeId a, double s) {
        Tensor out = value(a);
        out.scale_(s);
        return make_node(std::move(out), {a}, [s](Graph& g, NodeId id) {
            Tensor ga = g.node(id).grad;
            ga.scale_(s);
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    NodeId leaky_relu(NodeId a, double slope) {
        Tensor out = value(a);
        for (double& x : out.data) x = x > 0 ? x : slope * x;
        return make_node(std::move(out), {a}, [slope](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            const Tensor& x = g.value(g.node(id).inputs[0]);
            Tensor ga = gy;
            for (i64 i = 0; i < ga.numel(); ++i) ga[i] *= x[i] > 0 ? 1.0 : slope;
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    NodeId relu(NodeId a) { return leaky_relu(a, 0.0); }

    NodeId sigmoid(NodeId a) {
        Tensor out = value(a);
        for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
        return make_node(std::move(out), {a}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            const Tensor& y = g.value(id);
            Tensor ga = gy;
            for (i64 i = 0; i < ga.numel(); ++i) ga[i] *= y[i] * (1.0 - y[i]);
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    // Numerically stable log(1 + exp(x)).
    NodeId softplus(NodeId a) {
        Tensor out = value(a);
        for (double& x : out.data) x = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        return make_node(std::move(out), {a}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            const Tensor& x = g.value(g.node(id).inputs[0]);
            Tensor ga = gy;
            for (i64 i = 0; i < ga.numel(); ++i) ga[i] *= 1.0 / (1.0 + std::exp(-x[i]));
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    // ------------------------------------------------------------------
    // Reductions and vector ops.

    NodeId sum(NodeId a) {
        double s = 0;
        for (double x : value(a).data) s += x;
        return make_node(Tensor::scalar(s), {a}, [](Graph& g, NodeId id) {
            double gy = g.node(id).grad[0];
            NodeId a = g.node(id).inputs[0];
            Tensor ga = Tensor::full(g.value(a).shape, gy);
            g.accumulate(a, ga);
        });
    }

    NodeId mean(NodeId a) {
        i64 n = value(a).numel();
        double s = 0;
        for (double x : value(a).data) s += x;
        return make_node(Tensor::scalar(s / n), {a}, [n](Graph& g, NodeId id) {
            double gy = g.node(id).grad[0] / n;
            NodeId a = g.node(id).inputs[0];
            g.accumulate(a, Tensor::full(g.value(a).shape, gy));
        });
    }

    // Inner product of two equally-sized tensors (flattened).
    NodeId dot(NodeId a, NodeId b) {
        if (value(a).numel() != value(b).numel()) throw ConfigError("dot: size mismatch");
        double s = 0;
        for (i64 i = 0; i < value(a).numel(); ++i) s += value(a)[i] * value(b)[i];
        return make_node(Tensor::scalar(s), {a, b}, [](Graph& g, NodeId id) {
            double gy = g.node(id).grad[0];
            NodeId a = g.node(id).inputs[0], b = g.node(id).inputs[1];
            if (g.wants(a)) {
                Tensor ga = g.value(b);
                ga.scale_(gy);
                ga.shape = g.value(a).shape;
                g.accumulate(a, ga);
            }
            if (g.wants(b)) {
                Tensor gb = g.value(a);
                gb.scale_(gy);
                gb.shape = g.value(b).shape;
                g.accumulate(b, gb);
            }
        });
    }

    // y = a * s with s a one-element node (broadcast scalar).
    NodeId mul_by_scalar_node(NodeId a, NodeId s) {
        double sv = value(s)[0];
        Tensor out = value(a);
        out.scale_(sv);
        return make_node(std::move(out), {a, s}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            NodeId a = g.node(id).inputs[0], s = g.node(id).inputs[1];
            double sv = g.value(s)[0];
            if (g.wants(a)) {
                Tensor ga = gy;
                ga.scale_(sv);
                g.accumulate(a, ga);
            }
            if (g.wants(s)) {
                double acc = 0;
                for (i64 i = 0; i < gy.numel(); ++i) acc += gy[i] * g.value(a)[i];
                g.accumulate(s, Tensor::scalar(acc));
            }
        });
    }

    NodeId div_by_scalar_node(NodeId a, NodeId s) {
        double sv = value(s)[0];
        Tensor out = value(a);
        out.scale_(1.0 / sv);
        return make_node(std::move(out), {a, s}, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            NodeId a = g.node(id).inputs[0], s = g.node(id).inputs[1];
            double sv = g.value(s)[0];
            if (g.wants(a)) {
                Tensor ga = gy;
                ga.scale_(1.0 / sv);
                g.accumulate(a, ga);
            }
            if (g.wants(s)) {
                double acc = 0;
                for (i64 i = 0; i < gy.numel(); ++i) acc += gy[i] * g.value(a)[i];
                g.accumulate(s, Tensor::scalar(-acc / (sv * sv)));
            }
        });
    }

    // Fully connected layer: y = W x + b, W of shape [out, in].
    NodeId linear(NodeId w, NodeId x, NodeId b) {
        const Tensor& W = value(w);
        const Tensor& X = value(x);
        if (W.ndim() != 2 || W.dim(1) != X.numel()) throw ConfigError("linear: shape mismatch");
        i64 out_n = W.dim(0), in_n = W.dim(1);
        Tensor out({out_n});
        for (i64 o = 0; o < out_n; ++o) {
            double s = b >= 0 ? value(b)[o] : 0.0;
            const double* row = &W.data[static_cast<size_t>(o * in_n)];
            for (i64 i = 0; i < in_n; ++i) s += row[i] * X[i];
            out[o] = s;
        }
        std::vector<NodeId> ins = b >= 0 ? std::vector<NodeId>{w, x, b}
                                         : std::vector<NodeId>{w, x};
        return make_node(std::move(out), std::move(ins), [in_n, out_n](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            const auto& ins = g.node(id).inputs;
            NodeId w = ins[0], x = ins[1];
            const Tensor& W = g.value(w);
            const Tensor& X = g.value(x);
            if (g.wants(w)) {
                Tensor gw(W.shape);
                for (i64 o = 0; o < out_n; ++o)
                    for (i64 i = 0; i < in_n; ++i) gw[o * in_n + i] = gy[o] * X[i];
                g.accumulate(w, gw);
            }
            if (g.wants(x)) {
                Tensor gx(X.shape);
                for (i64 o = 0; o < out_n; ++o) {
                    const double* row = &W.data[static_cast<size_t>(o * in_n)];
                    for (i64 i = 0; i < in_n; ++i) gx[i] += gy[o] * row[i];
                }
                g.accumulate(x, gx);
            }
            if (ins.size() == 3 && g.wants(ins[2])) {
                Tensor gb = gy;
                gb.shape = g.value(ins[2]).shape;
                g.accumulate(ins[2], gb);
            }
        });
    }

    // ------------------------------------------------------------------
    // Shape plumbing.

    NodeId reshape(NodeId a, std::vector<i64> shape) {
        if (Tensor::numel_of(shape) != value(a).numel()) throw ConfigError("reshape: bad size");
        Tensor out = value(a);
        out.shape = std::move(shape);
        return make_node(std::move(out), {a}, [](Graph& g, NodeId id) {
            Tensor ga = g.node(id).grad;
            ga.shape = g.value(g.node(id).inputs[0]).shape;
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    // Concatenates flattened inputs into one vector.
    NodeId concat(const std::vector<NodeId>& parts) {
        i64 total = 0;
        for (NodeId p : parts) total += value(p).numel();
        Tensor out({total});
        i64 off = 0;
        for (NodeId p : parts) {
            const Tensor& t = value(p);
            std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
            off += t.numel();
        }
        return make_node(std::move(out), parts, [](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            i64 off = 0;
            for (NodeId p : g.node(id).inputs) {
                const Tensor& t = g.value(p);
                if (g.wants(p)) {
                    Tensor gp(t.shape);
                    std::copy(gy.data.begin() + off, gy.data.begin() + off + t.numel(),
                              gp.data.begin());
                    g.accumulate(p, gp);
                }
                off += t.numel();
            }
        });
    }

    // x[C, ...] -> x[from:to, ...].
    NodeId slice_channels(NodeId a, i64 from, i64 to) {
        const Tensor& X = value(a);
        i64 c = X.dim(0), rest = X.numel() / c;
        if (from < 0 || to > c || from >= to) throw ConfigError("slice_channels: bad range");
        std::vector<i64> shape = X.shape;
        shape[0] = to - from;
        Tensor out(shape);
        std::copy(X.data.begin() + from * rest, X.data.begin() + to * rest, out.data.begin());
        return make_node(std::move(out), {a}, [from, rest](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            NodeId a = g.node(id).inputs[0];
            Tensor ga(g.value(a).shape);
            std::copy(gy.data.begin(), gy.data.end(), ga.data.begin() + from * rest);
            g.accumulate(a, ga);
        });
    }

    // ------------------------------------------------------------------
    // Normalization and modulation.

    // Softmax over dim 0 at every trailing position.
    NodeId softmax_channels(NodeId a) {
        const Tensor& X = value(a);
        i64 c = X.dim(0), n = X.numel() / c;
        Tensor out(X.shape);
        for (i64 p = 0; p < n; ++p) {
            double m = -1e300;
            for (i64 k = 0; k < c; ++k) m = std::max(m, X[k * n + p]);
            double z = 0;
            for (i64 k = 0; k < c; ++k) {
                double e = std::exp(X[k * n + p] - m);
                out[k * n + p] = e;
                z += e;
            }
            for (i64 k = 0; k < c; ++k) out[k * n + p] /= z;
        }
        return make_node(std::move(out), {a}, [c, n](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            const Tensor& y = g.value(id);
            Tensor ga(y.shape);
            for (i64 p = 0; p < n; ++p) {
                double dotv = 0;
                for (i64 k = 0; k < c; ++k) dotv += gy[k * n + p] * y[k * n + p];
                for (i64 k = 0; k < c; ++k)
                    ga[k * n + p] = y[k * n + p] * (gy[k * n + p] - dotv);
            }
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    // Per-channel standardization over the trailing (spatial) dims.
    NodeId instance_norm(NodeId a, double eps = 1e-5) {
        const Tensor& X = value(a);
        i64 c = X.dim(0), n = X.numel() / c;
        Tensor out(X.shape);
        std::vector<double> inv_std(static_cast<size_t>(c));
        for (i64 k = 0; k < c; ++k) {
            double mu = 0;
            for (i64 p = 0; p < n; ++p) mu += X[k * n + p];
            mu /= n;
            double var = 0;
            for (i64 p = 0; p < n; ++p) {
                double d = X[k * n + p] - mu;
                var += d * d;
            }
            var /= n;
            double is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(k)] = is;
            for (i64 p = 0; p < n; ++p) out[k * n + p] = (X[k * n + p] - mu) * is;
        }
        return make_node(std::move(out), {a}, [c, n, inv_std](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            const Tensor& y = g.value(id);
            Tensor ga(y.shape);
            for (i64 k = 0; k < c; ++k) {
                double gmean = 0, gycor = 0;
                for (i64 p = 0; p < n; ++p) {
                    gmean += gy[k * n + p];
                    gycor += gy[k * n + p] * y[k * n + p];
                }
                gmean /= n;
                gycor /= n;
                double is = inv_std[static_cast<size_t>(k)];
                for (i64 p = 0; p < n; ++p)
                    ga[k * n + p] = is * (gy[k * n + p] - gmean - y[k * n + p] * gycor);
            }
            g.accumulate(g.node(id).inputs[0], ga);
        });
    }

    // y[k] = x[k] * scale[k] + shift[k], broadcast over spatial dims.
    NodeId channel_affine(NodeId a, NodeId scale_v, NodeId shift_v) {
        const Tensor& X = value(a);
        i64 c = X.dim(0), n = X.numel() / c;
        if (value(scale_v).numel() != c || value(shift_v).numel() != c)
            throw ConfigError("channel_affine: parameter size mismatch");
        Tensor out(X.shape);
        for (i64 k = 0; k < c; ++k)
            for (i64 p = 0; p < n; ++p)
                out[k * n + p] = X[k * n + p] * value(scale_v)[k] + value(shift_v)[k];
        return make_node(std::move(out), {a, scale_v, shift_v}, [c, n](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            NodeId a = g.node(id).inputs[0], sv = g.node(id).inputs[1],
                   hv = g.node(id).inputs[2];
            const Tensor& X = g.value(a);
            if (g.wants(a)) {
                Tensor ga(X.shape);
                for (i64 k = 0; k < c; ++k)
                    for (i64 p = 0; p < n; ++p) ga[k * n + p] = gy[k * n + p] * g.value(sv)[k];
                g.accumulate(a, ga);
            }
            if (g.wants(sv)) {
                Tensor gs(g.value(sv).shape);
                for (i64 k = 0; k < c; ++k) {
                    double s = 0;
                    for (i64 p = 0; p < n; ++p) s += gy[k * n + p] * X[k * n + p];
                    gs[k] = s;
                }
                g.accumulate(sv, gs);
            }
            if (g.wants(hv)) {
                Tensor gh(g.value(hv).shape);
                for (i64 k = 0; k < c; ++k) {
                    double s = 0;
                    for (i64 p = 0; p < n; ++p) s += gy[k * n + p];
                    gh[k] = s;
                }
                g.accumulate(hv, gh);
            }
        });
    }

    // Multiplies the first M channels of x by feat (M channels, same
    // spatial extent); remaining channels pass through.
    NodeId modulate_channels(NodeId a, NodeId feat) {
        const Tensor& X = value(a);
        const Tensor& F = value(feat);
        i64 c = X.dim(0), n = X.numel() / c;
        i64 m = F.dim(0);
        if (m > c || F.numel() != m * n) throw ConfigError("modulate_channels: shape mismatch");
        Tensor out = X;
        for (i64 k = 0; k < m; ++k)
            for (i64 p = 0; p < n; ++p) out[k * n + p] *= F[k * n + p];
        return make_node(std::move(out), {a, feat}, [m, n](Graph& g, NodeId id) {
            const Tensor& gy = g.node(id).grad;
            NodeId a = g.node(id).inputs[0], f = g.node(id).inputs[1];
            if (g.wants(a)) {
                Tensor ga = gy;
                for (i64 k = 0; k < m; ++k)
                    for (i64 p = 0; p < n; ++p) ga[k * n + p] *= g.value(f)[k * n + p];
                g.accumulate(a, ga);
            }
            if (g.wants(f)) {
                Tensor gf(g.value(f).shape);
                for (i64 k = 0; k < m; ++k)
                    for (i64 p = 0; p < n; ++p)
                        gf[k * n + p] = gy[k * n + p] * g.value(a)[k * n + p];
                g.accumulate(f, gf);
            }
        });
    }

    // ------------------------------------------------------------------
    // Convolutions. Volumes are [C, D, H, W]; images use D == 1 with a
    // 1-deep kernel. Strides/pads are per-axis (d, h, w).

    NodeId conv3d(NodeId x, NodeId w, NodeId b, std::array<i64, 3> stride,
                  std::array<i64, 3> pad) {
        const Tensor& X = value(x);
        const Tensor& W = value(w);
        if (X.ndim() != 4 || W.ndim() != 5 || W.dim(1) != X.dim(0))
            throw ConfigError("conv3d: shape mismatch");
        const i64 ci = X.dim(0), di = X.dim(1), hi = X.dim(2), wi = X.dim(3);
        const i64 co = W.dim(0), kd = W.dim(2), kh = W.dim(3), kw = W.dim(4);
        const i64 do_ = (di + 2 * pad[0] - kd) / stride[0] + 1;
        const i64 ho = (hi + 2 * pad[1] - kh) / stride[1] + 1;
        const i64 wo = (wi + 2 * pad[2] - kw) / stride[2] + 1;
        Tensor out({co, do_, ho, wo});
        conv3d_forward(X, W, b >= 0 ? &value(b) : nullptr, out, stride, pad);
        std::vector<NodeId> ins = b >= 0 ? std::vector<NodeId>{x, w, b}
                                         : std::vector<NodeId>{x, w};
        return make_node(std::move(out), std::move(ins),
                         [stride, pad](Graph& g, NodeId id) {
                             conv3d_backward(g, id, stride, pad);
                         });
    }

    // Transposed convolution; weight is [Cin, Cout, kd, kh, kw].
    NodeId deconv3d(NodeId x, NodeId w, NodeId b, std::array<i64, 3> stride,
                    std::array<i64, 3> pad) {
        const Tensor& X = value(x);
        const Tensor& W = value(w);
        if (X.ndim() != 4 || W.ndim() != 5 || W.dim(0) != X.dim(0))
            throw ConfigError("deconv3d: shape mismatch");
        const i64 co = W.dim(1), kd = W.dim(2), kh = W.dim(3), kw = W.dim(4);
        const i64 do_ = (X.dim(1) - 1) * stride[0] - 2 * pad[0] + kd;
        const i64 ho = (X.dim(2) - 1) * stride[1] - 2 * pad[1] + kh;
        const i64 wo = (X.dim(3) - 1) * stride[2] - 2 * pad[2] + kw;
        Tensor out({co, do_, ho, wo});
        deconv3d_forward(X, W, b >= 0 ? &value(b) : nullptr, out, stride, pad);
        std::vector<NodeId> ins = b >= 0 ? std::vector<NodeId>{x, w, b}
                                         : std::vector<NodeId>{x, w};
        return make_node(std::move(out), std::move(ins),
                         [stride, pad](Graph& g, NodeId id) {
                             deconv3d_backward(g, id, stride, pad);
                         });
    }

    // ------------------------------------------------------------------

    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    bool wants(NodeId id) { return node(id).needs_grad; }

    void accumulate(NodeId id, const Tensor& g) {
        if (!wants(id)) return;
        ensure_grad(id);
        node(id).grad.add_(g);
    }

    size_t size() const { return nodes_.size(); }

private:
    void ensure_grad(NodeId id) {
        Node& n = node(id);
        if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    }

    void check_same_shape(NodeId a, NodeId b) const {
        if (!value(a).same_shape(value(b))) throw ConfigError("elementwise shape mismatch");
    }

    static void conv3d_forward(const Tensor& X, const Tensor& W, const Tensor* bias, Tensor& Y,
                               std::array<i64, 3> stride, std::array<i64, 3> pad);
    static void conv3d_backward(Graph& g, NodeId id, std::array<i64, 3> stride,
                                std::array<i64, 3> pad);
    static void deconv3d_forward(const Tensor& X, const Tensor& W, const Tensor* bias, Tensor& Y,
                                 std::array<i64, 3> stride, std::array<i64, 3> pad);
    static void deconv3d_backward(Graph& g, NodeId id, std::array<i64, 3> stride,
                                  std::array<i64, 3> pad);

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Convolution kernels. Plain loops in gather form: every output cell is
// written by exactly one iteration, so results do not depend on scheduling.

namespace detail {

// For a strided mapping in = (out + pad - k) / stride, the valid
// (kernel tap, input index) pairs per output coordinate. Precomputing
// them skips the stride-divisibility rejects in the hot loops.
inline std::vector<std::vector<std::pair<int, int>>> tap_pairs(i64 out_n, i64 in_n, i64 k,
                                                               i64 stride, i64 pad) {
    std::vector<std::vector<std::pair<int, int>>> pairs(static_cast<size_t>(out_n));
    for (i64 o = 0; o < out_n; ++o)
        for (i64 z = 0; z < k; ++z) {
            i64 in = o + pad - z;
            if (in % stride != 0) continue;
            in /= stride;
            if (in < 0 || in >= in_n) continue;
            pairs[static_cast<size_t>(o)].emplace_back(static_cast<int>(z),
                                                       static_cast<int>(in));
        }
    return pairs;
}

}  // namespace detail

inline void Graph::conv3d_forward(const Tensor& X, const Tensor& W, const Tensor* bias,
                                  Tensor& Y, std::array<i64, 3> stride, std::array<i64, 3> pad) {
    const i64 ci = X.dim(0), di = X.dim(1), hi = X.dim(2), wi = X.dim(3);
    const i64 co = Y.dim(0), do_ = Y.dim(1), ho = Y.dim(2), wo = Y.dim(3);
    const i64 kd = W.dim(2), kh = W.dim(3), kw = W.dim(4);
    for (i64 oc = 0; oc < co; ++oc) {
        double* yp = &Y.data[static_cast<size_t>(oc * do_ * ho * wo)];
        const double bv = bias ? (*bias)[oc] : 0.0;
        for (i64 od = 0; od < do_; ++od)
            for (i64 oh = 0; oh < ho; ++oh)
                for (i64 ow = 0; ow < wo; ++ow) {
                    double s = bv;
                    for (i64 ic = 0; ic < ci; ++ic)
                        for (i64 zd = 0; zd < kd; ++zd) {
                            i64 idd = od * stride[0] - pad[0] + zd;
                            if (idd < 0 || idd >= di) continue;
                            for (i64 zh = 0; zh < kh; ++zh) {
                                i64 ihh = oh * stride[1] - pad[1] + zh;
                                if (ihh < 0 || ihh >= hi) continue;
                                const double* xrow =
                                    &X.data[static_cast<size_t>(((ic * di + idd) * hi + ihh) * wi)];
                                const double* wrow = &W.data[static_cast<size_t>(
                                    ((((oc * ci) + ic) * kd + zd) * kh + zh) * kw)];
                                for (i64 zw = 0; zw < kw; ++zw) {
                                    i64 iww = ow * stride[2] - pad[2] + zw;
                                    if (iww < 0 || iww >= wi) continue;
                                    s += xrow[iww] * wrow[zw];
                                }
                            }
                        }
                    yp[(od * ho + oh) * wo + ow] = s;
                }
    }
}

inline void Graph::conv3d_backward(Graph& g, NodeId id, std::array<i64, 3> stride,
                                   std::array<i64, 3> pad) {
    const auto& ins = g.node(id).inputs;
    const Tensor& gy = g.node(id).grad;
    const Tensor& X = g.value(ins[0]);
    const Tensor& W = g.value(ins[1]);
    const i64 ci = X.dim(0), di = X.dim(1), hi = X.dim(2), wi = X.dim(3);
    const i64 co = gy.dim(0), do_ = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
    const i64 kd = W.dim(2), kh = W.dim(3), kw = W.dim(4);

    if (g.wants(ins[0])) {
        Tensor gx(X.shape);
        const auto pd = detail::tap_pairs(di, do_, kd, stride[0], pad[0]);
        const auto ph = detail::tap_pairs(hi, ho, kh, stride[1], pad[1]);
        const auto pw = detail::tap_pairs(wi, wo, kw, stride[2], pad[2]);
        for (i64 ic = 0; ic < ci; ++ic)
            for (i64 idd = 0; idd < di; ++idd)
                for (i64 ihh = 0; ihh < hi; ++ihh)
                    for (i64 iww = 0; iww < wi; ++iww) {
                        double s = 0;
                        for (i64 oc = 0; oc < co; ++oc) {
                            const double* gc = &gy.data[static_cast<size_t>(oc * do_ * ho * wo)];
                            const double* wc =
                                &W.data[static_cast<size_t>(((oc * ci) + ic) * kd * kh * kw)];
                            for (auto [zd, od] : pd[static_cast<size_t>(idd)])
                                for (auto [zh, oh] : ph[static_cast<size_t>(ihh)]) {
                                    const double* grow =
                                        gc + (static_cast<i64>(od) * ho + oh) * wo;
                                    const double* wrow =
                                        wc + (static_cast<i64>(zd) * kh + zh) * kw;
                                    for (auto [zw, ow] : pw[static_cast<size_t>(iww)])
                                        s += grow[ow] * wrow[zw];
                                }
                        }
                        gx[((ic * di + idd) * hi + ihh) * wi + iww] = s;
                    }
        g.accumulate(ins[0], gx);
    }
    if (g.wants(ins[1])) {
        Tensor gw(W.shape);
        for (i64 oc = 0; oc < co; ++oc)
            for (i64 ic = 0; ic < ci; ++ic)
                for (i64 zd = 0; zd < kd; ++zd)
                    for (i64 zh = 0; zh < kh; ++zh)
                        for (i64 zw = 0; zw < kw; ++zw) {
                            double s = 0;
                            for (i64 od = 0; od < do_; ++od) {
                                i64 idd = od * stride[0] - pad[0] + zd;
                                if (idd < 0 || idd >= di) continue;
                                for (i64 oh = 0; oh < ho; ++oh) {
                                    i64 ihh = oh * stride[1] - pad[1] + zh;
                                    if (ihh < 0 || ihh >= hi) continue;
                                    for (i64 ow = 0; ow < wo; ++ow) {
                                        i64 iww = ow * stride[2] - pad[2] + zw;
                                        if (iww < 0 || iww >= wi) continue;
                                        s += gy[((oc * do_ + od) * ho + oh) * wo + ow] *
                                             X[((ic * di + idd) * hi + ihh) * wi + iww];
                                    }
                                }
                            }
                            gw[((((oc * ci) + ic) * kd + zd) * kh + zh) * kw + zw] = s;
                        }
        g.accumulate(ins[1], gw);
    }
    if (ins.size() == 3 && g.wants(ins[2])) {
        Tensor gb({co});
        for (i64 oc = 0; oc < co; ++oc) {
            double s = 0;
            const double* gp = &gy.data[static_cast<size_t>(oc * do_ * ho * wo)];
            for (i64 p = 0; p < do_ * ho * wo; ++p) s += gp[p];
            gb[oc] = s;
        }
        g.accumulate(ins[2], gb);
    }
}

inline void Graph::deconv3d_forward(const Tensor& X, const Tensor& W, const Tensor* bias,
                                    Tensor& Y, std::array<i64, 3> stride,
                                    std::array<i64, 3> pad) {
    const i64 ci = X.dim(0), di = X.dim(1), hi = X.dim(2), wi = X.dim(3);
    const i64 co = Y.dim(0), do_ = Y.dim(1), ho = Y.dim(2), wo = Y.dim(3);
    const i64 kd = W.dim(2), kh = W.dim(3), kw = W.dim(4);
    // Scatter form: each input cell broadcasts its kernel footprint into
    // the per-output-channel plane. One writer per output channel.
    for (i64 oc = 0; oc < co; ++oc) {
        double* yp = &Y.data[static_cast<size_t>(oc * do_ * ho * wo)];
        const double bv = bias ? (*bias)[oc] : 0.0;
        for (i64 p = 0; p < do_ * ho * wo; ++p) yp[p] = bv;
        for (i64 ic = 0; ic < ci; ++ic) {
            const double* xc = &X.data[static_cast<size_t>(ic * di * hi * wi)];
            const double* wc = &W.data[static_cast<size_t>(((ic * co) + oc) * kd * kh * kw)];
            for (i64 idd = 0; idd < di; ++idd)
                for (i64 ihh = 0; ihh < hi; ++ihh)
                    for (i64 iww = 0; iww < wi; ++iww) {
                        const double xv = xc[(idd * hi + ihh) * wi + iww];
                        if (xv == 0.0) continue;
                        const i64 od0 = idd * stride[0] - pad[0];
                        const i64 oh0 = ihh * stride[1] - pad[1];
                        const i64 ow0 = iww * stride[2] - pad[2];
                        for (i64 zd = 0; zd < kd; ++zd) {
                            const i64 od = od0 + zd;
                            if (od < 0 || od >= do_) continue;
                            for (i64 zh = 0; zh < kh; ++zh) {
                                const i64 oh = oh0 + zh;
                                if (oh < 0 || oh >= ho) continue;
                                double* yrow = yp + (od * ho + oh) * wo;
                                const double* wrow = wc + (zd * kh + zh) * kw;
                                const i64 zw_lo = std::max<i64>(0, -ow0);
                                const i64 zw_hi = std::min(kw, wo - ow0);
                                for (i64 zw = zw_lo; zw < zw_hi; ++zw)
                                    yrow[ow0 + zw] += xv * wrow[zw];
                            }
                        }
                    }
        }
    }
}

inline void Graph::deconv3d_backward(Graph& g, NodeId id, std::array<i64, 3> stride,
                                     std::array<i64, 3> pad) {
    const auto& ins = g.node(id).inputs;
    const Tensor& gy = g.node(id).grad;
    const Tensor& X = g.value(ins[0]);
    const Tensor& W = g.value(ins[1]);
    const i64 ci = X.dim(0), di = X.dim(1), hi = X.dim(2), wi = X.dim(3);
    const i64 co = gy.dim(0), do_ = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
    const i64 kd = W.dim(2), kh = W.dim(3), kw = W.dim(4);

    if (g.wants(ins[0])) {
        // Input gradient: gather each input cell's kernel footprint from
        // the output gradient (the transpose of the forward scatter).
        Tensor gx(X.shape);
        for (i64 ic = 0; ic < ci; ++ic) {
            double* gxc = &gx.data[static_cast<size_t>(ic * di * hi * wi)];
            for (i64 oc = 0; oc < co; ++oc) {
                const double* gyc = &gy.data[static_cast<size_t>(oc * do_ * ho * wo)];
                const double* wc =
                    &W.data[static_cast<size_t>(((ic * co) + oc) * kd * kh * kw)];
                for (i64 idd = 0; idd < di; ++idd) {
                    const i64 od0 = idd * stride[0] - pad[0];
                    for (i64 ihh = 0; ihh < hi; ++ihh) {
                        const i64 oh0 = ihh * stride[1] - pad[1];
                        for (i64 iww = 0; iww < wi; ++iww) {
                            const i64 ow0 = iww * stride[2] - pad[2];
                            double s = 0;
                            for (i64 zd = 0; zd < kd; ++zd) {
                                const i64 od = od0 + zd;
                                if (od < 0 || od >= do_) continue;
                                for (i64 zh = 0; zh < kh; ++zh) {
                                    const i64 oh = oh0 + zh;
                                    if (oh < 0 || oh >= ho) continue;
                                    const double* grow = gyc + (od * ho + oh) * wo;
                                    const double* wrow = wc + (zd * kh + zh) * kw;
                                    const i64 zw_lo = std::max<i64>(0, -ow0);
                                    const i64 zw_hi = std::min(kw, wo - ow0);
                                    for (i64 zw = zw_lo; zw < zw_hi; ++zw)
                                        s += grow[ow0 + zw] * wrow[zw];
                                }
                            }
                            gxc[(idd * hi + ihh) * wi + iww] += s;
                        }
                    }
                }
            }
        }
        g.accumulate(ins[0], gx);
    }
    if (g.wants(ins[1])) {
        // Weight gradient: each input cell scatters x * gy into the
        // per-(ic,oc) kernel tile, which stays cache-resident.
        Tensor gw(W.shape);
        for (i64 ic = 0; ic < ci; ++ic) {
            const double* xc = &X.data[static_cast<size_t>(ic * di * hi * wi)];
            for (i64 oc = 0; oc < co; ++oc) {
                double* gwc = &gw.data[static_cast<size_t>(((ic * co) + oc) * kd * kh * kw)];
                const double* gyc = &gy.data[static_cast<size_t>(oc * do_ * ho * wo)];
                for (i64 idd = 0; idd < di; ++idd) {
                    const i64 od0 = idd * stride[0] - pad[0];
                    for (i64 ihh = 0; ihh < hi; ++ihh) {
                        const i64 oh0 = ihh * stride[1] - pad[1];
                        for (i64 iww = 0; iww < wi; ++iww) {
                            const double xv = xc[(idd * hi + ihh) * wi + iww];
                            if (xv == 0.0) continue;
                            const i64 ow0 = iww * stride[2] - pad[2];
                            for (i64 zd = 0; zd < kd; ++zd) {
                                const i64 od = od0 + zd;
                                if (od < 0 || od >= do_) continue;
                                for (i64 zh = 0; zh < kh; ++zh) {
                                    const i64 oh = oh0 + zh;
                                    if (oh < 0 || oh >= ho) continue;
                                    const double* grow = gyc + (od * ho + oh) * wo;
                                    double* gwrow = gwc + (zd * kh + zh) * kw;
                                    const i64 zw_lo = std::max<i64>(0, -ow0);
                                    const i64 zw_hi = std::min(kw, wo - ow0);
                                    for (i64 zw = zw_lo; zw < zw_hi; ++zw)
                                        gwrow[zw] += xv * grow[ow0 + zw];
                                }
                            }
                        }
                    }
                }
            }
        }
        g.accumulate(ins[1], gw);
    }
    if (ins.size() == 3 && g.wants(ins[2])) {
        Tensor gb({co});
        for (i64 oc = 0; oc < co; ++oc) {
            double s = 0;
            const double* gp = &gy.data[static_cast<size_t>(oc * do_ * ho * wo)];
            for (i64 p = 0; p < do_ * ho * wo; ++p) s += gp[p];
            gb[oc] = s;
        }
        g.accumulate(ins[2], gb);
    }
}

}  // namespace sgs
