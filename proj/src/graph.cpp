#include "pairdiff/graph.hpp"
#include <memory>

#include <cmath>

#include "pairdiff/errors.hpp"
#include "pairdiff/spectral.hpp"

namespace pairdiff {

namespace {

inline double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Graph::make_node(Tensor value, bool needs_grad, std::function<void(Graph&)> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size()) - 1;
}

void Graph::ensure_grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
}

Var Graph::input(Tensor value) { return make_node(std::move(value), false, {}); }

Var Graph::leaf_with_grad(Tensor value) { return make_node(std::move(value), true, {}); }

Var Graph::param(Param& p) {
    Var v = make_node(p.value, true, {});
    param_links_.emplace_back(v, &p);
    return v;
}

void Graph::clear() {
    nodes_.clear();
    param_links_.clear();
}

void Graph::backward(Var loss) {
    Node& l = node(loss);
    if (l.value.size() != 1) throw ShapeError("backward: loss must be scalar");
    ensure_grad(loss);
    l.grad[0] = 1.0;
    for (Var v = static_cast<Var>(nodes_.size()) - 1; v >= 0; --v) {
        Node& n = node(v);
        if (n.needs_grad && n.backward && !n.grad.empty()) n.backward(*this);
    }
    for (auto& [v, p] : param_links_) {
        const Tensor& g = node(v).grad;
        if (g.empty()) continue;
        for (size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var Graph::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("add: shape mismatch");
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
    bool ng = node(a).needs_grad || node(b).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a, b](Graph& g) {
            const Tensor& gy = g.grad(v);
            for (Var src : {a, b}) {
                if (!g.node(src).needs_grad) continue;
                g.ensure_grad(src);
                Tensor& gs = g.node(src).grad;
                for (size_t i = 0; i < gy.size(); ++i) gs[i] += gy[i];
            }
        };
    return v;
}

Var Graph::sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("sub: shape mismatch");
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
    bool ng = node(a).needs_grad || node(b).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a, b](Graph& g) {
            const Tensor& gy = g.grad(v);
            if (g.node(a).needs_grad) {
                g.ensure_grad(a);
                Tensor& ga = g.node(a).grad;
                for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (g.node(b).needs_grad) {
                g.ensure_grad(b);
                Tensor& gb = g.node(b).grad;
                for (size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
            }
        };
    return v;
}

Var Graph::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul: shape mismatch");
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
    bool ng = node(a).needs_grad || node(b).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a, b](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& ta = g.value(a);
            const Tensor& tb = g.value(b);
            if (g.node(a).needs_grad) {
                g.ensure_grad(a);
                Tensor& ga = g.node(a).grad;
                for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * tb[i];
            }
            if (g.node(b).needs_grad) {
                g.ensure_grad(b);
                Tensor& gb = g.node(b).grad;
                for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ta[i];
            }
        };
    return v;
}

Var Graph::scale(Var a, double c) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = c * ta[i];
    bool ng = node(a).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a, c](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(a);
            Tensor& ga = g.node(a).grad;
            for (size_t i = 0; i < gy.size(); ++i) ga[i] += c * gy[i];
        };
    return v;
}

Var Graph::add_const(Var a, double c) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + c;
    bool ng = node(a).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(a);
            Tensor& ga = g.node(a).grad;
            for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        };
    return v;
}

Var Graph::silu(Var a) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * sigmoid_d(ta[i]);
    bool ng = node(a).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& ta = g.value(a);
            g.ensure_grad(a);
            Tensor& ga = g.node(a).grad;
            for (size_t i = 0; i < gy.size(); ++i) {
                double s = sigmoid_d(ta[i]);
                ga[i] += gy[i] * s * (1.0 + ta[i] * (1.0 - s));
            }
        };
    return v;
}

Var Graph::sigmoid(Var a) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_d(ta[i]);
    bool ng = node(a).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& ty = g.value(v);
            g.ensure_grad(a);
            Tensor& ga = g.node(a).grad;
            for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * ty[i] * (1.0 - ty[i]);
        };
    return v;
}

Var Graph::clamp(Var a, double lo, double hi) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros_like(ta);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = ta[i] < lo ? lo : (ta[i] > hi ? hi : ta[i]);
    bool ng = node(a).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, a, lo, hi](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& ta = g.value(a);
            g.ensure_grad(a);
            Tensor& ga = g.node(a).grad;
            for (size_t i = 0; i < gy.size(); ++i)
                if (ta[i] >= lo && ta[i] <= hi) ga[i] += gy[i];
        };
    return v;
}

Var Graph::per_sample_affine(Var x, const std::vector<double>& scale, Tensor bias) {
    const Tensor& tx = value(x);
    if (!tx.same_shape(bias)) throw ShapeError("per_sample_affine: bias shape mismatch");
    const int n = tx.dim(0);
    if (static_cast<int>(scale.size()) != n)
        throw ShapeError("per_sample_affine: scale count != leading dim");
    const size_t inner = tx.size() / static_cast<size_t>(n);
    Tensor out = Tensor::zeros_like(tx);
    for (int b = 0; b < n; ++b)
        for (size_t i = 0; i < inner; ++i) {
            size_t idx = static_cast<size_t>(b) * inner + i;
            out[idx] = bias[idx] + scale[static_cast<size_t>(b)] * tx[idx];
        }
    bool ng = node(x).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, scale, inner, n](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(x);
            Tensor& gx = g.node(x).grad;
            for (int b = 0; b < n; ++b)
                for (size_t i = 0; i < inner; ++i) {
                    size_t idx = static_cast<size_t>(b) * inner + i;
                    gx[idx] += scale[static_cast<size_t>(b)] * gy[idx];
                }
        };
    return v;
}

// ---------------------------------------------------------------------------
// linear / conv
// ---------------------------------------------------------------------------

Var Graph::linear(Var x, Var w, Var b) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1)
        throw ShapeError("linear: expects x(N,D), w(O,D), b(O)");
    const int N = tx.dim(0), D = tx.dim(1), O = tw.dim(0);
    if (tw.dim(1) != D || tb.dim(0) != O) throw ShapeError("linear: dimension mismatch");

    Tensor out({N, O});
    for (int nn = 0; nn < N; ++nn)
        for (int o = 0; o < O; ++o) {
            double acc = tb[static_cast<size_t>(o)];
            const double* xr = tx.data() + static_cast<size_t>(nn) * D;
            const double* wr = tw.data() + static_cast<size_t>(o) * D;
            for (int d = 0; d < D; ++d) acc += xr[d] * wr[d];
            out.at(nn, o) = acc;
        }
    bool ng = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, w, b, N, D, O](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& tx = g.value(x);
            const Tensor& tw = g.value(w);
            if (g.node(x).needs_grad) {
                g.ensure_grad(x);
                Tensor& gx = g.node(x).grad;
                for (int nn = 0; nn < N; ++nn)
                    for (int d = 0; d < D; ++d) {
                        double acc = 0.0;
                        for (int o = 0; o < O; ++o)
                            acc += gy.at(nn, o) * tw[static_cast<size_t>(o) * D + d];
                        gx[static_cast<size_t>(nn) * D + d] += acc;
                    }
            }
            if (g.node(w).needs_grad) {
                g.ensure_grad(w);
                Tensor& gw = g.node(w).grad;
                for (int o = 0; o < O; ++o)
                    for (int d = 0; d < D; ++d) {
                        double acc = 0.0;
                        for (int nn = 0; nn < N; ++nn)
                            acc += gy.at(nn, o) * tx[static_cast<size_t>(nn) * D + d];
                        gw[static_cast<size_t>(o) * D + d] += acc;
                    }
            }
            if (g.node(b).needs_grad) {
                g.ensure_grad(b);
                Tensor& gb = g.node(b).grad;
                for (int o = 0; o < O; ++o) {
                    double acc = 0.0;
                    for (int nn = 0; nn < N; ++nn) acc += gy.at(nn, o);
                    gb[static_cast<size_t>(o)] += acc;
                }
            }
        };
    return v;
}

Var Graph::group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gamma);
    const Tensor& tb = value(beta);
    if (tx.rank() != 4) throw ShapeError("group_norm: expects NCHW");
    const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (C % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
    if (tg.rank() != 1 || tg.dim(0) != C || tb.rank() != 1 || tb.dim(0) != C)
        throw ShapeError("group_norm: affine params must be (C)");
    const int cg = C / groups;
    const size_t m = static_cast<size_t>(cg) * H * W;

    auto stats = std::make_shared<std::vector<std::pair<double, double>>>(
        static_cast<size_t>(N) * groups);  // (mean, inv_std)
    Tensor out = Tensor::zeros_like(tx);
    for (int nn = 0; nn < N; ++nn)
        for (int gg = 0; gg < groups; ++gg) {
            const double* base = tx.data() + (static_cast<size_t>(nn) * C + static_cast<size_t>(gg) * cg) * H * W;
            double mean = 0.0;
            for (size_t i = 0; i < m; ++i) mean += base[i];
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (size_t i = 0; i < m; ++i) {
                double d = base[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            const double inv_std = 1.0 / std::sqrt(var + eps);
            (*stats)[static_cast<size_t>(nn) * groups + gg] = {mean, inv_std};
            for (int c = 0; c < cg; ++c) {
                const int ch = gg * cg + c;
                const double s = tg[static_cast<size_t>(ch)] * inv_std;
                const double o = tb[static_cast<size_t>(ch)] - mean * s;
                const double* src = tx.data() + (static_cast<size_t>(nn) * C + ch) * H * W;
                double* dst = out.data() + (static_cast<size_t>(nn) * C + ch) * H * W;
                for (int i = 0; i < H * W; ++i) dst[i] = src[i] * s + o;
            }
        }

    bool ng = node(x).needs_grad || node(gamma).needs_grad || node(beta).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, gamma, beta, N, C, H, W, groups, cg, m, stats](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& tx = g.value(x);
            const Tensor& tg = g.value(gamma);
            const int HW = H * W;
            if (g.node(x).needs_grad) {
                g.ensure_grad(x);
                Tensor& gx = g.node(x).grad;
                for (int nn = 0; nn < N; ++nn)
                    for (int gg = 0; gg < groups; ++gg) {
                        const auto [mean, inv_std] = (*stats)[static_cast<size_t>(nn) * groups + gg];
                        // accumulate sum(dxhat) and sum(dxhat * xhat) over the group
                        double s1 = 0.0, s2 = 0.0;
                        for (int c = 0; c < cg; ++c) {
                            const int ch = gg * cg + c;
                            const double gam = tg[static_cast<size_t>(ch)];
                            const double* gr = gy.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                            const double* xr = tx.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                            for (int i = 0; i < HW; ++i) {
                                const double dxh = gr[i] * gam;
                                s1 += dxh;
                                s2 += dxh * (xr[i] - mean) * inv_std;
                            }
                        }
                        const double inv_m = 1.0 / static_cast<double>(m);
                        for (int c = 0; c < cg; ++c) {
                            const int ch = gg * cg + c;
                            const double gam = tg[static_cast<size_t>(ch)];
                            const double* gr = gy.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                            const double* xr = tx.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                            double* gd = gx.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                            for (int i = 0; i < HW; ++i) {
                                const double xh = (xr[i] - mean) * inv_std;
                                gd[i] += inv_std * (gr[i] * gam - inv_m * (s1 + xh * s2));
                            }
                        }
                    }
            }
            if (g.node(gamma).needs_grad) {
                g.ensure_grad(gamma);
                Tensor& ggam = g.node(gamma).grad;
                for (int ch = 0; ch < C; ++ch) {
                    double acc = 0.0;
                    for (int nn = 0; nn < N; ++nn) {
                        const auto [mean, inv_std] = (*stats)[static_cast<size_t>(nn) * groups + ch / cg];
                        const double* gr = gy.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                        const double* xr = tx.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                        for (int i = 0; i < HW; ++i) acc += gr[i] * (xr[i] - mean) * inv_std;
                    }
                    ggam[static_cast<size_t>(ch)] += acc;
                }
            }
            if (g.node(beta).needs_grad) {
                g.ensure_grad(beta);
                Tensor& gbet = g.node(beta).grad;
                for (int ch = 0; ch < C; ++ch) {
                    double acc = 0.0;
                    for (int nn = 0; nn < N; ++nn) {
                        const double* gr = gy.data() + (static_cast<size_t>(nn) * C + ch) * HW;
                        for (int i = 0; i < HW; ++i) acc += gr[i];
                    }
                    gbet[static_cast<size_t>(ch)] += acc;
                }
            }
        };
    return v;
}

Var Graph::conv2d(Var x, Var w, Var b, int stride) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.rank() != 4 || tw.rank() != 4 || tb.rank() != 1)
        throw ShapeError("conv2d: expects x(N,C,H,W), w(O,C,k,k), b(O)");
    const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const int O = tw.dim(0), K = tw.dim(2);
    if (tw.dim(1) != C || tw.dim(3) != K) throw ShapeError("conv2d: weight shape mismatch");
    if (K != 1 && K != 3) throw ShapeError("conv2d: kernel must be 1 or 3");
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    if (tb.dim(0) != O) throw ShapeError("conv2d: bias mismatch");
    const int P = K / 2;
    const int Ho = (H + 2 * P - K) / stride + 1;
    const int Wo = (W + 2 * P - K) / stride + 1;

    Tensor out({N, O, Ho, Wo});
#pragma omp parallel for collapse(2) schedule(static)
    for (int nn = 0; nn < N; ++nn)
        for (int oc = 0; oc < O; ++oc) {
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = tb[static_cast<size_t>(oc)];
                    for (int ic = 0; ic < C; ++ic)
                        for (int ky = 0; ky < K; ++ky) {
                            const int ih = oh * stride + ky - P;
                            if (ih < 0 || ih >= H) continue;
                            const double* xr =
                                tx.data() + ((static_cast<size_t>(nn) * C + ic) * H + ih) * W;
                            const double* wr =
                                tw.data() + ((static_cast<size_t>(oc) * C + ic) * K + ky) * K;
                            for (int kx = 0; kx < K; ++kx) {
                                const int iw = ow * stride + kx - P;
                                if (iw < 0 || iw >= W) continue;
                                acc += xr[iw] * wr[kx];
                            }
                        }
                    out.at(nn, oc, oh, ow) = acc;
                }
        }

    bool ng = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, w, b, N, C, H, W, O, K, P, Ho, Wo, stride](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& tx = g.value(x);
            const Tensor& tw = g.value(w);
            if (g.node(x).needs_grad) {
                g.ensure_grad(x);
                Tensor& gx = g.node(x).grad;
#pragma omp parallel for collapse(2) schedule(static)
                for (int nn = 0; nn < N; ++nn)
                    for (int ic = 0; ic < C; ++ic) {
                        for (int ih = 0; ih < H; ++ih)
                            for (int iw = 0; iw < W; ++iw) {
                                double acc = 0.0;
                                for (int oc = 0; oc < O; ++oc)
                                    for (int ky = 0; ky < K; ++ky) {
                                        const int num_h = ih + P - ky;
                                        if (num_h % stride != 0) continue;
                                        const int oh = num_h / stride;
                                        if (oh < 0 || oh >= Ho) continue;
                                        for (int kx = 0; kx < K; ++kx) {
                                            const int num_w = iw + P - kx;
                                            if (num_w % stride != 0) continue;
                                            const int ow = num_w / stride;
                                            if (ow < 0 || ow >= Wo) continue;
                                            acc += gy.at(nn, oc, oh, ow) *
                                                   tw[((static_cast<size_t>(oc) * C + ic) * K + ky) * K + kx];
                                        }
                                    }
                                gx[((static_cast<size_t>(nn) * C + ic) * H + ih) * W + iw] += acc;
                            }
                    }
            }
            if (g.node(w).needs_grad) {
                g.ensure_grad(w);
                Tensor& gw = g.node(w).grad;
#pragma omp parallel for schedule(static)
                for (int oc = 0; oc < O; ++oc)
                    for (int ic = 0; ic < C; ++ic)
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                double acc = 0.0;
                                for (int nn = 0; nn < N; ++nn)
                                    for (int oh = 0; oh < Ho; ++oh) {
                                        const int ih = oh * stride + ky - P;
                                        if (ih < 0 || ih >= H) continue;
                                        const double* xr =
                                            tx.data() +
                                            ((static_cast<size_t>(nn) * C + ic) * H + ih) * W;
                                        const double* gr =
                                            gy.data() +
                                            ((static_cast<size_t>(nn) * O + oc) * Ho + oh) * Wo;
                                        for (int ow = 0; ow < Wo; ++ow) {
                                            const int iw = ow * stride + kx - P;
                                            if (iw < 0 || iw >= W) continue;
                                            acc += gr[ow] * xr[iw];
                                        }
                                    }
                                gw[((static_cast<size_t>(oc) * C + ic) * K + ky) * K + kx] += acc;
                            }
            }
            if (g.node(b).needs_grad) {
                g.ensure_grad(b);
                Tensor& gb = g.node(b).grad;
                for (int oc = 0; oc < O; ++oc) {
                    double acc = 0.0;
                    for (int nn = 0; nn < N; ++nn)
                        for (int oh = 0; oh < Ho; ++oh)
                            for (int ow = 0; ow < Wo; ++ow) acc += gy.at(nn, oc, oh, ow);
                    gb[static_cast<size_t>(oc)] += acc;
                }
            }
        };
    return v;
}

// ---------------------------------------------------------------------------
// pooling / resize / structure
// ---------------------------------------------------------------------------

Var Graph::avg_pool2(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4) throw ShapeError("avg_pool2: expects NCHW");
    const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw ShapeError("avg_pool2: odd spatial dims");
    Tensor out({N, C, H / 2, W / 2});
    for (int nn = 0; nn < N; ++nn)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < H / 2; ++oh)
                for (int ow = 0; ow < W / 2; ++ow)
                    out.at(nn, c, oh, ow) =
                        0.25 * (tx.at(nn, c, 2 * oh, 2 * ow) + tx.at(nn, c, 2 * oh, 2 * ow + 1) +
                                tx.at(nn, c, 2 * oh + 1, 2 * ow) +
                                tx.at(nn, c, 2 * oh + 1, 2 * ow + 1));
    bool ng = node(x).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, N, C, H, W](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(x);
            Tensor& gx = g.node(x).grad;
            for (int nn = 0; nn < N; ++nn)
                for (int c = 0; c < C; ++c)
                    for (int oh = 0; oh < H / 2; ++oh)
                        for (int ow = 0; ow < W / 2; ++ow) {
                            double gv = 0.25 * gy.at(nn, c, oh, ow);
                            gx.at(nn, c, 2 * oh, 2 * ow) += gv;
                            gx.at(nn, c, 2 * oh, 2 * ow + 1) += gv;
                            gx.at(nn, c, 2 * oh + 1, 2 * ow) += gv;
                            gx.at(nn, c, 2 * oh + 1, 2 * ow + 1) += gv;
                        }
        };
    return v;
}

Var Graph::upsample_nearest2(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4) throw ShapeError("upsample_nearest2: expects NCHW");
    const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    Tensor out({N, C, H * 2, W * 2});
    for (int nn = 0; nn < N; ++nn)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < 2 * H; ++oh)
                for (int ow = 0; ow < 2 * W; ++ow)
                    out.at(nn, c, oh, ow) = tx.at(nn, c, oh / 2, ow / 2);
    bool ng = node(x).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, N, C, H, W](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(x);
            Tensor& gx = g.node(x).grad;
            for (int nn = 0; nn < N; ++nn)
                for (int c = 0; c < C; ++c)
                    for (int oh = 0; oh < 2 * H; ++oh)
                        for (int ow = 0; ow < 2 * W; ++ow)
                            gx.at(nn, c, oh / 2, ow / 2) += gy.at(nn, c, oh, ow);
        };
    return v;
}

Var Graph::concat(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Tensor& t0 = value(xs[0]);
    const int N = t0.dim(0);
    size_t inner0 = 1;
    for (int i = 2; i < t0.rank(); ++i) inner0 *= static_cast<size_t>(t0.dim(i));

    int total_c = 0;
    bool ng = false;
    for (Var xv : xs) {
        const Tensor& t = value(xv);
        if (t.rank() != t0.rank() || t.dim(0) != N) throw ShapeError("concat: rank/batch mismatch");
        size_t inner = 1;
        for (int i = 2; i < t.rank(); ++i) inner *= static_cast<size_t>(t.dim(i));
        if (inner != inner0) throw ShapeError("concat: trailing dims mismatch");
        total_c += t.dim(1);
        ng = ng || node(xv).needs_grad;
    }
    std::vector<int> oshape = t0.shape();
    oshape[1] = total_c;
    Tensor out(oshape);
    size_t offset = 0;
    for (Var xv : xs) {
        const Tensor& t = value(xv);
        const size_t block = static_cast<size_t>(t.dim(1)) * inner0;
        for (int nn = 0; nn < N; ++nn) {
            const double* src = t.data() + static_cast<size_t>(nn) * block;
            double* dst = out.data() + static_cast<size_t>(nn) * (static_cast<size_t>(total_c) * inner0) + offset;
            for (size_t i = 0; i < block; ++i) dst[i] = src[i];
        }
        offset += block;
    }
    Var v = make_node(std::move(out), ng, {});
    if (ng) {
        std::vector<Var> sources = xs;
        node(v).backward = [v, sources, N, inner0, total_c](Graph& g) {
            const Tensor& gy = g.grad(v);
            size_t offset = 0;
            for (Var xv : sources) {
                const Tensor& t = g.value(xv);
                const size_t block = static_cast<size_t>(t.dim(1)) * inner0;
                if (g.node(xv).needs_grad) {
                    g.ensure_grad(xv);
                    Tensor& gx = g.node(xv).grad;
                    for (int nn = 0; nn < N; ++nn) {
                        const double* src = gy.data() +
                                            static_cast<size_t>(nn) * (static_cast<size_t>(total_c) * inner0) +
                                            offset;
                        double* dst = gx.data() + static_cast<size_t>(nn) * block;
                        for (size_t i = 0; i < block; ++i) dst[i] += src[i];
                    }
                }
                offset += block;
            }
        };
    }
    return v;
}

Var Graph::global_avg_pool(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4) throw ShapeError("global_avg_pool: expects NCHW");
    const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const double inv = 1.0 / (static_cast<double>(H) * W);
    Tensor out({N, C});
    for (int nn = 0; nn < N; ++nn)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            const double* p = tx.data() + (static_cast<size_t>(nn) * C + c) * H * W;
            for (int i = 0; i < H * W; ++i) acc += p[i];
            out.at(nn, c) = acc * inv;
        }
    bool ng = node(x).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, N, C, H, W, inv](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(x);
            Tensor& gx = g.node(x).grad;
            for (int nn = 0; nn < N; ++nn)
                for (int c = 0; c < C; ++c) {
                    double gv = gy.at(nn, c) * inv;
                    double* p = gx.data() + (static_cast<size_t>(nn) * C + c) * H * W;
                    for (int i = 0; i < H * W; ++i) p[i] += gv;
                }
        };
    return v;
}

Var Graph::channel_mean_max(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 4) throw ShapeError("channel_mean_max: expects NCHW");
    const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    Tensor out({N, 2, H, W});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(N) * H * W);
    const double invc = 1.0 / C;
    for (int nn = 0; nn < N; ++nn)
        for (int h = 0; h < H; ++h)
            for (int w0 = 0; w0 < W; ++w0) {
                double acc = 0.0;
                double best = tx.at(nn, 0, h, w0);
                int besti = 0;
                for (int c = 0; c < C; ++c) {
                    double vv = tx.at(nn, c, h, w0);
                    acc += vv;
                    if (vv > best) {
                        best = vv;
                        besti = c;
                    }
                }
                out.at(nn, 0, h, w0) = acc * invc;
                out.at(nn, 1, h, w0) = best;
                (*argmax)[(static_cast<size_t>(nn) * H + h) * W + w0] = besti;
            }
    bool ng = node(x).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, N, C, H, W, invc, argmax](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(x);
            Tensor& gx = g.node(x).grad;
            for (int nn = 0; nn < N; ++nn)
                for (int h = 0; h < H; ++h)
                    for (int w0 = 0; w0 < W; ++w0) {
                        double gmean = gy.at(nn, 0, h, w0) * invc;
                        for (int c = 0; c < C; ++c) gx.at(nn, c, h, w0) += gmean;
                        int bi = (*argmax)[(static_cast<size_t>(nn) * H + h) * W + w0];
                        gx.at(nn, bi, h, w0) += gy.at(nn, 1, h, w0);
                    }
        };
    return v;
}

Var Graph::mul_channel_gate(Var x, Var gate) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gate);
    if (tx.rank() != 4 || tg.rank() != 2 || tg.dim(0) != tx.dim(0) || tg.dim(1) != tx.dim(1))
        throw ShapeError("mul_channel_gate: gate must be (N,C)");
    const int N = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
    Tensor out = Tensor::zeros_like(tx);
    for (int nn = 0; nn < N; ++nn)
        for (int c = 0; c < C; ++c) {
            const double gv = tg.at(nn, c);
            const double* src = tx.data() + (static_cast<size_t>(nn) * C + c) * HW;
            double* dst = out.data() + (static_cast<size_t>(nn) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = src[i] * gv;
        }
    bool ng = node(x).needs_grad || node(gate).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, gate, N, C, HW](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& tx = g.value(x);
            const Tensor& tg = g.value(gate);
            if (g.node(x).needs_grad) {
                g.ensure_grad(x);
                Tensor& gx = g.node(x).grad;
                for (int nn = 0; nn < N; ++nn)
                    for (int c = 0; c < C; ++c) {
                        const double gv = tg.at(nn, c);
                        const double* src = gy.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        double* dst = gx.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        for (int i = 0; i < HW; ++i) dst[i] += src[i] * gv;
                    }
            }
            if (g.node(gate).needs_grad) {
                g.ensure_grad(gate);
                Tensor& gg = g.node(gate).grad;
                for (int nn = 0; nn < N; ++nn)
                    for (int c = 0; c < C; ++c) {
                        const double* gr = gy.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        const double* xr = tx.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        double acc = 0.0;
                        for (int i = 0; i < HW; ++i) acc += gr[i] * xr[i];
                        gg.at(nn, c) += acc;
                    }
            }
        };
    return v;
}

Var Graph::add_channel_bias(Var x, Var bias) {
    const Tensor& tx = value(x);
    const Tensor& tb = value(bias);
    if (tx.rank() != 4 || tb.rank() != 2 || tb.dim(0) != tx.dim(0) || tb.dim(1) != tx.dim(1))
        throw ShapeError("add_channel_bias: bias must be (N,C)");
    const int N = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
    Tensor out = Tensor::zeros_like(tx);
    for (int nn = 0; nn < N; ++nn)
        for (int c = 0; c < C; ++c) {
            const double bv = tb.at(nn, c);
            const double* src = tx.data() + (static_cast<size_t>(nn) * C + c) * HW;
            double* dst = out.data() + (static_cast<size_t>(nn) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = src[i] + bv;
        }
    bool ng = node(x).needs_grad || node(bias).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, bias, N, C, HW](Graph& g) {
            const Tensor& gy = g.grad(v);
            if (g.node(x).needs_grad) {
                g.ensure_grad(x);
                Tensor& gx = g.node(x).grad;
                for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            }
            if (g.node(bias).needs_grad) {
                g.ensure_grad(bias);
                Tensor& gb = g.node(bias).grad;
                for (int nn = 0; nn < N; ++nn)
                    for (int c = 0; c < C; ++c) {
                        const double* gr = gy.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        double acc = 0.0;
                        for (int i = 0; i < HW; ++i) acc += gr[i];
                        gb.at(nn, c) += acc;
                    }
            }
        };
    return v;
}

Var Graph::mul_spatial_gate(Var x, Var gate) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gate);
    if (tx.rank() != 4 || tg.rank() != 4 || tg.dim(0) != tx.dim(0) || tg.dim(1) != 1 ||
        tg.dim(2) != tx.dim(2) || tg.dim(3) != tx.dim(3))
        throw ShapeError("mul_spatial_gate: gate must be (N,1,H,W)");
    const int N = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
    Tensor out = Tensor::zeros_like(tx);
    for (int nn = 0; nn < N; ++nn) {
        const double* gv = tg.data() + static_cast<size_t>(nn) * HW;
        for (int c = 0; c < C; ++c) {
            const double* src = tx.data() + (static_cast<size_t>(nn) * C + c) * HW;
            double* dst = out.data() + (static_cast<size_t>(nn) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = src[i] * gv[i];
        }
    }
    bool ng = node(x).needs_grad || node(gate).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, x, gate, N, C, HW](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& tx = g.value(x);
            const Tensor& tg = g.value(gate);
            if (g.node(x).needs_grad) {
                g.ensure_grad(x);
                Tensor& gx = g.node(x).grad;
                for (int nn = 0; nn < N; ++nn) {
                    const double* gv = tg.data() + static_cast<size_t>(nn) * HW;
                    for (int c = 0; c < C; ++c) {
                        const double* src = gy.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        double* dst = gx.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        for (int i = 0; i < HW; ++i) dst[i] += src[i] * gv[i];
                    }
                }
            }
            if (g.node(gate).needs_grad) {
                g.ensure_grad(gate);
                Tensor& gg = g.node(gate).grad;
                for (int nn = 0; nn < N; ++nn) {
                    double* gd = gg.data() + static_cast<size_t>(nn) * HW;
                    for (int c = 0; c < C; ++c) {
                        const double* gr = gy.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        const double* xr = tx.data() + (static_cast<size_t>(nn) * C + c) * HW;
                        for (int i = 0; i < HW; ++i) gd[i] += gr[i] * xr[i];
                    }
                }
            }
        };
    return v;
}

// ---------------------------------------------------------------------------
// spectral filter ops
// ---------------------------------------------------------------------------

Var Graph::freq_filter(Tensor images, Var gains) {
    const Tensor& tg = value(gains);
    if (images.rank() != 4 || images.dim(1) != 1)
        throw ShapeError("freq_filter: images must be (N,1,H,W)");
    const int N = images.dim(0), H = images.dim(2), W = images.dim(3);
    if (tg.rank() != 3 || tg.dim(0) != N || tg.dim(1) != H || tg.dim(2) != W)
        throw ShapeError("freq_filter: gains must be (N,H,W)");

    auto spectra = std::make_shared<std::vector<std::pair<Tensor, Tensor>>>();
    spectra->reserve(static_cast<size_t>(N));
    Tensor out({N, 1, H, W});
    for (int nn = 0; nn < N; ++nn) {
        Tensor img({H, W});
        for (size_t i = 0; i < img.size(); ++i)
            img[i] = images[static_cast<size_t>(nn) * H * W + i];
        Tensor re, im;
        fft2(img, re, im);
        Tensor fre = Tensor::zeros_like(re), fim = Tensor::zeros_like(im);
        for (size_t i = 0; i < re.size(); ++i) {
            double gv = tg[static_cast<size_t>(nn) * H * W + i];
            fre[i] = re[i] * gv;
            fim[i] = im[i] * gv;
        }
        Tensor y = ifft2_real(fre, fim);
        for (size_t i = 0; i < y.size(); ++i) out[static_cast<size_t>(nn) * H * W + i] = y[i];
        spectra->emplace_back(std::move(re), std::move(im));
    }
    bool ng = node(gains).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, gains, spectra, N, H, W](Graph& g) {
            const Tensor& gy = g.grad(v);
            g.ensure_grad(gains);
            Tensor& gg = g.node(gains).grad;
            const double inv = 1.0 / (static_cast<double>(H) * W);
            for (int nn = 0; nn < N; ++nn) {
                Tensor gspat({H, W});
                for (size_t i = 0; i < gspat.size(); ++i)
                    gspat[i] = gy[static_cast<size_t>(nn) * H * W + i];
                Tensor gre, gim;
                fft2(gspat, gre, gim);
                const auto& [xre, xim] = (*spectra)[static_cast<size_t>(nn)];
                // dL/dG = Re(X conj(DFT(grad_y))) / (H W)
                for (size_t i = 0; i < gre.size(); ++i)
                    gg[static_cast<size_t>(nn) * H * W + i] +=
                        inv * (xre[i] * gre[i] + xim[i] * gim[i]);
            }
        };
    return v;
}

Var Graph::lowpass_gains(Var params, int height, int width) {
    const Tensor& tp = value(params);
    if (tp.rank() != 2 || tp.dim(1) != 2) throw ShapeError("lowpass_gains: params must be (N,2)");
    const int N = tp.dim(0);
    Tensor out({N, height, width});
    const size_t hw = static_cast<size_t>(height) * width;
    for (int nn = 0; nn < N; ++nn) {
        FilterParams fp{tp.at(nn, 0), tp.at(nn, 1)};
        Tensor m = build_mask(height, width, fp);
        for (size_t i = 0; i < hw; ++i) out[static_cast<size_t>(nn) * hw + i] = m[i];
    }
    bool ng = node(params).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, params, N, height, width, hw](Graph& g) {
            const Tensor& gy = g.grad(v);
            const Tensor& tp = g.value(params);
            g.ensure_grad(params);
            Tensor& gp = g.node(params).grad;
            for (int nn = 0; nn < N; ++nn) {
                FilterParams fp{tp.at(nn, 0), tp.at(nn, 1)};
                auto [dc, df] = build_mask_grad(height, width, fp);
                double acc_c = 0.0, acc_f = 0.0;
                for (size_t i = 0; i < hw; ++i) {
                    double gv = gy[static_cast<size_t>(nn) * hw + i];
                    acc_c += gv * dc[i];
                    acc_f += gv * df[i];
                }
                gp.at(nn, 0) += acc_c;
                gp.at(nn, 1) += acc_f;
            }
        };
    return v;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var Graph::mse(Var pred, Var target) {
    const Tensor& tp = value(pred);
    const Tensor& tt = value(target);
    if (!tp.same_shape(tt)) throw ShapeError("mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < tp.size(); ++i) {
        double d = tp[i] - tt[i];
        acc += d * d;
    }
    const double invn = 1.0 / static_cast<double>(tp.size());
    Tensor out({1});
    out[0] = acc * invn;
    bool ng = node(pred).needs_grad || node(target).needs_grad;
    Var v = make_node(std::move(out), ng, {});
    if (ng)
        node(v).backward = [v, pred, target, invn](Graph& g) {
            const double gy = g.grad(v)[0];
            const Tensor& tp = g.value(pred);
            const Tensor& tt = g.value(target);
            if (g.node(pred).needs_grad) {
                g.ensure_grad(pred);
                Tensor& gp = g.node(pred).grad;
                for (size_t i = 0; i < tp.size(); ++i)
                    gp[i] += gy * 2.0 * invn * (tp[i] - tt[i]);
            }
            if (g.node(target).needs_grad) {
                g.ensure_grad(target);
                Tensor& gt = g.node(target).grad;
                for (size_t i = 0; i < tp.size(); ++i)
                    gt[i] -= gy * 2.0 * invn * (tp[i] - tt[i]);
            }
        };
    return v;
}

Var Graph::sum_scaled(const std::vector<Var>& xs, const std::vector<double>& weights) {
    if (xs.empty() || xs.size() != weights.size())
        throw ShapeError("sum_scaled: inputs and weights must pair up");
    double acc = 0.0;
    bool ng = false;
    for (size_t i = 0; i < xs.size(); ++i) {
        const Tensor& t = value(xs[i]);
        if (t.size() != 1) throw ShapeError("sum_scaled: expects scalar terms");
        acc += weights[i] * t[0];
        ng = ng || node(xs[i]).needs_grad;
    }
    Tensor out({1});
    out[0] = acc;
    Var v = make_node(std::move(out), ng, {});
    if (ng) {
        std::vector<Var> sources = xs;
        std::vector<double> ws = weights;
        node(v).backward = [v, sources, ws](Graph& g) {
            const double gy = g.grad(v)[0];
            for (size_t i = 0; i < sources.size(); ++i) {
                if (!g.node(sources[i]).needs_grad) continue;
                g.ensure_grad(sources[i]);
                g.node(sources[i]).grad[0] += gy * ws[i];
            }
        };
    }
    return v;
}

}  // namespace pairdiff
