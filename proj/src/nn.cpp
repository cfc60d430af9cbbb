#include "dsn/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <unordered_set>

#include "dsn/common.hpp"

namespace dsn::nn {

namespace {

bool g_grad_enabled = true;

void ensure_grad(Node& n) {
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape());
}

bool any_requires(const std::vector<Var>& vars) {
    for (const auto& v : vars)
        if (v->requires_grad) return true;
    return false;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled() && any_requires(parents)) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
        n->requires_grad = true;
    }
    return n;
}

// Window of adaptive pooling cell i out of `out` over `in` elements:
// [floor(i*in/out), ceil((i+1)*in/out)). Windows tile the input and may
// overlap when `out` does not divide `in`.
inline int win_begin(int i, int in, int out) {
    return static_cast<int>((static_cast<std::int64_t>(i) * in) / out);
}
inline int win_end(int i, int in, int out) {
    return static_cast<int>((static_cast<std::int64_t>(i + 1) * in + out - 1) / out);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var leaf(ParamTensor& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    if (grad_enabled() && p.trainable) {
        n->param = &p;
        n->requires_grad = true;
        n->backward_fn = [](Node& self) {
            ensure_grad(self);
            auto& g = self.param->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        };
    }
    return n;
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    assert(x->value.ndim() == 3 && w->value.ndim() == 4);
    const int in_c = x->value.dim(0), in_h = x->value.dim(1), in_w = x->value.dim(2);
    const int out_c = w->value.dim(0), k_h = w->value.dim(2), k_w = w->value.dim(3);
    assert(w->value.dim(1) == in_c);
    const int out_h = (in_h + 2 * pad - k_h) / stride + 1;
    const int out_w = (in_w + 2 * pad - k_w) / stride + 1;
    if (out_h < 1 || out_w < 1) raise(Errc::ImageTooSmall, "conv input smaller than kernel footprint");

    Tensor y({out_c, out_h, out_w});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    double* yd = y.data();
    for (int oc = 0; oc < out_c; ++oc) {
        const double bias = b ? b->value[oc] : 0.0;
        double* yplane = yd + static_cast<std::int64_t>(oc) * out_h * out_w;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_h) * out_w; ++i) yplane[i] = bias;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xplane = xd + static_cast<std::int64_t>(ic) * in_h * in_w;
            const double* wk = wd + ((static_cast<std::int64_t>(oc) * in_c + ic) * k_h) * k_w;
            for (int kh = 0; kh < k_h; ++kh) {
                for (int kw = 0; kw < k_w; ++kw) {
                    const double wv = wk[kh * k_w + kw];
                    if (wv == 0.0) continue;
                    for (int oh = 0; oh < out_h; ++oh) {
                        const int ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= in_h) continue;
                        const double* xrow = xplane + static_cast<std::int64_t>(ih) * in_w;
                        double* yrow = yplane + static_cast<std::int64_t>(oh) * out_w;
                        for (int ow = 0; ow < out_w; ++ow) {
                            const int iw = ow * stride + kw - pad;
                            if (iw < 0 || iw >= in_w) continue;
                            yrow[ow] += wv * xrow[iw];
                        }
                    }
                }
            }
        }
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(y), std::move(parents),
                     [in_c, in_h, in_w, out_c, out_h, out_w, k_h, k_w, stride, pad](Node& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        Node* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const bool need_dx = xn.requires_grad;
        if (need_dx) ensure_grad(xn);
        if (wn.requires_grad) ensure_grad(wn);
        if (bn && bn->requires_grad) ensure_grad(*bn);

        const double* gd = self.grad.data();
        const double* xd = xn.value.data();
        const double* wd = wn.value.data();
        for (int oc = 0; oc < out_c; ++oc) {
            const double* gplane = gd + static_cast<std::int64_t>(oc) * out_h * out_w;
            if (bn && bn->requires_grad) {
                double s = 0.0;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_h) * out_w; ++i) s += gplane[i];
                bn->grad[oc] += s;
            }
            for (int ic = 0; ic < in_c; ++ic) {
                const double* xplane = xd + static_cast<std::int64_t>(ic) * in_h * in_w;
                double* dxplane = need_dx ? xn.grad.data() + static_cast<std::int64_t>(ic) * in_h * in_w : nullptr;
                const std::int64_t wbase = ((static_cast<std::int64_t>(oc) * in_c + ic) * k_h) * k_w;
                for (int kh = 0; kh < k_h; ++kh) {
                    for (int kw = 0; kw < k_w; ++kw) {
                        const double wv = wd[wbase + kh * k_w + kw];
                        double dw = 0.0;
                        for (int oh = 0; oh < out_h; ++oh) {
                            const int ih = oh * stride + kh - pad;
                            if (ih < 0 || ih >= in_h) continue;
                            const double* xrow = xplane + static_cast<std::int64_t>(ih) * in_w;
                            double* dxrow = need_dx ? dxplane + static_cast<std::int64_t>(ih) * in_w : nullptr;
                            const double* grow = gplane + static_cast<std::int64_t>(oh) * out_w;
                            for (int ow = 0; ow < out_w; ++ow) {
                                const int iw = ow * stride + kw - pad;
                                if (iw < 0 || iw >= in_w) continue;
                                const double g = grow[ow];
                                dw += g * xrow[iw];
                                if (need_dx) dxrow[iw] += g * wv;
                            }
                        }
                        if (wn.requires_grad) wn.grad[wbase + kh * k_w + kw] += dw;
                    }
                }
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    assert(x->value.ndim() == 1 && w->value.ndim() == 2);
    const int in_d = x->value.dim(0);
    const int out_d = w->value.dim(0);
    if (w->value.dim(1) != in_d) raise(Errc::DimMismatch, "linear weight/input width");

    Tensor y({out_d});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    for (int o = 0; o < out_d; ++o) {
        double s = b ? b->value[o] : 0.0;
        const double* wr = wd + static_cast<std::int64_t>(o) * in_d;
        for (int i = 0; i < in_d; ++i) s += wr[i] * xd[i];
        y[o] = s;
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(y), std::move(parents), [in_d, out_d](Node& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        Node* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        if (xn.requires_grad) ensure_grad(xn);
        if (wn.requires_grad) ensure_grad(wn);
        if (bn && bn->requires_grad) ensure_grad(*bn);
        const double* gd = self.grad.data();
        const double* xd = xn.value.data();
        const double* wd = wn.value.data();
        for (int o = 0; o < out_d; ++o) {
            const double g = gd[o];
            if (g == 0.0) continue;
            if (bn && bn->requires_grad) bn->grad[o] += g;
            const std::int64_t base = static_cast<std::int64_t>(o) * in_d;
            if (wn.requires_grad)
                for (int i = 0; i < in_d; ++i) wn.grad[base + i] += g * xd[i];
            if (xn.requires_grad)
                for (int i = 0; i < in_d; ++i) xn.grad[i] += g * wd[base + i];
        }
    });
}

Var relu(const Var& x) {
    Tensor y(x->value.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    return make_node(std::move(y), {x}, [](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            if (xn.value[i] > 0.0) xn.grad[i] += self.grad[i];
    });
}

Var add(const Var& a, const Var& b) {
    assert(a->value.same_shape(b->value));
    Tensor y(a->value.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] + b->value[i];
    return make_node(std::move(y), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            ensure_grad(*p);
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) raise(Errc::DimMismatch, "elementwise product shapes differ");
    Tensor y(a->value.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] * b->value[i];
    return make_node(std::move(y), {a, b}, [](Node& self) {
        auto& an = *self.parents[0];
        auto& bn = *self.parents[1];
        if (an.requires_grad) {
            ensure_grad(an);
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) an.grad[i] += self.grad[i] * bn.value[i];
        }
        if (bn.requires_grad) {
            ensure_grad(bn);
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) bn.grad[i] += self.grad[i] * an.value[i];
        }
    });
}

Var scale(const Var& x, double k) {
    Tensor y(x->value.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = k * x->value[i];
    return make_node(std::move(y), {x}, [k](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) xn.grad[i] += k * self.grad[i];
    });
}

Var concat(const std::vector<Var>& parts) {
    std::int64_t total = 0;
    for (const auto& p : parts) total += p->value.numel();
    Tensor y({static_cast<int>(total)});
    std::int64_t off = 0;
    for (const auto& p : parts) {
        for (std::int64_t i = 0; i < p->value.numel(); ++i) y[off + i] = p->value[i];
        off += p->value.numel();
    }
    return make_node(std::move(y), parts, [](Node& self) {
        std::int64_t off = 0;
        for (auto& p : self.parents) {
            if (p->requires_grad) {
                ensure_grad(*p);
                for (std::int64_t i = 0; i < p->value.numel(); ++i) p->grad[i] += self.grad[off + i];
            }
            off += p->value.numel();
        }
    });
}

Var flatten(const Var& x) {
    Tensor y({static_cast<int>(x->value.numel())}, x->value.vec());
    return make_node(std::move(y), {x}, [](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) xn.grad[i] += self.grad[i];
    });
}

Tensor adaptive_pool(const Tensor& chw, int out_h, int out_w, PoolMode mode) {
    if (chw.ndim() != 3) raise(Errc::DimMismatch, "adaptive_pool expects a CxHxW array");
    const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    if (out_h < 1 || out_w < 1) raise(Errc::InvalidConfig, "pool target must be positive");
    if (out_h > h || out_w > w)
        raise(Errc::TargetLargerThanInput, "pool target exceeds input spatial size");
    Tensor y({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < out_h; ++i) {
            const int hs = win_begin(i, h, out_h), he = win_end(i, h, out_h);
            for (int j = 0; j < out_w; ++j) {
                const int ws = win_begin(j, w, out_w), we = win_end(j, w, out_w);
                if (mode == PoolMode::Average) {
                    double s = 0.0;
                    for (int hh = hs; hh < he; ++hh)
                        for (int ww = ws; ww < we; ++ww) s += chw.at(ch, hh, ww);
                    y.at(ch, i, j) = s / (static_cast<double>(he - hs) * (we - ws));
                } else {
                    double m = chw.at(ch, hs, ws);
                    for (int hh = hs; hh < he; ++hh)
                        for (int ww = ws; ww < we; ++ww) m = std::max(m, chw.at(ch, hh, ww));
                    y.at(ch, i, j) = m;
                }
            }
        }
    }
    return y;
}

Var adaptive_pool2d(const Var& x, int out_h, int out_w, PoolMode mode) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor y = adaptive_pool(x->value, out_h, out_w, mode);

    std::vector<std::int64_t> argmax;
    if (mode == PoolMode::Max && grad_enabled() && x->requires_grad) {
        argmax.resize(static_cast<std::size_t>(y.numel()));
        std::int64_t o = 0;
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < out_h; ++i) {
                const int hs = win_begin(i, h, out_h), he = win_end(i, h, out_h);
                for (int j = 0; j < out_w; ++j) {
                    const int ws = win_begin(j, w, out_w), we = win_end(j, w, out_w);
                    std::int64_t best = (static_cast<std::int64_t>(ch) * h + hs) * w + ws;
                    double m = x->value[best];
                    for (int hh = hs; hh < he; ++hh) {
                        for (int ww = ws; ww < we; ++ww) {
                            const std::int64_t idx = (static_cast<std::int64_t>(ch) * h + hh) * w + ww;
                            if (x->value[idx] > m) {
                                m = x->value[idx];
                                best = idx;
                            }
                        }
                    }
                    argmax[static_cast<std::size_t>(o++)] = best;
                }
            }
        }
    }

    return make_node(std::move(y), {x}, [c, h, w, out_h, out_w, mode, argmax = std::move(argmax)](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        if (mode == PoolMode::Max) {
            for (std::int64_t o = 0; o < self.grad.numel(); ++o) xn.grad[argmax[static_cast<std::size_t>(o)]] += self.grad[o];
            return;
        }
        std::int64_t o = 0;
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < out_h; ++i) {
                const int hs = win_begin(i, h, out_h), he = win_end(i, h, out_h);
                for (int j = 0; j < out_w; ++j, ++o) {
                    const int ws = win_begin(j, w, out_w), we = win_end(j, w, out_w);
                    const double g = self.grad[o] / (static_cast<double>(he - hs) * (we - ws));
                    for (int hh = hs; hh < he; ++hh)
                        for (int ww = ws; ww < we; ++ww)
                            xn.grad[(static_cast<std::int64_t>(ch) * h + hh) * w + ww] += g;
                }
            }
        }
    });
}

Var max_pool2d(const Var& x, int kernel, int stride, int pad) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int out_h = (h + 2 * pad - kernel) / stride + 1;
    const int out_w = (w + 2 * pad - kernel) / stride + 1;
    if (out_h < 1 || out_w < 1) raise(Errc::ImageTooSmall, "max_pool input too small");

    Tensor y({c, out_h, out_w});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(y.numel()));
    std::int64_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < out_h; ++i) {
            for (int j = 0; j < out_w; ++j, ++o) {
                double m = -1e308;
                std::int64_t best = -1;
                for (int kh = 0; kh < kernel; ++kh) {
                    const int ih = i * stride + kh - pad;
                    if (ih < 0 || ih >= h) continue;
                    for (int kw = 0; kw < kernel; ++kw) {
                        const int iw = j * stride + kw - pad;
                        if (iw < 0 || iw >= w) continue;
                        const std::int64_t idx = (static_cast<std::int64_t>(ch) * h + ih) * w + iw;
                        if (x->value[idx] > m) {
                            m = x->value[idx];
                            best = idx;
                        }
                    }
                }
                y[o] = m;
                argmax[static_cast<std::size_t>(o)] = best;
            }
        }
    }
    return make_node(std::move(y), {x}, [argmax = std::move(argmax)](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            if (argmax[static_cast<std::size_t>(i)] >= 0) xn.grad[argmax[static_cast<std::size_t>(i)]] += self.grad[i];
    });
}

Var softmax_channels(const Var& x) {
    const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor y(x->value.shape());
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (std::int64_t px = 0; px < plane; ++px) {
        double m = x->value[px];
        for (int ch = 1; ch < n; ++ch) m = std::max(m, x->value[ch * plane + px]);
        double sum = 0.0;
        for (int ch = 0; ch < n; ++ch) {
            const double e = std::exp(x->value[ch * plane + px] - m);
            y[ch * plane + px] = e;
            sum += e;
        }
        for (int ch = 0; ch < n; ++ch) y[ch * plane + px] /= sum;
    }
    return make_node(std::move(y), {x}, [n, plane](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        for (std::int64_t px = 0; px < plane; ++px) {
            double dot = 0.0;
            for (int ch = 0; ch < n; ++ch) dot += self.grad[ch * plane + px] * self.value[ch * plane + px];
            for (int ch = 0; ch < n; ++ch) {
                const double yv = self.value[ch * plane + px];
                xn.grad[ch * plane + px] += yv * (self.grad[ch * plane + px] - dot);
            }
        }
    });
}

Var batchnorm_affine(const Var& x, const Var& gamma, const Var& beta,
                     const Tensor& running_mean, const Tensor& running_var, double eps) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor y(x->value.shape());
    std::vector<double> inv_sd(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) inv_sd[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(running_var[ch] + eps);
    for (int ch = 0; ch < c; ++ch) {
        const double s = gamma->value[ch] * inv_sd[static_cast<std::size_t>(ch)];
        const double t = beta->value[ch] - running_mean[ch] * s;
        for (std::int64_t i = 0; i < plane; ++i) y[ch * plane + i] = x->value[ch * plane + i] * s + t;
    }
    return make_node(std::move(y), {x, gamma, beta},
                     [c, plane, running_mean, inv_sd = std::move(inv_sd)](Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        if (xn.requires_grad) ensure_grad(xn);
        if (gn.requires_grad) ensure_grad(gn);
        if (bn.requires_grad) ensure_grad(bn);
        for (int ch = 0; ch < c; ++ch) {
            const double isd = inv_sd[static_cast<std::size_t>(ch)];
            const double s = gn.value[ch] * isd;
            double dg = 0.0, db = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) {
                const double g = self.grad[ch * plane + i];
                db += g;
                dg += g * (xn.value[ch * plane + i] - running_mean[ch]) * isd;
                if (xn.requires_grad) xn.grad[ch * plane + i] += g * s;
            }
            if (gn.requires_grad) gn.grad[ch] += dg;
            if (bn.requires_grad) bn.grad[ch] += db;
        }
    });
}

Var abs_diff(const Var& pred, double target) {
    assert(pred->value.numel() == 1);
    Tensor y({1});
    y[0] = std::fabs(pred->value[0] - target);
    return make_node(std::move(y), {pred}, [target](Node& self) {
        auto& pn = *self.parents[0];
        ensure_grad(pn);
        const double d = pn.value[0] - target;
        const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        pn.grad[0] += self.grad[0] * sgn;
    });
}

Var total_variation(const Var& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    double sum = 0.0;
    std::int64_t terms = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                if (i + 1 < h) {
                    sum += std::fabs(x->value.at(ch, i + 1, j) - x->value.at(ch, i, j));
                    ++terms;
                }
                if (j + 1 < w) {
                    sum += std::fabs(x->value.at(ch, i, j + 1) - x->value.at(ch, i, j));
                    ++terms;
                }
            }
        }
    }
    Tensor y({1});
    y[0] = terms > 0 ? sum / static_cast<double>(terms) : 0.0;
    return make_node(std::move(y), {x}, [c, h, w, terms](Node& self) {
        if (terms == 0) return;
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        const double g = self.grad[0] / static_cast<double>(terms);
        auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    if (i + 1 < h) {
                        const double s = sgn(xn.value.at(ch, i + 1, j) - xn.value.at(ch, i, j));
                        xn.grad.at(ch, i + 1, j) += g * s;
                        xn.grad.at(ch, i, j) -= g * s;
                    }
                    if (j + 1 < w) {
                        const double s = sgn(xn.value.at(ch, i, j + 1) - xn.value.at(ch, i, j));
                        xn.grad.at(ch, i, j + 1) += g * s;
                        xn.grad.at(ch, i, j) -= g * s;
                    }
                }
            }
        }
    });
}

Var pick(const Var& x, std::int64_t index) {
    assert(index >= 0 && index < x->value.numel());
    Tensor y({1});
    y[0] = x->value[index];
    return make_node(std::move(y), {x}, [index](Node& self) {
        auto& xn = *self.parents[0];
        ensure_grad(xn);
        xn.grad[index] += self.grad[0];
    });
}

void backward(const Var& root, double seed_grad) {
    assert(root->value.numel() == 1);
    if (!root->requires_grad) return;

    // Iterative post-order over the tape.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    ensure_grad(*root);
    root->grad[0] += seed_grad;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

void zero_grads(const std::vector<ParamTensor*>& params) {
    for (auto* p : params) p->grad.fill(0.0);
}

void init_kaiming(ParamTensor& weight, int fan_in, Rng& rng, double gain) {
    const double sd = std::sqrt(gain / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < weight.value.numel(); ++i) weight.value[i] = rng.normal(0.0, sd);
}

}  // namespace dsn::nn
