#include "lesionseg/net.hpp"

#include <algorithm>
#include <cmath>

#include "lesionseg/error.hpp"

namespace lesionseg {

bool is_learnable(const std::string& name) {
    return !name.ends_with(".running_mean") && !name.ends_with(".running_var");
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

// Output index range [lo, hi) for which o*stride - pad + k lands inside
// [0, in_size).
inline void conv_span(int k, int stride, int pad, int in_size, int out_size, int& lo, int& hi) {
    int num = pad - k;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    num = in_size - 1 + pad - k;
    hi = num < 0 ? 0 : std::min(out_size, num / stride + 1);
    lo = std::min(lo, hi);
}

void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor* b) {
    if (x.rank != 4 || w.rank != 4) throw Error("conv2d expects rank-4 input and weights");
    if (w.shape[1] != x.c())
        throw Error("conv2d channel mismatch: input c=" + std::to_string(x.c()) + ", weight in_c=" +
                    std::to_string(w.shape[1]));
    if (b && static_cast<int>(b->size()) != w.shape[0])
        throw Error("conv2d bias length " + std::to_string(b->size()) + " != out channels " +
                    std::to_string(w.shape[0]));
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_conv_shapes(x, w, &b);
    const int n = x.n(), in_c = x.c(), h = x.h(), wd = x.w();
    const int out_c = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) throw Error("conv2d output would be empty");

    Tensor y(n, out_c, oh, ow);
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < out_c; ++oc) {
            float* yp = &y.at(in, oc, 0, 0);
            std::fill(yp, yp + static_cast<std::size_t>(oh) * ow, b.data[oc]);
            for (int ic = 0; ic < in_c; ++ic) {
                const float* xp = &x.at(in, ic, 0, 0);
                for (int ky = 0; ky < kh; ++ky) {
                    int oy_lo, oy_hi;
                    conv_span(ky, stride, pad, h, oh, oy_lo, oy_hi);
                    for (int kx = 0; kx < kw; ++kx) {
                        const float wv = w.at(oc, ic, ky, kx);
                        if (wv == 0.0f) continue;
                        int ox_lo, ox_hi;
                        conv_span(kx, stride, pad, wd, ow, ox_lo, ox_hi);
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const float* xrow = xp + static_cast<std::size_t>(oy * stride - pad + ky) * wd;
                            float* yrow = yp + static_cast<std::size_t>(oy) * ow;
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                yrow[ox] += wv * xrow[ox * stride - pad + kx];
                        }
                    }
                }
            }
        }
    }
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dy) {
    check_conv_shapes(x, w, nullptr);
    const int n = x.n(), in_c = x.c(), h = x.h(), wd = x.w();
    const int out_c = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int oh = dy.h(), ow = dy.w();

    ConvGrads g;
    g.dx = Tensor(n, in_c, h, wd);
    g.dw = Tensor(out_c, in_c, kh, kw);
    g.dw.rank = 4;
    g.db = Tensor::vec(out_c);

    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < out_c; ++oc) {
            const float* dyp = &dy.at(in, oc, 0, 0);
            float db_acc = 0.0f;
            for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) db_acc += dyp[i];
            g.db.data[oc] += db_acc;
            for (int ic = 0; ic < in_c; ++ic) {
                const float* xp = &x.at(in, ic, 0, 0);
                float* dxp = &g.dx.at(in, ic, 0, 0);
                for (int ky = 0; ky < kh; ++ky) {
                    int oy_lo, oy_hi;
                    conv_span(ky, stride, pad, h, oh, oy_lo, oy_hi);
                    for (int kx = 0; kx < kw; ++kx) {
                        int ox_lo, ox_hi;
                        conv_span(kx, stride, pad, wd, ow, ox_lo, ox_hi);
                        const float wv = w.at(oc, ic, ky, kx);
                        float dw_acc = 0.0f;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const std::size_t in_row = static_cast<std::size_t>(oy * stride - pad + ky) * wd;
                            const float* xrow = xp + in_row;
                            float* dxrow = dxp + in_row;
                            const float* dyrow = dyp + static_cast<std::size_t>(oy) * ow;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                dw_acc += dyrow[ox] * xrow[ix];
                                dxrow[ix] += dyrow[ox] * wv;
                            }
                        }
                        g.dw.at(oc, ic, ky, kx) += dw_acc;
                    }
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// pooling / upsampling
// ---------------------------------------------------------------------------

PoolResult maxpool2(const Tensor& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw Error("maxpool2 requires even spatial dims, got " + x.shape_str());
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    const int oh = h / 2, ow = w / 2;
    PoolResult r;
    r.y = Tensor(n, c, oh, ow);
    r.argmax.resize(static_cast<std::size_t>(n) * c * oh * ow);
    std::size_t out_i = 0;
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const float* xp = &x.at(in, ic, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    int best = (2 * oy) * w + 2 * ox;
                    float best_v = xp[best];
                    const int cand[3] = {best + 1, best + w, best + w + 1};
                    for (int k = 0; k < 3; ++k) {
                        if (xp[cand[k]] > best_v) { // strict: first wins ties
                            best_v = xp[cand[k]];
                            best = cand[k];
                        }
                    }
                    r.y.data[out_i] = best_v;
                    r.argmax[out_i] = best;
                    ++out_i;
                }
            }
        }
    }
    return r;
}

Tensor maxpool2_backward(const Tensor& dy, const std::vector<int>& argmax, int in_h, int in_w) {
    const int n = dy.n(), c = dy.c(), oh = dy.h(), ow = dy.w();
    Tensor dx(n, c, in_h, in_w);
    std::size_t out_i = 0;
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            float* dxp = &dx.at(in, ic, 0, 0);
            for (int i = 0; i < oh * ow; ++i, ++out_i) dxp[argmax[out_i]] += dy.data[out_i];
        }
    }
    return dx;
}

Tensor upsample_nearest2(const Tensor& x) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    Tensor y(n, c, 2 * h, 2 * w);
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const float* xp = &x.at(in, ic, 0, 0);
            float* yp = &y.at(in, ic, 0, 0);
            for (int iy = 0; iy < h; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    const float v = xp[static_cast<std::size_t>(iy) * w + ix];
                    float* row0 = yp + static_cast<std::size_t>(2 * iy) * 2 * w + 2 * ix;
                    row0[0] = v;
                    row0[1] = v;
                    row0[2 * w] = v;
                    row0[2 * w + 1] = v;
                }
            }
        }
    }
    return y;
}

Tensor upsample_nearest2_backward(const Tensor& dy) {
    if (dy.h() % 2 != 0 || dy.w() % 2 != 0)
        throw Error("upsample_nearest2_backward expects even dims, got " + dy.shape_str());
    const int n = dy.n(), c = dy.c(), oh = dy.h(), ow = dy.w();
    const int h = oh / 2, w = ow / 2;
    Tensor dx(n, c, h, w);
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const float* dyp = &dy.at(in, ic, 0, 0);
            float* dxp = &dx.at(in, ic, 0, 0);
            for (int iy = 0; iy < h; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    const float* row0 = dyp + static_cast<std::size_t>(2 * iy) * ow + 2 * ix;
                    dxp[static_cast<std::size_t>(iy) * w + ix] =
                        row0[0] + row0[1] + row0[ow] + row0[ow + 1];
                }
            }
        }
    }
    return dx;
}

namespace {

// Half-pixel-center 2x taps: out o samples src at (o + 0.5)/2 - 0.5, clamped.
struct BilinearTaps {
    std::vector<int> i0, i1;
    std::vector<float> frac;
    explicit BilinearTaps(int in_size) {
        const int out_size = 2 * in_size;
        i0.resize(static_cast<std::size_t>(out_size));
        i1.resize(static_cast<std::size_t>(out_size));
        frac.resize(static_cast<std::size_t>(out_size));
        for (int o = 0; o < out_size; ++o) {
            const double s = std::clamp((o + 0.5) * 0.5 - 0.5, 0.0, static_cast<double>(in_size - 1));
            const int lo = static_cast<int>(s);
            i0[static_cast<std::size_t>(o)] = lo;
            i1[static_cast<std::size_t>(o)] = std::min(lo + 1, in_size - 1);
            frac[static_cast<std::size_t>(o)] = static_cast<float>(s - lo);
        }
    }
};

} // namespace

Tensor upsample_bilinear2(const Tensor& x) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    const BilinearTaps ty(h), tx(w);
    Tensor y(n, c, 2 * h, 2 * w);
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const float* xp = &x.at(in, ic, 0, 0);
            float* yp = &y.at(in, ic, 0, 0);
            for (int oy = 0; oy < 2 * h; ++oy) {
                const float* r0 = xp + static_cast<std::size_t>(ty.i0[oy]) * w;
                const float* r1 = xp + static_cast<std::size_t>(ty.i1[oy]) * w;
                const float fy = ty.frac[oy];
                float* yrow = yp + static_cast<std::size_t>(oy) * 2 * w;
                for (int ox = 0; ox < 2 * w; ++ox) {
                    const float fx = tx.frac[ox];
                    const float top = r0[tx.i0[ox]] + fx * (r0[tx.i1[ox]] - r0[tx.i0[ox]]);
                    const float bot = r1[tx.i0[ox]] + fx * (r1[tx.i1[ox]] - r1[tx.i0[ox]]);
                    yrow[ox] = top + fy * (bot - top);
                }
            }
        }
    }
    return y;
}

Tensor upsample_bilinear2_backward(const Tensor& dy, int in_h, int in_w) {
    const int n = dy.n(), c = dy.c();
    if (dy.h() != 2 * in_h || dy.w() != 2 * in_w)
        throw Error("upsample_bilinear2_backward shape mismatch");
    const BilinearTaps ty(in_h), tx(in_w);
    Tensor dx(n, c, in_h, in_w);
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const float* dyp = &dy.at(in, ic, 0, 0);
            float* dxp = &dx.at(in, ic, 0, 0);
            for (int oy = 0; oy < 2 * in_h; ++oy) {
                const float fy = ty.frac[oy];
                float* r0 = dxp + static_cast<std::size_t>(ty.i0[oy]) * in_w;
                float* r1 = dxp + static_cast<std::size_t>(ty.i1[oy]) * in_w;
                const float* dyrow = dyp + static_cast<std::size_t>(oy) * 2 * in_w;
                for (int ox = 0; ox < 2 * in_w; ++ox) {
                    const float fx = tx.frac[ox];
                    const float g = dyrow[ox];
                    r0[tx.i0[ox]] += g * (1.0f - fy) * (1.0f - fx);
                    r0[tx.i1[ox]] += g * (1.0f - fy) * fx;
                    r1[tx.i0[ox]] += g * fy * (1.0f - fx);
                    r1[tx.i1[ox]] += g * fy * fx;
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// batch norm / activations
// ---------------------------------------------------------------------------

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, NetMode mode, float eps, float momentum, BnCache* cache) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    const int m = n * h * w;
    if (static_cast<int>(gamma.size()) != c)
        throw Error("batchnorm2d gamma length != channels");
    if (mode == NetMode::train && m < 2)
        throw Error("batchnorm2d train mode needs n*h*w >= 2 per channel, got " + std::to_string(m));

    Tensor y(n, c, h, w);
    if (cache) {
        cache->xhat = Tensor(n, c, h, w);
        cache->invstd.assign(static_cast<std::size_t>(c), 0.0f);
    }

    for (int ic = 0; ic < c; ++ic) {
        float mean, var;
        if (mode == NetMode::train) {
            float sum = 0.0f;
            for (int in = 0; in < n; ++in) {
                const float* xp = &x.at(in, ic, 0, 0);
                for (int i = 0; i < h * w; ++i) sum += xp[i];
            }
            mean = sum / static_cast<float>(m);
            float sq = 0.0f;
            for (int in = 0; in < n; ++in) {
                const float* xp = &x.at(in, ic, 0, 0);
                for (int i = 0; i < h * w; ++i) {
                    const float d = xp[i] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<float>(m);
            running_mean.data[ic] = (1.0f - momentum) * running_mean.data[ic] + momentum * mean;
            running_var.data[ic] = (1.0f - momentum) * running_var.data[ic] + momentum * var;
        } else {
            mean = running_mean.data[ic];
            var = running_var.data[ic];
        }
        const float invstd = 1.0f / std::sqrt(var + eps);
        if (cache) cache->invstd[ic] = invstd;
        const float g = gamma.data[ic], bt = beta.data[ic];
        for (int in = 0; in < n; ++in) {
            const float* xp = &x.at(in, ic, 0, 0);
            float* yp = &y.at(in, ic, 0, 0);
            float* xh = cache ? &cache->xhat.at(in, ic, 0, 0) : nullptr;
            for (int i = 0; i < h * w; ++i) {
                const float xhat = (xp[i] - mean) * invstd;
                if (xh) xh[i] = xhat;
                yp[i] = g * xhat + bt;
            }
        }
    }
    return y;
}

BnGrads batchnorm2d_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dy) {
    const int n = dy.n(), c = dy.c(), h = dy.h(), w = dy.w();
    const float m = static_cast<float>(n * h * w);
    BnGrads g;
    g.dx = Tensor(n, c, h, w);
    g.dgamma = Tensor::vec(c);
    g.dbeta = Tensor::vec(c);
    for (int ic = 0; ic < c; ++ic) {
        float sum_dy = 0.0f, sum_dy_xhat = 0.0f;
        for (int in = 0; in < n; ++in) {
            const float* dyp = &dy.at(in, ic, 0, 0);
            const float* xh = &cache.xhat.at(in, ic, 0, 0);
            for (int i = 0; i < h * w; ++i) {
                sum_dy += dyp[i];
                sum_dy_xhat += dyp[i] * xh[i];
            }
        }
        g.dbeta.data[ic] = sum_dy;
        g.dgamma.data[ic] = sum_dy_xhat;
        const float scale = gamma.data[ic] * cache.invstd[ic];
        const float mean_dy = sum_dy / m;
        const float mean_dy_xhat = sum_dy_xhat / m;
        for (int in = 0; in < n; ++in) {
            const float* dyp = &dy.at(in, ic, 0, 0);
            const float* xh = &cache.xhat.at(in, ic, 0, 0);
            float* dxp = &g.dx.at(in, ic, 0, 0);
            for (int i = 0; i < h * w; ++i)
                dxp[i] = scale * (dyp[i] - mean_dy - xh[i] * mean_dy_xhat);
        }
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (x.data[i] <= 0.0f) dx.data[i] = 0.0f;
    return dx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= y.data[i] * (1.0f - y.data[i]);
    return dx;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw Error("concat_channels needs at least one tensor");
    const int n = parts[0]->n(), h = parts[0]->h(), w = parts[0]->w();
    int c = 0;
    for (const Tensor* t : parts) {
        if (t->n() != n || t->h() != h || t->w() != w)
            throw Error("concat_channels shape mismatch: " + parts[0]->shape_str() + " vs " + t->shape_str());
        c += t->c();
    }
    Tensor y(n, c, h, w);
    for (int in = 0; in < n; ++in) {
        int oc = 0;
        for (const Tensor* t : parts) {
            for (int ic = 0; ic < t->c(); ++ic, ++oc) {
                const float* src = &t->at(in, ic, 0, 0);
                std::copy(src, src + static_cast<std::size_t>(h) * w, &y.at(in, oc, 0, 0));
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

namespace {

// Per-stage channel widths: encoder stage i maps F*2^(i-1) -> F*2^i.
int stage_channels(int base_filters, int i) { return base_filters << i; }

struct CbrSpec {
    std::string prefix;
    int in_c, out_c, k, stride, pad;
};

std::vector<CbrSpec> cbr_specs(const UNetConfig& cfg) {
    std::vector<CbrSpec> specs;
    const int f = cfg.base_filters;
    specs.push_back({"stem", 3, f, 7, 2, 3});
    for (int i = 1; i <= cfg.depth; ++i) {
        const std::string s = "enc" + std::to_string(i);
        specs.push_back({s + ".1", stage_channels(f, i - 1), stage_channels(f, i), 3, 1, 1});
        specs.push_back({s + ".2", stage_channels(f, i), stage_channels(f, i), 3, 1, 1});
    }
    const int bc = stage_channels(f, cfg.depth);
    specs.push_back({"bottleneck.1", bc, bc, 3, 1, 1});
    specs.push_back({"bottleneck.2", bc, bc, 3, 1, 1});
    for (int i = cfg.depth; i >= 1; --i) {
        const std::string s = "dec" + std::to_string(i);
        const int cc = stage_channels(f, i - 1);
        specs.push_back({s + ".1", 3 * cc, cc, 3, 1, 1});
        specs.push_back({s + ".2", cc, cc, 3, 1, 1});
    }
    return specs;
}

int head_in_channels(const UNetConfig& cfg) {
    if (!cfg.hypercolumn) return cfg.base_filters;
    return cfg.base_filters * ((1 << cfg.depth) - 1);
}

void add_conv(Params& p, const std::string& prefix, int out_c, int in_c, int k, Rng& rng) {
    Tensor w(out_c, in_c, k, k);
    const float stddev = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
    for (auto& v : w.data) v = static_cast<float>(rng.normal(0.0, stddev));
    p.add(prefix + ".w", std::move(w));
    p.add(prefix + ".b", Tensor::vec(out_c, 0.0f));
}

void add_bn(Params& p, const std::string& prefix, int c) {
    p.add(prefix + ".gamma", Tensor::vec(c, 1.0f));
    p.add(prefix + ".beta", Tensor::vec(c, 0.0f));
    p.add(prefix + ".running_mean", Tensor::vec(c, 0.0f));
    p.add(prefix + ".running_var", Tensor::vec(c, 1.0f));
}

// conv + BN + ReLU forward; `prefix` selects the parameter group.
Tensor cbr_forward(Params& params, const std::string& prefix, const Tensor& x, int stride, int pad,
                   NetMode mode, float eps, float momentum, CbrCache* cache) {
    Tensor conv_out = conv2d(x, params.at(prefix + ".conv.w"), params.at(prefix + ".conv.b"), stride, pad);
    if (cache) cache->x = x;
    Tensor bn_out = batchnorm2d(conv_out, params.at(prefix + ".bn.gamma"), params.at(prefix + ".bn.beta"),
                                params.at(prefix + ".bn.running_mean"), params.at(prefix + ".bn.running_var"),
                                mode, eps, momentum, cache ? &cache->bn : nullptr);
    if (cache) cache->pre_relu = bn_out;
    return relu(bn_out);
}

Tensor cbr_backward(const Params& params, const std::string& prefix, const CbrCache& cache, int stride,
                    int pad, const Tensor& dy, Params& grads) {
    Tensor d_bn_out = relu_backward(cache.pre_relu, dy);
    BnGrads bg = batchnorm2d_backward(cache.bn, params.at(prefix + ".bn.gamma"), d_bn_out);
    ConvGrads cg = conv2d_backward(cache.x, params.at(prefix + ".conv.w"), stride, pad, bg.dx);
    grads.at(prefix + ".conv.w") = std::move(cg.dw);
    grads.at(prefix + ".conv.b") = std::move(cg.db);
    grads.at(prefix + ".bn.gamma") = std::move(bg.dgamma);
    grads.at(prefix + ".bn.beta") = std::move(bg.dbeta);
    return cg.dx;
}

void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

} // namespace

void UNet::init(Rng& rng) {
    if (cfg_.base_filters < 1 || cfg_.depth < 1)
        throw Error("unet config needs base_filters >= 1 and depth >= 1");
    params_ = Params();
    for (const auto& spec : cbr_specs(cfg_)) {
        add_conv(params_, spec.prefix + ".conv", spec.out_c, spec.in_c, spec.k, rng);
        add_bn(params_, spec.prefix + ".bn", spec.out_c);
    }
    const int f = cfg_.base_filters;
    for (int i = cfg_.depth; i >= 1; --i)
        add_conv(params_, "dec" + std::to_string(i) + ".reduce", stage_channels(f, i - 1),
                 stage_channels(f, i), 1, rng);
    add_conv(params_, "head", 1, head_in_channels(cfg_), 1, rng);
}

Tensor UNet::forward(const Tensor& x, NetMode mode, UNetCache* cache) {
    if (x.rank != 4 || x.c() != 3)
        throw Error("unet expects (n,3,H,W) input, got " + x.shape_str());
    const int div = 1 << (cfg_.depth + 2);
    if (x.h() % div != 0 || x.w() % div != 0)
        throw Error("unet input dims must be divisible by " + std::to_string(div) + ", got " +
                    x.shape_str());

    const float eps = cfg_.bn_eps, mom = cfg_.bn_momentum;
    if (cache) {
        cache->enc1.resize(static_cast<std::size_t>(cfg_.depth));
        cache->enc2.resize(static_cast<std::size_t>(cfg_.depth));
        cache->enc_argmax.resize(static_cast<std::size_t>(cfg_.depth));
        cache->enc_pool_h.resize(static_cast<std::size_t>(cfg_.depth));
        cache->enc_pool_w.resize(static_cast<std::size_t>(cfg_.depth));
        cache->dec.resize(static_cast<std::size_t>(cfg_.depth));
    }

    // stem
    Tensor cur = cbr_forward(params_, "stem", x, 2, 3, mode, eps, mom, cache ? &cache->stem : nullptr);
    {
        if (cache) {
            cache->stem_pool_h = cur.h();
            cache->stem_pool_w = cur.w();
        }
        PoolResult pr = maxpool2(cur);
        if (cache) cache->stem_argmax = std::move(pr.argmax);
        cur = std::move(pr.y);
    }

    // encoder
    std::vector<Tensor> skips(static_cast<std::size_t>(cfg_.depth));
    for (int i = 1; i <= cfg_.depth; ++i) {
        const std::string s = "enc" + std::to_string(i);
        cur = cbr_forward(params_, s + ".1", cur, 1, 1, mode, eps, mom,
                          cache ? &cache->enc1[i - 1] : nullptr);
        cur = cbr_forward(params_, s + ".2", cur, 1, 1, mode, eps, mom,
                          cache ? &cache->enc2[i - 1] : nullptr);
        skips[i - 1] = cur;
        if (cache) {
            cache->enc_pool_h[i - 1] = cur.h();
            cache->enc_pool_w[i - 1] = cur.w();
        }
        PoolResult pr = maxpool2(cur);
        if (cache) cache->enc_argmax[i - 1] = std::move(pr.argmax);
        cur = std::move(pr.y);
    }

    // bottleneck
    cur = cbr_forward(params_, "bottleneck.1", cur, 1, 1, mode, eps, mom, cache ? &cache->bneck1 : nullptr);
    cur = cbr_forward(params_, "bottleneck.2", cur, 1, 1, mode, eps, mom, cache ? &cache->bneck2 : nullptr);

    // decoder; dec_outs[i-1] is stage i's output at resolution H / 2^(i+1)
    std::vector<Tensor> dec_outs(static_cast<std::size_t>(cfg_.depth));
    for (int i = cfg_.depth; i >= 1; --i) {
        const std::string s = "dec" + std::to_string(i);
        DecStageCache* dc = cache ? &cache->dec[static_cast<std::size_t>(cfg_.depth - i)] : nullptr;
        Tensor up = upsample_nearest2(cur);
        Tensor reduced = conv2d(up, params_.at(s + ".reduce.w"), params_.at(s + ".reduce.b"), 1, 0);
        if (dc) {
            dc->upsampled = std::move(up);
            dc->reduced_c = reduced.c();
            dc->skip_c = skips[i - 1].c();
        }
        Tensor cat = concat_channels({&reduced, &skips[i - 1]});
        cur = cbr_forward(params_, s + ".1", cat, 1, 1, mode, eps, mom, dc ? &dc->c1 : nullptr);
        cur = cbr_forward(params_, s + ".2", cur, 1, 1, mode, eps, mom, dc ? &dc->c2 : nullptr);
        dec_outs[i - 1] = cur;
    }

    // head: bring decoder output(s) to full resolution (bilinear, so logits
    // are not blocky), then 1x1 conv
    Tensor head_in;
    if (cfg_.hypercolumn) {
        std::vector<Tensor> ups(static_cast<std::size_t>(cfg_.depth));
        for (int i = 1; i <= cfg_.depth; ++i) {
            Tensor t = dec_outs[i - 1];
            for (int k = 0; k < i + 1; ++k) t = upsample_bilinear2(t);
            ups[i - 1] = std::move(t);
        }
        std::vector<const Tensor*> parts;
        for (const auto& t : ups) parts.push_back(&t);
        head_in = concat_channels(parts);
    } else {
        head_in = dec_outs[0];
        for (int k = 0; k < 2; ++k) head_in = upsample_bilinear2(head_in);
    }
    Tensor logits = conv2d(head_in, params_.at("head.w"), params_.at("head.b"), 1, 0);
    if (cache) cache->head_in = std::move(head_in);
    return logits;
}

Params UNet::backward(const UNetCache& cache, const Tensor& dlogits) const {
    Params grads;
    for (const auto& [name, t] : params_) {
        if (!is_learnable(name)) continue;
        Tensor z = t;
        z.fill(0.0f);
        grads.add(name, std::move(z));
    }

    // head
    ConvGrads hg = conv2d_backward(cache.head_in, params_.at("head.w"), 1, 0, dlogits);
    grads.at("head.w") = std::move(hg.dw);
    grads.at("head.b") = std::move(hg.db);

    // gradient arriving at each decoder stage output
    std::vector<Tensor> d_dec(static_cast<std::size_t>(cfg_.depth));
    if (cfg_.hypercolumn) {
        int oc = 0;
        for (int i = 1; i <= cfg_.depth; ++i) {
            const DecStageCache& dc = cache.dec[static_cast<std::size_t>(cfg_.depth - i)];
            const int c = dc.c2.pre_relu.c();
            // slice this stage's channels out of the hypercolumn gradient
            Tensor slice(hg.dx.n(), c, hg.dx.h(), hg.dx.w());
            for (int in = 0; in < hg.dx.n(); ++in)
                for (int ic = 0; ic < c; ++ic) {
                    const float* src = &hg.dx.at(in, oc + ic, 0, 0);
                    std::copy(src, src + static_cast<std::size_t>(hg.dx.h()) * hg.dx.w(),
                              &slice.at(in, ic, 0, 0));
                }
            for (int k = 0; k < i + 1; ++k)
                slice = upsample_bilinear2_backward(slice, slice.h() / 2, slice.w() / 2);
            d_dec[i - 1] = std::move(slice);
            oc += c;
        }
    } else {
        Tensor d = hg.dx;
        for (int k = 0; k < 2; ++k) d = upsample_bilinear2_backward(d, d.h() / 2, d.w() / 2);
        d_dec[0] = std::move(d);
        for (int i = 2; i <= cfg_.depth; ++i) {
            const DecStageCache& dc = cache.dec[static_cast<std::size_t>(cfg_.depth - i)];
            d_dec[i - 1] = Tensor(dc.c2.pre_relu.n(), dc.c2.pre_relu.c(), dc.c2.pre_relu.h(),
                                  dc.c2.pre_relu.w());
        }
    }

    // decoder stages in reverse execution order (stage 1 first), feeding
    // gradients to the skip connections and down the chain
    std::vector<Tensor> d_skip(static_cast<std::size_t>(cfg_.depth));
    Tensor d_cur; // gradient flowing into the stage below's output
    for (int i = 1; i <= cfg_.depth; ++i) {
        const std::string s = "dec" + std::to_string(i);
        const DecStageCache& dc = cache.dec[static_cast<std::size_t>(cfg_.depth - i)];
        Tensor d_out = std::move(d_dec[i - 1]);
        if (i > 1) accumulate(d_out, d_cur); // chain gradient from stage i-1
        Tensor d = cbr_backward(params_, s + ".2", dc.c2, 1, 1, d_out, grads);
        d = cbr_backward(params_, s + ".1", dc.c1, 1, 1, d, grads);
        // split concat gradient into reduce-conv part and skip part
        Tensor d_reduced(d.n(), dc.reduced_c, d.h(), d.w());
        Tensor d_sk(d.n(), dc.skip_c, d.h(), d.w());
        for (int in = 0; in < d.n(); ++in) {
            for (int ic = 0; ic < dc.reduced_c; ++ic) {
                const float* src = &d.at(in, ic, 0, 0);
                std::copy(src, src + static_cast<std::size_t>(d.h()) * d.w(), &d_reduced.at(in, ic, 0, 0));
            }
            for (int ic = 0; ic < dc.skip_c; ++ic) {
                const float* src = &d.at(in, dc.reduced_c + ic, 0, 0);
                std::copy(src, src + static_cast<std::size_t>(d.h()) * d.w(), &d_sk.at(in, ic, 0, 0));
            }
        }
        d_skip[i - 1] = std::move(d_sk);
        ConvGrads rg = conv2d_backward(dc.upsampled, params_.at(s + ".reduce.w"), 1, 0, d_reduced);
        grads.at(s + ".reduce.w") = std::move(rg.dw);
        grads.at(s + ".reduce.b") = std::move(rg.db);
        d_cur = upsample_nearest2_backward(rg.dx);
    }

    // bottleneck
    Tensor d = cbr_backward(params_, "bottleneck.2", cache.bneck2, 1, 1, d_cur, grads);
    d = cbr_backward(params_, "bottleneck.1", cache.bneck1, 1, 1, d, grads);

    // encoder stages in reverse, merging the skip gradients
    for (int i = cfg_.depth; i >= 1; --i) {
        const std::string s = "enc" + std::to_string(i);
        Tensor d_pre_pool = maxpool2_backward(d, cache.enc_argmax[i - 1], cache.enc_pool_h[i - 1],
                                              cache.enc_pool_w[i - 1]);
        accumulate(d_pre_pool, d_skip[i - 1]);
        d = cbr_backward(params_, s + ".2", cache.enc2[i - 1], 1, 1, d_pre_pool, grads);
        d = cbr_backward(params_, s + ".1", cache.enc1[i - 1], 1, 1, d, grads);
    }

    // stem
    d = maxpool2_backward(d, cache.stem_argmax, cache.stem_pool_h, cache.stem_pool_w);
    cbr_backward(params_, "stem", cache.stem, 2, 3, d, grads);
    return grads;
}

UNetConfig UNet::infer_config(const Params& params) {
    UNetConfig cfg;
    cfg.base_filters = params.at("stem.conv.w").shape[0];
    int depth = 0;
    while (params.contains("enc" + std::to_string(depth + 1) + ".1.conv.w")) ++depth;
    if (depth == 0) throw Error("parameter table has no encoder stages");
    cfg.depth = depth;
    const int head_in = params.at("head.w").shape[1];
    cfg.hypercolumn = head_in == cfg.base_filters * ((1 << depth) - 1) && head_in != cfg.base_filters;
    return cfg;
}

} // namespace lesionseg
