#include "lesionseg/augment.hpp"

#include <algorithm>
#include <cmath>

#include "lesionseg/error.hpp"

namespace lesionseg {

// ---------------------------------------------------------------------------
// dihedral group
// ---------------------------------------------------------------------------

Dihedral invert_dihedral(Dihedral element) {
    switch (element) {
        case Dihedral::rot90: return Dihedral::rot270;
        case Dihedral::rot270: return Dihedral::rot90;
        default: return element; // id, rot180, flips and transpose are involutions
    }
}

namespace {

// Maps an output pixel (y, x) to its source pixel for a given element.
// rot90 is clockwise: the first input row becomes the last output column.
inline void dihedral_src(Dihedral e, int out_y, int out_x, int in_h, int in_w, int& sy, int& sx) {
    switch (e) {
        case Dihedral::identity: sy = out_y; sx = out_x; break;
        case Dihedral::rot90: sy = in_h - 1 - out_x; sx = out_y; break;
        case Dihedral::rot180: sy = in_h - 1 - out_y; sx = in_w - 1 - out_x; break;
        case Dihedral::rot270: sy = out_x; sx = in_w - 1 - out_y; break;
        case Dihedral::hflip: sy = out_y; sx = in_w - 1 - out_x; break;
        case Dihedral::vflip: sy = in_h - 1 - out_y; sx = out_x; break;
        case Dihedral::transpose: sy = out_x; sx = out_y; break;
    }
}

inline bool swaps_axes(Dihedral e) {
    return e == Dihedral::rot90 || e == Dihedral::rot270 || e == Dihedral::transpose;
}

} // namespace

ImageF apply_dihedral(const ImageF& img, Dihedral element) {
    const int oh = swaps_axes(element) ? img.w : img.h;
    const int ow = swaps_axes(element) ? img.h : img.w;
    ImageF out(oh, ow, img.c);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            int sy, sx;
            dihedral_src(element, y, x, img.h, img.w, sy, sx);
            for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
        }
    return out;
}

Mask apply_dihedral(const Mask& mask, Dihedral element) {
    const int oh = swaps_axes(element) ? mask.w : mask.h;
    const int ow = swaps_axes(element) ? mask.h : mask.w;
    Mask out(oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            int sy, sx;
            dihedral_src(element, y, x, mask.h, mask.w, sy, sx);
            out.at(y, x) = mask.at(sy, sx);
        }
    return out;
}

ProbMap apply_dihedral(const ProbMap& map, Dihedral element) {
    const int oh = swaps_axes(element) ? map.w : map.h;
    const int ow = swaps_axes(element) ? map.h : map.w;
    ProbMap out(oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            int sy, sx;
            dihedral_src(element, y, x, map.h, map.w, sy, sx);
            out.at(y, x) = map.at(sy, sx);
        }
    return out;
}

// ---------------------------------------------------------------------------
// transform construction / sampling
// ---------------------------------------------------------------------------

AugTransform AugTransform::motion_blur(int length, float angle) {
    AugTransform t;
    t.kind = AugKind::motion_blur;
    t.k = std::max(3, length | 1);
    t.a = angle;
    return t;
}

AugTransform AugTransform::median_blur(int kernel) {
    if (kernel < 3 || kernel % 2 == 0) throw Error("median blur kernel must be odd and >= 3");
    AugTransform t;
    t.kind = AugKind::median_blur;
    t.k = kernel;
    return t;
}

AugTransform AugTransform::contrast(float alpha) {
    if (alpha <= -1.0f) throw Error("contrast alpha must be > -1");
    AugTransform t;
    t.kind = AugKind::contrast;
    t.a = alpha;
    return t;
}

AugTransform AugTransform::brightness(float beta) {
    AugTransform t;
    t.kind = AugKind::brightness;
    t.a = beta;
    return t;
}

AugTransform AugTransform::shift_scale_rotate(float shift_x, float shift_y, float scale, float angle) {
    if (scale <= 0.0f) throw Error("shift_scale_rotate scale must be > 0");
    AugTransform t;
    t.kind = AugKind::shift_scale_rotate;
    t.a = shift_x;
    t.b = shift_y;
    t.c = scale;
    t.d = angle;
    return t;
}

AugTransform AugTransform::clahe(float clip, int tiles) {
    AugTransform t;
    t.kind = AugKind::clahe;
    t.a = clip;
    t.k = std::max(1, tiles);
    return t;
}

AugTransform AugTransform::sharpen(float amount, float radius) {
    AugTransform t;
    t.kind = AugKind::sharpen;
    t.a = amount;
    t.b = radius;
    return t;
}

AugTransform AugTransform::grid_distort(int cells, std::vector<float> node_offsets) {
    if (cells < 1) throw Error("grid_distort needs at least one cell");
    const std::size_t nodes = static_cast<std::size_t>(cells + 1) * (cells + 1);
    if (node_offsets.size() != nodes * 2)
        throw Error("grid_distort offsets must hold 2 values per node");
    AugTransform t;
    t.kind = AugKind::grid_distort;
    t.k = cells;
    t.field = std::move(node_offsets);
    return t;
}

AugTransform AugTransform::hue_saturation(float dh, float ds, float dv) {
    AugTransform t;
    t.kind = AugKind::hue_saturation;
    t.a = dh;
    t.b = ds;
    t.c = dv;
    return t;
}

AugTransform AugTransform::to_gray() {
    AugTransform t;
    t.kind = AugKind::to_gray;
    return t;
}

AugTransform AugTransform::dihedral(Dihedral element) {
    AugTransform t;
    t.kind = AugKind::dihedral;
    t.element = element;
    return t;
}

std::vector<AugTransform> sample_pipeline(const AugConfig& config, Rng& rng) {
    std::vector<AugTransform> out;
    if (config.motion_blur.enabled && rng.bernoulli(config.motion_blur.p)) {
        const int len = static_cast<int>(
            rng.uniform_int(static_cast<std::int64_t>(config.motion_blur.length.lo),
                            static_cast<std::int64_t>(config.motion_blur.length.hi)));
        out.push_back(AugTransform::motion_blur(
            len, rng.uniform_f(config.motion_blur.angle.lo, config.motion_blur.angle.hi)));
    }
    if (config.median_blur.enabled && rng.bernoulli(config.median_blur.p)) {
        int k = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(config.median_blur.kernel.lo),
                                                 static_cast<std::int64_t>(config.median_blur.kernel.hi)));
        k = std::max(3, k | 1);
        out.push_back(AugTransform::median_blur(k));
    }
    if (config.contrast.enabled && rng.bernoulli(config.contrast.p))
        out.push_back(AugTransform::contrast(rng.uniform_f(config.contrast.alpha.lo, config.contrast.alpha.hi)));
    if (config.brightness.enabled && rng.bernoulli(config.brightness.p))
        out.push_back(
            AugTransform::brightness(rng.uniform_f(config.brightness.beta.lo, config.brightness.beta.hi)));
    if (config.shift_scale_rotate.enabled && rng.bernoulli(config.shift_scale_rotate.p)) {
        const auto& c = config.shift_scale_rotate;
        out.push_back(AugTransform::shift_scale_rotate(
            rng.uniform_f(c.shift.lo, c.shift.hi), rng.uniform_f(c.shift.lo, c.shift.hi),
            rng.uniform_f(c.scale.lo, c.scale.hi), rng.uniform_f(c.angle.lo, c.angle.hi)));
    }
    if (config.clahe.enabled && rng.bernoulli(config.clahe.p))
        out.push_back(
            AugTransform::clahe(rng.uniform_f(config.clahe.clip.lo, config.clahe.clip.hi), config.clahe.tiles));
    if (config.sharpen.enabled && rng.bernoulli(config.sharpen.p))
        out.push_back(AugTransform::sharpen(rng.uniform_f(config.sharpen.amount.lo, config.sharpen.amount.hi),
                                            rng.uniform_f(config.sharpen.radius.lo, config.sharpen.radius.hi)));
    if (config.grid_distort.enabled && rng.bernoulli(config.grid_distort.p)) {
        const auto& c = config.grid_distort;
        const int cells = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(c.cells.lo),
                                                           static_cast<std::int64_t>(c.cells.hi)));
        const float mag = rng.uniform_f(c.offset.lo, c.offset.hi);
        std::vector<float> field(static_cast<std::size_t>(cells + 1) * (cells + 1) * 2);
        for (auto& v : field) v = rng.uniform_f(-mag, mag);
        out.push_back(AugTransform::grid_distort(cells, std::move(field)));
    }
    if (config.hue_saturation.enabled && rng.bernoulli(config.hue_saturation.p)) {
        const auto& c = config.hue_saturation;
        out.push_back(AugTransform::hue_saturation(rng.uniform_f(c.hue.lo, c.hue.hi),
                                                   rng.uniform_f(c.sat.lo, c.sat.hi),
                                                   rng.uniform_f(c.val.lo, c.val.hi)));
    }
    if (config.to_gray.enabled && rng.bernoulli(config.to_gray.p)) out.push_back(AugTransform::to_gray());
    if (config.dihedral.enabled && rng.bernoulli(config.dihedral.p)) {
        const auto e = static_cast<Dihedral>(rng.uniform_int(0, 6));
        out.push_back(AugTransform::dihedral(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// photometric helpers
// ---------------------------------------------------------------------------

namespace {

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

void clamp_image(ImageF& img) {
    for (auto& v : img.data) v = clamp01(v);
}

// Mirror an index into [0, n-1] (reflect with edge repeat: -1 -> 0, n -> n-1).
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    v = mx;
    const float d = mx - mn;
    s = mx > 0.0f ? d / mx : 0.0f;
    if (d <= 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r)
        h = (g - b) / d;
    else if (mx == g)
        h = 2.0f + (b - r) / d;
    else
        h = 4.0f + (r - g) / d;
    h /= 6.0f;
    if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    if (s <= 0.0f) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    const float hh = h * 6.0f;
    const int sector = std::min(5, static_cast<int>(hh));
    const float f = hh - sector;
    const float p = v * (1.0f - s);
    const float q = v * (1.0f - s * f);
    const float t = v * (1.0f - s * (1.0f - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Convolution with an arbitrary square kernel, reflect borders.
void convolve(ImageF& img, const std::vector<float>& kernel, int k) {
    const int r = k / 2;
    ImageF src = img;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                float acc = 0.0f;
                for (int ky = 0; ky < k; ++ky) {
                    const int sy = reflect_index(y + ky - r, img.h);
                    for (int kx = 0; kx < k; ++kx) {
                        const int sx = reflect_index(x + kx - r, img.w);
                        acc += kernel[static_cast<std::size_t>(ky) * k + kx] * src.at(sy, sx, ch);
                    }
                }
                img.at(y, x, ch) = acc;
            }
}

void apply_motion_blur(ImageF& img, int length, float angle) {
    const int k = length;
    std::vector<float> kernel(static_cast<std::size_t>(k) * k, 0.0f);
    const float cx = static_cast<float>(k - 1) / 2.0f;
    const float ca = std::cos(angle), sa = std::sin(angle);
    int count = 0;
    for (int i = 0; i < k; ++i) {
        const float t = static_cast<float>(i) - cx;
        const int px = static_cast<int>(std::lround(cx + t * ca));
        const int py = static_cast<int>(std::lround(cx + t * sa));
        if (px < 0 || px >= k || py < 0 || py >= k) continue;
        float& cell = kernel[static_cast<std::size_t>(py) * k + px];
        if (cell == 0.0f) {
            cell = 1.0f;
            ++count;
        }
    }
    for (auto& v : kernel) v /= static_cast<float>(count);
    convolve(img, kernel, k);
    clamp_image(img);
}

void apply_median_blur(ImageF& img, int k) {
    const int r = k / 2;
    ImageF src = img;
    std::vector<float> window(static_cast<std::size_t>(k) * k);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                std::size_t n = 0;
                for (int ky = -r; ky <= r; ++ky) {
                    const int sy = reflect_index(y + ky, img.h);
                    for (int kx = -r; kx <= r; ++kx)
                        window[n++] = src.at(sy, reflect_index(x + kx, img.w), ch);
                }
                auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
                std::nth_element(window.begin(), mid, window.begin() + static_cast<std::ptrdiff_t>(n));
                img.at(y, x, ch) = *mid;
            }
}

void apply_contrast(ImageF& img, float alpha) {
    double sum = 0.0;
    for (float v : img.data) sum += v;
    const float m = static_cast<float>(sum / static_cast<double>(img.data.size()));
    for (auto& v : img.data) v = clamp01(m + (v - m) * (1.0f + alpha));
}

void apply_brightness(ImageF& img, float beta) {
    for (auto& v : img.data) v = clamp01(v + beta);
}

void gaussian_blur(ImageF& img, float sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
    std::vector<float> w(static_cast<std::size_t>(2 * r + 1));
    float total = 0.0f;
    for (int i = -r; i <= r; ++i) {
        w[static_cast<std::size_t>(i + r)] = std::exp(-static_cast<float>(i * i) / (2.0f * sigma * sigma));
        total += w[static_cast<std::size_t>(i + r)];
    }
    for (auto& v : w) v /= total;

    ImageF tmp = img;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                float acc = 0.0f;
                for (int i = -r; i <= r; ++i)
                    acc += w[static_cast<std::size_t>(i + r)] * img.at(y, reflect_index(x + i, img.w), ch);
                tmp.at(y, x, ch) = acc;
            }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                float acc = 0.0f;
                for (int i = -r; i <= r; ++i)
                    acc += w[static_cast<std::size_t>(i + r)] * tmp.at(reflect_index(y + i, img.h), x, ch);
                img.at(y, x, ch) = acc;
            }
}

// Unsharp mask: x + amount * (x - gaussian(x)).
void apply_sharpen(ImageF& img, float amount, float radius) {
    ImageF blurred = img;
    gaussian_blur(blurred, radius);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = clamp01(img.data[i] + amount * (img.data[i] - blurred.data[i]));
}

void apply_hue_saturation(ImageF& img, float dh, float ds, float dv) {
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float h, s, v;
            rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
            h += dh;
            h -= std::floor(h);
            s = clamp01(s + ds);
            v = clamp01(v + dv);
            float r, g, b;
            hsv_to_rgb(h, s, v, r, g, b);
            img.at(y, x, 0) = clamp01(r);
            img.at(y, x, 1) = clamp01(g);
            img.at(y, x, 2) = clamp01(b);
        }
}

void apply_to_gray(ImageF& img) {
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const float luma =
                0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
            img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = clamp01(luma);
        }
}

// Contrast-limited adaptive histogram equalization on the HSV value channel.
void apply_clahe(ImageF& img, float clip, int tiles) {
    const int h = img.h, w = img.w;
    std::vector<float> hch(static_cast<std::size_t>(h) * w), sch(hch.size()), vch(hch.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), hch[i], sch[i], vch[i]);
        }

    const int ty = std::min(tiles, h);
    const int tx = std::min(tiles, w);
    constexpr int kBins = 256;
    // per-tile value mapping: bin -> equalized value in [0, 1]
    std::vector<std::array<float, kBins>> maps(static_cast<std::size_t>(ty) * tx);
    std::vector<float> centers_y(static_cast<std::size_t>(ty)), centers_x(static_cast<std::size_t>(tx));

    for (int ti = 0; ti < ty; ++ti) {
        const int y0 = ti * h / ty, y1 = (ti + 1) * h / ty;
        centers_y[static_cast<std::size_t>(ti)] = (static_cast<float>(y0) + y1 - 1) / 2.0f;
        for (int tj = 0; tj < tx; ++tj) {
            const int x0 = tj * w / tx, x1 = (tj + 1) * w / tx;
            centers_x[static_cast<std::size_t>(tj)] = (static_cast<float>(x0) + x1 - 1) / 2.0f;

            int hist[kBins] = {0};
            const int area = (y1 - y0) * (x1 - x0);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const int bin = std::min(kBins - 1,
                                             static_cast<int>(vch[static_cast<std::size_t>(y) * w + x] *
                                                              static_cast<float>(kBins)));
                    ++hist[bin];
                }
            // clip and redistribute
            const int limit = std::max(1, static_cast<int>(clip * static_cast<float>(area) / kBins));
            int excess = 0;
            for (int b = 0; b < kBins; ++b)
                if (hist[b] > limit) {
                    excess += hist[b] - limit;
                    hist[b] = limit;
                }
            const int share = excess / kBins;
            int rem = excess % kBins;
            for (int b = 0; b < kBins; ++b) {
                hist[b] += share;
                if (rem > 0) {
                    ++hist[b];
                    --rem;
                }
            }
            auto& map = maps[static_cast<std::size_t>(ti) * tx + tj];
            int cdf = 0;
            for (int b = 0; b < kBins; ++b) {
                cdf += hist[b];
                map[static_cast<std::size_t>(b)] = static_cast<float>(cdf) / static_cast<float>(area);
            }
        }
    }

    // for a coordinate, the surrounding pair of tile centers and the blend weight
    auto locate = [](const std::vector<float>& centers, float pos, int& a, int& b, float& wgt) {
        a = 0;
        while (a + 1 < static_cast<int>(centers.size()) && centers[static_cast<std::size_t>(a + 1)] <= pos)
            ++a;
        b = std::min(a + 1, static_cast<int>(centers.size()) - 1);
        const float ca = centers[static_cast<std::size_t>(a)], cb = centers[static_cast<std::size_t>(b)];
        wgt = cb > ca ? std::clamp((pos - ca) / (cb - ca), 0.0f, 1.0f) : 0.0f;
    };

    // bilinear interpolation between the four surrounding tile mappings
    for (int y = 0; y < h; ++y) {
        int i0, i1;
        float wy;
        locate(centers_y, static_cast<float>(y), i0, i1, wy);
        for (int x = 0; x < w; ++x) {
            int j0, j1;
            float wx;
            locate(centers_x, static_cast<float>(x), j0, j1, wx);

            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const int bin = std::min(kBins - 1, static_cast<int>(vch[i] * static_cast<float>(kBins)));
            const float v00 = maps[static_cast<std::size_t>(i0) * tx + j0][static_cast<std::size_t>(bin)];
            const float v01 = maps[static_cast<std::size_t>(i0) * tx + j1][static_cast<std::size_t>(bin)];
            const float v10 = maps[static_cast<std::size_t>(i1) * tx + j0][static_cast<std::size_t>(bin)];
            const float v11 = maps[static_cast<std::size_t>(i1) * tx + j1][static_cast<std::size_t>(bin)];
            const float v = (1.0f - wy) * ((1.0f - wx) * v00 + wx * v01) + wy * ((1.0f - wx) * v10 + wx * v11);

            float r, g, b;
            hsv_to_rgb(hch[i], sch[i], clamp01(v), r, g, b);
            img.at(y, x, 0) = clamp01(r);
            img.at(y, x, 1) = clamp01(g);
            img.at(y, x, 2) = clamp01(b);
        }
    }
}

// ---------------------------------------------------------------------------
// geometric warps (inverse mapping, reflect borders)
// ---------------------------------------------------------------------------

inline float sample_bilinear_reflect(const ImageF& img, float sy, float sx, int ch) {
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const float fy = sy - static_cast<float>(y0);
    const float fx = sx - static_cast<float>(x0);
    const int ry0 = reflect_index(y0, img.h), ry1 = reflect_index(y0 + 1, img.h);
    const int rx0 = reflect_index(x0, img.w), rx1 = reflect_index(x0 + 1, img.w);
    const float top = img.at(ry0, rx0, ch) + fx * (img.at(ry0, rx1, ch) - img.at(ry0, rx0, ch));
    const float bot = img.at(ry1, rx0, ch) + fx * (img.at(ry1, rx1, ch) - img.at(ry1, rx0, ch));
    return top + fy * (bot - top);
}

inline std::uint8_t sample_nearest_reflect(const Mask& mask, float sy, float sx) {
    const int y = reflect_index(static_cast<int>(std::lround(sy)), mask.h);
    const int x = reflect_index(static_cast<int>(std::lround(sx)), mask.w);
    return mask.at(y, x);
}

template <typename SrcFn>
void warp(ImageF& image, Mask* mask, SrcFn src_of) {
    ImageF src_img = image;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            float sy, sx;
            src_of(y, x, sy, sx);
            for (int ch = 0; ch < image.c; ++ch)
                image.at(y, x, ch) = clamp01(sample_bilinear_reflect(src_img, sy, sx, ch));
        }
    if (mask) {
        Mask src_mask = *mask;
        for (int y = 0; y < mask->h; ++y)
            for (int x = 0; x < mask->w; ++x) {
                float sy, sx;
                src_of(y, x, sy, sx);
                mask->at(y, x) = sample_nearest_reflect(src_mask, sy, sx);
            }
    }
}

void apply_shift_scale_rotate(ImageF& image, Mask* mask, float shift_x, float shift_y, float scale,
                              float angle) {
    const float cx = static_cast<float>(image.w - 1) / 2.0f;
    const float cy = static_cast<float>(image.h - 1) / 2.0f;
    const float tx = shift_x * static_cast<float>(image.w);
    const float ty = shift_y * static_cast<float>(image.h);
    const float ca = std::cos(angle), sa = std::sin(angle);
    const float inv_s = 1.0f / scale;
    warp(image, mask, [&](int y, int x, float& sy, float& sx) {
        const float px = static_cast<float>(x) - cx - tx;
        const float py = static_cast<float>(y) - cy - ty;
        sx = (ca * px + sa * py) * inv_s + cx;
        sy = (-sa * px + ca * py) * inv_s + cy;
    });
}

void apply_grid_distort(ImageF& image, Mask* mask, int cells, const std::vector<float>& field) {
    const float cell_h = static_cast<float>(image.h - 1) / static_cast<float>(cells);
    const float cell_w = static_cast<float>(image.w - 1) / static_cast<float>(cells);
    warp(image, mask, [&](int y, int x, float& sy, float& sx) {
        const float gy = cell_h > 0.0f ? static_cast<float>(y) / cell_h : 0.0f;
        const float gx = cell_w > 0.0f ? static_cast<float>(x) / cell_w : 0.0f;
        const int i0 = std::min(static_cast<int>(gy), cells - 1);
        const int j0 = std::min(static_cast<int>(gx), cells - 1);
        const float fy = gy - static_cast<float>(i0);
        const float fx = gx - static_cast<float>(j0);
        auto node = [&](int i, int j, int d) {
            return field[(static_cast<std::size_t>(i) * (cells + 1) + j) * 2 + d];
        };
        float off[2];
        for (int d = 0; d < 2; ++d) {
            const float top = node(i0, j0, d) + fx * (node(i0, j0 + 1, d) - node(i0, j0, d));
            const float bot = node(i0 + 1, j0, d) + fx * (node(i0 + 1, j0 + 1, d) - node(i0 + 1, j0, d));
            off[d] = top + fy * (bot - top);
        }
        sx = static_cast<float>(x) + off[0];
        sy = static_cast<float>(y) + off[1];
    });
}

void apply_dihedral_inplace(ImageF& image, Mask* mask, Dihedral element) {
    image = apply_dihedral(image, element);
    if (mask) *mask = apply_dihedral(*mask, element);
}

} // namespace

void apply(const AugTransform& t, ImageF& image, Mask* mask) {
    if (mask && (mask->h != image.h || mask->w != image.w))
        throw Error("augment: mask shape " + std::to_string(mask->h) + "x" + std::to_string(mask->w) +
                    " does not match image " + std::to_string(image.h) + "x" + std::to_string(image.w));
    switch (t.kind) {
        case AugKind::motion_blur: apply_motion_blur(image, t.k, t.a); break;
        case AugKind::median_blur: apply_median_blur(image, t.k); break;
        case AugKind::contrast: apply_contrast(image, t.a); break;
        case AugKind::brightness: apply_brightness(image, t.a); break;
        case AugKind::shift_scale_rotate: apply_shift_scale_rotate(image, mask, t.a, t.b, t.c, t.d); break;
        case AugKind::clahe: apply_clahe(image, t.a, t.k); break;
        case AugKind::sharpen: apply_sharpen(image, t.a, t.b); break;
        case AugKind::grid_distort: apply_grid_distort(image, mask, t.k, t.field); break;
        case AugKind::hue_saturation: apply_hue_saturation(image, t.a, t.b, t.c); break;
        case AugKind::to_gray: apply_to_gray(image); break;
        case AugKind::dihedral: apply_dihedral_inplace(image, mask, t.element); break;
    }
}

} // namespace lesionseg
