#include "lesionseg/image.hpp"

#include <algorithm>
#include <cmath>

#include "lesionseg/error.hpp"

namespace lesionseg {

ImageF to_float(const ImageU8& img) {
    ImageF out(img.h, img.w, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = static_cast<float>(img.data[i]) / 255.0f;
    return out;
}

ImageU8 to_u8(const ImageF& img) {
    if (img.c != 3) throw Error("to_u8 expects a 3-channel image, got c=" + std::to_string(img.c));
    ImageU8 out;
    out.h = img.h;
    out.w = img.w;
    out.data.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const float v = std::clamp(img.data[i], 0.0f, 1.0f);
        out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

namespace {

void check_target(int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw Error("resize target must be at least 1x1, got " + std::to_string(out_h) + "x" +
                    std::to_string(out_w));
}

// Half-pixel-center source coordinate, clamped into [0, in_size - 1].
inline double src_coord(int dst, int in_size, int out_size) {
    const double s = (dst + 0.5) * (static_cast<double>(in_size) / out_size) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in_size - 1));
}

} // namespace

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
    check_target(out_h, out_w);
    ImageF out(out_h, out_w, img.c);
    for (int y = 0; y < out_h; ++y) {
        const double sy = src_coord(y, img.h, out_h);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double fy = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double sx = src_coord(x, img.w, out_w);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double fx = sx - x0;
            for (int ch = 0; ch < img.c; ++ch) {
                const double top = img.at(y0, x0, ch) + fx * (img.at(y0, x1, ch) - img.at(y0, x0, ch));
                const double bot = img.at(y1, x0, ch) + fx * (img.at(y1, x1, ch) - img.at(y1, x0, ch));
                out.at(y, x, ch) = static_cast<float>(top + fy * (bot - top));
            }
        }
    }
    return out;
}

ProbMap resize_bilinear(const ProbMap& map, int out_h, int out_w) {
    ImageF tmp(map.h, map.w, 1);
    tmp.data = map.data;
    ImageF r = resize_bilinear(tmp, out_h, out_w);
    ProbMap out(out_h, out_w);
    out.data = std::move(r.data);
    return out;
}

Mask resize_nearest(const Mask& mask, int out_h, int out_w) {
    check_target(out_h, out_w);
    Mask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::clamp(static_cast<int>(std::lround(src_coord(y, mask.h, out_h))), 0, mask.h - 1);
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::clamp(static_cast<int>(std::lround(src_coord(x, mask.w, out_w))), 0, mask.w - 1);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

ChannelStats compute_dataset_stats(const std::vector<ImageSample>& samples) {
    if (samples.empty()) throw Error("dataset stats require at least one image");
    double sum[3] = {0, 0, 0};
    double sumsq[3] = {0, 0, 0};
    std::size_t count = 0;
    for (const auto& s : samples) {
        const auto& px = s.pixels;
        for (int y = 0; y < px.h; ++y) {
            for (int x = 0; x < px.w; ++x) {
                for (int ch = 0; ch < 3; ++ch) {
                    const double v = px.at(y, x, ch) / 255.0;
                    sum[ch] += v;
                    sumsq[ch] += v * v;
                }
            }
        }
        count += static_cast<std::size_t>(px.h) * px.w;
    }
    ChannelStats stats;
    for (int ch = 0; ch < 3; ++ch) {
        const double mean = sum[ch] / static_cast<double>(count);
        const double var = std::max(0.0, sumsq[ch] / static_cast<double>(count) - mean * mean);
        stats.mean[ch] = static_cast<float>(mean);
        stats.std[ch] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
    return stats;
}

Tensor normalize(const ImageF& img, const ChannelStats& stats) {
    if (img.c != 3) throw Error("normalize expects a 3-channel image, got c=" + std::to_string(img.c));
    Tensor t(1, 3, img.h, img.w);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t.at(0, ch, y, x) = (img.at(y, x, ch) - stats.mean[ch]) / stats.std[ch];
    return t;
}

} // namespace lesionseg
