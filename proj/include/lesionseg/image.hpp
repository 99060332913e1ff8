#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lesionseg/tensor.hpp"

namespace lesionseg {

// Interleaved 8-bit RGB image, row-major.
struct ImageU8 {
    int h = 0, w = 0;
    std::vector<std::uint8_t> data; // h*w*3

    std::uint8_t& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * 3 + ch]; }
    std::uint8_t at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * 3 + ch]; }
};

// Binary mask; every value is exactly 0 or 255.
struct Mask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> data; // h*w

    Mask() = default;
    Mask(int h_, int w_, std::uint8_t fill = 0) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

// Interleaved float image (HWC), values in [0, 1].
struct ImageF {
    int h = 0, w = 0, c = 0;
    std::vector<float> data; // h*w*c

    ImageF() = default;
    ImageF(int h_, int w_, int c_, float fill = 0.0f)
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
};

// Per-pixel lesion probability in [0, 1].
struct ProbMap {
    int h = 0, w = 0;
    std::vector<float> data; // h*w

    ProbMap() = default;
    ProbMap(int h_, int w_, float fill = 0.0f) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

// An image, its optional ground-truth mask, and a stable id (the file stem).
struct ImageSample {
    std::string id;
    ImageU8 pixels;
    std::optional<Mask> mask;
};

// Per-channel dataset statistics on [0, 1]-scaled values.
struct ChannelStats {
    std::array<float, 3> mean{0, 0, 0};
    std::array<float, 3> std{1, 1, 1};
};

ImageF to_float(const ImageU8& img);
ImageU8 to_u8(const ImageF& img);

// Bilinear resize with half-pixel centers: src = (dst + 0.5) * (in/out) - 0.5,
// clamped to the valid range. Same-size resize is an exact identity.
ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);
ProbMap resize_bilinear(const ProbMap& map, int out_h, int out_w);

// Nearest-neighbour resize under the same coordinate convention (round half
// away from zero); output values stay in {0, 255}.
Mask resize_nearest(const Mask& mask, int out_h, int out_w);

// Per-channel mean and population std over all pixels of all images, on
// values scaled to [0, 1]. Std is clamped to >= 1e-6.
ChannelStats compute_dataset_stats(const std::vector<ImageSample>& samples);

// (x - mean) / std per channel; expects a 3-channel [0, 1] image.
Tensor normalize(const ImageF& img, const ChannelStats& stats);

} // namespace lesionseg
