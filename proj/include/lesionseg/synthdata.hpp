#pragma once

#include <cstdint>
#include <vector>

#include "lesionseg/image.hpp"

namespace lesionseg {

// Synthetic lesion images: one filled ellipse on a contrasting background
// plus Gaussian pixel noise; the mask is the exact ellipse interior. Every
// sample is a pure function of (spec, index).
struct SynthSpec {
    int count = 12;
    int size = 64;
    float axis_min = 10.0f; // semi-axis, pixels
    float axis_max = 24.0f;
    float fg_min = 0.55f; // per-channel color ranges
    float fg_max = 0.95f;
    float bg_min = 0.05f;
    float bg_max = 0.35f;
    float noise_sigma = 0.02f;
    std::uint64_t seed = 7;
};

struct Ellipse {
    float cx = 0, cy = 0;  // center
    float a = 1, b = 1;    // semi-axes
    float phi = 0;         // rotation
    bool contains(float x, float y) const;
};

// The geometry/colors drawn for sample `index` (exposed so the rasterization
// can be checked against the analytic interior).
struct SynthDraw {
    Ellipse ellipse;
    float fg[3];
    float bg[3];
};
SynthDraw synth_draw(const SynthSpec& spec, int index);

ImageSample generate_one(const SynthSpec& spec, int index);
std::vector<ImageSample> generate(const SynthSpec& spec);

} // namespace lesionseg
