#include "lesionseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lesionseg/error.hpp"
#include "lesionseg/rng.hpp"

namespace lesionseg {

bool Ellipse::contains(float x, float y) const {
    const float dx = x - cx, dy = y - cy;
    const float ca = std::cos(phi), sa = std::sin(phi);
    const float u = dx * ca + dy * sa;
    const float v = -dx * sa + dy * ca;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0f;
}

SynthDraw synth_draw(const SynthSpec& spec, int index) {
    if (spec.size < 8) throw Error("synthetic image size must be >= 8");
    if (spec.axis_min < 2.0f || spec.axis_max < spec.axis_min)
        throw Error("ellipse axes must satisfy axis_max >= axis_min >= 2");
    const float margin = spec.axis_max + 1.0f;
    if (2.0f * margin >= static_cast<float>(spec.size) - 1.0f)
        throw Error("ellipse axes too large for the image: axis_max " + std::to_string(spec.axis_max) +
                    " does not fit in size " + std::to_string(spec.size));

    Rng rng = Rng::stream(spec.seed, 11, static_cast<std::uint64_t>(index));
    SynthDraw d;
    d.ellipse.a = rng.uniform_f(spec.axis_min, spec.axis_max);
    d.ellipse.b = rng.uniform_f(spec.axis_min, spec.axis_max);
    d.ellipse.phi = rng.uniform_f(0.0f, 3.14159265f);
    d.ellipse.cx = rng.uniform_f(margin, static_cast<float>(spec.size) - 1.0f - margin);
    d.ellipse.cy = rng.uniform_f(margin, static_cast<float>(spec.size) - 1.0f - margin);
    for (int c = 0; c < 3; ++c) d.bg[c] = rng.uniform_f(spec.bg_min, spec.bg_max);
    for (int c = 0; c < 3; ++c) d.fg[c] = rng.uniform_f(spec.fg_min, spec.fg_max);
    return d;
}

ImageSample generate_one(const SynthSpec& spec, int index) {
    const SynthDraw d = synth_draw(spec, index);
    Rng noise_rng = Rng::stream(spec.seed, 12, static_cast<std::uint64_t>(index));

    ImageSample sample;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%03d", index);
    sample.id = id;
    sample.pixels.h = spec.size;
    sample.pixels.w = spec.size;
    sample.pixels.data.resize(static_cast<std::size_t>(spec.size) * spec.size * 3);
    Mask mask(spec.size, spec.size);

    for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x) {
            const bool inside = d.ellipse.contains(static_cast<float>(x), static_cast<float>(y));
            mask.at(y, x) = inside ? 255 : 0;
            for (int c = 0; c < 3; ++c) {
                float v = inside ? d.fg[c] : d.bg[c];
                if (spec.noise_sigma > 0.0f)
                    v += static_cast<float>(noise_rng.normal(0.0, spec.noise_sigma));
                v = std::clamp(v, 0.0f, 1.0f);
                sample.pixels.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    sample.mask = std::move(mask);
    return sample;
}

std::vector<ImageSample> generate(const SynthSpec& spec) {
    std::vector<ImageSample> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) out.push_back(generate_one(spec, i));
    return out;
}

} // namespace lesionseg
