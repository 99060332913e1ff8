#pragma once

#include <cstdint>
#include <vector>

#include "lesionseg/image.hpp"
#include "lesionseg/rng.hpp"

namespace lesionseg {

// The 8 symmetries of the square minus the anti-diagonal flip; these 7 are
// the lossless test-time augmentations.
enum class Dihedral { identity, rot90, rot180, rot270, hflip, vflip, transpose };

Dihedral invert_dihedral(Dihedral element);

ImageF apply_dihedral(const ImageF& img, Dihedral element);
Mask apply_dihedral(const Mask& mask, Dihedral element);
ProbMap apply_dihedral(const ProbMap& map, Dihedral element);

enum class AugKind {
    motion_blur,
    median_blur,
    contrast,
    brightness,
    shift_scale_rotate,
    clahe,
    sharpen,
    grid_distort,
    hue_saturation,
    to_gray,
    dihedral,
};

// One sampled transform with all of its randomness already drawn, so that
// applying it is a pure function.
struct AugTransform {
    AugKind kind;
    float a = 0, b = 0, c = 0, d = 0; // meaning depends on kind
    int k = 0;                        // kernel size / cell count / line length
    Dihedral element = Dihedral::identity;
    std::vector<float> field; // grid_distort node offsets, (cells+1)^2 * 2

    static AugTransform motion_blur(int length, float angle);
    static AugTransform median_blur(int kernel);
    static AugTransform contrast(float alpha);
    static AugTransform brightness(float beta);
    static AugTransform shift_scale_rotate(float shift_x, float shift_y, float scale, float angle);
    static AugTransform clahe(float clip, int tiles);
    static AugTransform sharpen(float amount, float radius);
    static AugTransform grid_distort(int cells, std::vector<float> node_offsets);
    static AugTransform hue_saturation(float dh, float ds, float dv);
    static AugTransform to_gray();
    static AugTransform dihedral(Dihedral element);
};

struct Range {
    float lo = 0, hi = 0;
};

// Per-kind enablement, application probability and parameter ranges. The
// defaults are mild; everything is exposed through the run configuration.
struct AugConfig {
    std::uint64_t seed = 1;

    struct {
        bool enabled = true;
        float p = 0.10f;
        Range length{3, 7};
        Range angle{0.0f, 3.14159265f};
    } motion_blur;
    struct {
        bool enabled = true;
        float p = 0.10f;
        Range kernel{3, 5};
    } median_blur;
    struct {
        bool enabled = true;
        float p = 0.30f;
        Range alpha{-0.2f, 0.2f};
    } contrast;
    struct {
        bool enabled = true;
        float p = 0.30f;
        Range beta{-0.2f, 0.2f};
    } brightness;
    struct {
        bool enabled = true;
        float p = 0.50f;
        Range shift{-0.0625f, 0.0625f};
        Range scale{0.9f, 1.1f};
        Range angle{-0.2618f, 0.2618f}; // +/- 15 degrees
    } shift_scale_rotate;
    struct {
        bool enabled = true;
        float p = 0.10f;
        Range clip{1.0f, 3.0f};
        int tiles = 8;
    } clahe;
    struct {
        bool enabled = true;
        float p = 0.20f;
        Range amount{0.1f, 0.5f};
        Range radius{0.5f, 1.5f};
    } sharpen;
    struct {
        bool enabled = true;
        float p = 0.20f;
        Range cells{3, 5};
        Range offset{1.0f, 4.0f};
    } grid_distort;
    struct {
        bool enabled = true;
        float p = 0.30f;
        Range hue{-0.05f, 0.05f};
        Range sat{-0.1f, 0.1f};
        Range val{-0.1f, 0.1f};
    } hue_saturation;
    struct {
        bool enabled = true;
        float p = 0.05f;
    } to_gray;
    struct {
        bool enabled = true;
        float p = 0.50f;
    } dihedral;
};

// Draws one augmentation pipeline: each enabled kind is independently
// included with its probability, parameters uniform in their ranges. Pure
// function of (config, generator state); kinds are visited in a fixed order.
std::vector<AugTransform> sample_pipeline(const AugConfig& config, Rng& rng);

// Applies a transform in place. Photometric kinds leave the mask untouched;
// geometric kinds move the mask with nearest-neighbour sampling so it stays
// binary. Image values are clamped to [0, 1]. Warps use reflect padding.
void apply(const AugTransform& t, ImageF& image, Mask* mask);

inline void apply_pipeline(const std::vector<AugTransform>& pipeline, ImageF& image, Mask* mask) {
    for (const auto& t : pipeline) apply(t, image, mask);
}

} // namespace lesionseg
