#pragma once

#include <vector>

#include "lesionseg/image.hpp"

namespace lesionseg {

// Region labels: 0 = background, k >= 1 = region k. Labels form a contiguous
// range assigned in raster-scan discovery order.
struct LabelMap {
    int h = 0, w = 0;
    std::vector<int> data;

    LabelMap() = default;
    LabelMap(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, 0) {}

    int& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
    int at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

// pixel >= threshold -> 255, else 0 (inclusive at the threshold).
Mask binarize(const ProbMap& p, float threshold = 0.5f);

// Binary morphology with a discrete disk {(dx,dy): dx^2+dy^2 <= r^2}.
// Erosion ignores out-of-bounds offsets (the outside counts as foreground,
// so a full image erodes to itself); dilation treats the outside as
// background. The two agree with set duality on interior pixels.
Mask erode(const Mask& mask, int radius);
Mask dilate(const Mask& mask, int radius);

// 4-connected components, labels in raster-scan discovery order.
LabelMap connected_components(const Mask& mask);

// Meyer-style priority flood: a min-priority queue over relief values seeded
// with the marker pixels (ties broken FIFO by insertion order). Popped pixels
// label their unlabeled 4-neighbours within the domain. Domain pixels in a
// component without any marker stay 0; pixels outside the domain stay 0.
LabelMap watershed(const ProbMap& relief, const LabelMap& markers, const Mask& domain);

enum class ReliefKind { inverse_probability, gradient_magnitude };

struct RefineOptions {
    float threshold = 0.5f;
    int erode_radius = 2;
    int dilate_radius = 2;
    bool largest_only = false; // seed only the largest connected component
    ReliefKind relief = ReliefKind::inverse_probability;
};

// Full post-processing: binarize, erode to lesion markers, dilate to a
// domain whose ring (domain minus mask) seeds a competing background marker,
// flood the relief, return the union of lesion-labeled pixels. Components
// whose marker vanished under erosion are dropped; a crisp mask round-trips
// unchanged.
Mask refine(const ProbMap& p, const RefineOptions& opts = {});

} // namespace lesionseg
