#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lesionseg/augment.hpp"
#include "lesionseg/checkpoint.hpp"
#include "lesionseg/image.hpp"

namespace lesionseg {

// Ordered set of lossless test-time transforms.
struct TtaSet {
    std::vector<Dihedral> elements;

    // The 7 exactly invertible square symmetries.
    static TtaSet default_set() {
        return {{Dihedral::identity, Dihedral::rot90, Dihedral::rot180, Dihedral::rot270,
                 Dihedral::hflip, Dihedral::vflip, Dihedral::transpose}};
    }
};

using PredictFn = std::function<ProbMap(const ImageF&)>;

// For each element g: p_g = g^-1(predict(g(image))); returns the pixel-wise
// mean of all p_g (accumulated in double, so identical members average to
// themselves bit-exactly). Rotations/transpose require a square image.
ProbMap tta_predict(const PredictFn& predict, const ImageF& image, const TtaSet& tta);

// Pixel-wise arithmetic mean of equally shaped maps.
ProbMap mean_ensemble(const std::vector<ProbMap>& maps);

// Mean over checkpoints of tta_predict with each checkpoint's network.
// The image must already be at the model input size, values in [0, 1];
// `stats` supplies the normalization. Checkpoints must agree on architecture
// (same config digest and inferred shape).
ProbMap ensemble_predict(const std::vector<Checkpoint>& checkpoints, const ImageF& image,
                         const TtaSet& tta, const ChannelStats& stats);

} // namespace lesionseg
