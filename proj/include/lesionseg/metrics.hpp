#pragma once

#include <string>
#include <vector>

#include "lesionseg/image.hpp"

namespace lesionseg {

struct LossWeights {
    float bce = 0.5f;
    float dice = 0.5f;
};

struct LossResult {
    double loss = 0.0;
    std::vector<float> grad; // dL/dp, same layout as the probability input
};

// Mean over pixels of -[g ln p + (1-g) ln(1-p)], with p clamped to
// [1e-7, 1 - 1e-7]. The gradient is that of the clamped expression
// (zero where the clamp is active).
LossResult bce(const std::vector<float>& p, const std::vector<float>& g);

// Soft Dice D = (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth) and its
// gradient dD/dp. Note: this returns D itself, not a loss.
LossResult soft_dice(const std::vector<float>& p, const std::vector<float>& g, float smooth = 1.0f);

// w.bce * BCE + w.dice * (1 - soft_dice); gradient is the weighted sum.
LossResult composite_loss(const std::vector<float>& p, const std::vector<float>& g,
                          const LossWeights& w, float smooth = 1.0f);

// Hard overlap metrics on {0,255} masks. `both_empty` is the value returned
// when neither mask has any foreground (1.0 reads empty-vs-empty as perfect
// agreement; 0.0 gives strict-challenge parity).
double jaccard(const Mask& a, const Mask& b, double both_empty = 1.0);
double dice_hard(const Mask& a, const Mask& b, double both_empty = 1.0);

// j if j >= tau else 0; inclusive at the threshold.
double thresholded_jaccard(double j, double tau);

struct ScoreRow {
    std::string id;
    double dice = 0.0;
    double jaccard = 0.0;
    double thresholded_jaccard = 0.0;
};

struct ScoreReport {
    std::vector<ScoreRow> rows; // sorted by id
    ScoreRow aggregate;         // column means, id = "__aggregate__"
};

// Per-id Dice / Jaccard / thresholded Jaccard plus arithmetic-mean aggregates.
// The id sets of predictions and ground truth must be identical.
ScoreReport score_report(const std::vector<std::pair<std::string, Mask>>& predictions,
                         const std::vector<std::pair<std::string, Mask>>& ground_truth,
                         double tau = 0.65, double both_empty = 1.0);

// CSV: header image_id,dice,jaccard,thresholded_jaccard; one row per id;
// final __aggregate__ row; 6 decimal places.
std::string score_report_csv(const ScoreReport& report);

} // namespace lesionseg
