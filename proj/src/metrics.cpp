#include "lesionseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "lesionseg/error.hpp"

namespace lesionseg {

namespace {

constexpr float kBceClamp = 1e-7f;

void check_sizes(std::size_t p, std::size_t g) {
    if (p != g)
        throw Error("probability/target size mismatch: " + std::to_string(p) + " vs " + std::to_string(g));
}

void check_mask_shapes(const Mask& a, const Mask& b) {
    if (a.h != b.h || a.w != b.w)
        throw Error("mask shape mismatch: " + std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                    std::to_string(b.h) + "x" + std::to_string(b.w));
}

} // namespace

LossResult bce(const std::vector<float>& p, const std::vector<float>& g) {
    check_sizes(p.size(), g.size());
    const double inv_n = 1.0 / static_cast<double>(p.size());
    LossResult r;
    r.grad.resize(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const float pc = std::clamp(p[i], kBceClamp, 1.0f - kBceClamp);
        sum += -(g[i] * std::log(static_cast<double>(pc)) +
                 (1.0 - g[i]) * std::log(1.0 - static_cast<double>(pc)));
        const bool clamped = p[i] < kBceClamp || p[i] > 1.0f - kBceClamp;
        r.grad[i] = clamped ? 0.0f
                            : static_cast<float>((-g[i] / pc + (1.0 - g[i]) / (1.0 - pc)) * inv_n);
    }
    r.loss = sum * inv_n;
    return r;
}

LossResult soft_dice(const std::vector<float>& p, const std::vector<float>& g, float smooth) {
    check_sizes(p.size(), g.size());
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += static_cast<double>(p[i]) * g[i];
        sum_p += p[i];
        sum_g += g[i];
    }
    const double num = 2.0 * inter + smooth;
    const double den = sum_p + sum_g + smooth;
    LossResult r;
    r.loss = num / den;
    r.grad.resize(p.size());
    // quotient rule: d/dp_i [num/den] = (2 g_i den - num) / den^2
    for (std::size_t i = 0; i < p.size(); ++i)
        r.grad[i] = static_cast<float>((2.0 * g[i] * den - num) / (den * den));
    return r;
}

LossResult composite_loss(const std::vector<float>& p, const std::vector<float>& g,
                          const LossWeights& w, float smooth) {
    const LossResult b = bce(p, g);
    const LossResult d = soft_dice(p, g, smooth);
    LossResult r;
    r.loss = w.bce * b.loss + w.dice * (1.0 - d.loss);
    r.grad.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) r.grad[i] = w.bce * b.grad[i] - w.dice * d.grad[i];
    return r;
}

double jaccard(const Mask& a, const Mask& b, double both_empty) {
    check_mask_shapes(a, b);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool fa = a.data[i] != 0;
        const bool fb = b.data[i] != 0;
        inter += fa && fb;
        uni += fa || fb;
    }
    if (uni == 0) return both_empty;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice_hard(const Mask& a, const Mask& b, double both_empty) {
    check_mask_shapes(a, b);
    std::size_t inter = 0, total = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool fa = a.data[i] != 0;
        const bool fb = b.data[i] != 0;
        inter += fa && fb;
        total += fa;
        total += fb;
    }
    if (total == 0) return both_empty;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double thresholded_jaccard(double j, double tau) { return j >= tau ? j : 0.0; }

ScoreReport score_report(const std::vector<std::pair<std::string, Mask>>& predictions,
                         const std::vector<std::pair<std::string, Mask>>& ground_truth,
                         double tau, double both_empty) {
    std::map<std::string, const Mask*> pred, gt;
    for (const auto& [id, m] : predictions) pred[id] = &m;
    for (const auto& [id, m] : ground_truth) gt[id] = &m;

    std::vector<std::string> missing_gt, missing_pred;
    for (const auto& [id, m] : pred)
        if (!gt.count(id)) missing_gt.push_back(id);
    for (const auto& [id, m] : gt)
        if (!pred.count(id)) missing_pred.push_back(id);
    if (!missing_gt.empty() || !missing_pred.empty()) {
        std::string msg = "prediction/ground-truth id mismatch;";
        if (!missing_gt.empty()) {
            msg += " no ground truth for:";
            for (const auto& id : missing_gt) msg += " " + id;
            msg += ";";
        }
        if (!missing_pred.empty()) {
            msg += " no prediction for:";
            for (const auto& id : missing_pred) msg += " " + id;
        }
        throw DataError(msg);
    }

    ScoreReport report;
    double sum_d = 0.0, sum_j = 0.0, sum_tj = 0.0;
    for (const auto& [id, pm] : pred) {
        ScoreRow row;
        row.id = id;
        row.dice = dice_hard(*pm, *gt.at(id), both_empty);
        row.jaccard = jaccard(*pm, *gt.at(id), both_empty);
        row.thresholded_jaccard = thresholded_jaccard(row.jaccard, tau);
        sum_d += row.dice;
        sum_j += row.jaccard;
        sum_tj += row.thresholded_jaccard;
        report.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(report.rows.size());
    report.aggregate.id = "__aggregate__";
    report.aggregate.dice = sum_d / n;
    report.aggregate.jaccard = sum_j / n;
    report.aggregate.thresholded_jaccard = sum_tj / n;
    return report;
}

std::string score_report_csv(const ScoreReport& report) {
    std::string out = "image_id,dice,jaccard,thresholded_jaccard\n";
    char buf[128];
    auto append = [&](const ScoreRow& row) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", row.id.c_str(), row.dice, row.jaccard,
                      row.thresholded_jaccard);
        out += buf;
    };
    for (const auto& row : report.rows) append(row);
    append(report.aggregate);
    return out;
}

} // namespace lesionseg
