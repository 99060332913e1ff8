#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "lesionseg/rng.hpp"

namespace lesionseg {

// Central-difference gradient check: perturbs `samples` random coordinates of
// `point` by +/- eps, evaluates f, and compares against the caller's analytic
// gradient. Two f32 realities are handled explicitly:
//   - the perturbed coordinate is stored in f32, so the difference quotient
//     uses the *realized* delta, not the nominal 2*eps;
//   - coordinates whose gradient is far below the tensor's gradient scale are
//     dominated by forward-pass rounding noise, so the relative error is
//     floored at 1e-3 of the largest analytic component.
// Returns the max relative error |a - n| / max(|a|, |n|, floor). Callers are
// responsible for probing f at smooth points (nudge inputs off ReLU kinks).
inline double grad_check(const std::function<double(const std::vector<float>&)>& f,
                         const std::vector<float>& point, const std::vector<float>& analytic_grad,
                         int samples, double eps, Rng& rng) {
    // f may rebuild the structure `point` lives in; only the copy is used
    // after the first evaluation.
    std::vector<float> probe = point;
    const std::vector<float> grad = analytic_grad;
    double scale = 0.0;
    for (float g : grad) scale = std::max(scale, static_cast<double>(std::fabs(g)));
    const double floor = std::max(1e-12, 1e-3 * scale);

    double max_rel = 0.0;
    for (int s = 0; s < samples; ++s) {
        const std::size_t i =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(probe.size()) - 1));
        const float saved = probe[i];
        const float plus = static_cast<float>(saved + eps);
        const float minus = static_cast<float>(saved - eps);
        probe[i] = plus;
        const double f_plus = f(probe);
        probe[i] = minus;
        const double f_minus = f(probe);
        probe[i] = saved;
        const double delta = static_cast<double>(plus) - static_cast<double>(minus);
        if (delta == 0.0) continue;
        const double numeric = (f_plus - f_minus) / delta;
        const double analytic = grad[i];
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic), floor});
        max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
    }
    return max_rel;
}

// Vector variant: same probing, but the result is ||a - n||_2 / ||a||_2 over
// the sampled coordinates. Per-coordinate comparison against an f32 forward
// pass cannot resolve components far below the gradient scale (the
// difference quotient carries absolute rounding noise); the norm ratio keeps
// full sensitivity to wrong scales, signs and routing while averaging that
// noise out.
inline double grad_check_l2(const std::function<double(const std::vector<float>&)>& f,
                            const std::vector<float>& point, const std::vector<float>& analytic_grad,
                            int samples, double eps, Rng& rng) {
    std::vector<float> probe = point;
    const std::vector<float> grad = analytic_grad;
    double diff_sq = 0.0, ref_sq = 0.0;
    for (int s = 0; s < samples; ++s) {
        const std::size_t i =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(probe.size()) - 1));
        const float saved = probe[i];
        const float plus = static_cast<float>(saved + eps);
        const float minus = static_cast<float>(saved - eps);
        probe[i] = plus;
        const double f_plus = f(probe);
        probe[i] = minus;
        const double f_minus = f(probe);
        probe[i] = saved;
        const double delta = static_cast<double>(plus) - static_cast<double>(minus);
        if (delta == 0.0) continue;
        const double numeric = (f_plus - f_minus) / delta;
        const double analytic = grad[i];
        diff_sq += (analytic - numeric) * (analytic - numeric);
        ref_sq += analytic * analytic;
    }
    return std::sqrt(diff_sq) / std::max(std::sqrt(ref_sq), 1e-12);
}

} // namespace lesionseg
