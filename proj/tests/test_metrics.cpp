#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lesionseg/error.hpp"
#include "lesionseg/gradcheck.hpp"
#include "lesionseg/metrics.hpp"
#include "lesionseg/rng.hpp"

using namespace lesionseg;

namespace {

Mask random_mask(int h, int w, Rng& rng, double density = 0.5) {
    Mask m(h, w);
    for (auto& v : m.data) v = rng.bernoulli(density) ? 255 : 0;
    return m;
}

// Brute-force pixel counting, independent of the metric implementations.
struct Counts {
    std::size_t inter = 0, a_only = 0, b_only = 0;
};
Counts count_pixels(const Mask& a, const Mask& b) {
    Counts c;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool fa = a.data[i] != 0, fb = b.data[i] != 0;
        c.inter += fa && fb;
        c.a_only += fa && !fb;
        c.b_only += !fa && fb;
    }
    return c;
}

} // namespace

TEST_CASE("bce: analytic values and gradient") {
    // p = 0.5 everywhere -> ln 2 regardless of targets
    std::vector<float> p(8, 0.5f), g = {0, 1, 0, 1, 1, 0, 1, 0};
    CHECK(bce(p, g).loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // perfect 0/1 prediction: loss at the clamp floor scale
    std::vector<float> exact = {0.0f, 1.0f, 1.0f, 0.0f};
    std::vector<float> same = {0.0f, 1.0f, 1.0f, 0.0f};
    CHECK(bce(exact, same).loss < 1e-6);
    CHECK(bce(exact, same).loss > 0.0);

    // gradient vs central differences on a random 4x4
    Rng rng(21);
    std::vector<float> pr(16), gr(16);
    for (auto& v : pr) v = rng.uniform_f(0.1f, 0.9f);
    for (auto& v : gr) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
    const LossResult r = bce(pr, gr);
    auto f = [&](const std::vector<float>& x) { return bce(x, gr).loss; };
    CHECK(grad_check(f, pr, r.grad, 16, 1e-3, rng) < 1e-3);

    CHECK_THROWS_AS(bce(p, {1.0f}), Error);
}

TEST_CASE("soft_dice: plug-in values and gradient") {
    std::vector<float> ones(4, 1.0f), zeros(4, 0.0f);
    CHECK(soft_dice(ones, ones, 1.0f).loss == doctest::Approx(1.0)); // (8+1)/(8+1)
    CHECK(soft_dice(zeros, zeros, 1.0f).loss == doctest::Approx(1.0)); // smooth/smooth
    CHECK(soft_dice(ones, zeros, 1.0f).loss == doctest::Approx(0.2)); // 1/5

    Rng rng(22);
    std::vector<float> p(16), g(16);
    for (auto& v : p) v = rng.uniform_f(0.1f, 0.9f);
    for (auto& v : g) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
    const LossResult r = soft_dice(p, g, 1.0f);
    CHECK(r.loss > 0.0);
    CHECK(r.loss <= 1.0);
    auto f = [&](const std::vector<float>& x) { return soft_dice(x, g, 1.0f).loss; };
    CHECK(grad_check(f, p, r.grad, 16, 1e-3, rng) < 1e-3);

    // equals 1 iff p == g for binary p
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> bp(8), bg(8);
        for (std::size_t i = 0; i < 8; ++i) bp[i] = rng.bernoulli(0.5) ? 1.0f : 0.0f;
        bg = bp;
        CHECK(soft_dice(bp, bg, 1.0f).loss == 1.0);
        const std::size_t flip = static_cast<std::size_t>(rng.uniform_int(0, 7));
        bg[flip] = 1.0f - bg[flip];
        CHECK(soft_dice(bp, bg, 1.0f).loss < 1.0);
    }
}

TEST_CASE("composite_loss: degenerate weights, spot value, gradient") {
    Rng rng(23);
    std::vector<float> p(16), g(16);
    for (auto& v : p) v = rng.uniform_f(0.1f, 0.9f);
    for (auto& v : g) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;

    // w = (1, 0) collapses to bce exactly
    const LossResult only_bce = composite_loss(p, g, {1.0f, 0.0f});
    const LossResult plain = bce(p, g);
    CHECK(only_bce.loss == plain.loss);
    CHECK(only_bce.grad == plain.grad);

    // w = (0, 1) with p == g: loss ~ 0
    std::vector<float> match = g;
    CHECK(composite_loss(match, g, {0.0f, 1.0f}).loss == doctest::Approx(0.0).epsilon(1e-6));

    // hand-evaluated spot value: p=0.5 map, g=all ones (4 px), w=(0.5,0.5):
    // bce = ln 2; dice = (2*2+1)/(2+4+1) = 5/7; loss = 0.346574 + 0.142857
    std::vector<float> half(4, 0.5f), ones(4, 1.0f);
    const double expected = 0.5 * std::log(2.0) + 0.5 * (1.0 - 5.0 / 7.0);
    CHECK(composite_loss(half, ones, {0.5f, 0.5f}).loss == doctest::Approx(expected).epsilon(1e-9));
    CHECK(composite_loss(half, ones, {0.5f, 0.5f}).loss == doctest::Approx(0.489431).epsilon(2e-6));

    // gradient of the weighted sum, p restricted to (0.05, 0.95)
    const LossResult r = composite_loss(p, g, {0.5f, 0.5f});
    auto f = [&](const std::vector<float>& x) { return composite_loss(x, g, {0.5f, 0.5f}).loss; };
    CHECK(grad_check(f, p, r.grad, 24, 1e-3, rng) < 1e-3);
}

TEST_CASE("hard jaccard and dice") {
    Mask a(2, 2), b(2, 2);
    a.at(0, 0) = 255;
    a.at(0, 1) = 255; // a = 2 px
    b.at(0, 0) = 255; // b = 1 px, shared

    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, b) == doctest::Approx(0.5)); // 1 / 2
    CHECK(dice_hard(a, b) == doctest::Approx(2.0 / 3.0));

    Mask c(2, 2);
    c.at(1, 1) = 255; // disjoint from a
    CHECK(jaccard(a, c) == 0.0);
    CHECK(dice_hard(a, c) == 0.0);

    const Mask empty(2, 2);
    CHECK(jaccard(empty, empty) == 1.0);
    CHECK(dice_hard(empty, empty) == 1.0);
    CHECK(jaccard(empty, empty, 0.0) == 0.0); // strict-challenge convention

    CHECK_THROWS_AS(jaccard(a, Mask(3, 3)), Error);
}

TEST_CASE("metrics match brute-force counting on 1000 random pairs; D = 2J/(1+J)") {
    Rng rng(24);
    for (int trial = 0; trial < 1000; ++trial) {
        const double density = rng.uniform(0.0, 1.0);
        const Mask a = random_mask(16, 16, rng, density);
        const Mask b = random_mask(16, 16, rng, density);
        const Counts c = count_pixels(a, b);
        const std::size_t uni = c.inter + c.a_only + c.b_only;
        const double j = jaccard(a, b);
        const double d = dice_hard(a, b);
        if (uni == 0) {
            CHECK(j == 1.0);
            CHECK(d == 1.0);
            CHECK(d == 2.0 * j / (1.0 + j)); // identity covers the both-empty case
            CHECK(j == d / (2.0 - d));
        } else {
            CHECK(j == static_cast<double>(c.inter) / static_cast<double>(uni));
            // As exact rationals, J = i/u and D = 2i/(|a|+|b|) = 2i/(i+u), so
            // D = 2J/(1+J) is an identity; check D against that rational form
            // bit-exactly (single rounding on both sides), and the float-path
            // rewrites to one ulp.
            CHECK(d == 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.inter + uni));
            CHECK(d == doctest::Approx(2.0 * j / (1.0 + j)).epsilon(1e-14));
            CHECK(j == doctest::Approx(d / (2.0 - d)).epsilon(1e-14));
        }
    }
}

TEST_CASE("thresholded_jaccard rule is inclusive") {
    CHECK(thresholded_jaccard(0.7, 0.65) == 0.7);
    CHECK(thresholded_jaccard(0.6, 0.65) == 0.0);
    CHECK(thresholded_jaccard(0.65, 0.65) == 0.65);

    // monotone non-decreasing in j for fixed tau
    Rng rng(25);
    for (int t = 0; t < 100; ++t) {
        const double tau = rng.uniform(0.0, 1.0);
        double j1 = rng.uniform(0.0, 1.0), j2 = rng.uniform(0.0, 1.0);
        if (j1 > j2) std::swap(j1, j2);
        CHECK(thresholded_jaccard(j1, tau) <= thresholded_jaccard(j2, tau));
    }
}

TEST_CASE("score_report") {
    Mask full(2, 2, 255), half(2, 2), empty(2, 2);
    half.at(0, 0) = 255;
    half.at(0, 1) = 255;

    // predictions identical to ground truth -> all aggregates 1.0
    std::vector<std::pair<std::string, Mask>> preds = {{"a", full}, {"b", half}};
    std::vector<std::pair<std::string, Mask>> gts = {{"b", half}, {"a", full}};
    const ScoreReport perfect = score_report(preds, gts, 0.65);
    CHECK(perfect.aggregate.dice == 1.0);
    CHECK(perfect.aggregate.jaccard == 1.0);
    CHECK(perfect.aggregate.thresholded_jaccard == 1.0);
    CHECK(perfect.rows.size() == 2);
    CHECK(perfect.rows[0].id == "a"); // sorted by id
    CHECK(perfect.rows[1].id == "b");

    // the 0.5-jaccard pair under tau=0.65 zeroes the thresholded column
    Mask two(2, 2), one(2, 2);
    two.at(0, 0) = 255;
    two.at(0, 1) = 255;
    one.at(0, 0) = 255;
    const ScoreReport single = score_report({{"x", two}}, {{"x", one}}, 0.65);
    CHECK(single.rows[0].jaccard == doctest::Approx(0.5));
    CHECK(single.aggregate.thresholded_jaccard == 0.0);

    // disjoint id sets are an error naming the offenders
    CHECK_THROWS_WITH_AS(score_report({{"a", full}}, {{"z", full}}, 0.65),
                         doctest::Contains("z"), DataError);

    // csv shape: header, rows, aggregate, 6 decimals
    const std::string csv = score_report_csv(single);
    CHECK(csv.find("image_id,dice,jaccard,thresholded_jaccard\n") == 0);
    CHECK(csv.find("x,0.666667,0.500000,0.000000\n") != std::string::npos);
    CHECK(csv.find("__aggregate__,0.666667,0.500000,0.000000\n") != std::string::npos);
}
