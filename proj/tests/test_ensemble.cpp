#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lesionseg/ensemble.hpp"
#include "lesionseg/error.hpp"
#include "lesionseg/train.hpp"

using namespace lesionseg;

namespace {

ImageF random_image(int n, Rng& rng) {
    ImageF img(n, n, 3);
    for (auto& v : img.data) v = rng.uniform_f(0.0f, 1.0f);
    return img;
}

ProbMap random_map(int h, int w, Rng& rng) {
    ProbMap p(h, w);
    for (auto& v : p.data) v = rng.uniform_f(0.0f, 1.0f);
    return p;
}

// A checkpoint whose network always outputs sigmoid(head bias).
Checkpoint constant_checkpoint(float head_bias) {
    UNetConfig cfg;
    cfg.base_filters = 4;
    cfg.depth = 1;
    Rng rng(91);
    UNet net(cfg);
    net.init(rng);
    for (auto& [name, t] : net.params())
        if (is_learnable(name)) t.fill(0.0f);
    for (auto& [name, t] : net.params())
        if (name.ends_with(".bn.gamma")) t.fill(1.0f);
    net.params().at("head.b").data[0] = head_bias;
    Checkpoint ckpt;
    ckpt.params = net.params();
    return ckpt;
}

} // namespace

TEST_CASE("tta_predict: constant predictor, identity set, pixel-wise exactness") {
    Rng rng(92);
    const ImageF img = random_image(8, rng);

    // constant map comes back exactly
    auto constant = [](const ImageF& x) { return ProbMap(x.h, x.w, 0.625f); };
    const ProbMap c = tta_predict(constant, img, TtaSet::default_set());
    for (float v : c.data) CHECK(v == 0.625f);

    // TtaSet = [id] is the plain prediction
    auto red = [](const ImageF& x) {
        ProbMap p(x.h, x.w);
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) p.at(y, xx) = x.at(y, xx, 0);
        return p;
    };
    TtaSet only_id;
    only_id.elements = {Dihedral::identity};
    const ProbMap plain = tta_predict(red, img, only_id);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(plain.at(y, x) == img.at(y, x, 0));

    // pixel-wise predictor: g^-1 o f o g == f for every g, so the TTA mean
    // equals the plain prediction bit-exactly
    const ProbMap tta = tta_predict(red, img, TtaSet::default_set());
    CHECK(tta.data == plain.data);

    // step-by-step oracle for one non-trivial element set
    TtaSet pair;
    pair.elements = {Dihedral::identity, Dihedral::rot90};
    const ProbMap got = tta_predict(red, img, pair);
    const ProbMap p0 = red(img);
    const ProbMap p1 = apply_dihedral(red(apply_dihedral(img, Dihedral::rot90)), Dihedral::rot270);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            CHECK(got.at(y, x) ==
                  static_cast<float>((static_cast<double>(p0.at(y, x)) + p1.at(y, x)) / 2.0));

    // rotations demand square inputs
    ImageF rect(4, 8, 3, 0.5f);
    CHECK_THROWS_AS(tta_predict(constant, rect, TtaSet::default_set()), Error);
    TtaSet flips;
    flips.elements = {Dihedral::hflip, Dihedral::vflip};
    CHECK(tta_predict(constant, rect, flips).data.size() == 32); // flips are fine
}

TEST_CASE("mean_ensemble: identities, range, permutation invariance") {
    Rng rng(93);
    const ProbMap m = random_map(6, 6, rng);

    // mean of [m, m] is m, bit-exactly
    CHECK(mean_ensemble({m, m}).data == m.data);

    const ProbMap zeros(3, 3, 0.0f), ones(3, 3, 1.0f);
    for (float v : mean_ensemble({zeros, ones}).data) CHECK(v == 0.5f);

    // three maps against the direct (a+b+c)/3 oracle
    const ProbMap a = random_map(5, 5, rng), b = random_map(5, 5, rng), c = random_map(5, 5, rng);
    const ProbMap mean3 = mean_ensemble({a, b, c});
    for (std::size_t i = 0; i < mean3.data.size(); ++i) {
        const double want = (static_cast<double>(a.data[i]) + b.data[i] + c.data[i]) / 3.0;
        CHECK(mean3.data[i] == static_cast<float>(want));
    }

    // permutation invariance (f32 inputs accumulate exactly in double)
    const ProbMap p1 = mean_ensemble({a, b, c});
    const ProbMap p2 = mean_ensemble({c, a, b});
    CHECK(p1.data == p2.data);

    // output range within input range
    float lo = 1e9f, hi = -1e9f;
    for (const ProbMap* m3 : {&a, &b, &c})
        for (float v : m3->data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (float v : mean3.data) {
        CHECK(v >= lo);
        CHECK(v <= hi);
    }

    CHECK_THROWS_AS(mean_ensemble({}), Error);
    CHECK_THROWS_AS(mean_ensemble({a, random_map(4, 4, rng)}), Error);
}

TEST_CASE("ensemble_predict: single member, duplicates, constant heads") {
    Rng rng(94);
    const ImageF img = random_image(16, rng);
    ChannelStats stats; // mean 0, std 1

    // one checkpoint + [id] equals the plain forward pass
    Checkpoint single = constant_checkpoint(0.4f);
    UNet net(UNet::infer_config(single.params));
    net.params() = single.params;
    const Tensor logits = net.forward(normalize(img, stats), NetMode::eval);
    TtaSet only_id;
    only_id.elements = {Dihedral::identity};
    const ProbMap one = ensemble_predict({single}, img, only_id, stats);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            CHECK(one.at(y, x) == 1.0f / (1.0f + std::exp(-logits.at(0, 0, y, x))));

    // two identical checkpoints average to the same map
    const ProbMap twice = ensemble_predict({single, single}, img, only_id, stats);
    CHECK(twice.data == one.data);

    // two zero-weight networks with biased heads -> sigmoid means
    Checkpoint ca = constant_checkpoint(-0.8f);
    Checkpoint cb = constant_checkpoint(1.2f);
    const float pa = 1.0f / (1.0f + std::exp(0.8f));
    const float pb = 1.0f / (1.0f + std::exp(-1.2f));
    const ProbMap mixed = ensemble_predict({ca, cb}, img, TtaSet::default_set(), stats);
    for (float v : mixed.data)
        CHECK(v == doctest::Approx((pa + pb) / 2.0f).epsilon(1e-6));

    // mismatched digests are rejected
    Checkpoint other = constant_checkpoint(0.0f);
    other.config_digest[0] ^= 0xff;
    CHECK_THROWS_WITH_AS(ensemble_predict({single, other}, img, only_id, stats),
                         doctest::Contains("incompatible"), Error);
}
