#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lesionseg/error.hpp"
#include "lesionseg/postproc.hpp"
#include "lesionseg/synthdata.hpp"

using namespace lesionseg;

TEST_CASE("noise-free black/white spec renders the exact ellipse") {
    SynthSpec spec;
    spec.count = 3;
    spec.size = 48;
    spec.axis_min = 6.0f;
    spec.axis_max = 14.0f;
    spec.fg_min = spec.fg_max = 1.0f;
    spec.bg_min = spec.bg_max = 0.0f;
    spec.noise_sigma = 0.0f;
    spec.seed = 5;

    for (int i = 0; i < spec.count; ++i) {
        const ImageSample s = generate_one(spec, i);
        REQUIRE(s.mask.has_value());
        for (int y = 0; y < spec.size; ++y)
            for (int x = 0; x < spec.size; ++x) {
                const std::uint8_t want = s.mask->at(y, x) ? 255 : 0;
                for (int c = 0; c < 3; ++c) CHECK(s.pixels.at(y, x, c) == want);
            }
    }
}

TEST_CASE("identical spec twice yields identical samples; index selects the draw") {
    SynthSpec spec;
    spec.count = 4;
    spec.size = 32;
    spec.axis_min = 4.0f;
    spec.axis_max = 9.0f;
    spec.seed = 77;

    const auto a = generate(spec);
    const auto b = generate(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].pixels.data == b[i].pixels.data);
        CHECK(a[i].mask->data == b[i].mask->data);
    }
    // sample i alone reproduces the batch entry
    const ImageSample third = generate_one(spec, 2);
    CHECK(third.pixels.data == a[2].pixels.data);
    CHECK(third.mask->data == a[2].mask->data);
}

TEST_CASE("mask equals the analytic ellipse interior, counted independently") {
    SynthSpec spec;
    spec.count = 6;
    spec.size = 64;
    spec.seed = 13;

    for (int i = 0; i < spec.count; ++i) {
        const SynthDraw d = synth_draw(spec, i);
        const ImageSample s = generate_one(spec, i);
        std::size_t mask_area = 0;
        for (auto v : s.mask->data) mask_area += v != 0;

        // independent interior count: rotate each pixel into ellipse frame
        std::size_t oracle_area = 0;
        const float ca = std::cos(d.ellipse.phi), sa = std::sin(d.ellipse.phi);
        for (int y = 0; y < spec.size; ++y)
            for (int x = 0; x < spec.size; ++x) {
                const float px = static_cast<float>(x) - d.ellipse.cx;
                const float py = static_cast<float>(y) - d.ellipse.cy;
                const float u = (px * ca + py * sa) / d.ellipse.a;
                const float v = (-px * sa + py * ca) / d.ellipse.b;
                if (u * u + v * v <= 1.0f) {
                    ++oracle_area;
                    CHECK(s.mask->at(y, x) == 255);
                } else {
                    CHECK(s.mask->at(y, x) == 0);
                }
            }
        CHECK(mask_area == oracle_area);
        CHECK(mask_area > 0);
    }
}

TEST_CASE("masks are non-empty and simply connected") {
    SynthSpec spec;
    spec.count = 100;
    spec.size = 64;
    spec.seed = 99;

    for (int i = 0; i < spec.count; ++i) {
        const ImageSample s = generate_one(spec, i);
        std::size_t area = 0;
        for (auto v : s.mask->data) area += v != 0;
        CHECK(area > 0);

        // exactly one foreground component
        int fg_labels = 0;
        for (int v : connected_components(*s.mask).data) fg_labels = std::max(fg_labels, v);
        CHECK(fg_labels == 1);

        // no holes: the complement is one component too (border-connected)
        Mask inv(s.mask->h, s.mask->w);
        for (std::size_t j = 0; j < inv.data.size(); ++j) inv.data[j] = s.mask->data[j] ? 0 : 255;
        int bg_labels = 0;
        for (int v : connected_components(inv).data) bg_labels = std::max(bg_labels, v);
        CHECK(bg_labels == 1);
    }
}

TEST_CASE("default ranges span at least 3 of 5 area-fraction bins") {
    SynthSpec spec; // defaults
    spec.count = 40;
    const auto samples = generate(spec);
    // quintile bin edges over [min-area, max-area] of the default axis range
    const double total = static_cast<double>(spec.size) * spec.size;
    const double lo = M_PI * spec.axis_min * spec.axis_min / total;
    const double hi = M_PI * spec.axis_max * spec.axis_max / total;
    std::set<int> bins;
    for (const auto& s : samples) {
        std::size_t area = 0;
        for (auto v : s.mask->data) area += v != 0;
        const double frac = static_cast<double>(area) / total;
        const int bin = std::clamp(static_cast<int>((frac - lo) / (hi - lo) * 5.0), 0, 4);
        bins.insert(bin);
    }
    CHECK(bins.size() >= 3);
}

TEST_CASE("impossible geometry is rejected") {
    SynthSpec spec;
    spec.size = 32;
    spec.axis_max = 20.0f; // margin 21 cannot fit in 32
    CHECK_THROWS_AS(generate_one(spec, 0), Error);

    SynthSpec tiny;
    tiny.size = 4;
    CHECK_THROWS_AS(generate_one(tiny, 0), Error);
}
