#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "lesionseg/error.hpp"
#include "lesionseg/synthdata.hpp"
#include "lesionseg/train.hpp"

using namespace lesionseg;
namespace fs = std::filesystem;

namespace {

// A sample whose mask has exactly `area` foreground pixels.
ImageSample sample_with_area(const std::string& id, int side, int area) {
    ImageSample s;
    s.id = id;
    s.pixels.h = s.pixels.w = side;
    s.pixels.data.assign(static_cast<std::size_t>(side) * side * 3, 100);
    Mask m(side, side);
    for (int i = 0; i < area; ++i) m.data[static_cast<std::size_t>(i)] = 255;
    s.mask = std::move(m);
    return s;
}

std::map<int, int> fold_sizes(const FoldAssignment& folds) {
    std::map<int, int> sizes;
    for (const auto& [id, f] : folds) ++sizes[f];
    return sizes;
}

SynthSpec tiny_synth(int count) {
    SynthSpec spec;
    spec.count = count;
    spec.size = 32;
    spec.axis_min = 4.0f;
    spec.axis_max = 10.0f;
    spec.seed = 17;
    return spec;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.epochs_per_cycle = 2;
    cfg.cycles = 2;
    cfg.lr_max = 0.05f;
    cfg.lr_min = 0.005f;
    cfg.batch_size = 2;
    cfg.input_size = 32;
    cfg.seed = 5;
    cfg.net.base_filters = 4;
    cfg.net.depth = 1;
    return cfg;
}

} // namespace

TEST_CASE("stratified_folds: divisibility, balance, per-bin dealing") {
    // 10 samples, k=5: exactly two per fold
    std::vector<ImageSample> ten;
    for (int i = 0; i < 10; ++i) ten.push_back(sample_with_area("s" + std::to_string(i), 8, 4 + i));
    const FoldAssignment folds = stratified_folds(ten, 5, 5, 42);
    CHECK(folds.size() == 10);
    for (const auto& [f, n] : fold_sizes(folds)) CHECK(n == 2);

    // identical areas: fold sizes differ by at most one
    std::vector<ImageSample> same;
    for (int i = 0; i < 13; ++i) same.push_back(sample_with_area("t" + std::to_string(i), 8, 10));
    const auto sizes = fold_sizes(stratified_folds(same, 4, 5, 1));
    int mn = 1 << 30, mx = 0;
    for (const auto& [f, n] : sizes) {
        mn = std::min(mn, n);
        mx = std::max(mx, n);
    }
    CHECK(mx - mn <= 1);

    // 25 samples in 5 well-separated area bins, k=5: one per bin per fold
    std::vector<ImageSample> binned;
    for (int b = 0; b < 5; ++b)
        for (int i = 0; i < 5; ++i)
            binned.push_back(sample_with_area("b" + std::to_string(b) + "_" + std::to_string(i), 8,
                                              5 + 10 * b));
    const FoldAssignment ba = stratified_folds(binned, 5, 5, 9);
    for (int b = 0; b < 5; ++b) {
        std::map<int, int> per_fold;
        for (int i = 0; i < 5; ++i) ++per_fold[ba.at("b" + std::to_string(b) + "_" + std::to_string(i))];
        for (const auto& [f, n] : per_fold) CHECK(n == 1);
        CHECK(per_fold.size() == 5);
    }

    CHECK_THROWS_AS(stratified_folds(ten, 1, 5, 0), Error);
    CHECK_THROWS_AS(stratified_folds({ten[0], ten[1]}, 3, 5, 0), Error);
    std::vector<ImageSample> no_mask(1);
    no_mask[0].id = "x";
    no_mask[0].pixels.h = no_mask[0].pixels.w = 4;
    no_mask[0].pixels.data.assign(48, 0);
    CHECK_THROWS_AS(stratified_folds({no_mask[0], no_mask[0], no_mask[0]}, 2, 5, 0), Error);
}

TEST_CASE("stratified_folds: partition + per-bin balance on random datasets") {
    Rng rng(81);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 40 + static_cast<int>(rng.uniform_int(0, 30));
        std::vector<ImageSample> samples;
        for (int i = 0; i < n; ++i)
            samples.push_back(
                sample_with_area("r" + std::to_string(i), 10, static_cast<int>(rng.uniform_int(1, 99))));
        const int k = 3 + static_cast<int>(rng.uniform_int(0, 3));
        const FoldAssignment folds = stratified_folds(samples, k, 5, 1000 + trial);

        CHECK(folds.size() == samples.size()); // every id exactly once
        for (const auto& [id, f] : folds) {
            CHECK(f >= 0);
            CHECK(f < k);
        }
        const auto sizes = fold_sizes(folds);
        int mn = 1 << 30, mx = 0;
        for (int f = 0; f < k; ++f) {
            const int c = sizes.count(f) ? sizes.at(f) : 0;
            mn = std::min(mn, c);
            mx = std::max(mx, c);
        }
        CHECK(mx - mn <= 1);
    }
}

TEST_CASE("cyclic_lr endpoints and midpoint") {
    CHECK(cyclic_lr(0, 50, 0.1, 0.001) == doctest::Approx(0.1));
    CHECK(cyclic_lr(50, 50, 0.1, 0.001) == doctest::Approx(0.001));
    CHECK(cyclic_lr(25, 50, 0.1, 0.001) == doctest::Approx((0.1 + 0.001) / 2));

    // monotone non-increasing across the cycle
    double prev = 1e9;
    for (int t = 0; t <= 50; ++t) {
        const double lr = cyclic_lr(t, 50, 0.1, 0.001);
        CHECK(lr <= prev + 1e-12);
        prev = lr;
    }
}

TEST_CASE("sgd_step: plain step, zero gradient, momentum unrolling") {
    auto table = [](float v) {
        Params p;
        p.add("w", Tensor::vec(3, v));
        return p;
    };

    // momentum 0, lr 1: w' = w - g
    Params w = table(1.0f);
    Params g = table(0.25f);
    Params vel;
    sgd_step(w, g, vel, 1.0f, 0.0f);
    for (float v : w.at("w").data) CHECK(v == 0.75f);

    // zero gradient, zero velocity: untouched
    Params w2 = table(2.0f);
    Params g0 = table(0.0f);
    Params vel2;
    sgd_step(w2, g0, vel2, 0.5f, 0.9f);
    for (float v : w2.at("w").data) CHECK(v == 2.0f);

    // two steps, momentum 0.9, constant gradient: w = w0 - lr*g*(1 + 1.9)
    Params w3 = table(1.0f);
    Params g3 = table(0.5f);
    Params vel3;
    sgd_step(w3, g3, vel3, 0.1f, 0.9f);
    sgd_step(w3, g3, vel3, 0.1f, 0.9f);
    for (float v : w3.at("w").data) CHECK(v == doctest::Approx(1.0f - 0.1f * 0.5f * 2.9f));

    // missing gradient for a learnable tensor
    Params w4 = table(1.0f);
    Params missing;
    Params vel4;
    CHECK_THROWS_AS(sgd_step(w4, missing, vel4, 0.1f, 0.9f), Error);

    // one step on a quadratic strictly decreases it
    Rng rng(82);
    for (int trial = 0; trial < 10; ++trial) {
        const float x0 = rng.uniform_f(-3.0f, 3.0f);
        if (std::fabs(x0) < 0.1f) continue;
        Params p;
        p.add("x", Tensor::vec(1, x0));
        Params grad;
        grad.add("x", Tensor::vec(1, 2.0f * x0)); // d/dx x^2
        Params v;
        sgd_step(p, grad, v, 0.1f, 0.9f);
        const float x1 = p.at("x").data[0];
        CHECK(x1 * x1 < x0 * x0);
    }
}

TEST_CASE("train: snapshot count, zero lr, reproducible trajectory") {
    const auto samples = generate(tiny_synth(6));
    const std::vector<ImageSample> train_set(samples.begin(), samples.begin() + 4);
    const std::vector<ImageSample> val_set(samples.begin() + 4, samples.end());
    const ChannelStats stats = compute_dataset_stats(train_set);

    TrainConfig cfg = tiny_config();
    const TrainResult r = train(train_set, val_set, cfg, stats);
    REQUIRE(r.checkpoints.size() == 2);
    CHECK(r.checkpoints[0].cycle == 0);
    CHECK(r.checkpoints[1].cycle == 1);
    CHECK(r.log.size() == 4);
    CHECK(r.checkpoints[0].config_digest == config_digest(cfg));

    // restart rule: each cycle opens back at lr_max, closes near lr_min
    CHECK(r.log[0].lr == doctest::Approx(cfg.lr_max));
    CHECK(r.log[2].lr == doctest::Approx(cfg.lr_max)); // cycle 1, epoch 0
    CHECK(r.log[1].lr < r.log[0].lr);

    // lr_max = 0: parameters never move (modulo BN running stats)
    TrainConfig frozen = tiny_config();
    frozen.lr_max = frozen.lr_min = 0.0f;
    frozen.cycles = 1;
    const TrainResult rf = train(train_set, val_set, frozen, stats);
    Rng init_rng = Rng::stream(frozen.seed, 1);
    UNet reference(frozen.net);
    reference.init(init_rng);
    for (const auto& [name, t] : reference.params()) {
        if (!is_learnable(name)) continue;
        CHECK(rf.checkpoints[0].params.at(name).data == t.data);
    }

    // same seed, same trajectory
    const TrainResult r2 = train(train_set, val_set, cfg, stats);
    REQUIRE(r2.log.size() == r.log.size());
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        CHECK(r2.log[i].loss == r.log[i].loss);
        CHECK(r2.log[i].val_jaccard == r.log[i].val_jaccard);
    }

    CHECK_THROWS_AS(train({}, val_set, cfg, stats), Error);
}

TEST_CASE("train: divergence guard trips on poisoned warm start") {
    const auto samples = generate(tiny_synth(4));
    const std::vector<ImageSample> train_set(samples.begin(), samples.begin() + 3);
    const std::vector<ImageSample> val_set(samples.begin() + 3, samples.end());
    const ChannelStats stats = compute_dataset_stats(train_set);

    TrainConfig cfg = tiny_config();
    Rng init_rng = Rng::stream(cfg.seed, 1);
    UNet net(cfg.net);
    net.init(init_rng);
    net.params().at("head.b").data[0] = std::numeric_limits<float>::quiet_NaN();

    CHECK_THROWS_WITH_AS(train(train_set, val_set, cfg, stats, &net.params()),
                         doctest::Contains("non-finite"), Error);
}

TEST_CASE("train: best-validation checkpoint flag") {
    const auto samples = generate(tiny_synth(6));
    const std::vector<ImageSample> train_set(samples.begin(), samples.begin() + 4);
    const std::vector<ImageSample> val_set(samples.begin() + 4, samples.end());
    const ChannelStats stats = compute_dataset_stats(train_set);

    TrainConfig cfg = tiny_config();
    cfg.save_best = true;
    const TrainResult r = train(train_set, val_set, cfg, stats);
    CHECK(r.has_best);
    double best = -1.0;
    for (const auto& e : r.log) best = std::max(best, e.val_jaccard);
    bool found = false;
    for (const auto& e : r.log)
        if (e.cycle == static_cast<int>(r.best.cycle) && e.epoch == static_cast<int>(r.best.epoch))
            found = e.val_jaccard == best;
    CHECK(found);
}

TEST_CASE("train log line format") {
    EpochLog e;
    e.cycle = 1;
    e.epoch = 7;
    e.lr = 0.0123;
    e.loss = 0.456789;
    e.val_jaccard = 0.9;
    CHECK(format_log_line(e) == "cycle=1 epoch=7 lr=0.0123 loss=0.456789 val_jaccard=0.900000");
}

TEST_CASE("checkpoint: bit-exact round trip and distinct failure modes") {
    const fs::path dir = fs::temp_directory_path() / "lesionseg_train_test";
    fs::create_directories(dir);
    const fs::path path = dir / "snap.ckpt";

    Rng rng(83);
    UNetConfig ncfg;
    ncfg.base_filters = 4;
    ncfg.depth = 2;
    UNet net(ncfg);
    net.init(rng);
    for (auto& [name, t] : net.params())
        for (auto& v : t.data) v = rng.uniform_f(-2.0f, 2.0f);

    Checkpoint ckpt;
    ckpt.params = net.params();
    ckpt.cycle = 3;
    ckpt.epoch = 49;
    ckpt.lr = 0.00125f;
    for (int i = 0; i < 32; ++i) ckpt.config_digest[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i * 7);

    save_checkpoint(ckpt, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.cycle == 3);
    CHECK(back.epoch == 49);
    CHECK(back.lr == 0.00125f);
    CHECK(back.config_digest == ckpt.config_digest);
    CHECK(back.params.size() == ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) {
        CHECK(back.params.at(name).rank == t.rank);
        CHECK(back.params.at(name).shape == t.shape);
        CHECK(back.params.at(name).data == t.data); // bit-exact
    }

    auto clobber = [&](const fs::path& src, const fs::path& dst, std::size_t offset, char value) {
        std::ifstream in(src, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes[offset] = value;
        std::ofstream out(dst, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };

    clobber(path, dir / "badmagic.ckpt", 0, 'X');
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "badmagic.ckpt"), doctest::Contains("bad magic"),
                         DataError);

    clobber(path, dir / "badversion.ckpt", 4, 2); // version + 1
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "badversion.ckpt"),
                         doctest::Contains("unsupported checkpoint version"), DataError);

    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(dir / "short.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 37));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "short.ckpt"), doctest::Contains("truncated"), DataError);

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
}
