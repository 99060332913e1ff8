#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lesionseg/config.hpp"
#include "lesionseg/error.hpp"

using namespace lesionseg;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& name, const std::string& content) {
    const fs::path dir = fs::temp_directory_path() / "lesionseg_config_test";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << content;
    return p;
}

} // namespace

TEST_CASE("key=value parsing: comments, whitespace, malformed lines") {
    const fs::path p = write_file("basic.cfg",
                                  "# full-line comment\n"
                                  "net.depth = 2\n"
                                  "\n"
                                  "train.lr_max=0.2   # trailing comment\n"
                                  "  paths.data   =   my_images  \n");
    const auto kv = parse_key_value_file(p);
    CHECK(kv.at("net.depth") == "2");
    CHECK(kv.at("train.lr_max") == "0.2");
    CHECK(kv.at("paths.data") == "my_images");

    CHECK_THROWS_AS(parse_key_value_file(write_file("bad.cfg", "no equals sign here\n")), UsageError);
    CHECK_THROWS_AS(parse_key_value_file(fs::path("/nonexistent/x.cfg")), DataError);
}

TEST_CASE("run config: applied values, unknown keys, bad values") {
    const fs::path p = write_file("run.cfg",
                                  "net.base_filters = 8\n"
                                  "net.hypercolumn = false\n"
                                  "train.size = 64\n"
                                  "train.lr_min = 0.002\n"
                                  "aug.dihedral.p = 0.9\n"
                                  "post.relief = grad_mag\n"
                                  "post.largest_only = true\n"
                                  "score.tau = 0.5\n"
                                  "score.both_empty = zero\n"
                                  "tta.set = id,hflip\n"
                                  "synth.count = 20\n"
                                  "paths.model = snapshots\n");
    const RunConfig cfg = load_run_config(p);
    CHECK(cfg.train.net.base_filters == 8);
    CHECK(cfg.train.net.hypercolumn == false);
    CHECK(cfg.train.input_size == 64);
    CHECK(cfg.train.lr_min == 0.002f);
    CHECK(cfg.train.aug.dihedral.p == 0.9f);
    CHECK(cfg.post.relief == ReliefKind::gradient_magnitude);
    CHECK(cfg.post.largest_only == true);
    CHECK(cfg.tau == doctest::Approx(0.5));
    CHECK(cfg.both_empty == 0.0);
    REQUIRE(cfg.tta.elements.size() == 2);
    CHECK(cfg.tta.elements[0] == Dihedral::identity);
    CHECK(cfg.tta.elements[1] == Dihedral::hflip);
    CHECK(cfg.synth.count == 20);
    CHECK(cfg.paths.model == "snapshots");

    // untouched keys keep their defaults
    CHECK(cfg.train.momentum == 0.9f);
    CHECK(cfg.train.loss.bce == 0.5f);
    CHECK(cfg.post.erode_radius == 2);
    CHECK(cfg.split_k == 5);

    RunConfig fresh;
    CHECK_THROWS_WITH_AS(apply_config_key(fresh, "net.depht", "3"), doctest::Contains("unknown config key"),
                         UsageError);
    CHECK_THROWS_AS(apply_config_key(fresh, "net.depth", "three"), UsageError);
    CHECK_THROWS_AS(apply_config_key(fresh, "net.hypercolumn", "maybe"), UsageError);
    CHECK_THROWS_AS(apply_config_key(fresh, "post.relief", "bumpy"), UsageError);
    CHECK_THROWS_AS(apply_config_key(fresh, "tta.set", "id,rot45"), UsageError);
}

TEST_CASE("config reference lists every key with a default") {
    const std::string ref = config_reference();
    for (const char* key :
         {"net.base_filters", "net.depth", "net.hypercolumn", "net.bn_eps", "net.bn_momentum",
          "train.size", "train.epochs_per_cycle", "train.cycles", "train.lr_max", "train.lr_min",
          "train.momentum", "train.batch_size", "train.fold", "train.seed", "train.save_best",
          "loss.bce_weight", "loss.dice_weight", "loss.dice_smooth", "aug.seed",
          "aug.motion_blur.p", "aug.median_blur.p", "aug.contrast.p", "aug.brightness.p",
          "aug.shift_scale_rotate.p", "aug.clahe.p", "aug.sharpen.p", "aug.grid_distort.p",
          "aug.hue_saturation.p", "aug.to_gray.p", "aug.dihedral.p", "post.threshold",
          "post.erode_radius", "post.dilate_radius", "post.largest_only", "post.relief", "score.tau",
          "score.both_empty", "tta.set", "split.k", "split.bins", "split.seed", "synth.count",
          "synth.size", "synth.axis_min", "synth.axis_max", "synth.noise_sigma", "synth.seed",
          "paths.data", "paths.out", "paths.stats", "paths.folds", "paths.model"})
        CHECK(ref.find(key) != std::string::npos);
}

TEST_CASE("stats file round trip") {
    ChannelStats stats;
    stats.mean = {0.25f, 0.5f, 0.75f};
    stats.std = {0.1f, 0.2f, 0.3f};
    const fs::path p = fs::temp_directory_path() / "lesionseg_config_test" / "stats.txt";
    save_stats_file(stats, p);
    const ChannelStats back = load_stats_file(p);
    for (int c = 0; c < 3; ++c) {
        CHECK(back.mean[c] == stats.mean[c]);
        CHECK(back.std[c] == stats.std[c]);
    }
    CHECK_THROWS_AS(load_stats_file(write_file("short_stats.txt", "mean_r = 0.5\n")), DataError);
}

TEST_CASE("folds csv round trip") {
    FoldAssignment folds;
    folds["img_b"] = 2;
    folds["img_a"] = 0;
    folds["img_c"] = 1;
    const fs::path p = fs::temp_directory_path() / "lesionseg_config_test" / "folds.csv";
    save_folds_csv(folds, p);

    std::ifstream in(p);
    std::string first;
    std::getline(in, first);
    CHECK(first == "image_id,fold");
    std::string second;
    std::getline(in, second);
    CHECK(second == "img_a,0"); // sorted by id

    const FoldAssignment back = load_folds_csv(p);
    CHECK(back == folds);
    CHECK_THROWS_AS(load_folds_csv(write_file("bad_folds.csv", "id,fold\n")), DataError);
}

TEST_CASE("tta set string round trip") {
    const TtaSet def = TtaSet::default_set();
    CHECK(def.elements.size() == 7);
    CHECK(tta_set_to_string(def) == "id,rot90,rot180,rot270,hflip,vflip,transpose");
    const TtaSet back = parse_tta_set(tta_set_to_string(def));
    CHECK(back.elements == def.elements);
    CHECK_THROWS_AS(parse_tta_set(""), UsageError);
}
