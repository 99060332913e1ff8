#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "lesionseg/ensemble.hpp"
#include "lesionseg/postproc.hpp"
#include "lesionseg/synthdata.hpp"
#include "lesionseg/train.hpp"

namespace lesionseg {

// Everything a run needs, with documented defaults. Loaded from a plain-text
// `key = value` file (# comments, UTF-8); unknown keys are rejected.
struct RunConfig {
    TrainConfig train;   // includes net, aug, loss
    RefineOptions post;
    SynthSpec synth;
    TtaSet tta = TtaSet::default_set();
    double tau = 0.65;
    double both_empty = 1.0;
    int split_k = 5;
    int split_bins = 5;
    std::uint64_t split_seed = 42;

    struct {
        std::string data = "data";
        std::string out = "out";
        std::string stats = "stats.txt";
        std::string folds = "folds.csv";
        std::string model = "model";
    } paths;
};

// key = value lines; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& path);

// Applies one key; throws UsageError on unknown keys or unparsable values.
void apply_config_key(RunConfig& config, const std::string& key, const std::string& value);

RunConfig load_run_config(const std::filesystem::path& path);

// "key  default  description" table of every config key (for --help).
std::string config_reference();

// Stats file helpers (mean_r/.../std_b as key = value).
void save_stats_file(const ChannelStats& stats, const std::filesystem::path& path);
ChannelStats load_stats_file(const std::filesystem::path& path);

// folds.csv helpers (header image_id,fold; rows sorted by id).
void save_folds_csv(const FoldAssignment& folds, const std::filesystem::path& path);
FoldAssignment load_folds_csv(const std::filesystem::path& path);

std::string tta_set_to_string(const TtaSet& tta);
TtaSet parse_tta_set(const std::string& spec);

} // namespace lesionseg
