// lesionseg command-line front end: synth | stats | split | train | predict |
// postprocess | ensemble | score. Exit codes: 0 success, 1 usage error,
// 2 data error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <vector>

#include "lesionseg/config.hpp"
#include "lesionseg/ensemble.hpp"
#include "lesionseg/error.hpp"
#include "lesionseg/metrics.hpp"
#include "lesionseg/png_io.hpp"
#include "lesionseg/postproc.hpp"
#include "lesionseg/synthdata.hpp"
#include "lesionseg/train.hpp"

namespace fs = std::filesystem;
using namespace lesionseg;

namespace {

struct Cli {
    std::string config_file;
    std::vector<std::string> sets; // --set key=value overrides
    RunConfig cfg;

    void resolve() {
        if (!config_file.empty()) cfg = load_run_config(config_file);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
            apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
    }
};

void add_common(CLI::App* cmd, Cli& cli) {
    cmd->add_option("-c,--config", cli.config_file, "run configuration file (key = value)");
    cmd->add_option("--set", cli.sets, "override one config key (key=value, repeatable)");
    cmd->footer(config_reference()); // every subcommand's --help lists all keys + defaults
}

// Sorted list of sample ids in a directory: every "<id>.png" that is not a
// "<id>_mask.png".
std::vector<std::string> image_ids(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        const std::string stem = entry.path().stem().string();
        if (stem.ends_with("_mask")) continue;
        ids.push_back(stem);
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw DataError("no .png images found in " + dir.string());
    return ids;
}

std::vector<std::string> read_id_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open id list: " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n' || line.back() == ' '))
            line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    if (ids.empty()) throw DataError("id list is empty: " + path.string());
    return ids;
}

ImageSample load_sample(const fs::path& dir, const std::string& id, bool need_mask) {
    ImageSample s = load_image(dir / (id + ".png"));
    const fs::path mask_path = dir / (id + "_mask.png");
    if (fs::exists(mask_path)) {
        s.mask = load_mask(mask_path);
        if (s.mask->h != s.pixels.h || s.mask->w != s.pixels.w)
            throw DataError("mask size differs from image for id " + id);
    } else if (need_mask) {
        throw DataError("no mask " + mask_path.string() + " for id " + id);
    }
    return s;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write " + path.string());
        out << content;
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int run_synth(Cli& cli, const std::string& out_dir) {
    cli.resolve();
    const fs::path dir = out_dir.empty() ? cli.cfg.paths.data : out_dir;
    fs::create_directories(dir);
    for (const ImageSample& s : generate(cli.cfg.synth)) {
        save_rgb8(s.pixels, dir / (s.id + ".png"));
        save_mask(*s.mask, dir / (s.id + "_mask.png"));
    }
    std::cout << "wrote " << cli.cfg.synth.count << " image/mask pairs to " << dir.string() << "\n";
    return 0;
}

int run_stats(Cli& cli, const std::string& data_dir, const std::string& out_file,
              const std::string& ids_file) {
    cli.resolve();
    const fs::path dir = data_dir.empty() ? cli.cfg.paths.data : data_dir;
    const fs::path out = out_file.empty() ? cli.cfg.paths.stats : out_file;
    const std::vector<std::string> ids = ids_file.empty() ? image_ids(dir) : read_id_file(ids_file);
    std::vector<ImageSample> samples;
    for (const auto& id : ids) samples.push_back(load_sample(dir, id, false));
    save_stats_file(compute_dataset_stats(samples), out);
    std::cout << "wrote channel stats over " << samples.size() << " images to " << out.string() << "\n";
    return 0;
}

int run_split(Cli& cli, const std::string& data_dir, const std::string& out_file, int k_override,
              int bins_override, const std::string& seed_override) {
    cli.resolve();
    if (k_override > 0) cli.cfg.split_k = k_override;
    if (bins_override > 0) cli.cfg.split_bins = bins_override;
    if (!seed_override.empty()) apply_config_key(cli.cfg, "split.seed", seed_override);
    const fs::path dir = data_dir.empty() ? cli.cfg.paths.data : data_dir;
    const fs::path out = out_file.empty() ? cli.cfg.paths.folds : out_file;
    std::vector<ImageSample> samples;
    for (const auto& id : image_ids(dir)) samples.push_back(load_sample(dir, id, true));
    save_folds_csv(stratified_folds(samples, cli.cfg.split_k, cli.cfg.split_bins, cli.cfg.split_seed), out);
    std::cout << "wrote " << cli.cfg.split_k << "-fold assignment for " << samples.size()
              << " samples to " << out.string() << "\n";
    return 0;
}

int run_train(Cli& cli, const std::string& data_dir, const std::string& stats_file,
              const std::string& folds_file, const std::string& model_dir, int fold_override) {
    cli.resolve();
    if (fold_override >= 0) cli.cfg.train.fold = fold_override;
    const fs::path dir = data_dir.empty() ? cli.cfg.paths.data : data_dir;
    const fs::path stats_path = stats_file.empty() ? cli.cfg.paths.stats : stats_file;
    const fs::path folds_path = folds_file.empty() ? cli.cfg.paths.folds : folds_file;
    const fs::path model = model_dir.empty() ? cli.cfg.paths.model : model_dir;

    const ChannelStats stats = load_stats_file(stats_path);
    const FoldAssignment folds = load_folds_csv(folds_path);
    std::vector<ImageSample> train_set, val_set;
    for (const auto& [id, fold] : folds) {
        ImageSample s = load_sample(dir, id, true);
        (fold == cli.cfg.train.fold ? val_set : train_set).push_back(std::move(s));
    }
    if (val_set.empty())
        throw DataError("held-out fold " + std::to_string(cli.cfg.train.fold) + " has no samples");

    const TrainResult result = train(train_set, val_set, cli.cfg.train, stats);

    fs::create_directories(model);
    std::string log_text;
    for (const auto& e : result.log) {
        const std::string line = format_log_line(e);
        std::cout << line << "\n";
        log_text += line + "\n";
    }
    write_text_atomic(model / "train.log", log_text);
    for (const auto& ckpt : result.checkpoints) {
        char name[48];
        std::snprintf(name, sizeof(name), "snapshot_%u.ckpt", ckpt.cycle);
        save_checkpoint(ckpt, model / name);
    }
    if (result.has_best) save_checkpoint(result.best, model / "best.ckpt");
    std::cout << "wrote " << result.checkpoints.size() << " snapshot(s) to " << model.string() << "\n";
    return 0;
}

std::vector<Checkpoint> load_model_dir(const fs::path& model) {
    if (!fs::is_directory(model)) throw DataError("not a directory: " + model.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(model))
        if (entry.is_regular_file() && entry.path().extension() == ".ckpt" &&
            entry.path().stem().string().starts_with("snapshot_"))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no snapshot_*.ckpt files in " + model.string());
    std::vector<Checkpoint> ckpts;
    for (const auto& f : files) ckpts.push_back(load_checkpoint(f));
    return ckpts;
}

int run_predict(Cli& cli, const std::string& data_dir, const std::string& stats_file,
                const std::string& model_dir, const std::string& out_dir) {
    cli.resolve();
    const fs::path dir = data_dir.empty() ? cli.cfg.paths.data : data_dir;
    const fs::path stats_path = stats_file.empty() ? cli.cfg.paths.stats : stats_file;
    const fs::path model = model_dir.empty() ? cli.cfg.paths.model : model_dir;
    const fs::path out = out_dir.empty() ? cli.cfg.paths.out : out_dir;

    const ChannelStats stats = load_stats_file(stats_path);
    const std::vector<Checkpoint> ckpts = load_model_dir(model);
    const int size = cli.cfg.train.input_size;

    fs::create_directories(out);
    int count = 0;
    for (const auto& id : image_ids(dir)) {
        const ImageSample s = load_sample(dir, id, false);
        const ImageF resized = resize_bilinear(to_float(s.pixels), size, size);
        ProbMap p = ensemble_predict(ckpts, resized, cli.cfg.tta, stats);
        if (p.h != s.pixels.h || p.w != s.pixels.w) p = resize_bilinear(p, s.pixels.h, s.pixels.w);
        save_prob_map(p, out / (id + ".png"));
        ++count;
    }
    std::cout << "wrote " << count << " probability maps to " << out.string() << "\n";
    return 0;
}

int run_postprocess(Cli& cli, const std::string& probs_dir, const std::string& out_dir) {
    cli.resolve();
    const fs::path probs = probs_dir.empty() ? cli.cfg.paths.out : probs_dir;
    const fs::path out = out_dir.empty() ? cli.cfg.paths.out + "_masks" : out_dir;
    fs::create_directories(out);
    int count = 0;
    for (const auto& id : image_ids(probs)) {
        const ProbMap p = load_prob_map(probs / (id + ".png"));
        save_mask(refine(p, cli.cfg.post), out / (id + ".png"));
        ++count;
    }
    std::cout << "wrote " << count << " masks to " << out.string() << "\n";
    return 0;
}

int run_ensemble(Cli& cli, const std::vector<std::string>& in_dirs, const std::string& out_dir) {
    cli.resolve();
    if (in_dirs.empty()) throw UsageError("ensemble needs at least one --in directory");
    const fs::path out = out_dir.empty() ? cli.cfg.paths.out : out_dir;

    const std::vector<std::string> ids = image_ids(in_dirs[0]);
    for (const auto& dir : in_dirs) {
        const auto other = image_ids(dir);
        if (other != ids)
            throw DataError("probability map ids differ between " + in_dirs[0] + " and " + dir);
    }
    fs::create_directories(out);
    for (const auto& id : ids) {
        std::vector<ProbMap> maps;
        for (const auto& dir : in_dirs) maps.push_back(load_prob_map(fs::path(dir) / (id + ".png")));
        save_prob_map(mean_ensemble(maps), out / (id + ".png"));
    }
    std::cout << "averaged " << in_dirs.size() << " map sets over " << ids.size() << " images into "
              << out.string() << "\n";
    return 0;
}

int run_score(Cli& cli, const std::string& pred_dir, const std::string& gt_dir,
              const std::string& out_file, const std::string& ids_file) {
    cli.resolve();
    const fs::path pred = pred_dir.empty() ? cli.cfg.paths.out : pred_dir;
    const fs::path gt = gt_dir.empty() ? cli.cfg.paths.data : gt_dir;
    const fs::path out = out_file.empty() ? fs::path(cli.cfg.paths.out) / "scores.csv" : fs::path(out_file);

    // Ground truth may live as "<id>_mask.png" next to the images or as
    // plain "<id>.png" mask files.
    auto gt_path = [&](const std::string& id) {
        const fs::path with_suffix = gt / (id + "_mask.png");
        return fs::exists(with_suffix) ? with_suffix : gt / (id + ".png");
    };

    std::vector<std::string> ids;
    if (!ids_file.empty()) {
        ids = read_id_file(ids_file);
    } else {
        ids = image_ids(pred);
        std::set<std::string> gt_ids;
        for (const auto& entry : fs::directory_iterator(gt)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
            std::string stem = entry.path().stem().string();
            if (stem.ends_with("_mask")) stem.resize(stem.size() - 5);
            gt_ids.insert(stem);
        }
        for (const auto& id : gt_ids)
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
    }

    std::vector<std::pair<std::string, Mask>> preds, gts;
    std::string absent;
    for (const auto& id : ids) {
        const fs::path pp = pred / (id + ".png");
        const fs::path gp = gt_path(id);
        if (!fs::exists(pp) && !fs::exists(gp)) {
            absent += " " + id;
            continue;
        }
        if (fs::exists(pp)) preds.emplace_back(id, load_mask(pp));
        if (fs::exists(gp)) gts.emplace_back(id, load_mask(gp));
    }
    if (!absent.empty())
        throw DataError("ids with neither prediction nor ground truth:" + absent);
    const ScoreReport report = score_report(preds, gts, cli.cfg.tau, cli.cfg.both_empty);
    write_text_atomic(out, score_report_csv(report));
    std::cout << "dice=" << report.aggregate.dice << " jaccard=" << report.aggregate.jaccard
              << " thresholded_jaccard=" << report.aggregate.thresholded_jaccard << " -> " << out.string()
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lesion boundary segmentation pipeline"};
    app.require_subcommand(0, 1);

    bool help_config = false;
    app.add_flag("--help-config", help_config, "print every configuration key with its default");

    Cli cli;
    std::string data_dir, out_dir, stats_file, folds_file, model_dir, ids_file, probs_dir, pred_dir,
        gt_dir, out_file;
    std::vector<std::string> in_dirs;
    int fold_override = -1;
    int k_override = -1, bins_override = -1;
    std::string seed_override;

    auto* synth = app.add_subcommand("synth", "generate synthetic image/mask pairs");
    add_common(synth, cli);
    synth->add_option("-o,--out", out_dir, "output directory (default: paths.data)");

    auto* stats = app.add_subcommand("stats", "compute dataset channel statistics");
    add_common(stats, cli);
    stats->add_option("-d,--data", data_dir, "image directory (default: paths.data)");
    stats->add_option("-o,--out", out_file, "stats file (default: paths.stats)");
    stats->add_option("--ids", ids_file, "restrict to ids listed in this file");

    auto* split = app.add_subcommand("split", "assign stratified cross-validation folds");
    add_common(split, cli);
    split->add_option("-d,--data", data_dir, "image/mask directory (default: paths.data)");
    split->add_option("-o,--out", out_file, "folds csv (default: paths.folds)");
    split->add_option("-k,--k", k_override, "number of folds (default: split.k = 5)");
    split->add_option("--bins", bins_override, "stratification bins (default: split.bins = 5)");
    split->add_option("--seed", seed_override, "shuffle seed (default: split.seed = 42)");

    auto* train_cmd = app.add_subcommand("train", "train and write one snapshot per cycle");
    add_common(train_cmd, cli);
    train_cmd->add_option("-d,--data", data_dir, "image/mask directory (default: paths.data)");
    train_cmd->add_option("--stats", stats_file, "stats file (default: paths.stats)");
    train_cmd->add_option("--folds", folds_file, "folds csv (default: paths.folds)");
    train_cmd->add_option("--fold", fold_override, "held-out fold (default: train.fold)");
    train_cmd->add_option("-o,--out", model_dir, "model directory (default: paths.model)");

    auto* predict = app.add_subcommand("predict", "run the snapshot ensemble with TTA");
    add_common(predict, cli);
    predict->add_option("-d,--data", data_dir, "image directory (default: paths.data)");
    predict->add_option("--stats", stats_file, "stats file (default: paths.stats)");
    predict->add_option("-m,--model", model_dir, "checkpoint directory (default: paths.model)");
    predict->add_option("-o,--out", out_dir, "probability map directory (default: paths.out)");

    auto* post = app.add_subcommand("postprocess", "binarize + watershed-refine probability maps");
    add_common(post, cli);
    post->add_option("-p,--probs", probs_dir, "probability map directory (default: paths.out)");
    post->add_option("-o,--out", out_dir, "mask directory (default: paths.out + \"_masks\")");

    auto* ens = app.add_subcommand("ensemble", "average probability map directories");
    add_common(ens, cli);
    ens->add_option("-i,--in", in_dirs, "input probability directories")->required();
    ens->add_option("-o,--out", out_dir, "output directory (default: paths.out)");

    auto* score = app.add_subcommand("score", "score predicted masks against ground truth");
    add_common(score, cli);
    score->add_option("-p,--pred", pred_dir, "predicted mask directory (default: paths.out)");
    score->add_option("-g,--gt", gt_dir, "ground-truth directory (default: paths.data)");
    score->add_option("-o,--out", out_file, "score csv (default: paths.out/scores.csv)");
    score->add_option("--ids", ids_file, "restrict to ids listed in this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the parse error
        return code == 0 ? 0 : 1;     // usage problems always exit 1
    }

    try {
        if (help_config) {
            std::cout << config_reference();
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cerr << app.help();
            return 1;
        }
        if (synth->parsed()) return run_synth(cli, out_dir);
        if (stats->parsed()) return run_stats(cli, data_dir, out_file, ids_file);
        if (split->parsed()) return run_split(cli, data_dir, out_file, k_override, bins_override, seed_override);
        if (train_cmd->parsed())
            return run_train(cli, data_dir, stats_file, folds_file, model_dir, fold_override);
        if (predict->parsed()) return run_predict(cli, data_dir, stats_file, model_dir, out_dir);
        if (post->parsed()) return run_postprocess(cli, probs_dir, out_dir);
        if (ens->parsed()) return run_ensemble(cli, in_dirs, out_dir);
        if (score->parsed()) return run_score(cli, pred_dir, gt_dir, out_file, ids_file);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
