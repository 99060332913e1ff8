#include "lesionseg/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "lesionseg/error.hpp"

namespace lesionseg {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

float to_float(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const float r = std::stof(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config key '" + key + "' expects true/false, got '" + v + "'");
}

struct KeyDef {
    const char* key;
    const char* preset; // printed default
    const char* desc;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

// Central schema: one row per config key. --help prints this table; the
// parser rejects anything not listed here.
const std::vector<KeyDef>& schema() {
    static const std::vector<KeyDef> defs = [] {
        std::vector<KeyDef> d;
        auto add = [&d](const char* k, const char* preset, const char* desc, auto setter) {
            d.push_back({k, preset, desc,
                         [setter](RunConfig& c, const std::string& key, const std::string& v) {
                             setter(c, key, v);
                         }});
        };

        // network
        add("net.base_filters", "16", "stem output channels; stage i uses base*2^i",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.net.base_filters = to_int(k, v); });
        add("net.depth", "3", "encoder stages after the stem",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.net.depth = to_int(k, v); });
        add("net.hypercolumn", "true", "concatenate all decoder stages before the head",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.net.hypercolumn = to_bool(k, v); });
        add("net.bn_eps", "1e-5", "batch-norm variance epsilon",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.net.bn_eps = to_float(k, v); });
        add("net.bn_momentum", "0.1", "running-stat update momentum",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.net.bn_momentum = to_float(k, v); });

        // training
        add("train.size", "224", "square input resolution fed to the network",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.input_size = to_int(k, v); });
        add("train.epochs_per_cycle", "50", "epochs per learning-rate cycle",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs_per_cycle = to_int(k, v); });
        add("train.cycles", "2", "cosine cycles; one snapshot per cycle",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.cycles = to_int(k, v); });
        add("train.lr_max", "0.1", "learning rate at each cycle start",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr_max = to_float(k, v); });
        add("train.lr_min", "0.001", "learning rate floor at cycle end",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr_min = to_float(k, v); });
        add("train.momentum", "0.9", "SGD momentum",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.momentum = to_float(k, v); });
        add("train.batch_size", "4", "samples per optimizer step",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_int(k, v); });
        add("train.fold", "0", "held-out validation fold index",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.fold = to_int(k, v); });
        add("train.seed", "42", "master training seed",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = to_u64(k, v); });
        add("train.save_best", "false", "also keep the best-validation epoch as best.ckpt",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.save_best = to_bool(k, v); });

        // loss
        add("loss.bce_weight", "0.5", "weight of the cross-entropy term",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.loss.bce = to_float(k, v); });
        add("loss.dice_weight", "0.5", "weight of the (1 - dice) term",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.loss.dice = to_float(k, v); });
        add("loss.dice_smooth", "1.0", "soft-dice smoothing constant",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.dice_smooth = to_float(k, v); });

        // augmentation
        auto aug = [](RunConfig& c) -> AugConfig& { return c.train.aug; };
        add("aug.seed", "1", "augmentation stream seed",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).seed = to_u64(k, v); });
        add("aug.motion_blur.enabled", "true", "line-kernel blur",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).motion_blur.enabled = to_bool(k, v); });
        add("aug.motion_blur.p", "0.1", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).motion_blur.p = to_float(k, v); });
        add("aug.motion_blur.length_min", "3", "kernel length lower bound (px)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).motion_blur.length.lo = to_float(k, v); });
        add("aug.motion_blur.length_max", "7", "kernel length upper bound (px)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).motion_blur.length.hi = to_float(k, v); });
        add("aug.motion_blur.angle_min", "0", "line angle lower bound (rad)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).motion_blur.angle.lo = to_float(k, v); });
        add("aug.motion_blur.angle_max", "3.14159265", "line angle upper bound (rad)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).motion_blur.angle.hi = to_float(k, v); });
        add("aug.median_blur.enabled", "true", "median filter",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).median_blur.enabled = to_bool(k, v); });
        add("aug.median_blur.p", "0.1", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).median_blur.p = to_float(k, v); });
        add("aug.median_blur.k_min", "3", "kernel lower bound (odd)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).median_blur.kernel.lo = to_float(k, v); });
        add("aug.median_blur.k_max", "5", "kernel upper bound (odd)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).median_blur.kernel.hi = to_float(k, v); });
        add("aug.contrast.enabled", "true", "contrast scaling about the image mean",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).contrast.enabled = to_bool(k, v); });
        add("aug.contrast.p", "0.3", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).contrast.p = to_float(k, v); });
        add("aug.contrast.alpha_min", "-0.2", "contrast delta lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).contrast.alpha.lo = to_float(k, v); });
        add("aug.contrast.alpha_max", "0.2", "contrast delta upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).contrast.alpha.hi = to_float(k, v); });
        add("aug.brightness.enabled", "true", "additive brightness",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).brightness.enabled = to_bool(k, v); });
        add("aug.brightness.p", "0.3", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).brightness.p = to_float(k, v); });
        add("aug.brightness.beta_min", "-0.2", "brightness shift lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).brightness.beta.lo = to_float(k, v); });
        add("aug.brightness.beta_max", "0.2", "brightness shift upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).brightness.beta.hi = to_float(k, v); });
        add("aug.shift_scale_rotate.enabled", "true", "affine warp (reflect borders)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.enabled = to_bool(k, v); });
        add("aug.shift_scale_rotate.p", "0.5", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.p = to_float(k, v); });
        add("aug.shift_scale_rotate.shift_min", "-0.0625", "translation lower bound (fraction)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.shift.lo = to_float(k, v); });
        add("aug.shift_scale_rotate.shift_max", "0.0625", "translation upper bound (fraction)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.shift.hi = to_float(k, v); });
        add("aug.shift_scale_rotate.scale_min", "0.9", "scale lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.scale.lo = to_float(k, v); });
        add("aug.shift_scale_rotate.scale_max", "1.1", "scale upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.scale.hi = to_float(k, v); });
        add("aug.shift_scale_rotate.angle_min", "-0.2618", "rotation lower bound (rad)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.angle.lo = to_float(k, v); });
        add("aug.shift_scale_rotate.angle_max", "0.2618", "rotation upper bound (rad)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).shift_scale_rotate.angle.hi = to_float(k, v); });
        add("aug.clahe.enabled", "true", "adaptive histogram equalization on V",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).clahe.enabled = to_bool(k, v); });
        add("aug.clahe.p", "0.1", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).clahe.p = to_float(k, v); });
        add("aug.clahe.clip_min", "1.0", "clip-limit lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).clahe.clip.lo = to_float(k, v); });
        add("aug.clahe.clip_max", "3.0", "clip-limit upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).clahe.clip.hi = to_float(k, v); });
        add("aug.clahe.tiles", "8", "tile grid size",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).clahe.tiles = to_int(k, v); });
        add("aug.sharpen.enabled", "true", "unsharp mask",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).sharpen.enabled = to_bool(k, v); });
        add("aug.sharpen.p", "0.2", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).sharpen.p = to_float(k, v); });
        add("aug.sharpen.amount_min", "0.1", "sharpen strength lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).sharpen.amount.lo = to_float(k, v); });
        add("aug.sharpen.amount_max", "0.5", "sharpen strength upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).sharpen.amount.hi = to_float(k, v); });
        add("aug.sharpen.radius_min", "0.5", "gaussian radius lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).sharpen.radius.lo = to_float(k, v); });
        add("aug.sharpen.radius_max", "1.5", "gaussian radius upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).sharpen.radius.hi = to_float(k, v); });
        add("aug.grid_distort.enabled", "true", "control-grid warp",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).grid_distort.enabled = to_bool(k, v); });
        add("aug.grid_distort.p", "0.2", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).grid_distort.p = to_float(k, v); });
        add("aug.grid_distort.cells_min", "3", "grid cells lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).grid_distort.cells.lo = to_float(k, v); });
        add("aug.grid_distort.cells_max", "5", "grid cells upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).grid_distort.cells.hi = to_float(k, v); });
        add("aug.grid_distort.offset_min", "1.0", "node offset lower bound (px)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).grid_distort.offset.lo = to_float(k, v); });
        add("aug.grid_distort.offset_max", "4.0", "node offset upper bound (px)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).grid_distort.offset.hi = to_float(k, v); });
        add("aug.hue_saturation.enabled", "true", "HSV shifts",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.enabled = to_bool(k, v); });
        add("aug.hue_saturation.p", "0.3", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.p = to_float(k, v); });
        add("aug.hue_saturation.hue_min", "-0.05", "hue shift lower bound (turns)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.hue.lo = to_float(k, v); });
        add("aug.hue_saturation.hue_max", "0.05", "hue shift upper bound (turns)",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.hue.hi = to_float(k, v); });
        add("aug.hue_saturation.sat_min", "-0.1", "saturation shift lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.sat.lo = to_float(k, v); });
        add("aug.hue_saturation.sat_max", "0.1", "saturation shift upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.sat.hi = to_float(k, v); });
        add("aug.hue_saturation.val_min", "-0.1", "value shift lower bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.val.lo = to_float(k, v); });
        add("aug.hue_saturation.val_max", "0.1", "value shift upper bound",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).hue_saturation.val.hi = to_float(k, v); });
        add("aug.to_gray.enabled", "true", "luma desaturation",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).to_gray.enabled = to_bool(k, v); });
        add("aug.to_gray.p", "0.05", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).to_gray.p = to_float(k, v); });
        add("aug.dihedral.enabled", "true", "random square symmetry",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).dihedral.enabled = to_bool(k, v); });
        add("aug.dihedral.p", "0.5", "application probability",
            [aug](RunConfig& c, const std::string& k, const std::string& v) { aug(c).dihedral.p = to_float(k, v); });

        // post-processing
        add("post.threshold", "0.5", "probability binarization threshold",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.post.threshold = to_float(k, v); });
        add("post.erode_radius", "2", "marker erosion radius",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.post.erode_radius = to_int(k, v); });
        add("post.dilate_radius", "2", "domain dilation radius",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.post.dilate_radius = to_int(k, v); });
        add("post.largest_only", "false", "seed only the largest component",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.post.largest_only = to_bool(k, v); });
        add("post.relief", "inv_prob", "flood relief: inv_prob or grad_mag",
            [](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "inv_prob") c.post.relief = ReliefKind::inverse_probability;
                else if (v == "grad_mag") c.post.relief = ReliefKind::gradient_magnitude;
                else throw UsageError("config key '" + k + "' expects inv_prob or grad_mag, got '" + v + "'");
            });

        // scoring
        add("score.tau", "0.65", "thresholded-Jaccard cutoff",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.tau = to_float(k, v); });
        add("score.both_empty", "one", "empty-vs-empty metric value: one or zero",
            [](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "one") c.both_empty = 1.0;
                else if (v == "zero") c.both_empty = 0.0;
                else throw UsageError("config key '" + k + "' expects one or zero, got '" + v + "'");
            });

        // TTA
        add("tta.set", "id,rot90,rot180,rot270,hflip,vflip,transpose", "comma list of square symmetries",
            [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.tta = parse_tta_set(v); });

        // folds
        add("split.k", "5", "number of folds",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.split_k = to_int(k, v); });
        add("split.bins", "5", "area-fraction stratification bins",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.split_bins = to_int(k, v); });
        add("split.seed", "42", "fold shuffling seed",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.split_seed = to_u64(k, v); });

        // synthetic data
        add("synth.count", "12", "number of generated samples",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.count = to_int(k, v); });
        add("synth.size", "64", "generated image size",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.size = to_int(k, v); });
        add("synth.axis_min", "10", "ellipse semi-axis lower bound (px)",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.axis_min = to_float(k, v); });
        add("synth.axis_max", "24", "ellipse semi-axis upper bound (px)",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.axis_max = to_float(k, v); });
        add("synth.fg_min", "0.55", "lesion color lower bound",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.fg_min = to_float(k, v); });
        add("synth.fg_max", "0.95", "lesion color upper bound",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.fg_max = to_float(k, v); });
        add("synth.bg_min", "0.05", "background color lower bound",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.bg_min = to_float(k, v); });
        add("synth.bg_max", "0.35", "background color upper bound",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.bg_max = to_float(k, v); });
        add("synth.noise_sigma", "0.02", "gaussian pixel noise",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.noise_sigma = to_float(k, v); });
        add("synth.seed", "7", "generator seed",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.seed = to_u64(k, v); });

        // paths
        add("paths.data", "data", "image/mask directory",
            [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.paths.data = v; });
        add("paths.out", "out", "output directory",
            [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.paths.out = v; });
        add("paths.stats", "stats.txt", "dataset statistics file",
            [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.paths.stats = v; });
        add("paths.folds", "folds.csv", "fold assignment file",
            [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.paths.folds = v; });
        add("paths.model", "model", "checkpoint/log directory",
            [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.paths.model = v; });
        return d;
    }();
    return defs;
}

} // namespace

std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

void apply_config_key(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& def : schema()) {
        if (key == def.key) {
            def.set(config, key, value);
            return;
        }
    }
    throw UsageError("unknown config key: '" + key + "'");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig config;
    for (const auto& [k, v] : parse_key_value_file(path)) apply_config_key(config, k, v);
    return config;
}

std::string config_reference() {
    std::string out = "configuration keys (key = value, '#' comments):\n";
    for (const auto& def : schema()) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "  %-36s %-14s %s\n", def.key, def.preset, def.desc);
        out += buf;
    }
    return out;
}

void save_stats_file(const ChannelStats& stats, const std::filesystem::path& path) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "mean_r = %.9g\nmean_g = %.9g\nmean_b = %.9g\nstd_r = %.9g\nstd_g = %.9g\nstd_b = %.9g\n",
                  stats.mean[0], stats.mean[1], stats.mean[2], stats.std[0], stats.std[1], stats.std[2]);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write " + path.string());
        out << buf;
    }
    std::filesystem::rename(tmp, path);
}

ChannelStats load_stats_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw DataError("cannot open stats file: " + path.string() + " (run the stats subcommand first)");
    const auto kv = parse_key_value_file(path);
    ChannelStats stats;
    const char* mean_keys[3] = {"mean_r", "mean_g", "mean_b"};
    const char* std_keys[3] = {"std_r", "std_g", "std_b"};
    for (int c = 0; c < 3; ++c) {
        const auto m = kv.find(mean_keys[c]);
        const auto s = kv.find(std_keys[c]);
        if (m == kv.end() || s == kv.end())
            throw DataError("stats file " + path.string() + " is missing " + mean_keys[c] + "/" + std_keys[c]);
        stats.mean[c] = to_float(mean_keys[c], m->second);
        stats.std[c] = to_float(std_keys[c], s->second);
    }
    return stats;
}

void save_folds_csv(const FoldAssignment& folds, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write " + path.string());
        out << "image_id,fold\n";
        for (const auto& [id, fold] : folds) out << id << "," << fold << "\n";
    }
    std::filesystem::rename(tmp, path);
}

FoldAssignment load_folds_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open folds file: " + path.string());
    FoldAssignment folds;
    std::string line;
    if (!std::getline(in, line) || trim(line) != "image_id,fold")
        throw DataError("folds file " + path.string() + " must start with header image_id,fold");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto comma = stripped.rfind(',');
        if (comma == std::string::npos)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected id,fold");
        folds[trim(stripped.substr(0, comma))] = to_int("fold", trim(stripped.substr(comma + 1)));
    }
    return folds;
}

std::string tta_set_to_string(const TtaSet& tta) {
    std::string out;
    for (Dihedral e : tta.elements) {
        if (!out.empty()) out += ",";
        switch (e) {
            case Dihedral::identity: out += "id"; break;
            case Dihedral::rot90: out += "rot90"; break;
            case Dihedral::rot180: out += "rot180"; break;
            case Dihedral::rot270: out += "rot270"; break;
            case Dihedral::hflip: out += "hflip"; break;
            case Dihedral::vflip: out += "vflip"; break;
            case Dihedral::transpose: out += "transpose"; break;
        }
    }
    return out;
}

TtaSet parse_tta_set(const std::string& spec) {
    TtaSet tta;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string name = trim(item);
        if (name.empty()) continue;
        if (name == "id") tta.elements.push_back(Dihedral::identity);
        else if (name == "rot90") tta.elements.push_back(Dihedral::rot90);
        else if (name == "rot180") tta.elements.push_back(Dihedral::rot180);
        else if (name == "rot270") tta.elements.push_back(Dihedral::rot270);
        else if (name == "hflip") tta.elements.push_back(Dihedral::hflip);
        else if (name == "vflip") tta.elements.push_back(Dihedral::vflip);
        else if (name == "transpose") tta.elements.push_back(Dihedral::transpose);
        else throw UsageError("unknown TTA element: '" + name + "'");
    }
    if (tta.elements.empty()) throw UsageError("TTA set is empty");
    return tta;
}

} // namespace lesionseg
