#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lesionseg/augment.hpp"
#include "lesionseg/checkpoint.hpp"
#include "lesionseg/image.hpp"
#include "lesionseg/metrics.hpp"
#include "lesionseg/net.hpp"

namespace lesionseg {

// sample id -> fold index in [0, k)
using FoldAssignment = std::map<std::string, int>;

// Stratifies on lesion area fraction: samples are ranked by mask area,
// discretized into `bins` equal-frequency bins, shuffled within each bin by
// seed and dealt round-robin to folds with a cursor that persists across
// bins (so global fold sizes also differ by at most one).
FoldAssignment stratified_folds(const std::vector<ImageSample>& samples, int k, int bins,
                                std::uint64_t seed);

// Cosine annealing within one cycle: lr(t) = lr_min + (lr_max - lr_min) *
// (1 + cos(pi * t / T)) / 2. Restarts reset t to 0.
double cyclic_lr(double t, double epochs_per_cycle, double lr_max, double lr_min);

// v <- momentum * v + g;  w <- w - lr * v. Velocity entries are created on
// first use; a learnable parameter without a gradient is an error.
void sgd_step(Params& params, const Params& grads, Params& velocity, float lr, float momentum);

struct TrainConfig {
    int epochs_per_cycle = 50;
    int cycles = 2;
    float lr_max = 0.1f;
    float lr_min = 0.001f;
    float momentum = 0.9f;
    int batch_size = 4;
    int fold = 0; // held-out fold (used by the CLI to build the sample sets)
    std::uint64_t seed = 42;
    int input_size = 224; // images are resized to this square
    bool save_best = false;
    LossWeights loss;
    float dice_smooth = 1.0f;
    UNetConfig net;
    AugConfig aug;
};

// Digest over the architecture-defining configuration (net shape + input
// size); snapshots from compatible runs share it.
std::array<std::uint8_t, 32> config_digest(const TrainConfig& config);

struct EpochLog {
    int cycle = 0;
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double val_jaccard = 0.0;
};

std::string format_log_line(const EpochLog& e);

struct TrainResult {
    std::vector<Checkpoint> checkpoints; // one per cycle, cycle index 0..C-1
    std::vector<EpochLog> log;
    Checkpoint best; // highest validation Jaccard epoch; only if save_best
    bool has_best = false;
};

// The full loop: per cycle, per epoch: cosine LR, seeded batch shuffle, fresh
// augmentation per sample per epoch, composite-loss backward, SGD step; a
// snapshot checkpoint at every cycle end. Aborts if the loss goes non-finite.
// `stats` is the dataset normalization (see compute_dataset_stats);
// `warm_start` optionally resumes from an existing parameter table.
TrainResult train(const std::vector<ImageSample>& train_samples,
                  const std::vector<ImageSample>& val_samples, const TrainConfig& config,
                  const ChannelStats& stats, const Params* warm_start = nullptr);

} // namespace lesionseg
