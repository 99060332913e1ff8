#include "lesionseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lesionseg/error.hpp"
#include "lesionseg/postproc.hpp"
#include "lesionseg/sha256.hpp"

namespace lesionseg {

FoldAssignment stratified_folds(const std::vector<ImageSample>& samples, int k, int bins,
                                std::uint64_t seed) {
    if (k < 2) throw Error("stratified folds need k >= 2");
    if (static_cast<int>(samples.size()) < k)
        throw Error("cannot split " + std::to_string(samples.size()) + " samples into " +
                    std::to_string(k) + " folds");
    bins = std::max(1, bins);

    struct Entry {
        double area;
        std::string id;
    };
    std::vector<Entry> entries;
    entries.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.mask) throw Error("stratified folds require a mask for every sample; missing for " + s.id);
        std::size_t fg = 0;
        for (auto v : s.mask->data) fg += v != 0;
        entries.push_back({static_cast<double>(fg) / static_cast<double>(s.mask->data.size()), s.id});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.area != b.area ? a.area < b.area : a.id < b.id;
    });

    Rng rng(seed);
    FoldAssignment folds;
    const std::size_t n = entries.size();
    int cursor = 0; // persists across bins so global fold sizes stay balanced
    for (int b = 0; b < bins; ++b) {
        const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(bins);
        const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(bins);
        std::vector<std::string> bin_ids;
        for (std::size_t i = lo; i < hi; ++i) bin_ids.push_back(entries[i].id);
        rng.shuffle(bin_ids);
        for (const auto& id : bin_ids) {
            folds[id] = cursor;
            cursor = (cursor + 1) % k;
        }
    }
    return folds;
}

double cyclic_lr(double t, double epochs_per_cycle, double lr_max, double lr_min) {
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * t / epochs_per_cycle));
}

void sgd_step(Params& params, const Params& grads, Params& velocity, float lr, float momentum) {
    for (auto& [name, w] : params) {
        if (!is_learnable(name)) continue;
        if (!grads.contains(name)) throw Error("sgd_step: no gradient for learnable tensor " + name);
        const Tensor& g = grads.at(name);
        if (!velocity.contains(name)) {
            Tensor z = w;
            z.fill(0.0f);
            velocity.add(name, std::move(z));
        }
        Tensor& v = velocity.at(name);
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            v.data[i] = momentum * v.data[i] + g.data[i];
            w.data[i] -= lr * v.data[i];
        }
    }
}

std::array<std::uint8_t, 32> config_digest(const TrainConfig& config) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "net.base_filters=%d;net.depth=%d;net.hypercolumn=%d;net.bn_eps=%.9g;"
                  "net.bn_momentum=%.9g;train.size=%d",
                  config.net.base_filters, config.net.depth, config.net.hypercolumn ? 1 : 0,
                  static_cast<double>(config.net.bn_eps), static_cast<double>(config.net.bn_momentum),
                  config.input_size);
    return sha256(std::string(buf));
}

std::string format_log_line(const EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "cycle=%d epoch=%d lr=%.6g loss=%.6f val_jaccard=%.6f", e.cycle,
                  e.epoch, e.lr, e.loss, e.val_jaccard);
    return buf;
}

namespace {

struct PreparedSample {
    ImageF image; // resized, [0, 1]
    Mask mask;    // resized, {0, 255}
};

PreparedSample prepare(const ImageSample& sample, int size) {
    PreparedSample out;
    out.image = resize_bilinear(to_float(sample.pixels), size, size);
    if (sample.mask) out.mask = resize_nearest(*sample.mask, size, size);
    return out;
}

// Stack normalized images into one (B, 3, S, S) tensor and the {0,1} targets
// into a flat vector in the same pixel order as the logits.
void assemble_batch(const std::vector<PreparedSample>& items, const ChannelStats& stats, Tensor& x,
                    std::vector<float>& target) {
    const int b = static_cast<int>(items.size());
    const int s = items[0].image.h;
    x = Tensor(b, 3, s, s);
    target.assign(static_cast<std::size_t>(b) * s * s, 0.0f);
    for (int i = 0; i < b; ++i) {
        const Tensor xi = normalize(items[i].image, stats);
        std::copy(xi.data.begin(), xi.data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i) * 3 * s * s);
        for (int y = 0; y < s; ++y)
            for (int xx = 0; xx < s; ++xx)
                target[(static_cast<std::size_t>(i) * s + y) * s + xx] =
                    items[i].mask.at(y, xx) != 0 ? 1.0f : 0.0f;
    }
}

double validation_jaccard(UNet& net, const std::vector<ImageSample>& val_samples,
                          const ChannelStats& stats, int size) {
    if (val_samples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : val_samples) {
        PreparedSample ps = prepare(s, size);
        const Tensor logits = net.forward(normalize(ps.image, stats), NetMode::eval);
        ProbMap p(size, size);
        for (std::size_t i = 0; i < p.data.size(); ++i)
            p.data[i] = 1.0f / (1.0f + std::exp(-logits.data[i]));
        sum += jaccard(binarize(p, 0.5f), ps.mask);
    }
    return sum / static_cast<double>(val_samples.size());
}

} // namespace

TrainResult train(const std::vector<ImageSample>& train_samples,
                  const std::vector<ImageSample>& val_samples, const TrainConfig& config,
                  const ChannelStats& stats, const Params* warm_start) {
    if (train_samples.empty()) throw Error("training set is empty");
    if (config.epochs_per_cycle < 1 || config.cycles < 1)
        throw Error("training needs epochs_per_cycle >= 1 and cycles >= 1");
    if (config.batch_size < 1) throw Error("batch size must be >= 1");
    if (config.lr_min < 0.0f || config.lr_max < config.lr_min)
        throw Error("learning rates must satisfy lr_max >= lr_min >= 0");
    for (const auto& s : train_samples)
        if (!s.mask) throw Error("training sample " + s.id + " has no mask");
    for (const auto& s : val_samples)
        if (!s.mask) throw Error("validation sample " + s.id + " has no mask");

    UNet net(config.net);
    if (warm_start) {
        net.params() = *warm_start;
    } else {
        Rng init_rng = Rng::stream(config.seed, 1);
        net.init(init_rng);
    }

    const auto digest = config_digest(config);
    const int size = config.input_size;

    TrainResult result;
    Params velocity;
    double best_val = -1.0;

    for (int cycle = 0; cycle < config.cycles; ++cycle) {
        double last_lr = 0.0;
        for (int epoch = 0; epoch < config.epochs_per_cycle; ++epoch) {
            const int global_epoch = cycle * config.epochs_per_cycle + epoch;
            const double lr = cyclic_lr(epoch, config.epochs_per_cycle, config.lr_max, config.lr_min);
            last_lr = lr;

            std::vector<std::size_t> order(train_samples.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            Rng shuffle_rng = Rng::stream(config.seed, 2, static_cast<std::uint64_t>(global_epoch));
            shuffle_rng.shuffle(order);

            double loss_sum = 0.0; // pixel-weighted across batches
            std::size_t pixel_count = 0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
                std::vector<PreparedSample> items;
                for (std::size_t i = start; i < stop; ++i) {
                    const ImageSample& sample = train_samples[order[i]];
                    PreparedSample ps = prepare(sample, size);
                    Rng aug_rng = Rng::stream(config.aug.seed, 3, static_cast<std::uint64_t>(global_epoch),
                                              order[i]);
                    const auto pipeline = sample_pipeline(config.aug, aug_rng);
                    apply_pipeline(pipeline, ps.image, &ps.mask);
                    items.push_back(std::move(ps));
                }

                Tensor x;
                std::vector<float> target;
                assemble_batch(items, stats, x, target);

                UNetCache cache;
                const Tensor logits = net.forward(x, NetMode::train, &cache);
                Tensor p = sigmoid(logits);
                const LossResult lr_res = composite_loss(p.data, target, config.loss, config.dice_smooth);
                if (!std::isfinite(lr_res.loss))
                    throw Error("training diverged: non-finite loss at cycle " + std::to_string(cycle) +
                                " epoch " + std::to_string(epoch));

                Tensor dp = logits; // same shape
                dp.data = lr_res.grad;
                const Tensor dlogits = sigmoid_backward(p, dp);
                const Params grads = net.backward(cache, dlogits);
                sgd_step(net.params(), grads, velocity, static_cast<float>(lr), config.momentum);

                loss_sum += lr_res.loss * static_cast<double>(target.size());
                pixel_count += target.size();
            }

            EpochLog log;
            log.cycle = cycle;
            log.epoch = epoch;
            log.lr = lr;
            log.loss = loss_sum / static_cast<double>(pixel_count);
            log.val_jaccard = validation_jaccard(net, val_samples, stats, size);
            result.log.push_back(log);

            if (config.save_best && log.val_jaccard > best_val) {
                best_val = log.val_jaccard;
                result.best.params = net.params();
                result.best.cycle = static_cast<std::uint32_t>(cycle);
                result.best.epoch = static_cast<std::uint32_t>(epoch);
                result.best.lr = static_cast<float>(lr);
                result.best.config_digest = digest;
                result.has_best = true;
            }
        }

        Checkpoint snapshot;
        snapshot.params = net.params();
        snapshot.cycle = static_cast<std::uint32_t>(cycle);
        snapshot.epoch = static_cast<std::uint32_t>(config.epochs_per_cycle - 1);
        snapshot.lr = static_cast<float>(last_lr);
        snapshot.config_digest = digest;
        result.checkpoints.push_back(std::move(snapshot));
    }
    return result;
}

} // namespace lesionseg
