#include "lesionseg/ensemble.hpp"

#include <cmath>
#include <cstring>

#include "lesionseg/error.hpp"
#include "lesionseg/net.hpp"

namespace lesionseg {

namespace {

bool needs_square(const TtaSet& tta) {
    for (Dihedral e : tta.elements)
        if (e == Dihedral::rot90 || e == Dihedral::rot270 || e == Dihedral::transpose) return true;
    return false;
}

} // namespace

ProbMap tta_predict(const PredictFn& predict, const ImageF& image, const TtaSet& tta) {
    if (tta.elements.empty()) throw Error("TTA set is empty");
    if (needs_square(tta) && image.h != image.w)
        throw Error("TTA with rotations/transpose requires a square image, got " +
                    std::to_string(image.h) + "x" + std::to_string(image.w));

    std::vector<double> acc(static_cast<std::size_t>(image.h) * image.w, 0.0);
    for (Dihedral g : tta.elements) {
        const ProbMap p = apply_dihedral(predict(apply_dihedral(image, g)), invert_dihedral(g));
        if (p.h != image.h || p.w != image.w)
            throw Error("TTA predictor changed the map shape");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(p.data[i]);
    }
    ProbMap out(image.h, image.w);
    const double inv = 1.0 / static_cast<double>(tta.elements.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] * inv);
    return out;
}

ProbMap mean_ensemble(const std::vector<ProbMap>& maps) {
    if (maps.empty()) throw Error("mean_ensemble needs at least one map");
    const int h = maps[0].h, w = maps[0].w;
    for (const auto& m : maps)
        if (m.h != h || m.w != w)
            throw Error("mean_ensemble shape mismatch: " + std::to_string(h) + "x" + std::to_string(w) +
                        " vs " + std::to_string(m.h) + "x" + std::to_string(m.w));
    std::vector<double> acc(static_cast<std::size_t>(h) * w, 0.0);
    for (const auto& m : maps)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(m.data[i]);
    ProbMap out(h, w);
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] * inv);
    return out;
}

ProbMap ensemble_predict(const std::vector<Checkpoint>& checkpoints, const ImageF& image,
                         const TtaSet& tta, const ChannelStats& stats) {
    if (checkpoints.empty()) throw Error("ensemble_predict needs at least one checkpoint");
    for (const auto& c : checkpoints)
        if (c.config_digest != checkpoints[0].config_digest)
            throw Error("incompatible checkpoint configs: digests differ across the ensemble");

    std::vector<ProbMap> member_maps;
    for (const auto& ckpt : checkpoints) {
        UNet net(UNet::infer_config(ckpt.params));
        net.params() = ckpt.params;
        auto predict = [&](const ImageF& img) {
            const Tensor logits = net.forward(normalize(img, stats), NetMode::eval);
            ProbMap p(img.h, img.w);
            for (std::size_t i = 0; i < p.data.size(); ++i)
                p.data[i] = 1.0f / (1.0f + std::exp(-logits.data[i]));
            return p;
        };
        member_maps.push_back(tta_predict(predict, image, tta));
    }
    return mean_ensemble(member_maps);
}

} // namespace lesionseg
