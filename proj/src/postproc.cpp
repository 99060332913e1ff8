#include "lesionseg/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "lesionseg/error.hpp"

namespace lesionseg {

Mask binarize(const ProbMap& p, float threshold) {
    Mask out(p.h, p.w);
    for (std::size_t i = 0; i < p.data.size(); ++i) out.data[i] = p.data[i] >= threshold ? 255 : 0;
    return out;
}

namespace {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
    return offs;
}

} // namespace

Mask erode(const Mask& mask, int radius) {
    if (radius < 1) throw Error("morphology radius must be >= 1");
    const auto offs = disk_offsets(radius);
    Mask out(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            bool keep = mask.at(y, x) != 0;
            for (std::size_t i = 0; keep && i < offs.size(); ++i) {
                const int ny = y + offs[i].first, nx = x + offs[i].second;
                if (ny < 0 || ny >= mask.h || nx < 0 || nx >= mask.w) continue;
                if (mask.at(ny, nx) == 0) keep = false;
            }
            out.at(y, x) = keep ? 255 : 0;
        }
    return out;
}

Mask dilate(const Mask& mask, int radius) {
    if (radius < 1) throw Error("morphology radius must be >= 1");
    const auto offs = disk_offsets(radius);
    Mask out(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            bool hit = false;
            for (std::size_t i = 0; !hit && i < offs.size(); ++i) {
                const int ny = y + offs[i].first, nx = x + offs[i].second;
                if (ny < 0 || ny >= mask.h || nx < 0 || nx >= mask.w) continue;
                if (mask.at(ny, nx) != 0) hit = true;
            }
            out.at(y, x) = hit ? 255 : 0;
        }
    return out;
}

namespace {
constexpr int kDy[4] = {-1, 0, 0, 1};
constexpr int kDx[4] = {0, -1, 1, 0};
} // namespace

LabelMap connected_components(const Mask& mask) {
    LabelMap labels(mask.h, mask.w);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x) == 0 || labels.at(y, x) != 0) continue;
            ++next;
            labels.at(y, x) = next;
            stack.push_back({y, x});
            while (!stack.empty()) {
                const auto [cy, cx] = stack.back();
                stack.pop_back();
                for (int k = 0; k < 4; ++k) {
                    const int ny = cy + kDy[k], nx = cx + kDx[k];
                    if (ny < 0 || ny >= mask.h || nx < 0 || nx >= mask.w) continue;
                    if (mask.at(ny, nx) == 0 || labels.at(ny, nx) != 0) continue;
                    labels.at(ny, nx) = next;
                    stack.push_back({ny, nx});
                }
            }
        }
    return labels;
}

LabelMap watershed(const ProbMap& relief, const LabelMap& markers, const Mask& domain) {
    if (relief.h != markers.h || relief.w != markers.w || relief.h != domain.h || relief.w != domain.w)
        throw Error("watershed inputs must share one shape");

    struct Item {
        float value;
        std::uint64_t seq;
        int y, x;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            if (a.value != b.value) return a.value > b.value;
            return a.seq > b.seq; // FIFO among equal relief values
        }
    };
    std::priority_queue<Item, std::vector<Item>, Later> queue;

    LabelMap labels(markers.h, markers.w);
    std::uint64_t seq = 0;
    for (int y = 0; y < markers.h; ++y)
        for (int x = 0; x < markers.w; ++x) {
            const int m = markers.at(y, x);
            if (m == 0) continue;
            if (domain.at(y, x) == 0)
                throw Error("watershed marker at (" + std::to_string(y) + "," + std::to_string(x) +
                            ") lies outside the domain");
            labels.at(y, x) = m;
            queue.push({relief.at(y, x), seq++, y, x});
        }

    while (!queue.empty()) {
        const Item it = queue.top();
        queue.pop();
        const int label = labels.at(it.y, it.x);
        for (int k = 0; k < 4; ++k) {
            const int ny = it.y + kDy[k], nx = it.x + kDx[k];
            if (ny < 0 || ny >= labels.h || nx < 0 || nx >= labels.w) continue;
            if (domain.at(ny, nx) == 0 || labels.at(ny, nx) != 0) continue;
            labels.at(ny, nx) = label;
            queue.push({relief.at(ny, nx), seq++, ny, nx});
        }
    }
    return labels;
}

Mask refine(const ProbMap& p, const RefineOptions& opts) {
    const Mask m = binarize(p, opts.threshold);
    LabelMap markers = connected_components(erode(m, opts.erode_radius));
    int lesion_labels = 0;
    for (int v : markers.data) lesion_labels = std::max(lesion_labels, v);

    if (opts.largest_only && lesion_labels > 1) {
        std::vector<std::size_t> area(static_cast<std::size_t>(lesion_labels) + 1, 0);
        for (int v : markers.data)
            if (v > 0) ++area[static_cast<std::size_t>(v)];
        int best = 1;
        for (int l = 2; l <= lesion_labels; ++l)
            if (area[static_cast<std::size_t>(l)] > area[static_cast<std::size_t>(best)]) best = l;
        for (int& v : markers.data) v = v == best ? 1 : 0;
        lesion_labels = 1;
    }

    // The dilated ring competes as a background marker; lesion labels keep
    // only what they can flood before the background does, so a crisp mask
    // comes back unchanged instead of dilated.
    const Mask domain = dilate(m, opts.dilate_radius);
    const int bg_label = lesion_labels + 1;
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x)
            if (domain.at(y, x) != 0 && m.at(y, x) == 0) markers.at(y, x) = bg_label;

    ProbMap relief(p.h, p.w);
    if (opts.relief == ReliefKind::inverse_probability) {
        for (std::size_t i = 0; i < p.data.size(); ++i) relief.data[i] = 1.0f - p.data[i];
    } else {
        for (int y = 0; y < p.h; ++y)
            for (int x = 0; x < p.w; ++x) {
                const float gx = (p.at(y, std::min(x + 1, p.w - 1)) - p.at(y, std::max(x - 1, 0))) / 2.0f;
                const float gy = (p.at(std::min(y + 1, p.h - 1), x) - p.at(std::max(y - 1, 0), x)) / 2.0f;
                relief.at(y, x) = std::sqrt(gx * gx + gy * gy);
            }
    }

    const LabelMap labels = watershed(relief, markers, domain);
    Mask out(p.h, p.w);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = labels.data[i] > 0 && labels.data[i] <= lesion_labels ? 255 : 0;
    return out;
}

} // namespace lesionseg
