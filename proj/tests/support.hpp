#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "crowdseed/core.hpp"

namespace crowdseed::testing {

inline SoftMask solid(Rect r, double v = 1.0) {
    return SoftMask(r, std::vector<double>(static_cast<std::size_t>(r.area()), v));
}

inline PersonInstance person(Rect r, double score, std::optional<Point> head = std::nullopt) {
    return PersonInstance{solid(r), score, head};
}

/// Random binary blob mask inside a width×height image.
inline SoftMask random_binary_mask(std::mt19937_64& rng, int width, int height, int max_side) {
    std::uniform_int_distribution<int> side(1, max_side);
    const int w = std::min(side(rng), width);
    const int h = std::min(side(rng), height);
    std::uniform_int_distribution<int> xs(0, width - w), ys(0, height - h);
    SoftMask m(Rect{xs(rng), ys(rng), w, h});
    std::bernoulli_distribution on(0.7);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) m.set_local(c, r, on(rng) ? 1.0 : 0.0);
    }
    m.set_local(w / 2, h / 2, 1.0);
    return m;
}

/// Textbook greedy NMS: stable sort by score, then suppress against everything kept so far.
inline std::vector<PersonInstance> reference_nms(std::vector<PersonInstance> all, double thresh) {
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return all[a].score > all[b].score; });
    std::vector<PersonInstance> kept;
    for (std::size_t i : order) {
        bool drop = false;
        for (const auto& k : kept) {
            if (mask_iou(k.mask, all[i].mask) >= thresh) {
                drop = true;
                break;
            }
        }
        if (!drop) kept.push_back(all[i]);
    }
    return kept;
}

}  // namespace crowdseed::testing
