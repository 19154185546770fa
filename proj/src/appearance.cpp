#include "crowdseed/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crowdseed {

double HeightModel::at(double foot_y) const { return std::max(4.0, intercept + slope * foot_y); }

HeightModel fit_height_model(const RegionPartition& partition, double fallback_height) {
    std::vector<double> ys, hs;
    for (const auto& p : partition.persons()) {
        const Rect box = p.mask.support_box(kBinarizeThreshold);
        if (box.empty()) continue;
        ys.push_back(box.bottom());
        hs.push_back(box.h);
    }
    HeightModel m{fallback_height, 0.0};
    if (ys.size() < 2) return m;
    const double n = static_cast<double>(ys.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    const double mh = std::accumulate(hs.begin(), hs.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        sxy += (ys[i] - my) * (hs[i] - mh);
        sxx += (ys[i] - my) * (ys[i] - my);
    }
    m.slope = sxx > 1e-9 ? sxy / sxx : 0.0;
    m.intercept = mh - m.slope * my;
    return m;
}

DensityGrid appearance_prior(const RasterImage& image, const RegionPartition& partition, const AppearanceConfig& cfg,
                             AppearanceStats* stats) {
    const int w = partition.width();
    const int h = partition.height();
    if (image.width() != w || image.height() != h) {
        throw Error(ErrorCode::ShapeMismatch, "image and partition differ in shape");
    }
    AppearanceStats local;
    AppearanceStats& st = stats ? *stats : local;
    st = AppearanceStats{};
    DensityGrid out(w, h, 0.0);

    const RasterImage gray = image.to_gray();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const auto bin_of = [&](std::size_t i) { return gray.data()[i] * cfg.bins / 256; };

    BinaryMask person_px(w, h);
    for (const auto& p : partition.persons()) {
        const Rect& pw = p.mask.window();
        for (int r = 0; r < pw.h; ++r) {
            for (int c = 0; c < pw.w; ++c) {
                if (p.mask.local(c, r) >= kBinarizeThreshold) person_px.set(pw.x + c, pw.y + r);
            }
        }
    }
    std::vector<double> hist_p(cfg.bins, 1.0), hist_b(cfg.bins, 1.0);
    double np = cfg.bins, nb = cfg.bins;
    for (std::size_t i = 0; i < n; ++i) {
        if (person_px.get_index(i)) {
            hist_p[bin_of(i)] += 1.0;
            np += 1.0;
        } else if (partition.background().get_index(i)) {
            hist_b[bin_of(i)] += 1.0;
            nb += 1.0;
        }
    }
    if (np <= cfg.bins || nb <= cfg.bins) return out;

    std::vector<std::uint8_t> like(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!partition.uncertain().get_index(i)) continue;
        const int b = bin_of(i);
        if (hist_p[b] / np > hist_b[b] / nb) {
            like[i] = 1;
            ++st.person_like_pixels;
        }
    }
    if (st.person_like_pixels == 0) return out;

    // summed-area table of person-like pixels
    std::vector<std::int64_t> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = like[static_cast<std::size_t>(y) * w + x] +
                                                                     sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] +
                                                                     sat[static_cast<std::size_t>(y + 1) * (w + 1) + x] -
                                                                     sat[static_cast<std::size_t>(y) * (w + 1) + x];
        }
    }
    const auto box_sum = [&](int x0, int y0, int x1, int y1) {
        x0 = std::max(x0, 0);
        y0 = std::max(y0, 0);
        x1 = std::min(x1, w);
        y1 = std::min(y1, h);
        return sat[static_cast<std::size_t>(y1) * (w + 1) + x1] - sat[static_cast<std::size_t>(y0) * (w + 1) + x1] -
               sat[static_cast<std::size_t>(y1) * (w + 1) + x0] + sat[static_cast<std::size_t>(y0) * (w + 1) + x0];
    };

    const HeightModel model = fit_height_model(partition, cfg.fallback_height);
    struct Cand {
        double fill;
        int x;
        int y;
        double radius;
    };
    std::vector<Cand> cands;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!like[static_cast<std::size_t>(y) * w + x]) continue;
            // the pixel sits roughly mid-body, so its person's feet are about h/2 lower
            double ph = model.at(y);
            ph = model.at(y + 0.5 * ph);
            const int half = std::max(1, static_cast<int>(std::lround(0.5 * cfg.box_fraction * ph)));
            const double area = static_cast<double>((2 * half + 1) * (2 * half + 1));
            const double fill = static_cast<double>(box_sum(x - half, y - half, x + half + 1, y + half + 1)) / area;
            if (fill >= cfg.min_fill) cands.push_back({fill, x, y, std::max(1.5, cfg.suppress_fraction * ph)});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.fill > b.fill; });
    std::vector<const Cand*> kept;
    for (const auto& c : cands) {
        const bool near = std::any_of(kept.begin(), kept.end(), [&](const Cand* k) {
            const double dx = k->x - c.x;
            const double dy = k->y - c.y;
            const double r = std::max(k->radius, c.radius);
            return dx * dx + dy * dy < r * r;
        });
        if (!near) kept.push_back(&c);
    }
    for (const auto* k : kept) out.set(k->x, k->y, cfg.spike);
    st.candidates = static_cast<int>(kept.size());
    return out;
}

}  // namespace crowdseed
