#include "crowdseed/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace crowdseed {

std::array<double, 2> Cov2::eigenvalues() const {
    const double mean = 0.5 * (xx + yy);
    const double diff = 0.5 * (xx - yy);
    const double r = std::sqrt(diff * diff + xy * xy);
    return {mean - r, mean + r};
}

Cov2 Cov2::clamped(double floor) const {
    const auto ev = eigenvalues();
    if (ev[0] >= floor) return *this;
    const double l0 = std::max(ev[0], floor);
    const double l1 = std::max(ev[1], floor);
    // unit eigenvector of the larger eigenvalue
    double vx, vy;
    if (std::abs(xy) > 1e-300) {
        vx = ev[1] - yy;
        vy = xy;
    } else if (xx >= yy) {
        vx = 1.0;
        vy = 0.0;
    } else {
        vx = 0.0;
        vy = 1.0;
    }
    const double n = std::hypot(vx, vy);
    vx /= n;
    vy /= n;
    // l1 v v^T + l0 (I - v v^T)
    return Cov2{l0 + (l1 - l0) * vx * vx, (l1 - l0) * vx * vy, l0 + (l1 - l0) * vy * vy};
}

bool GmmParams::valid(double cov_floor) const {
    if (std::abs(comp[0].weight + comp[1].weight - 1.0) > 1e-9) return false;
    for (const auto& c : comp) {
        if (!(c.weight >= 0.0 && c.weight <= 1.0)) return false;
        const auto ev = c.cov.eigenvalues();
        if (!(ev[0] > 0.0) || ev[0] < cov_floor * (1.0 - 1e-9)) return false;
    }
    return true;
}

void LocalizerConfig::validate() const {
    if (k < 0) throw Error(ErrorCode::ValidationError, "localizer.k must be >= 0");
    if (em_max_iters < 1) throw Error(ErrorCode::ValidationError, "localizer.em_max_iters must be >= 1");
    if (!(em_tol >= 0.0)) throw Error(ErrorCode::ValidationError, "localizer.em_tol must be >= 0");
    if (!(cov_floor > 0.0)) throw Error(ErrorCode::ValidationError, "localizer.cov_floor must be > 0");
}

double log_gaussian(const Point& p, const Point& mean, const Cov2& cov) {
    const double det = cov.det();
    const double dx = p.x - mean.x;
    const double dy = p.y - mean.y;
    // (d^T S^-1 d) with S^-1 = [yy -xy; -xy xx] / det
    const double maha = (cov.yy * dx * dx - 2.0 * cov.xy * dx * dy + cov.xx * dy * dy) / det;
    return -0.5 * maha - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
}

namespace {

/// log(pi_j N(x|mu_j,S_j)) for both components; -inf when pi_j == 0.
std::array<double, 2> weighted_log_terms(const Point& p, const GmmParams& g) {
    std::array<double, 2> t{};
    for (int j = 0; j < 2; ++j) {
        const auto& c = g.comp[j];
        t[j] = c.weight > 0.0 ? std::log(c.weight) + log_gaussian(p, c.mean, c.cov)
                              : -std::numeric_limits<double>::infinity();
    }
    return t;
}

double log_sum_exp2(double a, double b) {
    const double m = std::max(a, b);
    if (!std::isfinite(m)) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

Responsibilities em_e_step(const SoftMask& mask, const GmmParams& g) {
    const Rect& w = mask.window();
    Responsibilities out{w, std::vector<std::array<double, 2>>(static_cast<std::size_t>(w.area()))};
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            const auto t = weighted_log_terms(pixel_center(w.x + c, w.y + r), g);
            const double lse = log_sum_exp2(t[0], t[1]);
            auto& z = out.z[static_cast<std::size_t>(r) * w.w + c];
            if (!std::isfinite(lse)) {
                z = {0.5, 0.5};
                continue;
            }
            z[0] = std::exp(t[0] - lse);
            z[1] = 1.0 - z[0];
        }
    }
    return out;
}

GmmParams em_m_step(const SoftMask& mask, const Responsibilities& z, double cov_floor) {
    const Rect& w = mask.window();
    if (z.window != w || z.z.size() != static_cast<std::size_t>(w.area())) {
        throw Error(ErrorCode::ShapeMismatch, "responsibilities do not match the mask window");
    }
    double total = 0.0;
    std::array<double, 2> n{}, sx{}, sy{};
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            const double s = mask.local(c, r);
            if (s <= 0.0) continue;
            const Point p = pixel_center(w.x + c, w.y + r);
            const auto& zi = z.z[static_cast<std::size_t>(r) * w.w + c];
            total += s;
            for (int j = 0; j < 2; ++j) {
                const double wt = s * zi[j];
                n[j] += wt;
                sx[j] += wt * p.x;
                sy[j] += wt * p.y;
            }
        }
    }
    if (!(total > 0.0)) throw Error(ErrorCode::DegenerateMask, "mask has no positive score");
    for (int j = 0; j < 2; ++j) {
        if (n[j] < 1e-12 * total) {
            throw Error(ErrorCode::ComponentCollapse, "component " + std::to_string(j) + " lost all mass");
        }
    }
    GmmParams g;
    for (int j = 0; j < 2; ++j) g.comp[j].mean = Point{sx[j] / n[j], sy[j] / n[j]};
    std::array<Cov2, 2> acc{Cov2{0, 0, 0}, Cov2{0, 0, 0}};
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            const double s = mask.local(c, r);
            if (s <= 0.0) continue;
            const Point p = pixel_center(w.x + c, w.y + r);
            const auto& zi = z.z[static_cast<std::size_t>(r) * w.w + c];
            for (int j = 0; j < 2; ++j) {
                const double wt = s * zi[j];
                const double dx = p.x - g.comp[j].mean.x;
                const double dy = p.y - g.comp[j].mean.y;
                acc[j].xx += wt * dx * dx;
                acc[j].xy += wt * dx * dy;
                acc[j].yy += wt * dy * dy;
            }
        }
    }
    for (int j = 0; j < 2; ++j) {
        g.comp[j].cov = Cov2{acc[j].xx / n[j], acc[j].xy / n[j], acc[j].yy / n[j]}.clamped(cov_floor);
    }
    g.comp[0].weight = n[0] / total;
    g.comp[1].weight = 1.0 - g.comp[0].weight;
    return g;
}

double weighted_log_likelihood(const SoftMask& mask, const GmmParams& g) {
    const Rect& w = mask.window();
    double ll = 0.0;
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            const double s = mask.local(c, r);
            if (s <= 0.0) continue;
            const auto t = weighted_log_terms(pixel_center(w.x + c, w.y + r), g);
            ll += s * log_sum_exp2(t[0], t[1]);
        }
    }
    return ll;
}

GmmParams initial_gmm(const SoftMask& mask, double cov_floor) {
    const Rect& w = mask.window();
    const auto vals = mask.values();
    double total = 0.0, mx = 0.0, my = 0.0;
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            const double s = vals[static_cast<std::size_t>(r) * w.w + c];
            if (s <= 0.0) continue;
            total += s;
            mx += s * (c + 0.5);
            my += s * (r + 0.5);
        }
    }
    if (total < 1e-9) throw Error(ErrorCode::DegenerateMask, "total soft mass below 1e-9");
    mx /= total;
    my /= total;
    Cov2 scatter{0.0, 0.0, 0.0};
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            const double s = vals[static_cast<std::size_t>(r) * w.w + c];
            if (s <= 0.0) continue;
            const double dx = c + 0.5 - mx, dy = r + 0.5 - my;
            scatter.xx += s * dx * dx;
            scatter.xy += s * dx * dy;
            scatter.yy += s * dy * dy;
        }
    }

    // Split axis: the principal axis of the weighted scatter, oriented downward. Upright
    // silhouettes give the vertical axis, and so does an isotropic or axis-aligned tall mask.
    double ax = 0.0, ay = 1.0;
    const auto ev = scatter.eigenvalues();
    const double spread = ev[1] - ev[0];
    if (spread > 1e-9 * (ev[0] + ev[1]) && std::abs(scatter.xy) > 1e-12 * (ev[0] + ev[1])) {
        ax = scatter.xy;
        ay = ev[1] - scatter.xx;
        const double n = std::hypot(ax, ay);
        ax /= n;
        ay /= n;
        if (ay < 0.0 || (ay == 0.0 && ax < 0.0)) {
            ax = -ax;
            ay = -ay;
        }
    } else if (scatter.xx > scatter.yy && spread > 1e-9 * (ev[0] + ev[1])) {
        ax = 1.0;
        ay = 0.0;
    }

    // Walk positive pixels in order of their projection (ties in row-major order) and
    // cut where the running mass reaches half of the total.
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (vals[i] <= 0.0) continue;
        const int r = static_cast<int>(i / static_cast<std::size_t>(w.w));
        const int c = static_cast<int>(i % static_cast<std::size_t>(w.w));
        order.emplace_back(ax * (c + 0.5 - mx) + ay * (r + 0.5 - my), i);
    }
    std::sort(order.begin(), order.end());
    Responsibilities z{w, std::vector<std::array<double, 2>>(static_cast<std::size_t>(w.area()), {1.0, 0.0})};
    double running = 0.0;
    std::size_t split_at = order.size();
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (running >= 0.5 * total) {
            split_at = k;
            break;
        }
        running += vals[order[k].second];
    }
    // heavy trailing pixel: give the second half at least that pixel
    if (split_at == order.size()) split_at = order.size() - 1;
    for (std::size_t k = split_at; k < order.size(); ++k) z.z[order[k].second] = {0.0, 1.0};
    return em_m_step(mask, z, cov_floor);
}

GmmParams fit_weighted_gmm(const SoftMask& mask, const LocalizerConfig& cfg, EmTrace* trace) {
    cfg.validate();
    std::int64_t positive = 0;
    for (double s : mask.values()) positive += s > 0.0 ? 1 : 0;
    if (positive < 2) throw Error(ErrorCode::DegenerateMask, "need at least two pixels with positive score");

    GmmParams g = initial_gmm(mask, cfg.cov_floor);
    double ll = weighted_log_likelihood(mask, g);
    EmTrace local;
    EmTrace& tr = trace ? *trace : local;
    tr = EmTrace{};
    tr.log_likelihood.push_back(ll);
    for (int it = 0; it < cfg.em_max_iters; ++it) {
        GmmParams next;
        try {
            next = em_m_step(mask, em_e_step(mask, g), cfg.cov_floor);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ComponentCollapse) throw;
            break;
        }
        const double next_ll = weighted_log_likelihood(mask, next);
        g = next;
        tr.log_likelihood.push_back(next_ll);
        tr.iterations = it + 1;
        const double gain = next_ll - ll;
        ll = next_ll;
        if (gain < cfg.em_tol * std::max(std::abs(ll), 1e-300)) {
            tr.converged = true;
            break;
        }
    }
    return g;
}

Point head_point(const GmmParams& g) {
    const auto& a = g.comp[0];
    const auto& b = g.comp[1];
    if (a.mean.y < b.mean.y) return a.mean;
    if (b.mean.y < a.mean.y) return b.mean;
    return b.weight > a.weight ? b.mean : a.mean;
}

Point naive_head_point(const SoftMask& mask, double gamma) {
    const Rect box = mask.support_box(kBinarizeThreshold);
    if (box.empty()) throw Error(ErrorCode::DegenerateMask, "naive_head_point on an empty mask");
    const Rect& w = mask.window();
    double sx = 0.0;
    std::int64_t n = 0;
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            if (mask.local(c, r) >= kBinarizeThreshold) {
                sx += w.x + c + 0.5;
                ++n;
            }
        }
    }
    return Point{sx / static_cast<double>(n), box.y + gamma * box.h};
}

SoftMask soft_mask_distribution(const SoftMask& m0, const RasterImage& image, Segmenter& segmenter, int k,
                                std::uint64_t seed, const std::string& image_id, SoftMaskStats* stats) {
    const Rect& w0 = m0.window();
    std::vector<std::pair<int, int>> support;
    for (int r = 0; r < w0.h; ++r) {
        for (int c = 0; c < w0.w; ++c) {
            if (m0.local(c, r) >= kBinarizeThreshold) support.emplace_back(w0.x + c, w0.y + r);
        }
    }
    if (support.empty()) throw Error(ErrorCode::DegenerateMask, "m0 is empty after binarization");

    SoftMaskStats local;
    SoftMaskStats& st = stats ? *stats : local;
    st = SoftMaskStats{};
    if (k <= 0) return m0;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
    std::vector<SoftMask> chosen;
    for (int i = 0; i < k; ++i) {
        const auto [px, py] = support[pick(rng)];
        SegmentRequest req;
        req.image = image;
        req.prompts = std::vector<Point>{pixel_center(px, py)};
        req.context = RequestContext{image_id, Rect{0, 0, image.width(), image.height()}};
        ++st.prompted;
        const auto resp = sanitize_response(segmenter.segment(req), image.width(), image.height());
        const SoftMask* best = nullptr;
        double best_iou = 0.0;
        for (const auto& seg : resp.segments) {
            if (seg.label != kPersonLabel) continue;
            const double iou = mask_iou(seg.mask, m0);
            if (iou > best_iou) {
                best_iou = iou;
                best = &seg.mask;
            }
        }
        if (!best) {
            ++st.skipped;
            continue;
        }
        chosen.push_back(*best);
    }

    Rect window = w0;
    for (const auto& m : chosen) window = bounding_union(window, m.window());
    std::vector<double> acc(static_cast<std::size_t>(window.area()), 0.0);
    auto add = [&](const SoftMask& m) {
        const Rect& mw = m.window();
        for (int r = 0; r < mw.h; ++r) {
            for (int c = 0; c < mw.w; ++c) {
                acc[static_cast<std::size_t>(mw.y + r - window.y) * window.w + (mw.x + c - window.x)] += m.local(c, r);
            }
        }
    };
    add(m0);
    for (const auto& m : chosen) add(m);
    const double inv = 1.0 / static_cast<double>(chosen.size() + 1);
    for (double& v : acc) v = std::min(1.0, v * inv);
    return SoftMask(window, std::move(acc));
}

Point localize_head(const SoftMask& m0, const RasterImage& image, Segmenter& segmenter, const LocalizerConfig& cfg,
                    std::uint64_t seed, const std::string& image_id) {
    const SoftMask dist = soft_mask_distribution(m0, image, segmenter, cfg.k, seed, image_id);
    Point head;
    try {
        head = head_point(fit_weighted_gmm(dist, cfg));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateMask) throw;
        // a single-pixel mask has no spread to fit
        head = naive_head_point(m0, 0.0);
        head.y += 0.5;
    }
    const Rect& w = m0.window();
    head.x = std::clamp(head.x, w.x + 0.5, w.right() - 0.5);
    head.y = std::clamp(head.y, w.y + 0.5, w.bottom() - 0.5);
    return head;
}

}  // namespace crowdseed
