#include "crowdseed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace crowdseed {

CountMetrics count_metrics(const std::vector<CountRecord>& records) {
    if (records.empty()) throw Error(ErrorCode::EmptyInput, "count_metrics needs at least one record");
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (const auto& r : records) {
        const double e = r.predicted - r.truth;
        abs_sum += std::abs(e);
        sq_sum += e * e;
    }
    const double n = static_cast<double>(records.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

MatchResult match_points(const PointSet& pred, const PointSet& truth, double radius) {
    if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "match radius must be > 0");
    std::vector<MatchPair> cand;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < truth.size(); ++j) {
            const double d = std::hypot(pred[i].pt.x - truth[j].pt.x, pred[i].pt.y - truth[j].pt.y);
            if (d <= radius) cand.push_back({i, j, d});
        }
    }
    std::sort(cand.begin(), cand.end(), [](const MatchPair& a, const MatchPair& b) {
        return std::tie(a.distance, a.pred, a.truth) < std::tie(b.distance, b.pred, b.truth);
    });
    std::vector<bool> pred_used(pred.size(), false), truth_used(truth.size(), false);
    MatchResult out;
    for (const auto& c : cand) {
        if (pred_used[c.pred] || truth_used[c.truth]) continue;
        pred_used[c.pred] = true;
        truth_used[c.truth] = true;
        out.pairs.push_back(c);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred_used[i]) out.unmatched_pred.push_back(i);
    }
    for (std::size_t j = 0; j < truth.size(); ++j) {
        if (!truth_used[j]) out.unmatched_truth.push_back(j);
    }
    return out;
}

PrfScore prf_from_counts(std::size_t matches, std::size_t n_pred, std::size_t n_truth) {
    PrfScore s;
    if (n_pred == 0) {
        s.precision = n_truth == 0 ? 1.0 : 0.0;
    } else {
        s.precision = static_cast<double>(matches) / static_cast<double>(n_pred);
    }
    s.recall = n_truth == 0 ? 1.0 : static_cast<double>(matches) / static_cast<double>(n_truth);
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
    return s;
}

std::vector<double> default_radii() {
    std::vector<double> r;
    for (int i = 1; i <= 100; ++i) r.push_back(i);
    return r;
}

LocalizationMetrics localization_metrics(const PointSet& pred, const PointSet& truth,
                                         const std::vector<double>& radii, double summary_radius) {
    LocalizationMetrics m;
    m.radii = radii;
    m.summary_radius = summary_radius;
    double f1_sum = 0.0;
    for (double r : radii) {
        const auto res = match_points(pred, truth, r);
        m.per_radius.push_back(prf_from_counts(res.pairs.size(), pred.size(), truth.size()));
        f1_sum += m.per_radius.back().f1;
    }
    m.auc = radii.empty() ? 0.0 : f1_sum / static_cast<double>(radii.size());
    m.summary = prf_from_counts(match_points(pred, truth, summary_radius).pairs.size(), pred.size(), truth.size());
    return m;
}

}  // namespace crowdseed
