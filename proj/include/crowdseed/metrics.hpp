#pragma once

#include <string>
#include <vector>

#include "crowdseed/core.hpp"

namespace crowdseed {

struct CountRecord {
    std::string image_id;
    double predicted = 0.0;
    double truth = 0.0;
};

struct CountMetrics {
    double mae = 0.0;
    /// Root of the mean squared error.
    double mse = 0.0;
};

CountMetrics count_metrics(const std::vector<CountRecord>& records);

struct MatchPair {
    std::size_t pred = 0;
    std::size_t truth = 0;
    double distance = 0.0;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> unmatched_pred;
    std::vector<std::size_t> unmatched_truth;
};

/// Greedy one-to-one matching, nearest pairs first; ties by (pred, truth) index.
MatchResult match_points(const PointSet& pred, const PointSet& truth, double radius);

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct LocalizationMetrics {
    std::vector<double> radii;
    std::vector<PrfScore> per_radius;
    double auc = 0.0;
    double summary_radius = 50.0;
    PrfScore summary;
};

/// 1, 2, ..., 100
std::vector<double> default_radii();

/// Precision/recall/F1 per radius; AUC is the mean F1 over `radii`.
LocalizationMetrics localization_metrics(const PointSet& pred, const PointSet& truth,
                                         const std::vector<double>& radii = default_radii(),
                                         double summary_radius = 50.0);

PrfScore prf_from_counts(std::size_t matches, std::size_t n_pred, std::size_t n_truth);

}  // namespace crowdseed
