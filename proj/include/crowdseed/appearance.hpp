#pragma once

#include "crowdseed/core.hpp"

namespace crowdseed {

/// Transfers what the labeled regions look like onto the uncertain ones: an intensity
/// model learned from person vs. background pixels marks person-like uncertain pixels,
/// and a unit spike is placed at each blob center found at the expected person scale.
struct AppearanceConfig {
    int bins = 32;
    /// Share of person-like pixels a candidate's box must reach.
    double min_fill = 0.5;
    /// Box side and suppression radius as fractions of the expected person height.
    double box_fraction = 0.3;
    double suppress_fraction = 0.25;
    double spike = 1.0;
    /// Expected height when fewer than two persons are labeled.
    double fallback_height = 24.0;

    bool operator==(const AppearanceConfig&) const = default;
};

struct HeightModel {
    double intercept = 24.0;
    double slope = 0.0;
    double at(double foot_y) const;
};

/// Least-squares fit of mask height against mask bottom row.
HeightModel fit_height_model(const RegionPartition& partition, double fallback_height);

struct AppearanceStats {
    int person_like_pixels = 0;
    int candidates = 0;
};

/// Zero everywhere except `spike` at candidate pixels inside the uncertain region.
DensityGrid appearance_prior(const RasterImage& image, const RegionPartition& partition,
                             const AppearanceConfig& cfg = {}, AppearanceStats* stats = nullptr);

}  // namespace crowdseed
