#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdseed/core.hpp"
#include "crowdseed/localizer.hpp"
#include "crowdseed/segmenter.hpp"

namespace crowdseed {

struct RefineConfig {
    int iterations = 2;
    double peak_threshold = 0.10;
    double nms_iou = 0.5;
    /// Concurrent prompt requests per image.
    int max_in_flight = 8;

    void validate() const;
    bool operator==(const RefineConfig&) const = default;
};

/// Pixels strictly above all 8 neighbours (outside counts as 0) and >= threshold, as pixel
/// centers scored by density, highest first; ties keep row-major order.
PointSet extract_local_maxima(const DensityGrid& density, double threshold);

/// Seed for the localization prompts of one person.
std::uint64_t person_seed(std::uint64_t base, const std::string& image_id, std::size_t index);

/// Fills every missing head with localize_head; persons that already have one are untouched.
std::vector<PersonInstance> localize_missing_heads(std::vector<PersonInstance> persons, const RasterImage& image,
                                                   Segmenter& segmenter, const LocalizerConfig& cfg,
                                                   std::uint64_t seed, const std::string& image_id, int jobs = 1);

/// Adds persons to a partition, clearing their binarized pixels from background and uncertain.
RegionPartition absorb_persons(const RegionPartition& partition, std::vector<PersonInstance> persons);

struct RefineStats {
    int peaks = 0;
    int prompts_with_person = 0;
    int new_persons = 0;
};

/// Prompts at density maxima, deduplicates the returned person masks, merges them behind the
/// existing persons, and localizes the heads of the added ones.
PseudoLabelSet refine_pseudolabels(const PseudoLabelSet& labels, const DensityGrid& density, const RasterImage& image,
                                   Segmenter& segmenter, const RefineConfig& cfg, const LocalizerConfig& loc,
                                   std::uint64_t seed, RefineStats* stats = nullptr);

}  // namespace crowdseed
