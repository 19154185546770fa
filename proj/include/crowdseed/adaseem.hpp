#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdseed/core.hpp"
#include "crowdseed/segmenter.hpp"

namespace crowdseed {

struct AdaSeemConfig {
    double tau = 0.3;
    int s_initial = 512;
    int s_min = 64;
    int zoom_factor = 2;
    double nms_iou = 0.5;
    /// Side the zoomed tiles aim for before the backend call.
    int resegment_side = 512;
    /// Tiles segmented concurrently within one round.
    int tile_jobs = 1;

    /// Throws ValidationError naming the offending field.
    void validate() const;
    bool operator==(const AdaSeemConfig&) const = default;
};

/// Integer upscale applied to an s×s tile: max(zoom_factor, resegment_side / s).
int tile_zoom(const AdaSeemConfig& cfg, int side);

/// Fraction of pixels of `rect` marked uncertain.
double uncertain_ratio(const RegionPartition& partition, const Rect& rect);

/// Greedy NMS over existing ++ incoming, ordered by descending score with earlier
/// instances winning ties. Returned instances are unmodified copies of inputs.
std::vector<PersonInstance> nms_merge(const std::vector<PersonInstance>& existing,
                                      const std::vector<PersonInstance>& incoming, double iou_thresh);

/// Same suppression rule, but every `existing` instance is kept ahead of any incoming one.
std::vector<PersonInstance> nms_merge_keep_existing(const std::vector<PersonInstance>& existing,
                                                    const std::vector<PersonInstance>& incoming,
                                                    double iou_thresh);

struct AdaSeemTrace {
    int segment_calls = 0;
    int rounds = 0;
    std::vector<int> tiles_per_round;
    /// Uncertain pixel count after the initial pass and after each round.
    std::vector<std::int64_t> uncertain_pixels;
    std::vector<std::size_t> persons_after_round;
};

/// Whole-image pass, then zoom rounds over tiles while the whole-image uncertain ratio
/// exceeds tau and the tile side is at least s_min.
RegionPartition adaptive_segment(const RasterImage& image, Segmenter& segmenter, const AdaSeemConfig& cfg,
                                 const std::string& image_id = {}, AdaSeemTrace* trace = nullptr);

/// The initial whole-image pass alone.
RegionPartition single_pass_segment(const RasterImage& image, Segmenter& segmenter,
                                    const std::string& image_id = {});

}  // namespace crowdseed
