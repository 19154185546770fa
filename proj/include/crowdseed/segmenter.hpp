#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crowdseed/core.hpp"

namespace crowdseed {

inline constexpr const char* kPersonLabel = "person";

/// Harness metadata travelling with a request. Real backends ignore it; the
/// simulator uses it to know which scene and which source region it is looking at.
struct RequestContext {
    std::string image_id;
    /// Region of the original image that the request image shows (resampled to the request size).
    std::optional<Rect> view;
    bool operator==(const RequestContext&) const = default;
};

struct SegmentRequest {
    RasterImage image;
    /// Point prompts in request-image coordinates.
    std::optional<std::vector<Point>> prompts;
    RequestContext context;
};

struct Segment {
    std::string label;
    double score = 0.0;
    SoftMask mask;
    bool operator==(const Segment&) const = default;
};

struct SegmentResponse {
    std::vector<Segment> segments;
    bool operator==(const SegmentResponse&) const = default;
};

/// Promptable segmentation contract. Implementations must tolerate concurrent calls.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual SegmentResponse segment(const SegmentRequest& request) = 0;
};

void validate_request(const SegmentRequest& request);

/// Checks scores and windows against the request image and drops masks with no pixel >= 0.5.
/// Throws MalformedResponse on violations.
SegmentResponse sanitize_response(SegmentResponse response, int width, int height);

/// persons = "person" segments; background = binarized non-person segments minus person
/// pixels; uncertain = pixels no binarized segment covers.
RegionPartition classify_partition(const SegmentResponse& response, int width, int height);

struct RetryPolicy {
    int retries = 2;
    std::chrono::milliseconds base_delay{250};
};

/// Retries BackendUnavailable with exponential backoff before giving up.
class RetryingSegmenter : public Segmenter {
public:
    RetryingSegmenter(std::shared_ptr<Segmenter> inner, RetryPolicy policy = {});
    SegmentResponse segment(const SegmentRequest& request) override;
    int attempts() const { return attempts_; }

private:
    std::shared_ptr<Segmenter> inner_;
    RetryPolicy policy_;
    std::atomic<int> attempts_{0};
};

}  // namespace crowdseed
