#pragma once

#include <chrono>
#include <string>

#include "crowdseed/segmenter.hpp"

namespace crowdseed {

/// Wire protocol v1 client. Each call opens its own connection, so concurrent use is safe.
class HttpSegmenter : public Segmenter {
public:
    explicit HttpSegmenter(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(120));

    SegmentResponse segment(const SegmentRequest& request) override;
    /// GET /v1/health; returns the reported model name.
    std::string health() const;

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

}  // namespace crowdseed
