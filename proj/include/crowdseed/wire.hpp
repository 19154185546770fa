#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdseed/segmenter.hpp"

namespace crowdseed::wire {

constexpr int kMaskScale = 255;

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// POST /v1/segment body. The optional "context" member carries RequestContext.
nlohmann::json encode_request(const SegmentRequest& request);
SegmentRequest decode_request(const nlohmann::json& body);

nlohmann::json encode_response(const SegmentResponse& response);
/// Validates against the request image size; throws MalformedResponse on any violation.
SegmentResponse decode_response(const nlohmann::json& body, int width, int height);

nlohmann::json health_body(const std::string& model);

}  // namespace crowdseed::wire
