#pragma once

#include <cstdint>
#include <vector>

#include "crowdseed/core.hpp"

namespace crowdseed {

/// Alternating run lengths of 0s and 1s in row-major order, starting with 0s.
using RleCounts = std::vector<std::uint32_t>;

/// Expects a mask already thresholded to {0,1}; any value >= 0.5 counts as set.
RleCounts rle_encode(const SoftMask& mask);
SoftMask rle_decode(const RleCounts& counts, const Rect& window);

RleCounts rle_encode(const BinaryMask& mask);
BinaryMask rle_decode_image(const RleCounts& counts, int width, int height);

/// 8-bit quantized soft scores as [value, run, value, run, ...]; value = round(score*scale).
std::vector<std::uint32_t> q8_encode(const SoftMask& mask, int scale = 255);
SoftMask q8_decode(const std::vector<std::uint32_t>& pairs, const Rect& window, int scale = 255);

}  // namespace crowdseed
