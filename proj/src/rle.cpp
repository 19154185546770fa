#include "crowdseed/rle.hpp"

#include <cmath>
#include <numeric>

namespace crowdseed {

namespace {

template <typename Bit>
RleCounts encode_bits(std::size_t n, Bit bit) {
    RleCounts counts;
    bool current = false;
    std::uint32_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool b = bit(i);
        if (b != current) {
            counts.push_back(run);
            run = 0;
            current = b;
        }
        ++run;
    }
    counts.push_back(run);
    return counts;
}

template <typename Set>
void decode_bits(const RleCounts& counts, std::size_t n, Set set) {
    const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (total != n) {
        throw Error(ErrorCode::LengthMismatch, "RLE counts sum to " + std::to_string(total) + ", expected " +
                                                   std::to_string(n));
    }
    std::size_t pos = 0;
    bool value = false;
    for (std::uint32_t run : counts) {
        if (value) {
            for (std::uint32_t k = 0; k < run; ++k) set(pos + k);
        }
        pos += run;
        value = !value;
    }
}

}  // namespace

RleCounts rle_encode(const SoftMask& mask) {
    const auto v = mask.values();
    return encode_bits(v.size(), [&](std::size_t i) { return v[i] >= kBinarizeThreshold; });
}

SoftMask rle_decode(const RleCounts& counts, const Rect& window) {
    std::vector<double> values(static_cast<std::size_t>(window.area()), 0.0);
    decode_bits(counts, values.size(), [&](std::size_t i) { values[i] = 1.0; });
    return SoftMask(window, std::move(values));
}

RleCounts rle_encode(const BinaryMask& mask) {
    return encode_bits(mask.size(), [&](std::size_t i) { return mask.get_index(i); });
}

BinaryMask rle_decode_image(const RleCounts& counts, int width, int height) {
    BinaryMask out(width, height);
    decode_bits(counts, out.size(), [&](std::size_t i) { out.set_index(i, true); });
    return out;
}

std::vector<std::uint32_t> q8_encode(const SoftMask& mask, int scale) {
    std::vector<std::uint32_t> pairs;
    const auto v = mask.values();
    for (std::size_t i = 0; i < v.size();) {
        const auto q = static_cast<std::uint32_t>(std::lround(v[i] * scale));
        std::size_t j = i + 1;
        while (j < v.size() && static_cast<std::uint32_t>(std::lround(v[j] * scale)) == q) ++j;
        pairs.push_back(q);
        pairs.push_back(static_cast<std::uint32_t>(j - i));
        i = j;
    }
    return pairs;
}

SoftMask q8_decode(const std::vector<std::uint32_t>& pairs, const Rect& window, int scale) {
    if (scale <= 0) throw Error(ErrorCode::InvalidArgument, "mask_scale must be positive");
    if (pairs.size() % 2 != 0) {
        throw Error(ErrorCode::LengthMismatch, "quantized RLE must hold value/run pairs");
    }
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(window.area()));
    for (std::size_t i = 0; i < pairs.size(); i += 2) {
        if (pairs[i] > static_cast<std::uint32_t>(scale)) {
            throw Error(ErrorCode::InvalidArgument, "quantized value exceeds mask_scale");
        }
        if (values.size() + pairs[i + 1] > static_cast<std::size_t>(window.area())) {
            throw Error(ErrorCode::LengthMismatch, "quantized RLE longer than window");
        }
        values.insert(values.end(), pairs[i + 1], static_cast<double>(pairs[i]) / scale);
    }
    if (static_cast<std::int64_t>(values.size()) != window.area()) {
        throw Error(ErrorCode::LengthMismatch, "quantized RLE shorter than window");
    }
    return SoftMask(window, std::move(values));
}

}  // namespace crowdseed
