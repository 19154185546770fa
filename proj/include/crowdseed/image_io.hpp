#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "crowdseed/core.hpp"

namespace crowdseed {

std::vector<std::uint8_t> encode_png(const RasterImage& image);
RasterImage decode_png(const std::vector<std::uint8_t>& bytes);

/// Reads PNG (gray/RGB/palette/alpha, 8/16 bit) or binary PGM/PPM, picked by content.
RasterImage read_image(const std::filesystem::path& path);
/// Writes PNG, or PGM/PPM when the extension is .pgm/.ppm.
void write_image(const RasterImage& image, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace crowdseed
