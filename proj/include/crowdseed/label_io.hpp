#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "crowdseed/core.hpp"

namespace crowdseed {

constexpr int kLabelFileVersion = 1;

/// Label file schema v1. Person masks persist binarized at 0.5.
nlohmann::json label_set_to_json(const PseudoLabelSet& labels);
PseudoLabelSet label_set_from_json(const nlohmann::json& j);

void save_label_set(const PseudoLabelSet& labels, const std::filesystem::path& path);
PseudoLabelSet load_label_set(const std::filesystem::path& path);

/// Stable JSON text (2-space indent, trailing newline) used for every file we write.
std::string dump_json(const nlohmann::json& j);

/// "CSDG" grid: magic, u32 version, u32 width, u32 height (little-endian), then float32 values.
std::vector<std::uint8_t> encode_density(const DensityGrid& grid);
DensityGrid decode_density(const std::vector<std::uint8_t>& bytes);
void save_density(const DensityGrid& grid, const std::filesystem::path& path);
DensityGrid load_density(const std::filesystem::path& path);

}  // namespace crowdseed
