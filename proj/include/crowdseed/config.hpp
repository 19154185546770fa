#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "crowdseed/adaseem.hpp"
#include "crowdseed/appearance.hpp"
#include "crowdseed/localizer.hpp"
#include "crowdseed/loss.hpp"
#include "crowdseed/refine.hpp"
#include "crowdseed/synth.hpp"

namespace crowdseed {

struct PipelineConfig {
    AdaSeemConfig adaseem;
    LocalizerConfig localizer;
    LossConfig loss;
    FitOptions fit;
    RefineConfig refine;
    AppearanceConfig appearance;
    SimSegmenterConfig sim;
    SceneConfig scene;
    /// "sim", "sim:CONFIG.toml", or an http(s) URL.
    std::string backend = "sim";
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string output = "out";
    /// Seed uncertain regions from the appearance model before fitting.
    bool appearance_prior = true;
    int timeout_s = 120;

    void validate() const;
    bool operator==(const PipelineConfig&) const = default;
};

/// Minimal TOML: [section] headers, key = value with strings, integers, floats and
/// booleans, and # comments. Keys are reported as "section.key".
struct TomlValue {
    enum class Kind { String, Integer, Float, Bool };
    Kind kind = Kind::String;
    std::string text;
    int line = 0;
};
using TomlTable = std::map<std::string, TomlValue>;

/// Throws ParseError "<source>:<line>: message".
TomlTable parse_toml(const std::string& text, const std::string& source = "<string>");

/// Unknown keys, type mismatches and invariant violations throw ValidationError
/// naming the source line of the offending key.
PipelineConfig config_from_toml(const std::string& text, const std::string& source = "<string>");
PipelineConfig load_config(const std::filesystem::path& path);
/// Every field, grouped by section, in a fixed order.
std::string dump_config(const PipelineConfig& cfg);

}  // namespace crowdseed
