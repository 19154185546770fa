#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdseed/adaseem.hpp"
#include "crowdseed/appearance.hpp"
#include "crowdseed/config.hpp"
#include "crowdseed/loss.hpp"
#include "crowdseed/metrics.hpp"
#include "crowdseed/refine.hpp"

namespace crowdseed {

void set_verbose(bool on);
void log_info(const std::string& message);
void log_error(const std::string& message);

struct ImageEntry {
    std::string id;
    std::filesystem::path path;
};

/// PNG/PGM/PPM files of a directory, sorted by id (the file stem).
std::vector<ImageEntry> list_images(const std::filesystem::path& dir);

/// Flag value, then CROWDSEED_BACKEND, then the config's backend.
std::string resolve_backend(const std::optional<std::string>& flag, const PipelineConfig& cfg);

/// "sim" serves the scenes whose <id>.truth.json sits in `images_dir`; "sim:FILE" does the
/// same with the [sim] section of FILE; anything else is a wire-protocol URL.
std::shared_ptr<Segmenter> make_backend(const std::string& spec, const std::filesystem::path& images_dir,
                                        const PipelineConfig& cfg);

struct IterationArtifacts {
    PseudoLabelSet labels;
    DensityGrid density;
    FitReport fit;
    RefineStats refine;
    AppearanceStats appearance;
};

struct ImageRun {
    std::string image_id;
    AdaSeemTrace adaseem;
    std::vector<IterationArtifacts> iterations;
};

PseudoLabelSet localize_labels(const PseudoLabelSet& labels, const RasterImage& image, Segmenter& segmenter,
                               const PipelineConfig& cfg);

/// Density fit of one label set; the appearance prior is used when `image` is given and enabled.
DensityGrid fit_labels(const PseudoLabelSet& labels, const RasterImage* image, const PipelineConfig& cfg,
                       FitReport* report = nullptr, AppearanceStats* appearance = nullptr);

/// adaptive_segment, localize, fit, then `refine.iterations` rounds of refine and refit.
ImageRun run_image(const std::string& image_id, const RasterImage& image, Segmenter& segmenter,
                   const PipelineConfig& cfg);

/// Continues from existing labels and density for `iterations` refine rounds.
std::vector<IterationArtifacts> refine_rounds(const PseudoLabelSet& labels, const DensityGrid& density,
                                              const RasterImage& image, Segmenter& segmenter,
                                              const PipelineConfig& cfg, int iterations);

/// Writes labels/<id>.json, density/<id>.csdg and stats/<id>.json under `dir`.
void write_iteration(const std::filesystem::path& dir, const IterationArtifacts& it,
                     const AdaSeemTrace* adaseem = nullptr);

struct RunSummary {
    std::vector<std::string> succeeded;
    std::vector<std::pair<std::string, std::string>> failed;
    bool backend_failure = false;
};

/// Full pipeline over a directory into out/iter{k}/ plus out/manifest.json and out/config.toml.
RunSummary run_pipeline(const std::filesystem::path& images_dir, const std::filesystem::path& out_dir,
                        Segmenter& segmenter, const PipelineConfig& cfg);

struct EvalOptions {
    std::vector<double> radii = default_radii();
    double radius = 50.0;
};

/// Per-image and aggregate metrics of a label directory (and optional density directory)
/// against <truth_dir>/<id>.truth.json files where present.
nlohmann::json evaluate_predictions(const std::filesystem::path& labels_dir,
                                    const std::optional<std::filesystem::path>& density_dir,
                                    const std::optional<std::filesystem::path>& truth_dir, const EvalOptions& opt);

/// One evaluation block per iteration of a run directory. Throws MissingArtifacts.
nlohmann::json build_report(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& truth_dir,
                            const EvalOptions& opt);
std::string report_table(const nlohmann::json& report);

}  // namespace crowdseed
