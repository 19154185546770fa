#include "crowdseed/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "crowdseed/http_segmenter.hpp"
#include "crowdseed/image_io.hpp"
#include "crowdseed/label_io.hpp"
#include "crowdseed/parallel.hpp"
#include "crowdseed/synth.hpp"

namespace crowdseed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex g_log_mutex;
bool g_verbose = false;

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string iter_name(int k) { return "iter" + std::to_string(k); }

}  // namespace

void set_verbose(bool on) { g_verbose = on; }

void log_info(const std::string& message) {
    if (!g_verbose) return;
    std::lock_guard lock(g_log_mutex);
    std::cerr << message << '\n';
}

void log_error(const std::string& message) {
    std::lock_guard lock(g_log_mutex);
    std::cerr << "error: " << message << '\n';
}

std::vector<ImageEntry> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
    std::vector<ImageEntry> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm") out.push_back({e.path().stem().string(), e.path()});
    }
    std::sort(out.begin(), out.end(), [](const ImageEntry& a, const ImageEntry& b) { return a.id < b.id; });
    return out;
}

std::string resolve_backend(const std::optional<std::string>& flag, const PipelineConfig& cfg) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv("CROWDSEED_BACKEND"); env && *env) return env;
    return cfg.backend;
}

std::shared_ptr<Segmenter> make_backend(const std::string& spec, const fs::path& images_dir,
                                        const PipelineConfig& cfg) {
    if (spec == "sim" || spec.rfind("sim:", 0) == 0) {
        SimSegmenterConfig sim = cfg.sim;
        if (spec.size() > 4) sim = load_config(spec.substr(4)).sim;
        auto seg = std::make_shared<SimulatedSegmenter>(sim);
        if (fs::is_directory(images_dir)) {
            std::vector<fs::path> truths;
            for (const auto& e : fs::directory_iterator(images_dir)) {
                if (has_suffix(e.path().filename().string(), ".truth.json")) truths.push_back(e.path());
            }
            std::sort(truths.begin(), truths.end());
            for (const auto& t : truths) {
                seg->add_scene(std::make_shared<GroundTruthScene>(load_scene_truth(t.string())));
            }
        }
        return seg;
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        auto http = std::make_shared<HttpSegmenter>(spec, std::chrono::seconds(cfg.timeout_s));
        return std::make_shared<RetryingSegmenter>(http);
    }
    throw Error(ErrorCode::ValidationError, "backend must be sim, sim:CONFIG or an http(s) URL, got \"" + spec + "\"");
}

PseudoLabelSet localize_labels(const PseudoLabelSet& labels, const RasterImage& image, Segmenter& segmenter,
                               const PipelineConfig& cfg) {
    auto persons = localize_missing_heads(labels.partition.persons(), image, segmenter, cfg.localizer, cfg.seed,
                                          labels.image_id, cfg.refine.max_in_flight);
    return PseudoLabelSet{labels.image_id, labels.partition.with_persons(std::move(persons))};
}

DensityGrid fit_labels(const PseudoLabelSet& labels, const RasterImage* image, const PipelineConfig& cfg,
                       FitReport* report, AppearanceStats* appearance) {
    if (image && cfg.appearance_prior) {
        const DensityGrid prior = appearance_prior(*image, labels.partition, cfg.appearance, appearance);
        return fit_density(labels.partition, cfg.loss, cfg.fit, report, &prior);
    }
    return fit_density(labels.partition, cfg.loss, cfg.fit, report);
}

std::vector<IterationArtifacts> refine_rounds(const PseudoLabelSet& labels, const DensityGrid& density,
                                              const RasterImage& image, Segmenter& segmenter,
                                              const PipelineConfig& cfg, int iterations) {
    std::vector<IterationArtifacts> out;
    out.reserve(static_cast<std::size_t>(std::max(iterations, 0)));
    const PseudoLabelSet* prev_labels = &labels;
    const DensityGrid* prev_density = &density;
    for (int k = 1; k <= iterations; ++k) {
        IterationArtifacts it;
        it.labels = refine_pseudolabels(*prev_labels, *prev_density, image, segmenter, cfg.refine, cfg.localizer,
                                        cfg.seed + static_cast<std::uint64_t>(k), &it.refine);
        it.density = fit_labels(it.labels, &image, cfg, &it.fit, &it.appearance);
        log_info(labels.image_id + " iter" + std::to_string(k) + ": " + std::to_string(it.refine.peaks) + " peaks, " +
                 std::to_string(it.refine.new_persons) + " new persons, " +
                 std::to_string(it.labels.partition.persons().size()) + " total");
        out.push_back(std::move(it));
        prev_labels = &out.back().labels;
        prev_density = &out.back().density;
    }
    return out;
}

ImageRun run_image(const std::string& image_id, const RasterImage& image, Segmenter& segmenter,
                   const PipelineConfig& cfg) {
    cfg.validate();
    ImageRun run;
    run.image_id = image_id;
    IterationArtifacts first;
    first.labels = PseudoLabelSet{image_id, adaptive_segment(image, segmenter, cfg.adaseem, image_id, &run.adaseem)};
    log_info(image_id + " iter0: " + std::to_string(first.labels.partition.persons().size()) + " persons after " +
             std::to_string(run.adaseem.rounds) + " zoom rounds");
    first.labels = localize_labels(first.labels, image, segmenter, cfg);
    first.density = fit_labels(first.labels, &image, cfg, &first.fit, &first.appearance);
    run.iterations.push_back(std::move(first));
    auto more = refine_rounds(run.iterations[0].labels, run.iterations[0].density, image, segmenter, cfg,
                              cfg.refine.iterations);
    for (auto& it : more) run.iterations.push_back(std::move(it));
    return run;
}

void write_iteration(const fs::path& dir, const IterationArtifacts& it, const AdaSeemTrace* adaseem) {
    const std::string& id = it.labels.image_id;
    save_label_set(it.labels, dir / "labels" / (id + ".json"));
    save_density(it.density, dir / "density" / (id + ".csdg"));
    json stats;
    stats["image_id"] = id;
    stats["persons"] = it.labels.partition.persons().size();
    stats["uncertain_pixels"] = it.labels.partition.uncertain().count();
    stats["fit"] = {{"steps", it.fit.loss_trace.empty() ? 0 : it.fit.loss_trace.size() - 1},
                    {"final_loss", it.fit.loss_trace.empty() ? 0.0 : it.fit.loss_trace.back()},
                    {"rejected_steps", it.fit.rejected_steps},
                    {"max_mass_error", it.fit.max_mass_error},
                    {"converged", it.fit.converged}};
    stats["appearance"] = {{"person_like_pixels", it.appearance.person_like_pixels},
                           {"candidates", it.appearance.candidates}};
    stats["refine"] = {{"peaks", it.refine.peaks},
                       {"prompts_with_person", it.refine.prompts_with_person},
                       {"new_persons", it.refine.new_persons}};
    if (adaseem) {
        stats["adaseem"] = {{"segment_calls", adaseem->segment_calls},
                            {"rounds", adaseem->rounds},
                            {"tiles_per_round", adaseem->tiles_per_round},
                            {"uncertain_pixels", adaseem->uncertain_pixels},
                            {"persons_after_round", adaseem->persons_after_round}};
    }
    write_text_file(dir / "stats" / (id + ".json"), dump_json(stats));
}

RunSummary run_pipeline(const fs::path& images_dir, const fs::path& out_dir, Segmenter& segmenter,
                        const PipelineConfig& cfg) {
    cfg.validate();
    const auto images = list_images(images_dir);
    RunSummary summary;
    std::vector<std::optional<std::string>> errors(images.size());
    std::vector<bool> backend_err(images.size(), false);
    parallel_for(images.size(), cfg.jobs, [&](std::size_t i) {
        const auto& entry = images[i];
        try {
            const RasterImage image = read_image(entry.path);
            const ImageRun run = run_image(entry.id, image, segmenter, cfg);
            for (std::size_t k = 0; k < run.iterations.size(); ++k) {
                write_iteration(out_dir / iter_name(static_cast<int>(k)), run.iterations[k], k == 0 ? &run.adaseem : nullptr);
            }
        } catch (const Error& e) {
            errors[i] = e.what();
            backend_err[i] = e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::MalformedResponse;
            log_error(entry.id + ": " + e.what());
        } catch (const std::exception& e) {
            errors[i] = e.what();
            log_error(entry.id + ": " + e.what());
        }
    });
    json manifest;
    manifest["version"] = 1;
    manifest["images_dir"] = images_dir.generic_string();
    manifest["iterations"] = cfg.refine.iterations;
    manifest["images"] = json::array();
    manifest["failed"] = json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (errors[i]) {
            summary.failed.emplace_back(images[i].id, *errors[i]);
            summary.backend_failure = summary.backend_failure || backend_err[i];
            manifest["failed"].push_back({{"id", images[i].id}, {"error", *errors[i]}});
        } else {
            summary.succeeded.push_back(images[i].id);
            manifest["images"].push_back(images[i].id);
        }
    }
    write_text_file(out_dir / "manifest.json", dump_json(manifest));
    write_text_file(out_dir / "config.toml", dump_config(cfg));
    return summary;
}

namespace {

std::optional<GroundTruthScene> load_truth(const std::optional<fs::path>& dir, const std::string& id) {
    if (!dir) return std::nullopt;
    const fs::path p = *dir / (id + ".truth.json");
    if (!fs::exists(p)) return std::nullopt;
    return load_scene_truth(p.string());
}

PointSet head_points(const PseudoLabelSet& labels) {
    PointSet pts;
    for (const auto& p : labels.partition.persons()) {
        if (p.head) pts.push_back({*p.head, p.score});
    }
    return pts;
}

}  // namespace

json evaluate_predictions(const fs::path& labels_dir, const std::optional<fs::path>& density_dir,
                          const std::optional<fs::path>& truth_dir, const EvalOptions& opt) {
    if (!fs::is_directory(labels_dir)) throw Error(ErrorCode::MissingArtifacts, "no label directory " + labels_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(labels_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::MissingArtifacts, "no label files in " + labels_dir.string());

    json images = json::array();
    std::vector<CountRecord> records;
    std::size_t matches = 0, n_pred = 0, n_truth = 0, persons = 0;
    double auc_sum = 0.0, recall_sum = 0.0, predicted_sum = 0.0;
    std::size_t with_truth = 0;
    for (const auto& f : files) {
        const PseudoLabelSet labels = load_label_set(f);
        const std::string& id = labels.image_id;
        json img;
        img["id"] = id;
        img["persons"] = labels.partition.persons().size();
        persons += labels.partition.persons().size();
        double predicted = static_cast<double>(labels.partition.persons().size());
        if (density_dir) {
            const fs::path dp = *density_dir / (id + ".csdg");
            if (fs::exists(dp)) predicted = load_density(dp).sum();
        }
        img["predicted_count"] = predicted;
        predicted_sum += predicted;
        if (auto truth = load_truth(truth_dir, id)) {
            ++with_truth;
            const PointSet pred = head_points(labels);
            const PointSet gt = truth->head_points();
            const auto loc = localization_metrics(pred, gt, opt.radii, opt.radius);
            const auto res = match_points(pred, gt, opt.radius);
            matches += res.pairs.size();
            n_pred += pred.size();
            n_truth += gt.size();
            auc_sum += loc.auc;
            const double recall = mask_recall(labels.partition.persons(), *truth);
            recall_sum += recall;
            records.push_back({id, predicted, static_cast<double>(gt.size())});
            img["truth_count"] = gt.size();
            img["abs_error"] = std::abs(predicted - static_cast<double>(gt.size()));
            img["mask_recall"] = recall;
            img["localization"] = {{"precision", loc.summary.precision},
                                   {"recall", loc.summary.recall},
                                   {"f1", loc.summary.f1},
                                   {"auc", loc.auc}};
        }
        images.push_back(std::move(img));
    }
    json agg;
    agg["images"] = files.size();
    agg["persons"] = persons;
    agg["predicted_count"] = predicted_sum;
    agg["truth_available"] = with_truth > 0;
    if (with_truth > 0) {
        const auto cm = count_metrics(records);
        const auto prf = prf_from_counts(matches, n_pred, n_truth);
        agg["images_with_truth"] = with_truth;
        agg["mae"] = cm.mae;
        agg["mse"] = cm.mse;
        agg["radius"] = opt.radius;
        agg["precision"] = prf.precision;
        agg["recall"] = prf.recall;
        agg["f1"] = prf.f1;
        agg["auc"] = auc_sum / static_cast<double>(with_truth);
        agg["mask_recall"] = recall_sum / static_cast<double>(with_truth);
    }
    return json{{"images", images}, {"aggregate", agg}};
}

json build_report(const fs::path& run_dir, const std::optional<fs::path>& truth_dir, const EvalOptions& opt) {
    const fs::path manifest_path = run_dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw Error(ErrorCode::MissingArtifacts, "no manifest.json in " + run_dir.string());
    json manifest;
    try {
        const auto bytes = read_file_bytes(manifest_path);
        manifest = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MissingArtifacts, "unreadable manifest: " + std::string(e.what()));
    }
    std::optional<fs::path> truth = truth_dir;
    if (!truth && manifest.contains("images_dir")) truth = fs::path(manifest["images_dir"].get<std::string>());

    json report;
    report["version"] = 1;
    report["iterations"] = json::array();
    bool any_truth = false;
    for (int k = 0;; ++k) {
        const fs::path dir = run_dir / iter_name(k);
        if (!fs::is_directory(dir)) {
            if (k == 0) throw Error(ErrorCode::MissingArtifacts, "no iter0 directory in " + run_dir.string());
            break;
        }
        json block = evaluate_predictions(dir / "labels", dir / "density", truth, opt);
        any_truth = any_truth || block["aggregate"]["truth_available"].get<bool>();
        block["iteration"] = k;
        report["iterations"].push_back(std::move(block));
    }
    report["truth_available"] = any_truth;
    if (!any_truth) report["notice"] = "no ground truth found; metrics omitted, counts only";
    return report;
}

std::string report_table(const json& report) {
    std::ostringstream out;
    const bool truth = report.value("truth_available", false);
    const auto num = [](const json& j, const char* key, int prec) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(prec) << j.at(key).get<double>();
        return s.str();
    };
    out << std::left << std::setw(6) << "iter" << std::right << std::setw(9) << "persons" << std::setw(11) << "count";
    if (truth) {
        out << std::setw(9) << "MAE" << std::setw(9) << "MSE" << std::setw(8) << "prec" << std::setw(8) << "rec"
            << std::setw(8) << "F1" << std::setw(8) << "AUC" << std::setw(10) << "maskrec";
    }
    out << '\n';
    for (const auto& it : report.at("iterations")) {
        const auto& a = it.at("aggregate");
        out << std::left << std::setw(6) << it.at("iteration").get<int>() << std::right << std::setw(9)
            << a.at("persons").get<std::size_t>() << std::setw(11) << num(a, "predicted_count", 1);
        if (truth && a.value("truth_available", false)) {
            out << std::setw(9) << num(a, "mae", 2) << std::setw(9) << num(a, "mse", 2) << std::setw(8)
                << num(a, "precision", 3) << std::setw(8) << num(a, "recall", 3) << std::setw(8) << num(a, "f1", 3)
                << std::setw(8) << num(a, "auc", 3) << std::setw(10) << num(a, "mask_recall", 3);
        }
        out << '\n';
    }
    if (report.contains("notice")) out << "note: " << report["notice"].get<std::string>() << '\n';
    return out.str();
}

}  // namespace crowdseed
