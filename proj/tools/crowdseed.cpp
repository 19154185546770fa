#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crowdseed/config.hpp"
#include "crowdseed/image_io.hpp"
#include "crowdseed/label_io.hpp"
#include "crowdseed/parallel.hpp"
#include "crowdseed/pipeline.hpp"
#include "crowdseed/sim_server.hpp"
#include "crowdseed/synth.hpp"

namespace fs = std::filesystem;
using namespace crowdseed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitPartial = 4;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    bool verbose = false;
};

PipelineConfig load_pipeline_config(const Globals& g) {
    PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (g.jobs) cfg.jobs = *g.jobs;
    return cfg;
}

bool is_backend_error(ErrorCode c) { return c == ErrorCode::BackendUnavailable || c == ErrorCode::MalformedResponse; }

/// Outcome of a per-image command: which ids failed and whether any failure came from the backend.
struct BatchResult {
    std::size_t total = 0;
    std::size_t failed = 0;
    bool backend_failure = false;
};

int exit_code(const BatchResult& r) {
    if (r.failed == 0) return kExitOk;
    if (r.failed == r.total && r.backend_failure) return kExitBackend;
    return kExitPartial;
}

int exit_code(const RunSummary& s) {
    return exit_code(BatchResult{s.succeeded.size() + s.failed.size(), s.failed.size(), s.backend_failure});
}

template <typename Item, typename Fn>
BatchResult for_each_item(const std::vector<Item>& items, int jobs, Fn&& fn) {
    BatchResult result;
    result.total = items.size();
    std::vector<int> status(items.size(), 0);  // 1 other failure, 2 backend failure
    parallel_for(items.size(), jobs, [&](std::size_t i) {
        try {
            fn(items[i]);
        } catch (const Error& e) {
            status[i] = is_backend_error(e.code()) ? 2 : 1;
            log_error(std::string(items[i].id) + ": " + e.what());
        } catch (const std::exception& e) {
            status[i] = 1;
            log_error(std::string(items[i].id) + ": " + e.what());
        }
    });
    for (int s : status) {
        if (s) ++result.failed;
        if (s == 2) result.backend_failure = true;
    }
    return result;
}

struct LabelEntry {
    std::string id;
    fs::path path;
};

std::vector<LabelEntry> list_label_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingArtifacts, "no label directory " + dir.string());
    std::vector<LabelEntry> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") out.push_back({e.path().stem().string(), e.path()});
    }
    std::sort(out.begin(), out.end(), [](const LabelEntry& a, const LabelEntry& b) { return a.id < b.id; });
    if (out.empty()) throw Error(ErrorCode::MissingArtifacts, "no label files in " + dir.string());
    return out;
}

fs::path find_image(const fs::path& images_dir, const std::string& id) {
    for (const char* ext : {".png", ".pgm", ".ppm"}) {
        const fs::path p = images_dir / (id + ext);
        if (fs::exists(p)) return p;
    }
    throw Error(ErrorCode::MissingArtifacts, "no image for " + id + " in " + images_dir.string());
}

std::optional<std::string> opt_string(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crowdseed: unsupervised crowd pseudo-labels from a promptable segmenter"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "TOML configuration file");
    app.add_option("--seed", g.seed, "Base seed for every seeded step");
    app.add_option("--jobs", g.jobs, "Images processed concurrently");
    app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");

    // synth
    auto* synth = app.add_subcommand("synth", "Render synthetic crowd scenes with ground truth");
    std::string synth_out;
    int synth_scenes = 1;
    std::optional<int> synth_count;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--scenes", synth_scenes, "Number of scenes")->check(CLI::PositiveNumber);
    synth->add_option("--count", synth_count, "Persons per scene");

    // simserve
    auto* simserve = app.add_subcommand("simserve", "Serve the simulated segmenter over HTTP");
    std::string serve_dir, serve_host = "127.0.0.1", serve_model = "crowdseed-sim";
    int serve_port = 8080;
    simserve->add_option("--scene", serve_dir, "Directory with <id>.truth.json files")->required();
    simserve->add_option("--host", serve_host, "Bind address");
    simserve->add_option("--port", serve_port, "Port (0 picks a free one)");
    simserve->add_option("--model", serve_model, "Model name reported by /v1/health");

    // pseudolabel
    auto* pseudo = app.add_subcommand("pseudolabel", "Adaptive segmentation into label files");
    std::string pl_images, pl_out, pl_backend;
    std::optional<double> pl_tau, pl_nms;
    std::optional<int> pl_sinit, pl_smin;
    pseudo->add_option("--images", pl_images, "Image directory")->required();
    pseudo->add_option("--out", pl_out, "Label directory")->required();
    pseudo->add_option("--backend", pl_backend, "sim, sim:CONFIG or a URL");
    pseudo->add_option("--tau", pl_tau, "Uncertain ratio threshold");
    pseudo->add_option("--s-init", pl_sinit, "Initial tile side");
    pseudo->add_option("--s-min", pl_smin, "Smallest tile side");
    pseudo->add_option("--nms-iou", pl_nms, "NMS IoU threshold");

    // localize
    auto* localize = app.add_subcommand("localize", "Fill head points of label files");
    std::string lo_labels, lo_images, lo_out, lo_backend;
    std::optional<int> lo_k;
    localize->add_option("--labels", lo_labels, "Label directory")->required();
    localize->add_option("--images", lo_images, "Image directory")->required();
    localize->add_option("--out", lo_out, "Output directory (default: rewrite in place)");
    localize->add_option("--backend", lo_backend, "sim, sim:CONFIG or a URL");
    localize->add_option("--k", lo_k, "Prompt points per person");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit density grids to label files");
    std::string fit_labels_dir, fit_out, fit_images, fit_kernel;
    std::optional<double> fit_omega, fit_beta, fit_eps, fit_lr;
    std::optional<int> fit_steps;
    fit->add_option("--labels", fit_labels_dir, "Label directory")->required();
    fit->add_option("--out", fit_out, "Density directory")->required();
    fit->add_option("--images", fit_images, "Image directory, enables the appearance prior");
    fit->add_option("--omega", fit_omega, "Weight of the head term");
    fit->add_option("--beta", fit_beta, "Weight of the background term");
    fit->add_option("--epsilon", fit_eps, "Kernel bandwidth in px^2");
    fit->add_option("--kernel", fit_kernel, "attractive or verbatim");
    fit->add_option("--steps", fit_steps, "Optimizer steps");
    fit->add_option("--lr", fit_lr, "Learning rate");

    // refine
    auto* refine = app.add_subcommand("refine", "Refinement rounds from labels and densities");
    std::string rf_labels, rf_density, rf_images, rf_out, rf_backend;
    std::optional<int> rf_iters;
    refine->add_option("--labels", rf_labels, "Label directory")->required();
    refine->add_option("--density", rf_density, "Density directory")->required();
    refine->add_option("--images", rf_images, "Image directory")->required();
    refine->add_option("--out", rf_out, "Output directory, receives iter1..iterN")->required();
    refine->add_option("--backend", rf_backend, "sim, sim:CONFIG or a URL");
    refine->add_option("--iterations", rf_iters, "Refinement rounds");

    // run
    auto* run = app.add_subcommand("run", "Full pipeline over an image directory");
    std::string run_images, run_out, run_backend;
    std::optional<int> run_iters;
    run->add_option("--images", run_images, "Image directory")->required();
    run->add_option("--out", run_out, "Run directory (default: config output)");
    run->add_option("--backend", run_backend, "sim, sim:CONFIG or a URL");
    run->add_option("--iterations", run_iters, "Refinement rounds");

    // eval
    auto* eval = app.add_subcommand("eval", "Metrics of label files against ground truth");
    std::string ev_pred, ev_truth, ev_report;
    double ev_radius = 50.0;
    eval->add_option("--pred", ev_pred, "Label directory, or an iteration directory with labels/ and density/")
        ->required();
    eval->add_option("--truth", ev_truth, "Directory with <id>.truth.json files")->required();
    eval->add_option("--report", ev_report, "Write the JSON report here");
    eval->add_option("--radius", ev_radius, "Match radius for precision/recall/F1")->check(CLI::PositiveNumber);

    // report
    auto* report = app.add_subcommand("report", "Per-iteration summary of a run directory");
    std::string rp_run, rp_truth, rp_out;
    double rp_radius = 50.0;
    report->add_option("--run", rp_run, "Run directory")->required();
    report->add_option("--truth", rp_truth, "Ground truth directory (default: the run's image directory)");
    report->add_option("--out", rp_out, "JSON path (default: <run>/report.json; text goes next to it)");
    report->add_option("--radius", rp_radius, "Match radius")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    set_verbose(g.verbose);

    try {
        PipelineConfig cfg = load_pipeline_config(g);

        if (*synth) {
            if (synth_count) cfg.scene.count = *synth_count;
            if (g.seed) cfg.scene.seed = *g.seed;
            cfg.scene.validate();
            for (int i = 0; i < synth_scenes; ++i) {
                SceneConfig sc = cfg.scene;
                sc.seed = cfg.scene.seed + static_cast<std::uint64_t>(i);
                char id[32];
                std::snprintf(id, sizeof id, "scene_%03d", i);
                save_scene(generate_scene(sc, id), synth_out);
                log_info(std::string("wrote ") + id);
            }
            return kExitOk;
        }

        if (*simserve) {
            cfg.validate();
            auto seg = make_backend("sim", serve_dir, cfg);
            WireServer server(seg, serve_model);
            server.listen(serve_host, serve_port, [&](int port) {
                std::cout << "serving " << serve_dir << " on http://" << serve_host << ":" << port << std::endl;
            });
            return kExitOk;
        }

        if (*pseudo) {
            if (pl_tau) cfg.adaseem.tau = *pl_tau;
            if (pl_sinit) cfg.adaseem.s_initial = *pl_sinit;
            if (pl_smin) cfg.adaseem.s_min = *pl_smin;
            if (pl_nms) cfg.adaseem.nms_iou = *pl_nms;
            cfg.validate();
            auto seg = make_backend(resolve_backend(opt_string(pl_backend), cfg), pl_images, cfg);
            const auto images = list_images(pl_images);
            const auto res = for_each_item(images, cfg.jobs, [&](const ImageEntry& e) {
                const RasterImage image = read_image(e.path);
                AdaSeemTrace trace;
                const PseudoLabelSet labels{e.id, adaptive_segment(image, *seg, cfg.adaseem, e.id, &trace)};
                save_label_set(labels, fs::path(pl_out) / (e.id + ".json"));
                log_info(e.id + ": " + std::to_string(labels.partition.persons().size()) + " persons, " +
                         std::to_string(trace.rounds) + " zoom rounds");
            });
            return exit_code(res);
        }

        if (*localize) {
            if (lo_k) cfg.localizer.k = *lo_k;
            cfg.validate();
            auto seg = make_backend(resolve_backend(opt_string(lo_backend), cfg), lo_images, cfg);
            const fs::path out = lo_out.empty() ? fs::path(lo_labels) : fs::path(lo_out);
            const auto files = list_label_files(lo_labels);
            const auto res = for_each_item(files, cfg.jobs, [&](const LabelEntry& e) {
                const PseudoLabelSet labels = load_label_set(e.path);
                const RasterImage image = read_image(find_image(lo_images, labels.image_id));
                save_label_set(localize_labels(labels, image, *seg, cfg), out / e.path.filename());
            });
            return exit_code(res);
        }

        if (*fit) {
            if (fit_omega) cfg.loss.omega = *fit_omega;
            if (fit_beta) cfg.loss.beta = *fit_beta;
            if (fit_eps) cfg.loss.epsilon = *fit_eps;
            if (!fit_kernel.empty()) cfg.loss.kernel = parse_kernel_mode(fit_kernel);
            if (fit_steps) cfg.fit.steps = *fit_steps;
            if (fit_lr) cfg.fit.lr = *fit_lr;
            cfg.validate();
            const auto files = list_label_files(fit_labels_dir);
            const auto res = for_each_item(files, cfg.jobs, [&](const LabelEntry& e) {
                const PseudoLabelSet labels = load_label_set(e.path);
                std::optional<RasterImage> image;
                if (!fit_images.empty()) image = read_image(find_image(fit_images, labels.image_id));
                FitReport rep;
                const DensityGrid d = fit_labels(labels, image ? &*image : nullptr, cfg, &rep);
                save_density(d, fs::path(fit_out) / (labels.image_id + ".csdg"));
                if (!rep.converged) {
                    log_info(labels.image_id + ": mass criterion not met, max |S-1| = " +
                             std::to_string(rep.max_mass_error));
                }
            });
            return exit_code(res);
        }

        if (*refine) {
            if (rf_iters) cfg.refine.iterations = *rf_iters;
            cfg.validate();
            auto seg = make_backend(resolve_backend(opt_string(rf_backend), cfg), rf_images, cfg);
            const auto files = list_label_files(rf_labels);
            const auto res = for_each_item(files, cfg.jobs, [&](const LabelEntry& e) {
                const PseudoLabelSet labels = load_label_set(e.path);
                const DensityGrid density = load_density(fs::path(rf_density) / (labels.image_id + ".csdg"));
                const RasterImage image = read_image(find_image(rf_images, labels.image_id));
                const auto rounds = refine_rounds(labels, density, image, *seg, cfg, cfg.refine.iterations);
                for (std::size_t k = 0; k < rounds.size(); ++k) {
                    write_iteration(fs::path(rf_out) / ("iter" + std::to_string(k + 1)), rounds[k]);
                }
            });
            return exit_code(res);
        }

        if (*run) {
            if (run_iters) cfg.refine.iterations = *run_iters;
            cfg.validate();
            const fs::path out = run_out.empty() ? fs::path(cfg.output) : fs::path(run_out);
            auto seg = make_backend(resolve_backend(opt_string(run_backend), cfg), run_images, cfg);
            const RunSummary summary = run_pipeline(run_images, out, *seg, cfg);
            log_info(std::to_string(summary.succeeded.size()) + " images done, " +
                     std::to_string(summary.failed.size()) + " failed");
            return exit_code(summary);
        }

        if (*eval) {
            EvalOptions opt;
            opt.radius = ev_radius;
            fs::path labels_dir = ev_pred;
            std::optional<fs::path> density_dir;
            if (fs::is_directory(labels_dir / "labels")) {
                if (fs::is_directory(labels_dir / "density")) density_dir = labels_dir / "density";
                labels_dir /= "labels";
            }
            const auto result = evaluate_predictions(labels_dir, density_dir, fs::path(ev_truth), opt);
            const std::string text = dump_json(result);
            if (!ev_report.empty()) write_text_file(ev_report, text);
            std::cout << dump_json(result["aggregate"]);
            return kExitOk;
        }

        if (*report) {
            EvalOptions opt;
            opt.radius = rp_radius;
            std::optional<fs::path> truth;
            if (!rp_truth.empty()) truth = rp_truth;
            const auto rep = build_report(rp_run, truth, opt);
            const fs::path json_path = rp_out.empty() ? fs::path(rp_run) / "report.json" : fs::path(rp_out);
            fs::path text_path = json_path;
            text_path.replace_extension(".txt");
            const std::string table = report_table(rep);
            write_text_file(json_path, dump_json(rep));
            write_text_file(text_path, table);
            std::cout << table;
            return kExitOk;
        }
    } catch (const Error& e) {
        log_error(e.what());
        switch (e.code()) {
            case ErrorCode::ParseError:
            case ErrorCode::ValidationError:
                return kExitConfig;
            case ErrorCode::BackendUnavailable:
            case ErrorCode::MalformedResponse:
                return kExitBackend;
            default:
                return kExitOther;
        }
    } catch (const std::exception& e) {
        log_error(e.what());
        return kExitOther;
    }
    return kExitOther;
}
