// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "crowdseed/adaseem.hpp"
#include "crowdseed/image_io.hpp"
#include "crowdseed/localizer.hpp"
#include "crowdseed/loss.hpp"
#include "crowdseed/metrics.hpp"
#include "crowdseed/pipeline.hpp"
#include "crowdseed/synth.hpp"
#include "support.hpp"

using namespace crowdseed;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::ostringstream line;
    line << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << std::fixed;
    line.precision(1);
    line << seconds_since(t0) << " s]";
    std::cout << line.str() << std::endl;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

// Halton radical inverse; low-discrepancy draws keep the sample mean of each
// component close to its planted mean.
double halton(std::uint64_t i, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

Outcome em_recovery() {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr int kSamples = 5000;
    double worst_mean = 0.0, worst_pi = 0.0, slowest = 0.0;
    int bad = 0;
    for (int t = 0; t < 50; ++t) {
        const double pi0 = 0.2 + 0.6 * u(rng);
        const double sigma[2] = {4.0 + 4.0 * u(rng), 4.0 + 4.0 * u(rng)};
        const double sep = (4.0 + 2.0 * u(rng)) * std::max(sigma[0], sigma[1]);
        const double angle = 2.0 * std::numbers::pi * u(rng);
        const Point mu[2] = {{0.0, 0.0}, {sep * std::cos(angle), sep * std::sin(angle)}};
        const int n0 = static_cast<int>(std::lround(pi0 * kSamples));
        const double planted_pi[2] = {static_cast<double>(n0) / kSamples, 1.0 - static_cast<double>(n0) / kSamples};

        std::vector<Point> pts;
        const std::uint64_t offset = 1 + static_cast<std::uint64_t>(u(rng) * 1e6);
        for (int j = 0; j < 2; ++j) {
            const int nj = j == 0 ? n0 : kSamples - n0;
            for (int i = 0; i < nj; ++i) {
                const std::uint64_t k = offset + static_cast<std::uint64_t>(j) * 100000 + static_cast<std::uint64_t>(i);
                const double r = std::sqrt(-2.0 * std::log(halton(k, 2)));
                const double phi = 2.0 * std::numbers::pi * halton(k, 3);
                pts.push_back({mu[j].x + sigma[j] * r * std::cos(phi), mu[j].y + sigma[j] * r * std::sin(phi)});
            }
        }
        double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
        for (const auto& p : pts) {
            x0 = std::min(x0, p.x);
            y0 = std::min(y0, p.y);
            x1 = std::max(x1, p.x);
            y1 = std::max(y1, p.y);
        }
        const int ox = static_cast<int>(std::floor(x0)) - 1, oy = static_cast<int>(std::floor(y0)) - 1;
        const Rect win{ox, oy, static_cast<int>(std::ceil(x1)) - ox + 1, static_cast<int>(std::ceil(y1)) - oy + 1};
        std::vector<double> counts(static_cast<std::size_t>(win.area()), 0.0);
        for (const auto& p : pts) {
            const int c = static_cast<int>(std::floor(p.x)) - win.x, r = static_cast<int>(std::floor(p.y)) - win.y;
            counts[static_cast<std::size_t>(r) * win.w + c] += 1.0;
        }
        const double peak = *std::max_element(counts.begin(), counts.end());
        for (auto& c : counts) c /= peak;
        const SoftMask mask(win, std::move(counts));

        const auto t0 = Clock::now();
        const GmmParams g = fit_weighted_gmm(mask, LocalizerConfig{});
        slowest = std::max(slowest, seconds_since(t0));

        const auto dist = [&](int fitted, int truth) {
            return std::hypot(g.comp[fitted].mean.x - mu[truth].x, g.comp[fitted].mean.y - mu[truth].y) /
                   sigma[truth];
        };
        const bool swap = dist(0, 1) + dist(1, 0) < dist(0, 0) + dist(1, 1);
        double mean_err = 0.0, pi_err = 0.0;
        for (int j = 0; j < 2; ++j) {
            const int f = swap ? 1 - j : j;
            mean_err = std::max(mean_err, dist(f, j));
            pi_err = std::max(pi_err, std::abs(g.comp[f].weight - planted_pi[j]));
        }
        worst_mean = std::max(worst_mean, mean_err);
        worst_pi = std::max(worst_pi, pi_err);
        if (mean_err > 0.05 || pi_err > 0.05) ++bad;
    }
    return {bad == 0 && slowest < 0.5, "50 mixtures, worst mean error " + fmt(worst_mean) + " sigma, worst pi error " +
                                           fmt(worst_pi) + ", slowest fit " + fmt(slowest, 3) + " s, " +
                                           std::to_string(bad) + " outside tolerance"};
}

Outcome em_monotonicity() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> side(4, 40);
    int violations = 0, steps = 0;
    for (int t = 0; t < 200; ++t) {
        const int w = side(rng), h = side(rng);
        const double density = 0.3 + 0.7 * u(rng);
        SoftMask m({static_cast<int>(u(rng) * 100), static_cast<int>(u(rng) * 100), w, h});
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) m.set_local(c, r, u(rng) < density ? u(rng) : 0.0);
        }
        m.set_local(0, 0, 1.0);
        m.set_local(w - 1, h - 1, 1.0);
        EmTrace trace;
        fit_weighted_gmm(m, LocalizerConfig{}, &trace);
        for (std::size_t i = 1; i < trace.log_likelihood.size(); ++i) {
            ++steps;
            if (trace.log_likelihood[i] < trace.log_likelihood[i - 1] - 1e-9) ++violations;
        }
    }
    return {violations == 0,
            "200 masks, " + std::to_string(steps) + " EM steps, " + std::to_string(violations) + " violations"};
}

/// Random 8x8 partition with 1-4 persons, background and uncertain pixels, plus a positive density.
std::pair<RegionPartition, DensityGrid> random_loss_instance(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> npers(1, 4);
    constexpr int kSide = 8;
    std::vector<PersonInstance> persons;
    const int n = npers(rng);
    for (int i = 0; i < n; ++i) {
        SoftMask m = crowdseed::testing::random_binary_mask(rng, kSide, kSide, 6);
        const Rect& w = m.window();
        persons.push_back({std::move(m), 0.9, Point{w.x + u(rng) * w.w, w.y + u(rng) * w.h}});
    }
    BinaryMask bg(kSide, kSide), unc(kSide, kSide);
    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            bool covered = false;
            for (const auto& p : persons) covered = covered || p.mask.at(x, y) >= 0.5;
            const double r = u(rng);
            if (!covered && r < 0.25) unc.set(x, y);
            else if (r < 0.7) bg.set(x, y);
        }
    }
    std::vector<double> d(kSide * kSide);
    for (auto& v : d) v = 0.02 + 0.5 * u(rng);
    return {RegionPartition(kSide, kSide, std::move(persons), bg, unc), DensityGrid(kSide, kSide, std::move(d))};
}

Outcome gradient_check() {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> eps(2.0, 64.0);
    double worst = 0.0;
    for (KernelMode mode : {KernelMode::Attractive, KernelMode::Verbatim}) {
        for (int t = 0; t < 100; ++t) {
            LossConfig cfg;
            cfg.kernel = mode;
            cfg.epsilon = eps(rng);
            auto [part, d] = random_loss_instance(rng);
            const auto g = loss_gradient(d, part, cfg);
            std::vector<double> v(d.values().begin(), d.values().end());
            for (std::size_t i = 0; i < v.size(); ++i) {
                constexpr double h = 1e-5;
                auto plus = v, minus = v;
                plus[i] += h;
                minus[i] -= h;
                const double fd = (total_loss(DensityGrid(d.width(), d.height(), plus), part, cfg) -
                                   total_loss(DensityGrid(d.width(), d.height(), minus), part, cfg)) /
                                  (2 * h);
                const double scale = std::max({std::abs(fd), std::abs(g[i]), 1.0});
                worst = std::max(worst, std::abs(fd - g[i]) / scale);
            }
        }
    }
    return {worst <= 1e-5, "100 instances x 2 kernel modes, max relative error " + fmt(worst, 3)};
}

RegionPartition truth_partition(const GroundTruthScene& scene) {
    const int w = scene.image.width(), h = scene.image.height();
    std::vector<PersonInstance> persons;
    for (std::size_t i = 0; i < scene.persons.size(); ++i) {
        if (scene.visible_area[i] == 0) continue;
        persons.push_back({scene.visible_mask(i), 1.0, scene.persons[i].head});
    }
    BinaryMask bg(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (scene.label_at(x, y) < 0) bg.set(x, y);
        }
    }
    return RegionPartition(w, h, std::move(persons), bg, BinaryMask(w, h));
}

Outcome mass_convergence() {
    double worst_mass = 0.0, worst_count = 0.0, slowest = 0.0;
    int bad = 0;
    for (int s = 0; s < 20; ++s) {
        SceneConfig sc;
        sc.seed = 500 + static_cast<std::uint64_t>(s);
        const GroundTruthScene scene = generate_scene(sc, "mass" + std::to_string(s));
        const RegionPartition part = truth_partition(scene);
        const auto t0 = Clock::now();
        const DensityGrid d = fit_density(part, LossConfig{}, FitOptions{});
        const double t = seconds_since(t0);
        slowest = std::max(slowest, t);
        const auto masses = LossProblem(part, LossConfig{}).person_masses(d.values());
        double mass_err = 0.0;
        for (double m : masses) mass_err = std::max(mass_err, std::abs(m - 1.0));
        const double n = static_cast<double>(part.persons().size());
        const double count_err = std::abs(d.sum() - n) / n;
        worst_mass = std::max(worst_mass, mass_err);
        worst_count = std::max(worst_count, count_err);
        if (mass_err > 0.02 || count_err > 0.025 || t > 60.0) ++bad;
    }
    return {bad == 0, "20 scenes 512x512, worst |S-1| " + fmt(worst_mass) + ", worst count error " +
                          fmt(100 * worst_count, 3) + "%, slowest fit " + fmt(slowest, 3) + " s"};
}

Outcome zoom_benefit() {
    double worst_gain = 1.0, mean_single = 0.0, mean_ada = 0.0;
    int max_rounds = 0;
    bool ok = true;
    for (int s = 0; s < 10; ++s) {
        SceneConfig sc;
        sc.count = 200;
        sc.h_max = 80;
        sc.h_min = 8;
        sc.seed = 300 + static_cast<std::uint64_t>(s);
        auto scene = std::make_shared<GroundTruthScene>(generate_scene(sc, "zoom" + std::to_string(s)));
        SimSegmenterConfig simc;
        simc.h50 = 24.0;
        SimulatedSegmenter seg(simc);
        seg.add_scene(scene);
        AdaSeemConfig cfg;
        cfg.tau = 0.3;
        cfg.s_initial = 512;
        cfg.s_min = 64;
        const double single = mask_recall(single_pass_segment(scene->image, seg, scene->id).persons(), *scene);
        AdaSeemTrace trace;
        const double ada = mask_recall(adaptive_segment(scene->image, seg, cfg, scene->id, &trace).persons(), *scene);
        worst_gain = std::min(worst_gain, ada - single);
        mean_single += single / 10;
        mean_ada += ada / 10;
        max_rounds = std::max(max_rounds, trace.rounds);
        ok = ok && ada - single >= 0.20 && trace.rounds <= 4;
    }
    return {ok, "10 scenes, mean recall single " + fmt(mean_single, 3) + " -> adaptive " + fmt(mean_ada, 3) +
                    ", smallest gain " + fmt(worst_gain, 3) + ", max rounds " + std::to_string(max_rounds)};
}

Outcome nms_oracle() {
    std::mt19937_64 rng(1000);
    std::uniform_int_distribution<int> count(0, 20);
    std::uniform_int_distribution<int> bucket(0, 4);
    std::uniform_real_distribution<double> thresh(0.2, 0.8);
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<PersonInstance> existing, incoming;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) {
            PersonInstance p{crowdseed::testing::random_binary_mask(rng, 32, 32, 16), bucket(rng) / 4.0, {}};
            (rng() % 2 ? incoming : existing).push_back(std::move(p));
        }
        const double th = t % 2 ? 0.5 : thresh(rng);
        std::vector<PersonInstance> all = existing;
        all.insert(all.end(), incoming.begin(), incoming.end());
        if (nms_merge(existing, incoming, th) != crowdseed::testing::reference_nms(all, th)) ++mismatches;
    }
    return {mismatches == 0, "1000 instances, " + std::to_string(mismatches) + " mismatches"};
}

Outcome head_localization() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr int kCases = 500;
    const double gammas[] = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
    int inside = 0;
    double gmm_err = 0.0;
    std::vector<double> naive_err(std::size(gammas), 0.0);
    for (int i = 0; i < kCases; ++i) {
        const double h = 16.0 + 64.0 * u(rng);
        const double aspect = 0.10 + 0.05 * u(rng);
        const double bend = -0.06 + 0.12 * u(rng);
        const ScenePerson p = make_person(0, 100.0, 100.0 + h, h, aspect, bend, 40);
        const Rect win = p.bounds(400, 400);
        Rect occ{};
        switch (i % 3) {
        case 1: {
            const int cut = static_cast<int>(win.h * (0.2 + 0.3 * u(rng)));
            occ = Rect{win.x, win.bottom() - cut, win.w, cut};
            break;
        }
        case 2: {
            const int cw = static_cast<int>(win.w * (0.3 + 0.4 * u(rng)));
            const int ch = static_cast<int>(win.h * (0.3 + 0.3 * u(rng)));
            occ = u(rng) < 0.5 ? Rect{win.x, win.bottom() - ch, cw, ch} : Rect{win.right() - cw, win.bottom() - ch, cw, ch};
            break;
        }
        default:
            break;
        }
        const SoftMask m = render_silhouette(p, win, occ);
        const Point g = head_point(fit_weighted_gmm(m, LocalizerConfig{}));
        const double e = std::hypot(g.x - p.head.x, g.y - p.head.y);
        gmm_err += e / kCases;
        inside += e <= p.head_radius;
        for (std::size_t k = 0; k < std::size(gammas); ++k) {
            const Point q = naive_head_point(m, gammas[k]);
            naive_err[k] += std::hypot(q.x - p.head.x, q.y - p.head.y) / kCases;
        }
    }
    const auto best = std::min_element(naive_err.begin(), naive_err.end());
    const double best_gamma = gammas[best - naive_err.begin()];
    const double frac = static_cast<double>(inside) / kCases;
    return {frac >= 0.90 && gmm_err <= *best, "500 silhouettes, inside head disc " + fmt(100 * frac, 3) +
                                                  "%, mean error GMM " + fmt(gmm_err, 3) + " px vs naive (gamma " +
                                                  fmt(best_gamma, 2) + ") " + fmt(*best, 3) + " px"};
}

Outcome refinement_monotonicity() {
    PipelineConfig cfg;
    cfg.sim.prompt_override = true;
    cfg.refine.iterations = 2;
    bool ok = true;
    double worst_final = 1.0;
    std::ostringstream trail;
    for (int s = 0; s < 10; ++s) {
        SceneConfig sc = cfg.scene;
        sc.seed = 200 + static_cast<std::uint64_t>(s);
        auto scene = std::make_shared<GroundTruthScene>(generate_scene(sc, "refine" + std::to_string(s)));
        SimulatedSegmenter seg(cfg.sim);
        seg.add_scene(scene);
        const ImageRun run = run_image(scene->id, scene->image, seg, cfg);
        double prev_recall = -1.0;
        std::size_t prev_count = 0;
        for (const auto& it : run.iterations) {
            const double rec = mask_recall(it.labels.partition.persons(), *scene);
            const std::size_t count = it.labels.partition.persons().size();
            ok = ok && rec >= prev_recall && count >= prev_count;
            prev_recall = rec;
            prev_count = count;
        }
        ok = ok && run.iterations.size() == 3 && prev_recall >= 0.95;
        worst_final = std::min(worst_final, prev_recall);
        trail << (s ? ", " : "");
        for (std::size_t k = 0; k < run.iterations.size(); ++k) {
            trail << (k ? ">" : "") << fmt(mask_recall(run.iterations[k].labels.partition.persons(), *scene), 3);
        }
    }
    return {ok, "10 scenes, worst final recall " + fmt(worst_final, 3) + " (recall per iteration: " + trail.str() + ")"};
}

Outcome metrics_correctness() {
    bool ok = true;
    auto m = count_metrics({{"a", 13, 10}, {"b", 6, 10}});
    ok = ok && m.mae == 3.5 && m.mse == std::sqrt(12.5);
    m = count_metrics({{"a", 15, 10}});
    ok = ok && m.mae == 5.0 && m.mse == 5.0;
    m = count_metrics({{"a", 4, 4}, {"b", 9, 9}, {"c", 0, 0}});
    ok = ok && m.mae == 0.0 && m.mse == 0.0;
    m = count_metrics({{"a", 1, 2}, {"b", 3, 1}, {"c", 10, 7}});
    ok = ok && m.mae == 2.0 && m.mse == std::sqrt(14.0 / 3.0);
    const bool fixtures = ok;

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    std::uniform_int_distribution<int> len(1, 50);
    int order_violations = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<CountRecord> rec;
        for (int i = len(rng); i > 0; --i) rec.push_back({"", u(rng), u(rng)});
        const auto c = count_metrics(rec);
        if (c.mae > c.mse) ++order_violations;
    }

    bool perfect = true;
    std::uniform_real_distribution<double> pos(0.0, 512.0);
    for (int t = 0; t < 50; ++t) {
        PointSet pts;
        for (int i = len(rng); i > 0; --i) pts.push_back({{pos(rng), pos(rng)}, 1.0});
        const auto loc = localization_metrics(pts, pts);
        perfect = perfect && loc.summary.precision == 1.0 && loc.summary.recall == 1.0 && loc.auc == 1.0;
    }
    return {fixtures && order_violations == 0 && perfect,
            std::string("hand fixtures ") + (fixtures ? "exact" : "MISMATCH") + ", MAE>MSE in " +
                std::to_string(order_violations) + "/1000 random sets, perfect predictions " +
                (perfect ? "give precision=recall=auc=1" : "FAIL")};
}

std::string slurp(const fs::path& p) {
    const auto b = read_file_bytes(p);
    return std::string(b.begin(), b.end());
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + CROWDSEED_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(cmd.c_str());
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "crowdseed_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path log = root / "cli.log";
    const std::string images = (root / "images").string();
    if (run_cli("--seed 11 synth --out \"" + images + "\" --scenes 2", log) != 0) return {false, "synth failed"};
    for (const char* name : {"a", "b"}) {
        const std::string out = (root / name).string();
        if (run_cli("--seed 11 run --images \"" + images + "\" --out \"" + out + "\"", log) != 0) {
            return {false, std::string("run ") + name + " failed: " + slurp(log)};
        }
        if (run_cli("report --run \"" + out + "\" --truth \"" + images + "\"", log) != 0) {
            return {false, std::string("report ") + name + " failed: " + slurp(log)};
        }
    }
    int compared = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), root / "a");
        const std::string first = rel.begin()->string();
        const bool label = rel.parent_path().filename() == "labels";
        const bool rep = first.rfind("report", 0) == 0;
        if (!label && !rep) continue;
        ++compared;
        const fs::path other = root / "b" / rel;
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
    }
    fs::remove_all(root);
    return {compared > 0 && differing == 0,
            std::to_string(compared) + " label and report files compared across two runs, " + std::to_string(differing) +
                " differ"};
}

}  // namespace

int main() {
    std::cout << "crowdseed acceptance suite" << std::endl;
    report("EM recovery", em_recovery);
    report("EM monotonicity", em_monotonicity);
    report("gradient check", gradient_check);
    report("mass convergence", mass_convergence);
    report("AdaSEEM zoom benefit", zoom_benefit);
    report("NMS oracle", nms_oracle);
    report("head localization", head_localization);
    report("refinement monotonicity", refinement_monotonicity);
    report("metrics correctness", metrics_correctness);
    report("determinism", determinism);
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
