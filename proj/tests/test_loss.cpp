#include <doctest.h>

#include <cmath>
#include <random>

#include "crowdseed/loss.hpp"
#include "support.hpp"

using namespace crowdseed;
using crowdseed::testing::solid;

namespace {

RegionPartition persons_on_background(int w, int h, std::vector<PersonInstance> persons) {
    BinaryMask bg(w, h, true);
    for (const auto& p : persons) {
        const Rect& r = p.mask.window();
        for (int y = r.y; y < r.bottom(); ++y) {
            for (int x = r.x; x < r.right(); ++x) {
                if (p.mask.at(x, y) >= 0.5) bg.set(x, y, false);
            }
        }
    }
    return RegionPartition(w, h, std::move(persons), bg, BinaryMask(w, h));
}

/// Random 6x6 instance with 1-3 persons, some background and some uncertain pixels.
std::pair<RegionPartition, DensityGrid> random_instance(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> npers(1, 3);
    std::vector<PersonInstance> persons;
    const int n = npers(rng);
    for (int i = 0; i < n; ++i) {
        SoftMask m = crowdseed::testing::random_binary_mask(rng, 6, 6, 4);
        const Rect& w = m.window();
        const Point head{w.x + u(rng) * w.w, w.y + u(rng) * w.h};
        persons.push_back({std::move(m), 0.9, head});
    }
    BinaryMask bg(6, 6), unc(6, 6);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
            bool covered = false;
            for (const auto& p : persons) covered = covered || p.mask.at(x, y) >= 0.5;
            const double r = u(rng);
            if (!covered && r < 0.3) unc.set(x, y);
            else if (r < 0.7) bg.set(x, y);
        }
    }
    std::vector<double> d(36);
    for (auto& v : d) v = 0.05 + u(rng);
    return {RegionPartition(6, 6, std::move(persons), bg, unc), DensityGrid(6, 6, std::move(d))};
}

}  // namespace

TEST_CASE("distance_kernel examples") {
    const Rect one{0, 0, 1, 1};
    CHECK(distance_kernel(one, {0.5, 0.5}, 64, KernelMode::Verbatim).values[0] == 1.0);
    CHECK(distance_kernel(one, {0.5, 0.5}, 64, KernelMode::Attractive).values[0] == 0.0);
    CHECK(distance_kernel(one, {0.5, 8.5}, 64, KernelMode::Verbatim).values[0] == doctest::Approx(std::exp(-1.0)));
    const auto k = distance_kernel({0, 0, 3, 3}, {1.5, 1.5}, 4, KernelMode::Verbatim);
    CHECK(k.values[0] == doctest::Approx(0.6065).epsilon(1e-4));
    CHECK(k.values[0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK_THROWS_AS(distance_kernel(one, {0, 0}, 0.0, KernelMode::Verbatim), Error);
}

TEST_CASE("background_loss examples") {
    BinaryMask bg(10, 10);
    for (int i = 0; i < 50; ++i) bg.set_index(static_cast<std::size_t>(i), true);
    CHECK(background_loss(DensityGrid(10, 10, 0.0), bg) == 0.0);
    CHECK(background_loss(DensityGrid(10, 10, 1.0), bg) == 50.0);
    CHECK_THROWS_AS(background_loss(DensityGrid(9, 10, 1.0), bg), Error);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(16);
    BinaryMask m(4, 4);
    double expected = 0.0;
    for (int i = 0; i < 16; ++i) {
        v[i] = u(rng);
        const bool on = u(rng) < 0.5;
        m.set_index(i, on);
        if (on) expected += v[i];
    }
    CHECK(std::abs(background_loss(DensityGrid(4, 4, v), m) - expected) <= 1e-12);
}

TEST_CASE("individual_loss examples") {
    LossConfig cfg;
    const PersonInstance p{solid({2, 2, 3, 3}), 1.0, Point{3.5, 3.5}};
    DensityGrid d(8, 8, 0.0);
    d.set(3, 3, 1.0);
    CHECK(individual_loss(d, {p}, cfg) == doctest::Approx(0.0));
    cfg.kernel = KernelMode::Verbatim;
    CHECK(individual_loss(d, {p}, cfg) == doctest::Approx(100.0));
    CHECK(individual_loss(d, {}, cfg) == 0.0);

    cfg.kernel = KernelMode::Attractive;
    DensityGrid uniform(8, 8, 0.0);
    double mean_kernel = 0.0;
    const auto k = distance_kernel({2, 2, 3, 3}, {3.5, 3.5}, cfg.epsilon, cfg.kernel);
    for (int y = 2; y < 5; ++y) {
        for (int x = 2; x < 5; ++x) uniform.set(x, y, 2.0 / 9.0);
    }
    for (double kv : k.values) mean_kernel += kv / 9.0;
    CHECK(individual_loss(uniform, {p}, cfg) == doctest::Approx(1.0 + cfg.omega * mean_kernel).epsilon(1e-12));

    CHECK_THROWS_AS(individual_loss(DensityGrid(8, 8, 0.0), {p}, cfg), Error);
    CHECK_THROWS_AS(individual_loss(d, {PersonInstance{solid({2, 2, 3, 3}), 1.0, std::nullopt}}, cfg), Error);
}

TEST_CASE("total_loss examples") {
    LossConfig cfg;
    const auto empty = RegionPartition(4, 4, {}, BinaryMask(4, 4, true), BinaryMask(4, 4));
    CHECK(total_loss(DensityGrid(4, 4, 0.0), empty, cfg) == 0.0);

    const auto unc_only = RegionPartition(4, 4, {}, BinaryMask(4, 4), BinaryMask(4, 4, true));
    CHECK(total_loss(DensityGrid(4, 4, 3.0), unc_only, cfg) == 0.0);

    // 8x8, one person plus background: sum of the two terms
    const PersonInstance p{solid({1, 1, 3, 4}), 1.0, Point{2.5, 1.5}};
    const auto part = persons_on_background(8, 8, {p});
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> v(64);
    for (auto& x : v) x = u(rng);
    const DensityGrid d(8, 8, v);
    const double composed = individual_loss(d, {p}, cfg) + cfg.beta * background_loss(d, part.background());
    CHECK(total_loss(d, part, cfg) == doctest::Approx(composed).epsilon(1e-12));
}

TEST_CASE("loss_gradient examples") {
    LossConfig cfg;
    BinaryMask bg(4, 4), unc(4, 4);
    bg.set(0, 0);
    unc.set(3, 3);
    const RegionPartition part(4, 4, {}, bg, unc);
    const auto g = loss_gradient(DensityGrid(4, 4, 0.5), part, cfg);
    CHECK(g[0] == cfg.beta);
    CHECK(g[15] == 0.0);
}

TEST_CASE("loss_gradient matches central differences") {
    std::mt19937_64 rng(12);
    for (KernelMode mode : {KernelMode::Attractive, KernelMode::Verbatim}) {
        LossConfig cfg;
        cfg.kernel = mode;
        cfg.epsilon = 4.0;
        for (int t = 0; t < 20; ++t) {
            auto [part, d] = random_instance(rng);
            const auto g = loss_gradient(d, part, cfg);
            std::vector<double> v(d.values().begin(), d.values().end());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double h = 1e-5;
                auto plus = v, minus = v;
                plus[i] += h;
                minus[i] -= h;
                const double fd = (total_loss(DensityGrid(6, 6, plus), part, cfg) -
                                   total_loss(DensityGrid(6, 6, minus), part, cfg)) /
                                  (2 * h);
                const double scale = std::max({std::abs(fd), std::abs(g[i]), 1.0});
                CHECK(std::abs(fd - g[i]) / scale <= 1e-5);
            }
        }
    }
}

TEST_CASE("loss properties: exclusion, scale invariance, non-negativity") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int t = 0; t < 30; ++t) {
        auto [part, d] = random_instance(rng);
        for (KernelMode mode : {KernelMode::Attractive, KernelMode::Verbatim}) {
            LossConfig cfg;
            cfg.kernel = mode;
            const double base = total_loss(d, part, cfg);
            CHECK(base >= 0.0);

            std::vector<double> v(d.values().begin(), d.values().end());
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (part.uncertain().get_index(i)) v[i] = u(rng);
            }
            CHECK(total_loss(DensityGrid(6, 6, v), part, cfg) == base);

            // the omega term alone is invariant to scaling one mask's density
            LossConfig kernel_only = cfg;
            kernel_only.beta = 0.0;
            const auto& p = part.persons()[0];
            const PersonInstance single{p.mask, p.score, p.head};
            std::vector<double> scaled(d.values().begin(), d.values().end());
            for (auto& x : scaled) x *= 3.0;
            const double before = individual_loss(d, {single}, kernel_only);
            const double after = individual_loss(DensityGrid(6, 6, scaled), {single}, kernel_only);
            const auto masses = LossProblem(persons_on_background(6, 6, {single}), kernel_only).person_masses(d.values());
            const double count_before = std::abs(masses[0] - 1.0);
            const double count_after = std::abs(3.0 * masses[0] - 1.0);
            CHECK(after - count_after == doctest::Approx(before - count_before).epsilon(1e-9));
        }
    }
}

TEST_CASE("fit_density on an all-background partition drives the count to zero") {
    const auto part = RegionPartition(32, 32, {}, BinaryMask(32, 32, true), BinaryMask(32, 32));
    FitReport rep;
    const auto d = fit_density(part, LossConfig{}, FitOptions{}, &rep);
    CHECK(d.sum() <= 1e-3);
    CHECK(rep.converged);
}

TEST_CASE("fit_density on one person reaches unit mass near the head") {
    const Point head{12.5, 8.5};
    const auto part = persons_on_background(32, 32, {PersonInstance{solid({9, 6, 8, 20}), 1.0, head}});
    FitReport rep;
    const auto d = fit_density(part, LossConfig{}, FitOptions{}, &rep);
    const double s = LossProblem(part, LossConfig{}).person_masses(d.values())[0];
    CHECK(s >= 0.98);
    CHECK(s <= 1.02);
    CHECK(rep.converged);
    int best = 0;
    for (int i = 1; i < 32 * 32; ++i) {
        if (d.values()[i] > d.values()[best]) best = i;
    }
    const Point peak = pixel_center(best % 32, best / 32);
    CHECK(std::hypot(peak.x - head.x, peak.y - head.y) <= 2.0);
}

TEST_CASE("fit_density on 20 persons predicts a count near 20") {
    std::vector<PersonInstance> persons;
    for (int i = 0; i < 20; ++i) {
        const int x = 4 + (i % 5) * 24;
        const int y = 4 + (i / 5) * 30;
        persons.push_back({solid({x, y, 8, 24}), 1.0, Point{x + 4.0, y + 3.0}});
    }
    const auto part = persons_on_background(128, 128, persons);
    FitReport rep;
    const auto d = fit_density(part, LossConfig{}, FitOptions{}, &rep);
    CHECK(d.sum() == doctest::Approx(20.0).epsilon(0.5 / 20.0));
    CHECK(rep.converged);
}

TEST_CASE("monotone fitting never accepts a loss increase") {
    const auto part = persons_on_background(24, 24, {PersonInstance{solid({4, 4, 6, 14}), 1.0, Point{7, 6}},
                                                    PersonInstance{solid({14, 6, 5, 12}), 1.0, Point{16.5, 8}}});
    FitOptions opt;
    opt.lr = 1e-3;
    opt.monotone = true;
    opt.steps = 300;
    FitReport rep;
    fit_density(part, LossConfig{}, opt, &rep);
    for (std::size_t i = 1; i < rep.loss_trace.size(); ++i) CHECK(rep.loss_trace[i] <= rep.loss_trace[i - 1]);
}

TEST_CASE("inactive pixels keep the prior") {
    BinaryMask unc(8, 8, true);
    const auto part = RegionPartition(8, 8, {}, BinaryMask(8, 8), unc);
    DensityGrid prior(8, 8, 0.0);
    prior.set(2, 3, 1.0);
    const auto d = fit_density(part, LossConfig{}, FitOptions{}, nullptr, &prior);
    CHECK(d.at(2, 3) == 1.0);
    CHECK(d.at(0, 0) <= 1e-11);
}

TEST_CASE("softplus helpers") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(softplus_inverse(0.01)) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(softplus(softplus_inverse(50.0)) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK_THROWS_AS(softplus_inverse(0.0), Error);
    CHECK_THROWS_AS(parse_kernel_mode("repulsive"), Error);
    CHECK(parse_kernel_mode("verbatim") == KernelMode::Verbatim);
}
