#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "crowdseed/localizer.hpp"
#include "support.hpp"

using namespace crowdseed;
using crowdseed::testing::solid;

namespace {

/// Answers every prompted request with a fixed person mask.
struct EchoSegmenter : Segmenter {
    SoftMask reply;
    int calls = 0;
    SegmentResponse segment(const SegmentRequest&) override {
        ++calls;
        return SegmentResponse{{Segment{"person", 0.9, reply}}};
    }
};

double dense_gaussian(Point p, Point m, const Cov2& c) {
    const double det = c.xx * c.yy - c.xy * c.xy;
    const double dx = p.x - m.x, dy = p.y - m.y;
    const double q = (c.yy * dx * dx - 2 * c.xy * dx * dy + c.xx * dy * dy) / det;
    return std::exp(-0.5 * q) / (2 * std::numbers::pi * std::sqrt(det));
}

GmmParams some_params() {
    GmmParams g;
    g.comp[0] = {0.35, {1.7, 2.1}, {1.5, 0.3, 0.9}};
    g.comp[1] = {0.65, {3.2, 3.9}, {0.8, -0.2, 2.0}};
    return g;
}

/// Head disc r=3 at (10,5) plus body ellipse (ax 4, ay 9) centered at (10,20), 21x30 window.
SoftMask oracle_silhouette() {
    SoftMask m({0, 0, 21, 30});
    for (int r = 0; r < 30; ++r) {
        for (int c = 0; c < 21; ++c) {
            const double x = c + 0.5, y = r + 0.5;
            const bool head = (x - 10) * (x - 10) + (y - 5) * (y - 5) <= 9.0;
            const bool body = ((x - 10) / 4) * ((x - 10) / 4) + ((y - 20) / 9) * ((y - 20) / 9) <= 1.0;
            if (head || body) m.set_local(c, r, 1.0);
        }
    }
    return m;
}

}  // namespace

TEST_CASE("e-step examples") {
    SoftMask m({0, 0, 3, 1}, {1, 1, 1});
    GmmParams sym;
    sym.comp[0] = {0.5, {0.5, 0.5}, {}};
    sym.comp[1] = {0.5, {2.5, 0.5}, {}};
    auto z = em_e_step(m, sym);
    CHECK(z.z[1][0] == doctest::Approx(0.5).epsilon(1e-12));

    GmmParams dom;
    dom.comp[0] = {0.5, {0.5, 0.5}, {}};
    dom.comp[1] = {0.5, {40.5, 40.5}, {}};
    auto zd = em_e_step(m, dom);
    CHECK(zd.z[0][0] > 1.0 - 1e-6);

    for (const auto& row : zd.z) CHECK(row[0] + row[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("e-step matches dense evaluation of the Gaussian formula") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SoftMask m({0, 0, 5, 5});
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) m.set_local(c, r, u(rng));
    }
    const GmmParams g = some_params();
    const auto z = em_e_step(m, g);
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
            const Point p{c + 0.5, r + 0.5};
            const double a = g.comp[0].weight * dense_gaussian(p, g.comp[0].mean, g.comp[0].cov);
            const double b = g.comp[1].weight * dense_gaussian(p, g.comp[1].mean, g.comp[1].cov);
            CHECK(std::abs(z.z[r * 5 + c][0] - a / (a + b)) <= 1e-12);
        }
    }
    CHECK(log_gaussian({1, 1}, {1, 1}, Cov2{}) == doctest::Approx(-std::log(2 * std::numbers::pi)));
}

TEST_CASE("m-step examples") {
    SoftMask m({0, 0, 3, 1}, {1.0, 0.0, 3.0 / 4.0});
    Responsibilities z{m.window(), {{1, 0}, {0.5, 0.5}, {0, 1}}};
    const auto g = em_m_step(m, z);
    CHECK(g.comp[0].mean.x == doctest::Approx(0.5));
    CHECK(g.comp[1].mean.x == doctest::Approx(2.5));
    CHECK(g.comp[0].weight == doctest::Approx(1.0 / 1.75));
    CHECK(g.valid(1e-4));

    SoftMask blob = solid({2, 3, 4, 2});
    Responsibilities half{blob.window(), std::vector<std::array<double, 2>>(8, {0.5, 0.5})};
    const auto e = em_m_step(blob, half);
    CHECK(e.comp[0].mean.x == doctest::Approx(4.0));
    CHECK(e.comp[0].mean.y == doctest::Approx(4.0));
    CHECK(e.comp[1].mean.x == doctest::Approx(4.0));

    Responsibilities collapsed{blob.window(), std::vector<std::array<double, 2>>(8, {1.0, 0.0})};
    try {
        em_m_step(blob, collapsed);
        FAIL("expected ComponentCollapse");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::ComponentCollapse);
    }
}

TEST_CASE("fit_weighted_gmm examples") {
    SoftMask blobs({0, 0, 3, 10});
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            blobs.set_local(c, r, 1.0);
            blobs.set_local(c, r + 7, 1.0);
        }
    }
    const auto g = fit_weighted_gmm(blobs, LocalizerConfig{});
    std::array<double, 2> ys{g.comp[0].mean.y, g.comp[1].mean.y};
    std::sort(ys.begin(), ys.end());
    CHECK(ys[0] == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(ys[1] == doctest::Approx(8.5).epsilon(1e-6));
    CHECK(g.comp[0].weight == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(head_point(g).x == doctest::Approx(1.5).epsilon(1e-6));

    SoftMask side({0, 0, 10, 3});
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            side.set_local(c, r, 1.0);
            side.set_local(c + 7, r, 1.0);
        }
    }
    const auto sg = fit_weighted_gmm(side, LocalizerConfig{});
    std::array<double, 2> xs{sg.comp[0].mean.x, sg.comp[1].mean.x};
    std::sort(xs.begin(), xs.end());
    CHECK(xs[0] == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(xs[1] == doctest::Approx(8.5).epsilon(1e-6));

    SoftMask pair({0, 0, 1, 6});
    pair.set_local(0, 0, 1.0);
    pair.set_local(0, 5, 1.0);
    const auto p = fit_weighted_gmm(pair, LocalizerConfig{});
    CHECK(head_point(p).y == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::max(p.comp[0].mean.y, p.comp[1].mean.y) == doctest::Approx(5.5).epsilon(1e-6));

    const auto s = fit_weighted_gmm(oracle_silhouette(), LocalizerConfig{});
    const Point h = head_point(s);
    CHECK(std::hypot(h.x - 10.0, h.y - 5.0) <= 2.0);

    CHECK_THROWS_AS(fit_weighted_gmm(solid({0, 0, 3, 3}, 0.0), LocalizerConfig{}), Error);
}

TEST_CASE("EM log-likelihood never decreases") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 40; ++t) {
        SoftMask m({0, 0, 9, 12});
        for (int r = 0; r < 12; ++r) {
            for (int c = 0; c < 9; ++c) m.set_local(c, r, u(rng) < 0.6 ? u(rng) : 0.0);
        }
        m.set_local(0, 0, 1.0);
        m.set_local(8, 11, 1.0);
        EmTrace trace;
        try {
            fit_weighted_gmm(m, LocalizerConfig{}, &trace);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ComponentCollapse);
        }
        for (std::size_t i = 1; i < trace.log_likelihood.size(); ++i) {
            CHECK(trace.log_likelihood[i] >= trace.log_likelihood[i - 1] - 1e-9);
        }
    }
}

TEST_CASE("fit is translation equivariant") {
    const SoftMask base = oracle_silhouette();
    std::vector<double> vals(base.values().begin(), base.values().end());
    const SoftMask moved({13, 7, 21, 30}, vals);
    const auto a = fit_weighted_gmm(base, LocalizerConfig{});
    const auto b = fit_weighted_gmm(moved, LocalizerConfig{});
    for (int j = 0; j < 2; ++j) {
        CHECK(b.comp[j].mean.x - a.comp[j].mean.x == doctest::Approx(13.0).epsilon(1e-6));
        CHECK(b.comp[j].mean.y - a.comp[j].mean.y == doctest::Approx(7.0).epsilon(1e-6));
    }
}

TEST_CASE("head_point picks the upper component") {
    GmmParams g;
    g.comp[0] = {0.5, {5, 2}, {}};
    g.comp[1] = {0.5, {5, 9}, {}};
    CHECK(head_point(g) == Point{5, 2});
    std::swap(g.comp[0], g.comp[1]);
    CHECK(head_point(g) == Point{5, 2});
    g.comp[0] = {0.7, {1, 4}, {}};
    g.comp[1] = {0.3, {8, 4}, {}};
    CHECK(head_point(g) == Point{1, 4});
}

TEST_CASE("naive_head_point examples") {
    const SoftMask box = solid({0, 0, 4, 10});
    CHECK(naive_head_point(box, 0.1).y == doctest::Approx(1.0));
    CHECK(naive_head_point(box, 0.0).y == doctest::Approx(0.0));
    CHECK(naive_head_point(box, 0.1).x == doctest::Approx(2.0));
    CHECK_THROWS_AS(naive_head_point(solid({0, 0, 2, 2}, 0.0), 0.1), Error);
}

TEST_CASE("soft_mask_distribution examples") {
    RasterImage img(32, 32, 1);
    const SoftMask m0 = solid({4, 4, 4, 4});
    EchoSegmenter echo;
    echo.reply = m0;
    CHECK(soft_mask_distribution(m0, img, echo, 0, 1) == m0);
    CHECK(echo.calls == 0);
    CHECK(soft_mask_distribution(m0, img, echo, 2, 1) == m0);
    CHECK(echo.calls == 2);

    EchoSegmenter shifted;
    shifted.reply = solid({6, 4, 4, 4});
    const SoftMask avg = soft_mask_distribution(m0, img, shifted, 1, 1);
    CHECK(avg.window() == Rect{4, 4, 6, 4});
    CHECK(avg.at(4, 4) == doctest::Approx(0.5));
    CHECK(avg.at(6, 5) == doctest::Approx(1.0));
    CHECK(avg.at(9, 7) == doctest::Approx(0.5));

    EchoSegmenter elsewhere;
    elsewhere.reply = solid({20, 20, 3, 3});
    SoftMaskStats stats;
    CHECK(soft_mask_distribution(m0, img, elsewhere, 3, 1, "", &stats) == m0);
    CHECK(stats.skipped == 3);
}
