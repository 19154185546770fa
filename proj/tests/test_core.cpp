#include <doctest.h>

#include <random>

#include "crowdseed/core.hpp"
#include "crowdseed/rle.hpp"
#include "support.hpp"

using namespace crowdseed;
using crowdseed::testing::solid;

TEST_CASE("rle_encode examples") {
    CHECK(rle_encode(solid({0, 0, 2, 2}, 0.0)) == RleCounts{4});
    CHECK(rle_encode(solid({0, 0, 2, 2}, 1.0)) == RleCounts{0, 4});
    SoftMask m({0, 0, 4, 1}, {0, 1, 1, 0});
    CHECK(rle_encode(m) == RleCounts{1, 2, 1});
}

TEST_CASE("rle_decode examples and length check") {
    CHECK(rle_decode({4}, {0, 0, 2, 2}) == solid({0, 0, 2, 2}, 0.0));
    CHECK(rle_decode({0, 4}, {0, 0, 2, 2}) == solid({0, 0, 2, 2}, 1.0));
    CHECK(rle_decode({1, 2, 1}, {0, 0, 4, 1}) == SoftMask({0, 0, 4, 1}, {0, 1, 1, 0}));
    CHECK_THROWS_AS(rle_decode({1, 2}, {0, 0, 4, 1}), Error);
    try {
        rle_decode({5}, {0, 0, 2, 2});
        FAIL("expected LengthMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LengthMismatch);
    }
}

TEST_CASE("rle round trip on random masks") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        const SoftMask m = crowdseed::testing::random_binary_mask(rng, 40, 30, 25);
        CHECK(rle_decode(rle_encode(m), m.window()) == m);
    }
    BinaryMask b(7, 5);
    b.set(0, 0);
    b.set(6, 4);
    b.set(3, 2);
    CHECK(rle_decode_image(rle_encode(b), 7, 5) == b);
}

TEST_CASE("q8 codec quantizes to 1/255") {
    SoftMask m({2, 3, 3, 2}, {0.0, 0.2, 0.2, 1.0, 0.5, 0.5});
    const auto pairs = q8_encode(m);
    CHECK(pairs == std::vector<std::uint32_t>{0, 1, 51, 2, 255, 1, 128, 2});
    const SoftMask back = q8_decode(pairs, m.window());
    for (std::size_t i = 0; i < m.values().size(); ++i) CHECK(std::abs(back.values()[i] - m.values()[i]) <= 1.0 / 510 + 1e-12);
}

TEST_CASE("mask_iou examples and properties") {
    const SoftMask a = solid({0, 0, 10, 10});
    CHECK(mask_iou(a, a) == 1.0);
    CHECK(mask_iou(a, solid({20, 20, 5, 5})) == 0.0);
    CHECK(mask_iou(a, solid({5, 0, 10, 10})) == doctest::Approx(50.0 / 150.0).epsilon(1e-12));
    CHECK(mask_iou(solid({0, 0, 3, 3}, 0.0), solid({0, 0, 3, 3}, 0.0)) == 0.0);

    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const SoftMask x = crowdseed::testing::random_binary_mask(rng, 30, 30, 20);
        const SoftMask y = crowdseed::testing::random_binary_mask(rng, 30, 30, 20);
        const double v = mask_iou(x, y);
        CHECK(v == mask_iou(y, x));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(mask_iou(x, x) == 1.0);
    }
}

TEST_CASE("remap_to_global examples") {
    const SoftMask m({0, 0, 3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(remap_to_global(m, 0, 0, 1, 10, 10) == m);

    const SoftMask ones = remap_to_global(solid({0, 0, 2, 2}), 10, 20, 2, 64, 64);
    CHECK(ones.window() == Rect{10, 20, 1, 1});
    CHECK(ones.local(0, 0) == 1.0);

    const SoftMask half = remap_to_global(SoftMask({0, 0, 2, 2}, {1.0, 1.0, 0.0, 0.0}), 0, 0, 2, 8, 8);
    CHECK(half.local(0, 0) == doctest::Approx(0.5));

    CHECK_THROWS_AS(remap_to_global(solid({0, 0, 4, 4}), 7, 7, 2, 8, 8), Error);
}

TEST_CASE("remap_to_global preserves mass up to zoom squared") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int zoom : {1, 2, 3, 4}) {
        SoftMask m({0, 0, 6 * zoom, 4 * zoom});
        for (int r = 0; r < m.window().h; ++r) {
            for (int c = 0; c < m.window().w; ++c) m.set_local(c, r, u(rng));
        }
        const SoftMask out = remap_to_global(m, 3, 2, zoom, 32, 32);
        CHECK(out.sum() == doctest::Approx(m.sum() / (zoom * zoom)).epsilon(1e-9));
    }
}

TEST_CASE("RegionPartition enforces its invariants") {
    BinaryMask bg(4, 4), unc(4, 4);
    bg.set(0, 0);
    unc.set(0, 0);
    CHECK_THROWS_AS(RegionPartition(4, 4, {}, bg, unc), Error);

    BinaryMask bg2(4, 4), unc2(4, 4);
    unc2.set(1, 1);
    std::vector<PersonInstance> persons{crowdseed::testing::person({0, 0, 2, 2}, 0.9)};
    CHECK_THROWS_AS(RegionPartition(4, 4, persons, bg2, unc2), Error);

    persons[0].head = Point{5.0, 5.0};
    CHECK_THROWS_AS(RegionPartition(4, 4, persons, bg2, BinaryMask(4, 4)), Error);
    persons[0].head = Point{1.0, 1.0};
    CHECK_NOTHROW(RegionPartition(4, 4, persons, bg2, BinaryMask(4, 4)));
}

TEST_CASE("soft mask values are range checked") {
    CHECK_THROWS_AS(SoftMask({0, 0, 2, 1}, {0.5, 1.5}), Error);
    CHECK_THROWS_AS(SoftMask({0, 0, 2, 1}, {0.5}), Error);
    CHECK_THROWS_AS(DensityGrid(2, 1, std::vector<double>{-1.0, 0.0}), Error);
}

TEST_CASE("bilinear resize keeps constants and grayscale uses luma weights") {
    RasterImage img(3, 2, 1, std::vector<std::uint8_t>(6, 77));
    const RasterImage big = img.resize_bilinear(12, 8);
    for (auto v : big.data()) CHECK(v == 77);

    RasterImage rgb(1, 1, 3, {200, 100, 50});
    CHECK(rgb.to_gray().at(0, 0) == static_cast<int>(std::lround(0.299 * 200 + 0.587 * 100 + 0.114 * 50)));
}
