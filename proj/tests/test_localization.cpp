#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sfam/localization.hpp"

using namespace sfam;

namespace {

Mask mask_from(const std::vector<int> &bits, std::size_t h, std::size_t w) {
    Mask m(h, w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) m.set(i, j, bits[i * w + j] != 0);
    return m;
}

BoundingBox random_box(std::mt19937 &gen, std::int64_t grid) {
    std::uniform_int_distribution<std::int64_t> d(0, grid);
    std::int64_t x0, x1, y0, y1;
    do {
        x0 = d(gen);
        x1 = d(gen);
    } while (x0 == x1);
    do {
        y0 = d(gen);
        y1 = d(gen);
    } while (y0 == y1);
    return BoundingBox::make(std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1));
}

}  // namespace

TEST(BoundingBox, RejectsEmptyArea) {
    EXPECT_THROW(BoundingBox::make(3, 3, 3, 5), Error);
    EXPECT_THROW(BoundingBox::make(0, 4, 2, 1), Error);
    EXPECT_THROW(BoundingBox::make(-1, 0, 2, 2), Error);
}

TEST(ThresholdMask, Examples) {
    EXPECT_TRUE(threshold_mask(ActivationMap(3, 3), 0.2).empty());
    const auto m = threshold_mask(ActivationMap(2, 2, {1.0f, 0.1f, 0.3f, 0.19f}), 0.2);
    EXPECT_EQ(m, mask_from({1, 0, 1, 0}, 2, 2));
    EXPECT_THROW(threshold_mask(ActivationMap(1, 1), 0.0), Error);
    EXPECT_THROW(threshold_mask(ActivationMap(1, 1), 1.0), Error);
}

TEST(ThresholdMask, MatchesScalarLoopAndIsMonotone) {
    std::mt19937 gen(51);
    for (int trial = 0; trial < 50; ++trial) {
        const auto v = oracle::random_values(gen, 12 * 9, 0, 1);
        const ActivationMap map(12, 9, v);
        const float peak = map.max();
        const auto m = threshold_mask(map, 0.2);
        for (std::size_t p = 0; p < v.size(); ++p) EXPECT_EQ(m.at(p / 9, p % 9), v[p] >= 0.2 * peak);
        std::size_t prev = m.count();
        for (double f : {0.3, 0.5, 0.7, 0.9}) {
            const auto mf = threshold_mask(map, f);
            EXPECT_LE(mf.count(), prev);
            for (std::size_t p = 0; p < v.size(); ++p)
                if (mf.at(p / 9, p % 9)) {
                    EXPECT_TRUE(m.at(p / 9, p % 9));
                }
            prev = mf.count();
        }
    }
}

TEST(LargestComponentBbox, Examples) {
    Mask single(5, 6);
    single.set(2, 3);
    EXPECT_EQ(largest_component_bbox(single), BoundingBox::make(3, 2, 4, 3));

    // Blob of 5 (plus shape) and blob of 9 (3x3 square).
    const auto two = mask_from({0, 1, 0, 0, 0, 0, 0,  //
                                1, 1, 1, 0, 0, 0, 0,  //
                                0, 1, 0, 0, 1, 1, 1,  //
                                0, 0, 0, 0, 1, 1, 1,  //
                                0, 0, 0, 0, 1, 1, 1},
                               5, 7);
    EXPECT_EQ(largest_component_bbox(two), BoundingBox::make(4, 2, 7, 5));

    Mask full(4, 7);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 7; ++j) full.set(i, j);
    EXPECT_EQ(largest_component_bbox(full), BoundingBox::make(0, 0, 7, 4));
}

TEST(LargestComponentBbox, EmptyMaskErrors) {
    try {
        largest_component_bbox(Mask(3, 3));
        FAIL();
    } catch (const Error &e) {
        EXPECT_STREQ(e.what(), "no activated region");
    }
}

TEST(LargestComponentBbox, DiagonalNeighborsAreSeparateAndTiesPickFirst) {
    const auto diag = mask_from({1, 0, 0, 1}, 2, 2);
    EXPECT_EQ(largest_component_bbox(diag), BoundingBox::make(0, 0, 1, 1));
}

TEST(LargestComponentBbox, MatchesFloodFillOracleAndIsTight) {
    std::mt19937 gen(52);
    std::bernoulli_distribution bit(0.45);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t h = 3 + trial % 14, w = 2 + trial % 11;
        std::vector<int> bits(h * w);
        for (auto &b : bits) b = bit(gen);
        bits[(trial * 7) % bits.size()] = 1;
        const auto box = largest_component_bbox(mask_from(bits, h, w));
        const auto expect = oracle::largest_component(bits, static_cast<long>(h), static_cast<long>(w));
        EXPECT_EQ(box, BoundingBox::make(expect.x0, expect.y0, expect.x1, expect.y1)) << "trial " << trial;
    }
}

TEST(MaskBbox, CoversAllPixels) {
    const auto m = mask_from({1, 0, 0, 0, 0, 0, 0, 0, 1}, 3, 3);
    EXPECT_EQ(mask_bbox(m), BoundingBox::make(0, 0, 3, 3));
    EXPECT_THROW(mask_bbox(Mask(2, 2)), Error);
}

TEST(Iou, Examples) {
    const auto a = BoundingBox::make(0, 0, 10, 10);
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(iou(a, BoundingBox::make(10, 0, 20, 10)), 0.0);
    EXPECT_NEAR(iou(a, BoundingBox::make(5, 5, 15, 15)), 25.0 / 175.0, 1e-12);
}

TEST(Iou, MatchesRasterizationSymmetricBounded) {
    std::mt19937 gen(53);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto a = random_box(gen, 64), b = random_box(gen, 64);
        const double v = iou(a, b);
        const auto expect = oracle::raster_iou({a.x_min, a.y_min, a.x_max, a.y_max}, {b.x_min, b.y_min, b.x_max, b.y_max}, 64);
        EXPECT_EQ(v, static_cast<double>(expect));
        EXPECT_EQ(v, iou(b, a));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_EQ(v == 1.0, a == b);
    }
}

TEST(EvaluateEpisodes, PerfectAndHalf) {
    ActivationMap exact(8, 8);
    {
        std::vector<float> v(64, 0.0f);
        for (std::size_t i = 2; i < 5; ++i)
            for (std::size_t j = 1; j < 6; ++j) v[i * 8 + j] = 1.0f;
        exact = ActivationMap(8, 8, v);
    }
    const auto truth = BoundingBox::make(1, 2, 6, 5);
    const std::vector<LocalizationEpisode> one{{"a", exact, truth}};
    const auto s1 = evaluate_episodes(one, 0.2);
    EXPECT_EQ(s1.mean_iou, 1.0);
    EXPECT_EQ(s1.accuracy, 1.0);

    const std::vector<LocalizationEpisode> two{{"a", exact, truth}, {"b", ActivationMap(8, 8), truth}};
    const auto s2 = evaluate_episodes(two, 0.2);
    EXPECT_EQ(s2.mean_iou, 0.5);
    EXPECT_EQ(s2.accuracy, 0.5);
    EXPECT_FALSE(s2.per_episode[1].predicted_box.has_value());
    EXPECT_FALSE(s2.per_episode[1].hit);
    EXPECT_EQ(s2.per_episode[1].episode_id, "b");
}

TEST(EvaluateEpisodes, EmptyListErrors) {
    EXPECT_THROW(evaluate_episodes(std::vector<LocalizationEpisode>{}, 0.2), Error);
}

TEST(EvaluateEpisodes, BoxModesDifferOnSpuriousActivations) {
    std::vector<float> v(100, 0.0f);
    for (std::size_t i = 3; i < 7; ++i)
        for (std::size_t j = 3; j < 7; ++j) v[i * 10 + j] = 1.0f;
    v[9 * 10 + 9] = 0.5f;
    const ActivationMap map(10, 10, v);
    const auto truth = BoundingBox::make(3, 3, 7, 7);
    const std::vector<LocalizationEpisode> eps{{"x", map, truth}};
    EXPECT_EQ(evaluate_episodes(eps, 0.2, BoxMode::component).mean_iou, 1.0);
    EXPECT_NEAR(evaluate_episodes(eps, 0.2, BoxMode::all).mean_iou, 16.0 / 49.0, 1e-12);
}

TEST(EvaluateEpisodes, PlantedBlobsMatchComposedOracle) {
    std::mt19937 gen(54);
    std::uniform_int_distribution<int> pos(0, 20), size(2, 10);
    std::vector<LocalizationEpisode> eps;
    double iou_sum = 0.0;
    int hits = 0;
    for (int e = 0; e < 100; ++e) {
        const int x0 = pos(gen), y0 = pos(gen), bw = size(gen), bh = size(gen);
        std::vector<float> v = oracle::random_values(gen, 32 * 32, 0, 0.15f);
        std::vector<int> bits(32 * 32);
        for (int i = y0; i < y0 + bh; ++i)
            for (int j = x0; j < x0 + bw; ++j) v[i * 32 + j] = 1.0f;
        const auto truth = random_box(gen, 32);
        eps.push_back({"e" + std::to_string(e), ActivationMap(32, 32, v), truth});
        const float peak = *std::max_element(v.begin(), v.end());
        for (std::size_t p = 0; p < v.size(); ++p) bits[p] = v[p] >= 0.2 * peak;
        const auto box = oracle::largest_component(bits, 32, 32);
        const double expect = static_cast<double>(oracle::raster_iou(box, {truth.x_min, truth.y_min, truth.x_max, truth.y_max}, 32));
        iou_sum += expect;
        hits += expect >= 0.5;
    }
    const auto s = evaluate_episodes(eps, 0.2);
    EXPECT_NEAR(s.mean_iou, iou_sum / 100.0, 1e-12);
    EXPECT_EQ(s.accuracy, hits / 100.0);
    double hit_mean = 0.0;
    for (const auto &r : s.per_episode) {
        EXPECT_EQ(r.hit, r.iou >= 0.5);
        hit_mean += r.hit ? 1.0 : 0.0;
    }
    EXPECT_EQ(s.accuracy, hit_mean / 100.0);
}
