#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sfam/activation_map.hpp"
#include "sfam/localization.hpp"

namespace sfam {

namespace rng {

// Engine output is fully specified by the standard; the distributions in
// <random> are not, so draws are mapped by hand to stay reproducible across
// standard libraries.

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Uniform integer in [0, bound).
inline std::uint64_t below(std::mt19937_64 &eng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do x = eng();
    while (x >= limit);
    return x % bound;
}

/// Uniform float in [0, 1) with 24 random bits.
inline float unit(std::mt19937_64 &eng) { return static_cast<float>(eng() >> 40) * 0x1.0p-24f; }

inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::mt19937_64 eng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(eng, i)]);
    return p;
}

}  // namespace rng

/// Number of channels perturbed at `fraction`: ceil(fraction * N).
inline std::size_t randomized_channel_count(double fraction, std::size_t channels) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("randomize_features: fraction must lie in [0, 1]");
    const double raw = fraction * static_cast<double>(channels);
    return std::min(channels, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

/// Replaces ceil(fraction * N) seeded channels with uniform noise on
/// [0, channel max]. Channel choice comes from one seeded permutation and noise
/// is keyed by (seed, channel), so larger fractions perturb a superset of the
/// channels of smaller ones with the same noise.
inline FeatureMap randomize_features(const FeatureMap &features, double fraction, std::uint64_t seed) {
    const std::size_t n_channels = features.channels();
    const std::size_t count = randomized_channel_count(fraction, n_channels);
    if (count == 0) return features;

    std::vector<float> values(features.values().begin(), features.values().end());
    const auto order = rng::permutation(n_channels, seed);
    const std::size_t plane = features.plane_size();
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t c = order[k];
        const auto ch = features.channel(c);
        const float peak = std::max(0.0f, *std::max_element(ch.begin(), ch.end()));
        std::mt19937_64 eng(rng::mix(seed, c));
        for (std::size_t p = 0; p < plane; ++p) values[c * plane + p] = peak * rng::unit(eng);
    }
    return FeatureMap(n_channels, features.height(), features.width(), std::move(values));
}

namespace detail {

// 1-based ranks; tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const float> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i + 1;
        while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
        i = j;
    }
    return ranks;
}

}  // namespace detail

/// Spearman rank correlation over flattened pixels. Defined as 0 when either
/// map is constant.
inline double rank_correlation(const ActivationMap &a, const ActivationMap &b) {
    if (a.height() != b.height() || a.width() != b.width())
        throw Error("rank_correlation: dimension mismatch");
    const auto ra = detail::average_ranks(a.values());
    const auto rb = detail::average_ranks(b.values());
    const double n = static_cast<double>(ra.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t p = 0; p < ra.size(); ++p) {
        ma += ra[p];
        mb += rb[p];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t p = 0; p < ra.size(); ++p) {
        const double da = ra[p] - ma, db = rb[p] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Inputs for one sweep: the pair being explained plus optional localization
/// ground truth for the IoU column.
struct SanityEpisode {
    FeatureMap query;
    std::vector<FeatureMap> supports;
    Metric metric = Metric::euclidean;
    std::optional<BoundingBox> truth_box;
    std::size_t image_width = 0;
    std::size_t image_height = 0;
};

struct SanityStage {
    std::string label;
    double fraction = 0.0;
    double rank_correlation = 0.0;
    double mean_iou_delta = 0.0;  ///< perturbed IoU minus unperturbed IoU; 0 without ground truth
    ActivationMap map;            ///< perturbed query map, normalized, feature resolution
};

struct SanityReport {
    std::vector<SanityStage> stages;
};

inline std::string fraction_label(double f) {
    std::ostringstream os;
    os << "randomized " << f;
    return os.str();
}

inline SanityReport sanity_sweep(const SanityEpisode &episode, std::span<const double> fractions, std::uint64_t seed,
                                 double threshold = 0.2, BoxMode box_mode = BoxMode::component) {
    auto localized_iou = [&](const ActivationMap &m) {
        if (!episode.truth_box) return 0.0;
        const auto up = normalize_map(upsample_bilinear(m, episode.image_height, episode.image_width));
        return localize(LocalizationEpisode{"", up, *episode.truth_box}, threshold, box_mode).iou;
    };

    const auto base = explain_pair(episode.query, episode.supports, episode.metric);
    const double base_iou = localized_iou(base.query_map);

    SanityReport report;
    report.stages.reserve(fractions.size());
    for (const double f : fractions) {
        const FeatureMap q = randomize_features(episode.query, f, seed);
        std::vector<FeatureMap> s;
        s.reserve(episode.supports.size());
        for (std::size_t k = 0; k < episode.supports.size(); ++k)
            s.push_back(randomize_features(episode.supports[k], f, rng::mix(seed, 1000003 + k)));
        const auto perturbed = explain_pair(q, s, episode.metric);
        report.stages.push_back(SanityStage{fraction_label(f), f, rank_correlation(base.query_map, perturbed.query_map),
                                            localized_iou(perturbed.query_map) - base_iou,
                                            normalize_map(perturbed.query_map)});
    }
    return report;
}

}  // namespace sfam
