#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfam/cis.hpp"
#include "sfam/tensor.hpp"

namespace sfam {

/// H x W scalar explanation map, row-major.
class ActivationMap {
public:
    ActivationMap(std::size_t height, std::size_t width, std::vector<float> values)
        : height_(height), width_(width), values_(std::move(values)) {
        if (height_ == 0 || width_ == 0) throw Error("ActivationMap: dimensions must be positive");
        if (values_.size() != height_ * width_)
            throw Error("ActivationMap: expected " + std::to_string(height_ * width_) + " values, got " +
                        std::to_string(values_.size()));
        detail::require_finite(values_, "ActivationMap");
    }

    ActivationMap(std::size_t height, std::size_t width)
        : ActivationMap(height, width, std::vector<float>(height * width, 0.0f)) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }
    float at(std::size_t i, std::size_t j) const { return values_[i * width_ + j]; }
    std::span<const float> values() const noexcept { return values_; }

    float min() const { return *std::min_element(values_.begin(), values_.end()); }
    float max() const { return *std::max_element(values_.begin(), values_.end()); }

    friend bool operator==(const ActivationMap &, const ActivationMap &) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<float> values_;
};

namespace detail {

// sum_n w_n * A^n(i,j), accumulated in double in channel order.
inline std::vector<float> weighted_channel_sum(const FeatureMap &features, std::span<const float> weights,
                                               bool clamp_negative) {
    const std::size_t plane = features.plane_size();
    std::vector<double> acc(plane, 0.0);
    for (std::size_t c = 0; c < features.channels(); ++c) {
        const double w = weights[c];
        if (w == 0.0) continue;
        const auto ch = features.channel(c);
        for (std::size_t p = 0; p < plane; ++p) acc[p] += w * ch[p];
    }
    std::vector<float> out(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        const double v = clamp_negative ? std::max(acc[p], 0.0) : acc[p];
        out[p] = static_cast<float>(v);
    }
    return out;
}

}  // namespace detail

/// Similar feature activation map: channels of `features` combined with
/// normalized importance weights. Negative sums are clamped to zero.
inline ActivationMap sfam_map(const FeatureMap &features, const WeightVector &weights) {
    if (weights.size() != features.channels())
        throw Error("sfam_map: channel mismatch (" + std::to_string(weights.size()) + " weights, " +
                    std::to_string(features.channels()) + " channels)");
    if (!weights.normalized()) throw Error("sfam_map: weights must be max-min normalized");
    return ActivationMap(features.height(), features.width(),
                         detail::weighted_channel_sum(features, weights.values(), true));
}

/// Bilinear resize with half-pixel centers. Source coordinates are clamped to
/// the valid range, so the border replicates and same-size resizing is exact.
inline ActivationMap upsample_bilinear(const ActivationMap &map, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw Error("upsample_bilinear: output dimensions must be positive");
    if (out_h == map.height() && out_w == map.width()) return map;

    const std::size_t in_h = map.height();
    const std::size_t in_w = map.width();

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        const double upper = static_cast<double>(in - 1);
        for (std::size_t o = 0; o < out; ++o) {
            const double src = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, upper);
            const auto lo = static_cast<std::size_t>(std::floor(src));
            t[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ty = taps(in_h, out_h);
    const auto tx = taps(in_w, out_w);

    std::vector<float> out(out_h * out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        const auto &y = ty[i];
        for (std::size_t j = 0; j < out_w; ++j) {
            const auto &x = tx[j];
            const double top = (1.0 - x.frac) * map.at(y.lo, x.lo) + x.frac * map.at(y.lo, x.hi);
            const double bottom = (1.0 - x.frac) * map.at(y.hi, x.lo) + x.frac * map.at(y.hi, x.hi);
            out[i * out_w + j] = static_cast<float>((1.0 - y.frac) * top + y.frac * bottom);
        }
    }
    return ActivationMap(out_h, out_w, std::move(out));
}

/// Max-min stretch to [0, 1]; a constant map becomes all zeros.
inline ActivationMap normalize_map(const ActivationMap &map) {
    const double lo = map.min();
    const double range = static_cast<double>(map.max()) - lo;
    std::vector<float> out(map.size(), 0.0f);
    if (range > 0.0) {
        const auto v = map.values();
        for (std::size_t p = 0; p < v.size(); ++p) out[p] = static_cast<float>((v[p] - lo) / range);
    }
    return ActivationMap(map.height(), map.width(), std::move(out));
}

enum class Metric { euclidean, cosine };

inline const char *to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "cosine"; }

inline Metric parse_metric(const std::string &s) {
    if (s == "euclidean") return Metric::euclidean;
    if (s == "cosine") return Metric::cosine;
    throw Error("unknown metric '" + s + "' (expected euclidean or cosine)");
}

struct PairExplanation {
    ActivationMap query_map;
    std::vector<ActivationMap> support_maps;
    WeightVector weights;  ///< normalized; shared by every map above
    double similarity;     ///< Euclidean distance or cosine similarity to the prototype
};

/// Full pair pipeline: pool, build the support prototype, score channels
/// under `metric`, normalize, and apply one weight vector to the query and to
/// every support feature map.
inline PairExplanation explain_pair(const FeatureMap &query, std::span<const FeatureMap> supports, Metric metric) {
    if (supports.empty()) throw Error("explain_pair: empty support list");
    for (const auto &s : supports) {
        if (s.channels() != query.channels())
            throw Error("explain_pair: support has " + std::to_string(s.channels()) + " channels, query has " +
                        std::to_string(query.channels()));
    }
    const EmbeddingVector vq = global_average_pool(query);
    std::vector<EmbeddingVector> pooled;
    pooled.reserve(supports.size());
    for (const auto &s : supports) pooled.push_back(global_average_pool(s));
    const EmbeddingVector vs = prototype(pooled);

    const bool euclid = metric == Metric::euclidean;
    const WeightVector raw = euclid ? cis_euclidean(vq, vs) : cis_cosine(vq, vs);
    WeightVector weights = normalize_weights(raw);
    const double similarity = euclid ? euclidean_distance(vq, vs) : cosine_similarity(vq, vs);

    ActivationMap query_map = sfam_map(query, weights);
    std::vector<ActivationMap> support_maps;
    support_maps.reserve(supports.size());
    for (const auto &s : supports) support_maps.push_back(sfam_map(s, weights));
    return PairExplanation{std::move(query_map), std::move(support_maps), std::move(weights), similarity};
}

}  // namespace sfam
