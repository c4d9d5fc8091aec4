#pragma once

#include <algorithm>
#include <span>
#include <utility>
#include <vector>

#include "sfam/tensor.hpp"

namespace sfam {

/// Per-channel contribution importance scores. `normalized()` tells whether
/// the values are raw scores (summing to 1) or max-min stretched to [0, 1].
class WeightVector {
public:
    WeightVector(std::vector<float> values, bool normalized) : values_(std::move(values)), normalized_(normalized) {
        if (values_.empty()) throw Error("WeightVector: empty");
        detail::require_finite(values_, "WeightVector");
    }

    std::size_t size() const noexcept { return values_.size(); }
    float operator[](std::size_t n) const { return values_[n]; }
    std::span<const float> values() const noexcept { return values_; }
    bool normalized() const noexcept { return normalized_; }

    friend bool operator==(const WeightVector &, const WeightVector &) = default;

private:
    std::vector<float> values_;
    bool normalized_;
};

/// Denominators below this are treated as zero (identical embeddings, or a
/// flat weight vector).
inline constexpr double kDegenerateEpsilon = 1e-12;

namespace detail {

// w_n = 1/(N-1) - d_n^2 / ((N-1) * sum_m d_m^2), with d = q - s.
inline WeightVector contribution_scores(std::span<const double> q, std::span<const double> s) {
    const std::size_t n_channels = q.size();
    std::vector<double> sq(n_channels);
    double total = 0.0;
    for (std::size_t n = 0; n < n_channels; ++n) {
        const double d = q[n] - s[n];
        sq[n] = d * d;
        total += sq[n];
    }
    std::vector<float> w(n_channels);
    if (total < kDegenerateEpsilon) {
        std::fill(w.begin(), w.end(), static_cast<float>(1.0 / static_cast<double>(n_channels)));
        return WeightVector(std::move(w), false);
    }
    const double inv = 1.0 / static_cast<double>(n_channels - 1);
    for (std::size_t n = 0; n < n_channels; ++n) w[n] = static_cast<float>(inv - sq[n] * inv / total);
    return WeightVector(std::move(w), false);
}

inline void require_cis_inputs(const EmbeddingVector &q, const EmbeddingVector &s, const char *what) {
    require_same_length(q.size(), s.size(), what);
    if (q.size() < 2) throw Error(std::string(what) + ": at least 2 channels required");
}

inline std::vector<double> widen(std::span<const float> v, double scale = 1.0) {
    std::vector<double> out(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) out[n] = v[n] * scale;
    return out;
}

}  // namespace detail

/// Channel importance under Euclidean distance. Identical embeddings yield the
/// uniform vector 1/N.
inline WeightVector cis_euclidean(const EmbeddingVector &q, const EmbeddingVector &s) {
    detail::require_cis_inputs(q, s, "cis_euclidean");
    const auto qd = detail::widen(q.values());
    const auto sd = detail::widen(s.values());
    return detail::contribution_scores(qd, sd);
}

/// Channel importance under cosine similarity: the Euclidean score applied to
/// the L2-normalized embeddings. Collinear inputs (cos = 1) fall back to the
/// uniform vector.
inline WeightVector cis_cosine(const EmbeddingVector &q, const EmbeddingVector &s) {
    detail::require_cis_inputs(q, s, "cis_cosine");
    const double nq = l2_norm(q);
    const double ns = l2_norm(s);
    if (!(nq > 0.0) || !(ns > 0.0)) throw Error("degenerate embedding: zero norm");
    const auto qd = detail::widen(q.values(), 1.0 / nq);
    const auto sd = detail::widen(s.values(), 1.0 / ns);
    return detail::contribution_scores(qd, sd);
}

/// Max-min stretch to [0, 1]. A flat input maps to all ones.
inline WeightVector normalize_weights(const WeightVector &w) {
    const auto [lo_it, hi_it] = std::minmax_element(w.values().begin(), w.values().end());
    const double lo = *lo_it;
    const double range = static_cast<double>(*hi_it) - lo;
    std::vector<float> out(w.size());
    if (range < kDegenerateEpsilon) {
        std::fill(out.begin(), out.end(), 1.0f);
        return WeightVector(std::move(out), true);
    }
    for (std::size_t n = 0; n < w.size(); ++n) out[n] = static_cast<float>((w[n] - lo) / range);
    return WeightVector(std::move(out), true);
}

}  // namespace sfam
