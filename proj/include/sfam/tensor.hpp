#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sfam {

/// Raised for every contract violation in the library (bad shapes, degenerate
/// inputs, malformed files).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_finite(std::span<const float> values, const char *what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw Error(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
}

}  // namespace detail

/// Activations of a CNN layer, N channels of H x W, stored row-major as
/// (channel, row, col).
class FeatureMap {
public:
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> values)
        : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
        if (channels_ == 0 || height_ == 0 || width_ == 0)
            throw Error("FeatureMap: dimensions must be positive");
        if (values_.size() != channels_ * height_ * width_)
            throw Error("FeatureMap: expected " + std::to_string(channels_ * height_ * width_) +
                        " values, got " + std::to_string(values_.size()));
        detail::require_finite(values_, "FeatureMap");
    }

    /// Zero-filled map.
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width)
        : FeatureMap(channels, height, width, std::vector<float>(channels * height * width, 0.0f)) {}

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return height_ * width_; }

    float at(std::size_t c, std::size_t i, std::size_t j) const {
        return values_[(c * height_ + i) * width_ + j];
    }

    std::span<const float> channel(std::size_t c) const {
        return std::span<const float>(values_).subspan(c * plane_size(), plane_size());
    }

    std::span<const float> values() const noexcept { return values_; }

    friend bool operator==(const FeatureMap &, const FeatureMap &) = default;

private:
    std::size_t channels_;
    std::size_t height_;
    std::size_t width_;
    std::vector<float> values_;
};

/// Pooled representation of an image: one value per channel. Channel-weighting
/// operations additionally require N >= 2.
class EmbeddingVector {
public:
    explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
        if (values_.empty()) throw Error("EmbeddingVector: empty");
        detail::require_finite(values_, "EmbeddingVector");
    }

    EmbeddingVector(std::initializer_list<float> values) : EmbeddingVector(std::vector<float>(values)) {}

    std::size_t size() const noexcept { return values_.size(); }
    float operator[](std::size_t n) const { return values_[n]; }
    std::span<const float> values() const noexcept { return values_; }

    friend bool operator==(const EmbeddingVector &, const EmbeddingVector &) = default;

private:
    std::vector<float> values_;
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char *what) {
    if (a != b)
        throw Error(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline double squared_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return acc;
}

}  // namespace detail

/// Per-channel spatial mean. This is the pooling function used to turn feature
/// maps into embeddings throughout the toolkit.
inline EmbeddingVector global_average_pool(const FeatureMap &map) {
    std::vector<float> out(map.channels());
    const double count = static_cast<double>(map.plane_size());
    for (std::size_t c = 0; c < map.channels(); ++c) {
        double acc = 0.0;
        for (float x : map.channel(c)) acc += x;
        out[c] = static_cast<float>(acc / count);
    }
    return EmbeddingVector(std::move(out));
}

inline double l2_norm(const EmbeddingVector &v) { return std::sqrt(detail::squared_norm(v.values())); }

inline EmbeddingVector l2_normalize(const EmbeddingVector &v) {
    const double norm = l2_norm(v);
    if (!(norm > 0.0)) throw Error("degenerate embedding: zero norm");
    std::vector<float> out(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) out[n] = static_cast<float>(v[n] / norm);
    return EmbeddingVector(std::move(out));
}

/// Class prototype: elementwise mean of the support embeddings.
inline EmbeddingVector prototype(std::span<const EmbeddingVector> supports) {
    if (supports.empty()) throw Error("prototype: empty support list");
    const std::size_t n_channels = supports.front().size();
    std::vector<double> acc(n_channels, 0.0);
    for (const auto &s : supports) {
        detail::require_same_length(n_channels, s.size(), "prototype");
        for (std::size_t n = 0; n < n_channels; ++n) acc[n] += s[n];
    }
    const double k = static_cast<double>(supports.size());
    std::vector<float> out(n_channels);
    for (std::size_t n = 0; n < n_channels; ++n) out[n] = static_cast<float>(acc[n] / k);
    return EmbeddingVector(std::move(out));
}

inline double euclidean_distance(const EmbeddingVector &a, const EmbeddingVector &b) {
    detail::require_same_length(a.size(), b.size(), "euclidean_distance");
    double acc = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const double d = static_cast<double>(a[n]) - b[n];
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double cosine_similarity(const EmbeddingVector &a, const EmbeddingVector &b) {
    detail::require_same_length(a.size(), b.size(), "cosine_similarity");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw Error("degenerate embedding: zero norm");
    double dot = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) dot += (a[n] / na) * (b[n] / nb);
    return std::clamp(dot, -1.0, 1.0);
}

}  // namespace sfam
