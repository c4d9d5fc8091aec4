#pragma once

#include "sfam/activation_map.hpp"

namespace sfam {

/// Ranking activation map: channels weighted by the image's own pooled
/// activations (max-min normalized). Ignores any pairing.
inline ActivationMap ram_map(const FeatureMap &features) {
    if (features.channels() < 2) throw Error("ram_map: at least 2 channels required");
    const EmbeddingVector pooled = global_average_pool(features);
    const WeightVector weights = normalize_weights(WeightVector({pooled.values().begin(), pooled.values().end()}, false));
    return ActivationMap(features.height(), features.width(),
                         detail::weighted_channel_sum(features, weights.values(), true));
}

/// Spatial decomposition of the cosine score. Each pixel holds
/// sum_n A^n(i,j) * s_n with s the L2-normalized support embedding, so under
/// average pooling sum(map) / (H * W * |V^Q|) equals cos(V^Q, V^S). Values are
/// not clamped: negative contributions are part of the decomposition.
inline ActivationMap decomposition_map(const FeatureMap &query_features, const EmbeddingVector &support_embedding) {
    if (support_embedding.size() != query_features.channels())
        throw Error("decomposition_map: channel mismatch (" + std::to_string(support_embedding.size()) +
                    " vs " + std::to_string(query_features.channels()) + ")");
    const EmbeddingVector unit = l2_normalize(support_embedding);
    return ActivationMap(query_features.height(), query_features.width(),
                         detail::weighted_channel_sum(query_features, unit.values(), false));
}

}  // namespace sfam
