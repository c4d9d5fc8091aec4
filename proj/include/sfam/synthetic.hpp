#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfam/image.hpp"
#include "sfam/localization.hpp"
#include "sfam/manifest.hpp"
#include "sfam/npy.hpp"
#include "sfam/sanity.hpp"

namespace sfam::synthetic {

/// Planted-blob few-shot episodes. One channel carries the same Gaussian blob
/// in the query and in its own-class support (at different positions); the
/// other channels are query-only noise fields with pooled means above the
/// blob's, placed away from it. Pair-aware weighting should find the blob,
/// self-weighting (RAM) should be pulled to the noise.
struct PlantedBlobConfig {
    std::size_t channels = 16;
    std::size_t height = 10;
    std::size_t width = 10;
    std::size_t ways = 5;
    std::size_t pixels_per_cell = 8;  ///< image resolution = feature size * this
    double blob_sigma = 1.2;
    double distractor_mean = 0.15;
    double distractor_jitter = 0.02;  ///< relative spread of distractor means
    double distractor_radius = 3.0;
    double support_noise = 0.01;
};

struct PlantedEpisode {
    FeatureMap query;
    std::vector<FeatureMap> class_supports;  ///< one 1-shot support per way; index 0 is the query's class
    std::size_t shared_channel;
    BoundingBox truth_box;  ///< image pixels
    std::size_t image_width;
    std::size_t image_height;
};

/// Radius (in feature cells) at which the blob falls to 0.2 of its peak.
inline double blob_radius(double sigma) { return sigma * std::sqrt(2.0 * std::log(5.0)); }

namespace detail {

inline double uniform(std::mt19937_64 &eng, double lo, double hi) { return lo + (hi - lo) * rng::unit(eng); }

inline std::vector<float> gaussian_plane(const PlantedBlobConfig &cfg, double cy, double cx) {
    std::vector<float> p(cfg.height * cfg.width);
    for (std::size_t i = 0; i < cfg.height; ++i)
        for (std::size_t j = 0; j < cfg.width; ++j) {
            const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
            p[i * cfg.width + j] = static_cast<float>(std::exp(-(dy * dy + dx * dx) / (2.0 * cfg.blob_sigma * cfg.blob_sigma)));
        }
    return p;
}

}  // namespace detail

inline PlantedEpisode make_episode(const PlantedBlobConfig &cfg, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    const std::size_t plane = cfg.height * cfg.width;
    const double radius = blob_radius(cfg.blob_sigma);
    const double lo_y = 2.5, hi_y = static_cast<double>(cfg.height) - 3.5;
    const double lo_x = 2.5, hi_x = static_cast<double>(cfg.width) - 3.5;

    // Each way owns a distinct channel; way 0 is the query's class.
    const auto order = rng::permutation(cfg.channels, rng::mix(seed, 1));
    const std::size_t shared = order[0];

    const double cy = detail::uniform(eng, lo_y, hi_y);
    const double cx = detail::uniform(eng, lo_x, hi_x);

    std::vector<float> q(cfg.channels * plane, 0.0f);
    auto blob = detail::gaussian_plane(cfg, cy, cx);
    std::copy(blob.begin(), blob.end(), q.begin() + static_cast<std::ptrdiff_t>(shared * plane));

    for (std::size_t c = 0; c < cfg.channels; ++c) {
        if (c == shared) continue;
        double dy, dx;
        do {
            dy = detail::uniform(eng, 0.0, static_cast<double>(cfg.height - 1));
            dx = detail::uniform(eng, 0.0, static_cast<double>(cfg.width - 1));
        } while (std::hypot(dy - cy, dx - cx) <= 2.0 * radius);
        std::vector<double> field(plane);
        double sum = 0.0;
        for (std::size_t i = 0; i < cfg.height; ++i)
            for (std::size_t j = 0; j < cfg.width; ++j) {
                const double y = static_cast<double>(i), x = static_cast<double>(j);
                const bool outside_blob = std::hypot(y - cy, x - cx) > 1.5 * radius;
                const bool inside_disc = std::hypot(y - dy, x - dx) < cfg.distractor_radius;
                const double u = rng::unit(eng);
                field[i * cfg.width + j] = (outside_blob && inside_disc ? u : 0.0) + 1e-6;
                sum += field[i * cfg.width + j];
            }
        const double target = cfg.distractor_mean * detail::uniform(eng, 1.0 - cfg.distractor_jitter, 1.0 + cfg.distractor_jitter);
        const double scale = target * static_cast<double>(plane) / sum;
        for (std::size_t p = 0; p < plane; ++p) q[c * plane + p] = static_cast<float>(field[p] * scale);
    }

    std::vector<FeatureMap> supports;
    for (std::size_t way = 0; way < cfg.ways; ++way) {
        std::vector<float> s(cfg.channels * plane);
        for (auto &v : s) v = static_cast<float>(cfg.support_noise * rng::unit(eng));
        const double sy = detail::uniform(eng, lo_y, hi_y);
        const double sx = detail::uniform(eng, lo_x, hi_x);
        const auto sb = detail::gaussian_plane(cfg, sy, sx);
        const std::size_t c = order[way % cfg.channels];
        for (std::size_t p = 0; p < plane; ++p) s[c * plane + p] += sb[p];
        supports.emplace_back(cfg.channels, cfg.height, cfg.width, std::move(s));
    }

    const double ppc = static_cast<double>(cfg.pixels_per_cell);
    const auto img_w = static_cast<std::int64_t>(cfg.width * cfg.pixels_per_cell);
    const auto img_h = static_cast<std::int64_t>(cfg.height * cfg.pixels_per_cell);
    auto px = [&](double cell) { return static_cast<std::int64_t>(std::lround((cell + 0.5) * ppc)); };
    const BoundingBox truth = BoundingBox::make(std::max<std::int64_t>(0, px(cx - radius)),
                                                std::max<std::int64_t>(0, px(cy - radius)),
                                                std::min(img_w, px(cx + radius)), std::min(img_h, px(cy + radius)));

    return PlantedEpisode{FeatureMap(cfg.channels, cfg.height, cfg.width, std::move(q)), std::move(supports), shared,
                          truth, static_cast<std::size_t>(img_w), static_cast<std::size_t>(img_h)};
}

/// Horizontal gray ramp, used as a stand-in photo for overlays.
inline RgbImage placeholder_image(std::size_t width, std::size_t height) {
    RgbImage img(width, height);
    for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j) {
            const auto v = static_cast<std::uint8_t>(64 + (128 * j) / std::max<std::size_t>(1, width - 1));
            std::uint8_t *p = img.at(i, j);
            p[0] = p[1] = p[2] = v;
        }
    return img;
}

/// Writes `count` episodes (tensors, optional placeholder images) and a
/// manifest.json under `dir`. Each record pairs the query with its own-class
/// support. Returns the manifest path.
inline std::filesystem::path write_planted_manifest(const std::filesystem::path &dir, std::size_t count,
                                                    std::uint64_t seed, Metric metric, bool with_images = false,
                                                    const PlantedBlobConfig &cfg = {}) {
    std::filesystem::create_directories(dir / "tensors");
    nlohmann::json episodes = nlohmann::json::array();
    for (std::size_t e = 0; e < count; ++e) {
        const PlantedEpisode ep = make_episode(cfg, rng::mix(seed, e));
        char id[32];
        std::snprintf(id, sizeof id, "ep%05zu", e);
        const std::string q = std::string("tensors/") + id + "_query.npy";
        const std::string s = std::string("tensors/") + id + "_support.npy";
        write_tensor(dir / q, ep.query);
        write_tensor(dir / s, ep.class_supports.front());
        nlohmann::json rec = {
            {"episode_id", id},
            {"query_tensor", q},
            {"support_tensors", {s}},
            {"truth_box", {ep.truth_box.x_min, ep.truth_box.y_min, ep.truth_box.x_max, ep.truth_box.y_max}},
            {"image_size", {ep.image_width, ep.image_height}},
            {"metric", to_string(metric)},
        };
        if (with_images) {
            const std::string img = std::string("images/") + id + ".png";
            write_png(dir / img, placeholder_image(ep.image_width, ep.image_height));
            rec["query_image"] = img;
        }
        episodes.push_back(std::move(rec));
    }
    const nlohmann::json doc = {{"schema_version", kManifestSchemaVersion}, {"episodes", episodes}};
    const auto path = dir / "manifest.json";
    std::ofstream out(path);
    if (!out) throw Error(path.string() + ": cannot open for writing");
    out << doc.dump(2) << '\n';
    return path;
}

}  // namespace sfam::synthetic
