#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfam/activation_map.hpp"

namespace sfam {

/// Pixel box, half-open on both axes: [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
    std::int64_t x_min = 0;
    std::int64_t y_min = 0;
    std::int64_t x_max = 1;
    std::int64_t y_max = 1;

    static BoundingBox make(std::int64_t x_min, std::int64_t y_min, std::int64_t x_max, std::int64_t y_max) {
        if (x_min < 0 || y_min < 0) throw Error("BoundingBox: negative coordinate");
        if (x_max <= x_min || y_max <= y_min)
            throw Error("BoundingBox: non-positive area [" + std::to_string(x_min) + ", " + std::to_string(y_min) +
                        ", " + std::to_string(x_max) + ", " + std::to_string(y_max) + ")");
        return BoundingBox{x_min, y_min, x_max, y_max};
    }

    std::int64_t width() const noexcept { return x_max - x_min; }
    std::int64_t height() const noexcept { return y_max - y_min; }
    std::int64_t area() const noexcept { return width() * height(); }

    friend bool operator==(const BoundingBox &, const BoundingBox &) = default;
};

/// Binary H x W mask, row-major.
class Mask {
public:
    Mask(std::size_t height, std::size_t width) : height_(height), width_(width), bits_(height * width, 0) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    bool at(std::size_t i, std::size_t j) const { return bits_[i * width_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v = true) { bits_[i * width_ + j] = v ? 1 : 0; }
    std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }
    bool empty() const { return count() == 0; }

    friend bool operator==(const Mask &, const Mask &) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<std::uint8_t> bits_;
};

/// Pixels at or above `fraction` of the map maximum. A map whose maximum is
/// not positive yields an empty mask.
inline Mask threshold_mask(const ActivationMap &map, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw Error("threshold_mask: fraction must lie in (0, 1)");
    Mask mask(map.height(), map.width());
    const double peak = map.max();
    if (!(peak > 0.0)) return mask;
    const double cut = fraction * peak;
    for (std::size_t i = 0; i < map.height(); ++i)
        for (std::size_t j = 0; j < map.width(); ++j)
            if (map.at(i, j) >= cut) mask.set(i, j);
    return mask;
}

/// Tight box around the largest 4-connected component. Equal-sized components
/// resolve to the one whose first pixel comes first in row-major order.
inline BoundingBox largest_component_bbox(const Mask &mask) {
    const std::size_t h = mask.height();
    const std::size_t w = mask.width();
    std::vector<std::uint8_t> seen(h * w, 0);
    std::vector<std::size_t> stack;

    std::size_t best_size = 0;
    BoundingBox best;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (seen[start] || !mask.at(start / w, start % w)) continue;
        std::size_t size = 0;
        std::size_t r0 = h, c0 = w, r1 = 0, c1 = 0;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t r = p / w, c = p % w;
            ++size;
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            c0 = std::min(c0, c);
            c1 = std::max(c1, c);
            auto visit = [&](std::size_t rr, std::size_t cc) {
                const std::size_t q = rr * w + cc;
                if (!seen[q] && mask.at(rr, cc)) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            };
            if (r > 0) visit(r - 1, c);
            if (r + 1 < h) visit(r + 1, c);
            if (c > 0) visit(r, c - 1);
            if (c + 1 < w) visit(r, c + 1);
        }
        if (size > best_size) {
            best_size = size;
            best = BoundingBox{static_cast<std::int64_t>(c0), static_cast<std::int64_t>(r0),
                               static_cast<std::int64_t>(c1 + 1), static_cast<std::int64_t>(r1 + 1)};
        }
    }
    if (best_size == 0) throw Error("no activated region");
    return best;
}

/// Tight box around every set pixel.
inline BoundingBox mask_bbox(const Mask &mask) {
    std::size_t r0 = mask.height(), c0 = mask.width(), r1 = 0, c1 = 0;
    bool any = false;
    for (std::size_t i = 0; i < mask.height(); ++i)
        for (std::size_t j = 0; j < mask.width(); ++j)
            if (mask.at(i, j)) {
                any = true;
                r0 = std::min(r0, i);
                r1 = std::max(r1, i);
                c0 = std::min(c0, j);
                c1 = std::max(c1, j);
            }
    if (!any) throw Error("no activated region");
    return BoundingBox{static_cast<std::int64_t>(c0), static_cast<std::int64_t>(r0),
                       static_cast<std::int64_t>(c1 + 1), static_cast<std::int64_t>(r1 + 1)};
}

enum class BoxMode { component, all };

inline const char *to_string(BoxMode m) { return m == BoxMode::component ? "component" : "all"; }

inline BoxMode parse_box_mode(const std::string &s) {
    if (s == "component") return BoxMode::component;
    if (s == "all") return BoxMode::all;
    throw Error("unknown box mode '" + s + "' (expected component or all)");
}

inline double iou(const BoundingBox &a, const BoundingBox &b) {
    const std::int64_t ix = std::max<std::int64_t>(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const std::int64_t iy = std::max<std::int64_t>(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const std::int64_t inter = ix * iy;
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline constexpr double kHitIou = 0.5;

struct EpisodeResult {
    std::string episode_id;
    std::optional<BoundingBox> predicted_box;  ///< absent when nothing crossed the threshold
    BoundingBox truth_box;
    double iou = 0.0;
    bool hit = false;
};

struct LocalizationEpisode {
    std::string episode_id;
    ActivationMap map;  ///< normalized, at annotation resolution
    BoundingBox truth_box;
};

struct LocalizationSummary {
    double mean_iou = 0.0;
    double accuracy = 0.0;
    std::vector<EpisodeResult> per_episode;
};

inline EpisodeResult localize(const LocalizationEpisode &ep, double fraction, BoxMode mode) {
    EpisodeResult r{ep.episode_id, std::nullopt, ep.truth_box, 0.0, false};
    const Mask mask = threshold_mask(ep.map, fraction);
    if (mask.empty()) return r;
    r.predicted_box = mode == BoxMode::component ? largest_component_bbox(mask) : mask_bbox(mask);
    r.iou = iou(*r.predicted_box, ep.truth_box);
    r.hit = r.iou >= kHitIou;
    return r;
}

/// Reduces already-localized results in input order.
inline LocalizationSummary summarize(std::vector<EpisodeResult> results) {
    if (results.empty()) throw Error("no episodes");
    double iou_sum = 0.0;
    std::size_t hits = 0;
    for (const auto &r : results) {
        iou_sum += r.iou;
        hits += r.hit ? 1 : 0;
    }
    const double n = static_cast<double>(results.size());
    return LocalizationSummary{iou_sum / n, static_cast<double>(hits) / n, std::move(results)};
}

inline LocalizationSummary evaluate_episodes(std::span<const LocalizationEpisode> episodes, double fraction,
                                             BoxMode mode = BoxMode::component) {
    if (episodes.empty()) throw Error("no episodes");
    std::vector<EpisodeResult> results;
    results.reserve(episodes.size());
    for (const auto &ep : episodes) results.push_back(localize(ep, fraction, mode));
    return summarize(std::move(results));
}

}  // namespace sfam
