#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the library's numeric code; results are computed with plain loops in
// long double so they can cross-check the implementation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace oracle {

using Vec = std::vector<long double>;

inline Vec channel_means(const std::vector<float> &values, std::size_t n, std::size_t h, std::size_t w) {
    Vec out(n, 0.0L);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) out[c] += values[c * h * w + i * w + j];
        out[c] /= static_cast<long double>(h * w);
    }
    return out;
}

inline Vec unit(const std::vector<float> &v) {
    long double s = 0.0L;
    for (float x : v) s += static_cast<long double>(x) * x;
    const long double norm = std::sqrt(s);
    Vec out;
    for (float x : v) out.push_back(x / norm);
    return out;
}

/// Contribution score written straight from the formula.
inline Vec cis(const Vec &q, const Vec &s) {
    const std::size_t n = q.size();
    long double total = 0.0L;
    for (std::size_t m = 0; m < n; ++m) total += (q[m] - s[m]) * (q[m] - s[m]);
    Vec w(n);
    for (std::size_t k = 0; k < n; ++k)
        w[k] = 1.0L / (n - 1) - (q[k] - s[k]) * (q[k] - s[k]) / ((n - 1) * total);
    return w;
}

inline Vec to_ld(const std::vector<float> &v) { return Vec(v.begin(), v.end()); }

inline Vec minmax(const Vec &w) {
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    Vec out;
    for (auto x : w) out.push_back((x - *lo) / (*hi - *lo));
    return out;
}

/// out(i,j) = sum_n w_n * A_n(i,j), naive triple loop.
inline std::vector<long double> weighted_sum(const std::vector<float> &a, std::size_t n, std::size_t h, std::size_t w,
                                             const Vec &weights) {
    std::vector<long double> out(h * w, 0.0L);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t c = 0; c < n; ++c) out[i * w + j] += weights[c] * a[c * h * w + i * w + j];
    return out;
}

/// Reference bilinear sampler: evaluates the continuous interpolant at the
/// half-pixel source coordinate, clamping to the image.
inline std::vector<long double> bilinear(const std::vector<float> &m, std::size_t h, std::size_t w, std::size_t oh,
                                         std::size_t ow) {
    auto sample = [&](long double y, long double x) {
        y = std::clamp(y, 0.0L, static_cast<long double>(h - 1));
        x = std::clamp(x, 0.0L, static_cast<long double>(w - 1));
        const auto y0 = static_cast<std::size_t>(std::floor(y));
        const auto x0 = static_cast<std::size_t>(std::floor(x));
        const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const long double fy = y - y0, fx = x - x0;
        auto v = [&](std::size_t r, std::size_t c) { return static_cast<long double>(m[r * w + c]); };
        return v(y0, x0) * (1 - fy) * (1 - fx) + v(y0, x1) * (1 - fy) * fx + v(y1, x0) * fy * (1 - fx) +
               v(y1, x1) * fy * fx;
    };
    std::vector<long double> out(oh * ow);
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
            out[i * ow + j] = sample((i + 0.5L) * h / oh - 0.5L, (j + 0.5L) * w / ow - 0.5L);
    return out;
}

struct Box {
    long x0, y0, x1, y1;
};

/// IoU by rasterizing both half-open boxes on a grid and counting cells.
inline long double raster_iou(const Box &a, const Box &b, long grid) {
    long inter = 0, uni = 0;
    for (long y = 0; y < grid; ++y)
        for (long x = 0; x < grid; ++x) {
            const bool ia = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
            const bool ib = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
            inter += ia && ib;
            uni += ia || ib;
        }
    return static_cast<long double>(inter) / uni;
}

/// Largest 4-connected component by breadth-first labelling; returns the
/// half-open box (x0, y0, x1, y1). First-found wins ties.
inline Box largest_component(const std::vector<int> &mask, long h, long w) {
    std::vector<int> label(mask.size(), 0);
    int next = 0;
    long best = 0;
    Box box{0, 0, 0, 0};
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            if (!mask[y * w + x] || label[y * w + x]) continue;
            ++next;
            std::deque<std::pair<long, long>> q{{y, x}};
            label[y * w + x] = next;
            long count = 0;
            Box b{x, y, x + 1, y + 1};
            while (!q.empty()) {
                auto [cy, cx] = q.front();
                q.pop_front();
                ++count;
                b.x0 = std::min(b.x0, cx);
                b.y0 = std::min(b.y0, cy);
                b.x1 = std::max(b.x1, cx + 1);
                b.y1 = std::max(b.y1, cy + 1);
                const std::array<std::pair<long, long>, 4> nb{{{cy - 1, cx}, {cy + 1, cx}, {cy, cx - 1}, {cy, cx + 1}}};
                for (auto [ny, nx] : nb) {
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                    if (mask[ny * w + nx] && !label[ny * w + nx]) {
                        label[ny * w + nx] = next;
                        q.push_back({ny, nx});
                    }
                }
            }
            if (count > best) {
                best = count;
                box = b;
            }
        }
    return box;
}

/// Spearman via counting-based average ranks followed by Pearson.
inline long double spearman(const std::vector<float> &a, const std::vector<float> &b) {
    auto ranks = [](const std::vector<float> &v) {
        std::vector<long double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            long less = 0, equal = 0;
            for (float x : v) {
                less += x < v[i];
                equal += x == v[i];
            }
            r[i] = less + (equal + 1) / 2.0L;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Indices that sort `v` ascending; ties keep index order.
template <typename T>
std::vector<std::size_t> argsort(const std::vector<T> &v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return idx;
}

inline std::vector<float> random_values(std::mt19937 &gen, std::size_t n, float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    std::vector<float> v(n);
    for (auto &x : v) x = d(gen);
    return v;
}

/// Fresh scratch directory unique to this process and tag.
inline std::filesystem::path scratch_dir(const std::string &tag) {
    auto dir = std::filesystem::temp_directory_path() / ("sfam_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace oracle
