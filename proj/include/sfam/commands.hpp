#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sfam/activation_map.hpp"
#include "sfam/baselines.hpp"
#include "sfam/image.hpp"
#include "sfam/localization.hpp"
#include "sfam/manifest.hpp"
#include "sfam/npy.hpp"
#include "sfam/sanity.hpp"

namespace sfam {

enum class Method { sfam, ram, decomposition };

inline const char *to_string(Method m) {
    switch (m) {
        case Method::sfam: return "sfam";
        case Method::ram: return "ram";
        case Method::decomposition: return "decomposition";
    }
    return "?";
}

inline Method parse_method(const std::string &s) {
    if (s == "sfam") return Method::sfam;
    if (s == "ram") return Method::ram;
    if (s == "decomposition") return Method::decomposition;
    throw Error("unknown method '" + s + "' (expected sfam, ram or decomposition)");
}

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel parse_log_level(const char *s) {
    if (s == nullptr) return LogLevel::info;
    const std::string v(s);
    if (v == "error") return LogLevel::error;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
}

/// Configuration error detected before any episode is touched.
class UsageError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    std::filesystem::path manifest;
    Method method = Method::sfam;
    std::optional<Metric> metric;  ///< overrides each episode's manifest metric when set
    double threshold = 0.2;
    BoxMode box_mode = BoxMode::component;
    std::filesystem::path output_dir = "sfam_out";
    std::size_t parallelism = 1;
    std::uint64_t seed = 0;
    bool keep_going = false;
    double overlay_alpha = 0.5;
    LogLevel log_level = LogLevel::info;
};

enum ExitCode : int { kExitOk = 0, kExitEpisodeFailure = 1, kExitUsage = 2 };

inline void validate(const RunConfig &cfg) {
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
    if (cfg.parallelism == 0) throw UsageError("--jobs must be positive");
    if (cfg.method == Method::decomposition && cfg.metric == Metric::euclidean)
        throw UsageError("method 'decomposition' requires the cosine metric");
    if (!(cfg.overlay_alpha >= 0.0 && cfg.overlay_alpha <= 1.0)) throw UsageError("--alpha must lie in [0, 1]");
}

inline Metric effective_metric(const RunConfig &cfg, const EpisodeRecord &rec) {
    if (cfg.method == Method::decomposition) return Metric::cosine;
    return cfg.metric.value_or(rec.metric);
}

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads. Each index is
/// claimed once; callers store results by index so collection order never
/// depends on scheduling. Returns early (without claiming further indices)
/// once `stop` becomes true.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)> &work,
                         const std::atomic<bool> *stop = nullptr) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            if (stop != nullptr && stop->load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            work(i);
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(n, 1));
    if (threads == 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
}

struct EpisodeMap {
    ActivationMap raw;  ///< feature resolution
    double similarity;  ///< distance (euclidean) or cosine similarity
    Metric metric;
};

struct LoadedEpisode {
    FeatureMap query;
    std::vector<FeatureMap> supports;
};

inline LoadedEpisode load_episode(const EpisodeRecord &rec) {
    LoadedEpisode e{read_feature_map(rec.query_tensor_path), {}};
    for (const auto &p : rec.support_tensor_paths) e.supports.push_back(read_feature_map(p));
    return e;
}

/// Explanation map for one episode under the configured method.
inline EpisodeMap compute_map(const RunConfig &cfg, const EpisodeRecord &rec, const LoadedEpisode &ep) {
    const Metric metric = effective_metric(cfg, rec);
    if (cfg.method == Method::sfam) {
        auto pair = explain_pair(ep.query, ep.supports, metric);
        return EpisodeMap{std::move(pair.query_map), pair.similarity, metric};
    }
    for (const auto &s : ep.supports)
        if (s.channels() != ep.query.channels()) throw Error("support channel count differs from query");
    const EmbeddingVector vq = global_average_pool(ep.query);
    std::vector<EmbeddingVector> pooled;
    for (const auto &s : ep.supports) pooled.push_back(global_average_pool(s));
    const EmbeddingVector vs = prototype(pooled);
    const double similarity = metric == Metric::euclidean ? euclidean_distance(vq, vs) : cosine_similarity(vq, vs);
    ActivationMap map = cfg.method == Method::ram ? ram_map(ep.query) : decomposition_map(ep.query, vs);
    return EpisodeMap{std::move(map), similarity, metric};
}

/// Normalized map at the episode's annotation/image resolution.
inline ActivationMap display_map(const ActivationMap &raw, const EpisodeRecord &rec) {
    return normalize_map(upsample_bilinear(raw, rec.image_height, rec.image_width));
}

namespace detail {

struct EpisodeOutcome {
    bool done = false;
    std::string error;
    std::string summary;
};

inline std::string format_fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

/// Runs `body` per record in parallel and prints summaries / errors in input
/// order. Returns the number of failed episodes.
inline std::size_t run_episodes(const RunConfig &cfg, const std::vector<EpisodeRecord> &records,
                                const std::function<std::string(std::size_t)> &body, std::ostream &out,
                                std::ostream &err) {
    std::vector<EpisodeOutcome> outcomes(records.size());
    std::atomic<bool> stop{false};
    parallel_for(
        records.size(), cfg.parallelism,
        [&](std::size_t i) {
            try {
                outcomes[i].summary = body(i);
            } catch (const std::exception &ex) {
                outcomes[i].error = ex.what();
                if (!cfg.keep_going) stop = true;
            }
            outcomes[i].done = true;
        },
        &stop);

    std::size_t failures = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto &o = outcomes[i];
        if (!o.done) continue;
        if (!o.error.empty()) {
            ++failures;
            err << "error: episode '" << records[i].episode_id << "': " << o.error << '\n';
        } else if (cfg.log_level >= LogLevel::info && !o.summary.empty()) {
            out << o.summary << '\n';
        }
    }
    if (failures > 0 && cfg.keep_going) err << failures << " episode(s) failed\n";
    return failures;
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(path.string() + ": cannot open for writing");
    f << text;
    if (!f) throw Error(path.string() + ": write failed");
}

template <typename Fn>
int guarded(std::ostream &err, Fn &&fn) {
    try {
        return fn();
    } catch (const UsageError &ex) {
        err << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const std::exception &ex) {
        err << "error: " << ex.what() << '\n';
        return kExitEpisodeFailure;
    }
}

}  // namespace detail

/// Writes map_raw.npy, map_norm.npy and (when the episode has an image)
/// overlay.png under output_dir/<episode_id>/, one summary line per episode.
inline int cmd_explain(const RunConfig &cfg, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
    return detail::guarded(err, [&] {
        validate(cfg);
        const auto records = read_manifest(cfg.manifest);
        if (records.empty()) throw UsageError("no episodes");
        const std::size_t failures = detail::run_episodes(
            cfg, records,
            [&](std::size_t i) {
                const auto &rec = records[i];
                const auto ep = load_episode(rec);
                const EpisodeMap m = compute_map(cfg, rec, ep);
                const ActivationMap norm = display_map(m.raw, rec);
                const auto dir = cfg.output_dir / rec.episode_id;
                write_tensor(dir / "map_raw.npy", m.raw);
                write_tensor(dir / "map_norm.npy", norm);
                if (rec.query_image_path) render_overlay(*rec.query_image_path, norm, dir / "overlay.png", cfg.overlay_alpha);
                std::ostringstream line;
                line << rec.episode_id << "  method=" << to_string(cfg.method) << "  metric=" << to_string(m.metric)
                     << "  " << (m.metric == Metric::euclidean ? "distance" : "cosine") << '='
                     << detail::format_fixed(m.similarity, 6);
                return line.str();
            },
            out, err);
        return failures == 0 ? kExitOk : kExitEpisodeFailure;
    });
}

/// Localization scores: output_dir/episodes.csv (episode_id,iou,hit) and
/// output_dir/summary.json {mean_iou, accuracy, n, ...}.
inline int cmd_evaluate(const RunConfig &cfg, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
    return detail::guarded(err, [&] {
        validate(cfg);
        const auto records = read_manifest(cfg.manifest);
        if (records.empty()) throw UsageError("no episodes");
        std::string missing;
        for (const auto &r : records)
            if (!r.truth_box) missing += (missing.empty() ? "" : ", ") + r.episode_id;
        if (!missing.empty()) throw UsageError("episodes without truth_box: " + missing);

        std::vector<std::optional<EpisodeResult>> results(records.size());
        const std::size_t failures = detail::run_episodes(
            cfg, records,
            [&](std::size_t i) {
                const auto &rec = records[i];
                const auto ep = load_episode(rec);
                const EpisodeMap m = compute_map(cfg, rec, ep);
                results[i] = localize(LocalizationEpisode{rec.episode_id, display_map(m.raw, rec), *rec.truth_box},
                                      cfg.threshold, cfg.box_mode);
                return cfg.log_level >= LogLevel::debug
                           ? rec.episode_id + "  iou=" + detail::format_fixed(results[i]->iou, 4)
                           : std::string();
            },
            out, err);
        if (failures > 0 && !cfg.keep_going) return static_cast<int>(kExitEpisodeFailure);

        std::vector<EpisodeResult> ok;
        for (auto &r : results)
            if (r) ok.push_back(std::move(*r));
        const LocalizationSummary summary = summarize(std::move(ok));

        std::ostringstream csv;
        csv << "episode_id,iou,hit\n";
        for (const auto &r : summary.per_episode)
            csv << r.episode_id << ',' << detail::format_fixed(r.iou, 6) << ',' << (r.hit ? 1 : 0) << '\n';
        detail::write_text(cfg.output_dir / "episodes.csv", csv.str());

        const nlohmann::json js = {{"method", to_string(cfg.method)},
                                   {"threshold", cfg.threshold},
                                   {"box_mode", to_string(cfg.box_mode)},
                                   {"mean_iou", summary.mean_iou},
                                   {"accuracy", summary.accuracy},
                                   {"n", summary.per_episode.size()}};
        detail::write_text(cfg.output_dir / "summary.json", js.dump(2) + "\n");

        out << "| Method | IoU (%) | Accuracy (%) |\n"
            << "|---|---|---|\n"
            << "| " << to_string(cfg.method) << " | " << detail::format_fixed(100.0 * summary.mean_iou, 2) << " | "
            << detail::format_fixed(100.0 * summary.accuracy, 2) << " |\n";
        return failures == 0 ? static_cast<int>(kExitOk) : static_cast<int>(kExitEpisodeFailure);
    });
}

/// Feature-randomization sweep per episode: output_dir/sanity.json plus an
/// overlay strip output_dir/<episode_id>/sanity_strip.png (image, original
/// map, then one tile per fraction).
inline int cmd_sanity(const RunConfig &cfg, const std::vector<double> &fractions, std::ostream &out = std::cout,
                      std::ostream &err = std::cerr) {
    return detail::guarded(err, [&] {
        validate(cfg);
        if (cfg.method != Method::sfam) throw UsageError("sanity sweeps explain with method 'sfam' only");
        if (fractions.empty()) throw UsageError("--fractions must list at least one value");
        for (double f : fractions)
            if (!(f >= 0.0 && f <= 1.0)) throw UsageError("--fractions values must lie in [0, 1]");
        const auto records = read_manifest(cfg.manifest);
        if (records.empty()) throw UsageError("no episodes");

        std::vector<std::optional<SanityReport>> reports(records.size());
        const std::size_t failures = detail::run_episodes(
            cfg, records,
            [&](std::size_t i) {
                const auto &rec = records[i];
                auto ep = load_episode(rec);
                const SanityEpisode se{ep.query, ep.supports, effective_metric(cfg, rec), rec.truth_box,
                                       rec.image_width, rec.image_height};
                SanityReport report = sanity_sweep(se, fractions, rng::mix(cfg.seed, i), cfg.threshold, cfg.box_mode);

                const RgbImage base =
                    rec.query_image_path ? read_image(*rec.query_image_path) : RgbImage(rec.image_width, rec.image_height);
                const auto original = explain_pair(ep.query, ep.supports, se.metric);
                std::vector<RgbImage> tiles{base, blend_heatmap(base, display_map(original.query_map, rec), cfg.overlay_alpha)};
                for (const auto &st : report.stages)
                    tiles.push_back(blend_heatmap(base, display_map(st.map, rec), cfg.overlay_alpha));
                write_png(cfg.output_dir / rec.episode_id / "sanity_strip.png", hconcat(tiles));

                std::ostringstream line;
                line << rec.episode_id;
                for (const auto &st : report.stages) line << "  " << st.fraction << ':' << detail::format_fixed(st.rank_correlation, 4);
                reports[i] = std::move(report);
                return line.str();
            },
            out, err);
        if (failures > 0 && !cfg.keep_going) return static_cast<int>(kExitEpisodeFailure);

        std::vector<double> mean_corr(fractions.size(), 0.0), mean_delta(fractions.size(), 0.0);
        std::size_t n = 0;
        nlohmann::json episodes = nlohmann::json::array();
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!reports[i]) continue;
            ++n;
            nlohmann::json stages = nlohmann::json::array();
            for (std::size_t k = 0; k < fractions.size(); ++k) {
                const auto &st = reports[i]->stages[k];
                mean_corr[k] += st.rank_correlation;
                mean_delta[k] += st.mean_iou_delta;
                stages.push_back({{"stage_label", st.label},
                                  {"fraction", st.fraction},
                                  {"rank_correlation", st.rank_correlation},
                                  {"mean_iou_delta", st.mean_iou_delta}});
            }
            episodes.push_back({{"episode_id", records[i].episode_id}, {"stages", stages}});
        }
        nlohmann::json summary = nlohmann::json::array();
        for (std::size_t k = 0; k < fractions.size(); ++k) {
            const double denom = n > 0 ? static_cast<double>(n) : 1.0;
            summary.push_back({{"stage_label", fraction_label(fractions[k])},
                               {"fraction", fractions[k]},
                               {"rank_correlation", mean_corr[k] / denom},
                               {"mean_iou_delta", mean_delta[k] / denom}});
        }
        const nlohmann::json doc = {{"seed", cfg.seed}, {"n", n}, {"stages", summary}, {"episodes", episodes}};
        detail::write_text(cfg.output_dir / "sanity.json", doc.dump(2) + "\n");

        out << "| Fraction | Mean rank correlation |\n|---|---|\n";
        for (const auto &s : summary)
            out << "| " << s["fraction"].get<double>() << " | " << detail::format_fixed(s["rank_correlation"].get<double>(), 4)
                << " |\n";
        return failures == 0 ? static_cast<int>(kExitOk) : static_cast<int>(kExitEpisodeFailure);
    });
}

}  // namespace sfam
