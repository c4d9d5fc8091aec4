#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfam/activation_map.hpp"
#include "sfam/localization.hpp"

namespace sfam {

inline constexpr int kManifestSchemaVersion = 1;

/// One query explained against one class's supports.
struct EpisodeRecord {
    std::string episode_id;
    std::filesystem::path query_tensor_path;
    std::vector<std::filesystem::path> support_tensor_paths;
    std::optional<std::filesystem::path> query_image_path;
    std::optional<BoundingBox> truth_box;
    std::size_t image_width = 0;
    std::size_t image_height = 0;
    Metric metric = Metric::euclidean;
};

namespace detail {

inline std::filesystem::path resolve_against(const std::filesystem::path &base, const std::string &p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline bool inclusive_convention(const nlohmann::json &obj, bool fallback, const std::string &ctx) {
    if (!obj.contains("box_convention")) return fallback;
    const auto conv = obj.at("box_convention").get<std::string>();
    if (conv == "inclusive") return true;
    if (conv == "half_open") return false;
    throw Error(ctx + ": box_convention must be \"half_open\" or \"inclusive\", got \"" + conv + "\"");
}

inline EpisodeRecord parse_episode(const nlohmann::json &e, std::size_t index, const std::filesystem::path &base,
                                   bool inclusive_default) {
    std::string id = "#" + std::to_string(index);
    try {
        if (!e.is_object()) throw Error("episode entry must be an object");
        if (!e.contains("episode_id")) throw Error("missing field 'episode_id'");
        id = e.at("episode_id").get<std::string>();
        if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos)
            throw Error("episode_id must be a nonempty plain name (used as an output directory)");

        auto required = [&](const char *key) -> const nlohmann::json & {
            if (!e.contains(key)) throw Error(std::string("missing field '") + key + "'");
            return e.at(key);
        };

        EpisodeRecord r;
        r.episode_id = id;
        r.query_tensor_path = resolve_against(base, required("query_tensor").get<std::string>());
        const auto &supports = required("support_tensors");
        if (!supports.is_array() || supports.empty()) throw Error("support_tensors must be a nonempty array");
        for (const auto &s : supports) r.support_tensor_paths.push_back(resolve_against(base, s.get<std::string>()));
        if (e.contains("query_image") && !e.at("query_image").is_null())
            r.query_image_path = resolve_against(base, e.at("query_image").get<std::string>());

        const auto &size = required("image_size");
        if (!size.is_array() || size.size() != 2) throw Error("image_size must be [width, height]");
        const auto w = size[0].get<std::int64_t>(), h = size[1].get<std::int64_t>();
        if (w <= 0 || h <= 0) throw Error("image_size must be positive");
        r.image_width = static_cast<std::size_t>(w);
        r.image_height = static_cast<std::size_t>(h);

        r.metric = parse_metric(required("metric").get<std::string>());

        if (e.contains("truth_box") && !e.at("truth_box").is_null()) {
            const auto &b = e.at("truth_box");
            if (!b.is_array() || b.size() != 4) throw Error("truth_box must be [x_min, y_min, x_max, y_max]");
            const std::int64_t bump = inclusive_convention(e, inclusive_default, "episode") ? 1 : 0;
            r.truth_box = BoundingBox::make(b[0].get<std::int64_t>(), b[1].get<std::int64_t>(),
                                            b[2].get<std::int64_t>() + bump, b[3].get<std::int64_t>() + bump);
        }

        if (!std::filesystem::exists(r.query_tensor_path))
            throw Error("missing file " + r.query_tensor_path.string());
        for (const auto &p : r.support_tensor_paths)
            if (!std::filesystem::exists(p)) throw Error("missing file " + p.string());
        if (r.query_image_path && !std::filesystem::exists(*r.query_image_path))
            throw Error("missing file " + r.query_image_path->string());
        return r;
    } catch (const nlohmann::json::exception &ex) {
        throw Error("episode '" + id + "': " + ex.what());
    } catch (const Error &ex) {
        throw Error("episode '" + id + "': " + ex.what());
    }
}

}  // namespace detail

/// Loads a manifest: either a bare array of episode objects, or an object
/// {"schema_version": 1, "box_convention": ..., "episodes": [...]}. Relative
/// paths resolve against the manifest's directory. All-or-nothing: the first
/// bad episode aborts the load.
inline std::vector<EpisodeRecord> read_manifest(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(path.string() + ": cannot open manifest");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &ex) {
        throw Error(path.string() + ": " + ex.what());
    }

    bool inclusive = false;
    const nlohmann::json *episodes = &doc;
    if (doc.is_object()) {
        if (doc.contains("schema_version")) {
            const auto &v = doc.at("schema_version");
            if (!v.is_number_integer() || v.get<int>() != kManifestSchemaVersion)
                throw Error(path.string() + ": unsupported schema_version " + v.dump());
        }
        inclusive = detail::inclusive_convention(doc, false, path.string());
        if (!doc.contains("episodes")) throw Error(path.string() + ": missing 'episodes' array");
        episodes = &doc.at("episodes");
    }
    if (!episodes->is_array()) throw Error(path.string() + ": manifest must be an array of episodes");

    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::vector<EpisodeRecord> records;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < episodes->size(); ++i) {
        EpisodeRecord r = detail::parse_episode((*episodes)[i], i, base, inclusive);
        if (!ids.insert(r.episode_id).second) throw Error("episode '" + r.episode_id + "': duplicate id");
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace sfam
