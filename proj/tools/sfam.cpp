#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfam/sfam.hpp"
#include "sfam/synthetic.hpp"

namespace {

struct CommonFlags {
    std::string manifest;
    std::string method = "sfam";
    std::string metric;
    double threshold = 0.2;
    std::string box_mode = "component";
    std::string out = "sfam_out";
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    bool keep_going = false;
    double alpha = 0.5;
};

void add_common(CLI::App &cmd, CommonFlags &f) {
    cmd.add_option("--manifest", f.manifest, "Episode manifest (JSON)")->required()->check(CLI::ExistingFile);
    cmd.add_option("--method", f.method, "Explanation method")
        ->check(CLI::IsMember({"sfam", "ram", "decomposition"}))
        ->capture_default_str();
    cmd.add_option("--metric", f.metric, "Similarity metric; overrides the manifest when given")
        ->check(CLI::IsMember({"euclidean", "cosine"}));
    cmd.add_option("--threshold", f.threshold, "Box threshold as a fraction of the map maximum")->capture_default_str();
    cmd.add_option("--box-mode", f.box_mode, "Box extraction")
        ->check(CLI::IsMember({"component", "all"}))
        ->capture_default_str();
    cmd.add_option("--out", f.out, "Output directory")->capture_default_str();
    cmd.add_option("--jobs", f.jobs, "Worker threads (episodes run in parallel)")->capture_default_str();
    cmd.add_option("--seed", f.seed, "Random seed")->capture_default_str();
    cmd.add_option("--alpha", f.alpha, "Overlay blend factor")->capture_default_str();
    cmd.add_flag("--keep-going", f.keep_going, "Continue past failing episodes");
}

sfam::RunConfig to_config(const CommonFlags &f) {
    sfam::RunConfig cfg;
    cfg.manifest = f.manifest;
    cfg.method = sfam::parse_method(f.method);
    if (!f.metric.empty()) cfg.metric = sfam::parse_metric(f.metric);
    cfg.threshold = f.threshold;
    cfg.box_mode = sfam::parse_box_mode(f.box_mode);
    cfg.output_dir = f.out;
    cfg.parallelism = f.jobs;
    cfg.seed = f.seed;
    cfg.keep_going = f.keep_going;
    cfg.overlay_alpha = f.alpha;
    cfg.log_level = sfam::parse_log_level(std::getenv("SFAM_LOG"));
    return cfg;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Gradient-free visual explanations for metric-learning models"};
    app.require_subcommand(1);

    CommonFlags explain_flags, evaluate_flags, sanity_flags;
    auto *explain = app.add_subcommand("explain", "Write explanation maps and overlays per episode");
    add_common(*explain, explain_flags);

    auto *evaluate = app.add_subcommand("evaluate", "Score box localization against truth boxes");
    add_common(*evaluate, evaluate_flags);

    auto *sanity = app.add_subcommand("sanity", "Feature-randomization sanity sweep");
    add_common(*sanity, sanity_flags);
    std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 1.0};
    sanity->add_option("--fractions", fractions, "Comma-separated randomization fractions")
        ->delimiter(',')
        ->capture_default_str();

    std::string synth_out = "synthetic";
    std::size_t synth_count = 10;
    std::uint64_t synth_seed = 0;
    std::string synth_metric = "euclidean";
    bool synth_images = false;
    auto *synth = app.add_subcommand("synth", "Write a planted-blob synthetic manifest");
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
    synth->add_option("--episodes", synth_count, "Number of episodes")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
    synth->add_option("--metric", synth_metric, "Metric recorded in the manifest")
        ->check(CLI::IsMember({"euclidean", "cosine"}))
        ->capture_default_str();
    synth->add_flag("--images", synth_images, "Also write placeholder query images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : sfam::kExitUsage;
    }

    try {
        if (explain->parsed()) return sfam::cmd_explain(to_config(explain_flags));
        if (evaluate->parsed()) return sfam::cmd_evaluate(to_config(evaluate_flags));
        if (sanity->parsed()) return sfam::cmd_sanity(to_config(sanity_flags), fractions);
        if (synth->parsed()) {
            const auto path = sfam::synthetic::write_planted_manifest(synth_out, synth_count, synth_seed,
                                                                      sfam::parse_metric(synth_metric), synth_images);
            std::cout << path.string() << '\n';
            return 0;
        }
    } catch (const std::exception &ex) {
        std::cerr << "usage error: " << ex.what() << '\n';
        return sfam::kExitUsage;
    }
    return sfam::kExitUsage;
}
