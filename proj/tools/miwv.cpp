#include <iostream>

#include "CLI11.hpp"
#include "miwv/error.hpp"
#include "miwv/pipeline.hpp"

namespace {

using Command = nlohmann::ordered_json (*)(const miwv::PipelineConfig&, const miwv::Logger&);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Select instruction-tuning subsets by in-context helpfulness"};
    app.set_version_flag("--version", std::string(MIWV_VERSION));
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::vector<double> ratios;
    std::string strategy;
    std::uint64_t seed = 0;
    bool quiet = false;
    bool source_order = false;

    struct Sub {
        const char* name;
        const char* help;
        Command fn;
        bool selection;
    };
    const Sub subs[] = {
        {"embed", "Embed every sample's rendered instruction", miwv::cmd_embed, false},
        {"retrieve", "Find each sample's most similar other sample", miwv::cmd_retrieve, false},
        {"score", "Compute conditioned and unconditioned response losses", miwv::cmd_score, false},
        {"select", "Rank scored samples and export subsets", miwv::cmd_select, true},
        {"run", "Run embed, retrieve, score and select in order", miwv::cmd_run, true},
    };

    std::vector<std::pair<CLI::App*, const Sub*>> commands;
    for (const auto& s : subs) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        cmd->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required();
        cmd->add_option("-o,--output-dir", output_dir, "Artifact directory");
        cmd->add_flag("-q,--quiet", quiet, "Suppress progress logs");
        if (s.selection) {
            cmd->add_option("--ratios", ratios, "Subset fractions, e.g. 0.01 0.05")->delimiter(',');
            cmd->add_option("--strategy", strategy,
                            "miwv-desc, miwv-asc, prompt-loss-desc or random");
            cmd->add_option("--seed", seed, "Seed for the random strategy");
            cmd->add_flag("--source-order", source_order, "Export subsets in dataset order");
        }
        commands.emplace_back(cmd, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        auto config = miwv::load_config(config_path);
        miwv::ConfigOverrides overrides;
        if (!output_dir.empty()) overrides.output_dir = output_dir;
        if (!ratios.empty()) overrides.ratios = ratios;
        if (!strategy.empty()) overrides.strategy = strategy;
        for (const auto& [cmd, sub] : commands) {
            if (*cmd && sub->selection && cmd->count("--seed")) overrides.seed = seed;
        }
        overrides.quiet = quiet;
        overrides.source_order = source_order;
        miwv::apply_overrides(config, overrides);

        const miwv::Logger log(config.quiet);
        for (const auto& [cmd, sub] : commands) {
            if (*cmd) {
                std::cout << sub->fn(config, log).dump(2) << '\n';
                return 0;
            }
        }
    } catch (const miwv::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return miwv::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
