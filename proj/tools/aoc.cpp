// Command-line driver: one subcommand per pipeline stage.
//
//   aoc corpus-gen    --config cfg.json [--seed N] [--out DIR] [--overwrite]
//   aoc backend-train ...
//   aoc fit-tpv       ...
//   aoc eval          ...
//   aoc ablate        ...
//
// Log verbosity comes from AOC_LOG_LEVEL (trace, debug, info, warn, error, off).
// Exit codes: 0 success, 1 invariant audit failure, 2 usage or config error.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "aoc/pipeline.hpp"

namespace {

void configure_logging()
{
    spdlog::set_pattern("[%l] %v");
    const char* level = std::getenv("AOC_LOG_LEVEL");
    if (!level) return;
    const auto parsed = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only accept a real match
    if (parsed == spdlog::level::off && std::string_view(level) != "off") {
        spdlog::warn("AOC_LOG_LEVEL='{}' not recognised; keeping info", level);
        return;
    }
    spdlog::set_level(parsed);
}

}  // namespace

int main(int argc, char** argv)
{
    configure_logging();

    CLI::App app{"Adaptive overclocking lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool overwrite = false;

    const char* names[] = {"corpus-gen", "backend-train", "fit-tpv", "eval", "ablate"};
    const char* help[] = {"generate the corpus and its fit/eval split", "train the tiny transformer backend",
                          "collect unsteered trajectories on the fit set and fit the progress vector",
                          "evaluate the main method roster", "evaluate the ablation roster"};
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts, out_opts;
    for (std::size_t i = 0; i < std::size(names); ++i) {
        auto* sub = app.add_subcommand(names[i], help[i]);
        sub->add_option("--config", config_path, "experiment config (JSON); built-in defaults if omitted");
        seed_opts.push_back(sub->add_option("--seed", seed, "global seed"));
        out_opts.push_back(sub->add_option("--out", out_dir, "output directory"));
        sub->add_flag("--overwrite", overwrite, "replace existing outputs");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return aoc::kExitUsage;
    }

    try {
        aoc::ExperimentConfig config;
        if (!config_path.empty()) {
            config = aoc::load_config(config_path);
        } else {
            config.resolve();
            config.validate();
        }
        aoc::ConfigOverrides overrides;
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            if (seed_opts[i]->count()) overrides.seed = seed;
            if (out_opts[i]->count()) overrides.output_dir = out_dir;
        }
        aoc::apply_overrides(config, overrides);

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "corpus-gen") {
            aoc::cmd_corpus_gen(config, overwrite);
        } else if (cmd == "backend-train") {
            aoc::cmd_backend_train(config, overwrite);
        } else if (cmd == "fit-tpv") {
            aoc::cmd_fit_tpv(config, overwrite);
        } else if (cmd == "eval") {
            std::cout << aoc::metrics_to_csv(aoc::cmd_eval(config, overwrite).table);
        } else {
            std::cout << aoc::metrics_to_csv(aoc::cmd_ablate(config, overwrite).table);
        }
        return aoc::kExitOk;
    } catch (...) {
        return aoc::exit_code_for(std::current_exception());
    }
}
