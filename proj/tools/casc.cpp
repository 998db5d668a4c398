// casc: consensus-aware self-corrective learning toolkit CLI.
//
// Subcommands: synth (synthetic dataset), inject (label-noise generation),
// train (supervised or casc mode), eval (metrics and comparisons).

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "casc/commands.hpp"
#include "casc/config.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string seed;
    std::string mode;
    std::string compare_path;
    bool force = false;
};

casc::Config resolve_config(const CommonArgs& args) {
    casc::Config config;
    if (!args.config_path.empty()) config = casc::Config::from_file(args.config_path);
    if (!args.seed.empty()) config.set("seed", args.seed);
    if (!args.mode.empty()) config.set("mode", args.mode);
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"consensus-aware self-corrective cell segmentation toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    const auto add_common = [&args](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "key=value configuration file");
        sub->add_option("--seed", args.seed, "top-level experiment seed");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth);
    synth->add_flag("--force", args.force, "overwrite a non-empty output directory");

    CLI::App* inject = app.add_subcommand("inject", "apply FP/FN label noise to a dataset");
    add_common(inject);

    CLI::App* train = app.add_subcommand("train", "train a segmentation model");
    add_common(train);
    train->add_option("--mode", args.mode, "training mode: supervised or casc")
        ->check(CLI::IsMember({"supervised", "casc"}));

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--compare", args.compare_path,
                     "metrics.csv of another run for a Wilcoxon comparison");

    CLI11_PARSE(app, argc, argv);

    try {
        const casc::Config config = resolve_config(args);
        if (synth->parsed()) casc::cmd::synth(config, args.force);
        else if (inject->parsed()) casc::cmd::inject(config);
        else if (train->parsed()) casc::cmd::train(config);
        else if (eval->parsed()) casc::cmd::eval(config, args.compare_path);
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 0;
}
