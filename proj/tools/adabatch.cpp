#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adabatch/cli.hpp"
#include "adabatch/errors.hpp"

int main(int argc, char** argv) {
    namespace abc = adabatch::cli;

    CLI::App app{"Adaptive batch-size training for (adaptive) stochastic gradient methods"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    std::string out = "out";
    std::vector<std::string> grid_specs;
    int parallel = 1;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config,-c", config, "Key-value config file");
        if (needs_config) opt->required();
        sub->add_option("--set,-s", overrides, "Override a config key (key=value), repeatable");
        sub->add_option("--out,-o", out, "Output directory");
    };

    auto* run = app.add_subcommand("run", "Train once and write metrics");
    add_common(run, true);
    auto* sweep = app.add_subcommand("sweep", "Train over a grid of overrides");
    add_common(sweep, true);
    sweep->add_option("--grid,-g", grid_specs, "Grid axis key=v1,v2,... (repeatable)");
    sweep->add_option("--parallel,-j", parallel, "Concurrent cells")->check(CLI::PositiveNumber);
    auto* audit = app.add_subcommand("audit", "Run the diagnostics suite");
    add_common(audit, true);
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
    add_common(gen, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : abc::kExitConfig;
    }

    if (run->parsed()) return abc::cmd_run(config, overrides, out, std::cerr);
    if (audit->parsed()) return abc::cmd_audit(config, overrides, out, std::cerr);
    if (gen->parsed()) return abc::cmd_gen_data(config, overrides, out, std::cerr);
    if (sweep->parsed()) {
        abc::Grid grid;
        try {
            for (const auto& g : grid_specs) grid.push_back(abc::parse_grid_axis(g));
        } catch (const adabatch::Error& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return abc::kExitConfig;
        }
        return abc::cmd_sweep(config, overrides, grid, out, parallel, std::cerr);
    }
    return abc::kExitConfig;
}
