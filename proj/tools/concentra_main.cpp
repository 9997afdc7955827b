// Experiment runner: `concentra <scenario> --config cfg.json [--serial] [--out dir]`.
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "concentra/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"concentra: boundary-concentration laboratory for the weighted almost-critical problem"};
    app.require_subcommand(1);

    const std::vector<std::string> scenarios = {"constants",  "green-check", "projection-check",
                                                "ladder",     "reduce",      "solve",
                                                "theorem-main3", "theorem-main4"};
    struct Args {
        std::string config;
        std::string out = "out";
        bool serial = false;
    };
    std::vector<std::shared_ptr<Args>> args;
    for (const auto& name : scenarios) {
        auto a = std::make_shared<Args>();
        auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
        sub->add_option("--config", a->config, "experiment config (JSON)")->required();
        sub->add_option("--out", a->out, "output directory");
        sub->add_flag("--serial", a->serial, "deterministic serial mode");
        args.push_back(a);
    }

    CLI11_PARSE(app, argc, argv);

    const auto* sub = app.get_subcommands().front();
    const std::string scenario = sub->get_name();
    const auto& a = *args[std::find(scenarios.begin(), scenarios.end(), scenario) -
                          scenarios.begin()];
    try {
        auto cfg = concentra::cli::ExperimentConfig::parse_file(a.config);
        if (cfg.scenario != scenario)
            throw std::runtime_error("config error: config names scenario '" + cfg.scenario +
                                     "' but subcommand is '" + scenario + "'");
        const auto man = concentra::cli::run(cfg, a.out, a.serial);
        for (const auto& c : man.checks)
            std::printf("[%s] %s value=%.6g %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                        c.value, c.detail.c_str());
        std::printf("%s: %s (%.1fs) -> %s/manifest.json\n", scenario.c_str(),
                    man.passed ? "all checks passed" : "CHECKS FAILED", man.wall_seconds,
                    a.out.c_str());
        return man.passed ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
