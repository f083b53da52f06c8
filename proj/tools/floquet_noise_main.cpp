#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "floqnoise/cli.hpp"
#include "floqnoise/version.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    int workers_override = 0;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out_override, "override the config's output_path");
    sub->add_option("--workers", args.workers_override, "override the config's n_workers")
        ->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(floqnoise::kToolName) +
                 " - Floquet/Lyapunov exponents of periodically driven oscillators with noise"};
    app.set_version_flag("--version", std::string(floqnoise::kToolVersion));
    app.require_subcommand(1);

    CommonArgs args;
    const char* commands[] = {"chart", "lyap", "theorem1", "lattice", "anderson", "oracle"};
    const char* descriptions[] = {
        "noiseless stability chart over a (k, P) grid",
        "Lyapunov exponents of random transfer-matrix products",
        "noise-strengthens-instability check across seeds",
        "cutoff lattice top exponents (inhomogeneous noise)",
        "1-D Anderson localization lengths via the duality map",
        "constant-coefficient propagator self-check",
    };
    for (int i = 0; i < 6; ++i) add_common(app.add_subcommand(commands[i], descriptions[i]), args);

    CLI11_PARSE(app, argc, argv);

    const std::string requested = app.get_subcommands().front()->get_name();
    try {
        floqnoise::cli::RunConfig cfg = floqnoise::cli::parse_config_file(args.config_path);
        if (std::string(to_string(cfg.command)) != requested) {
            std::cerr << "config command \"" << to_string(cfg.command)
                      << "\" does not match invoked subcommand \"" << requested << "\"\n";
            return 2;
        }
        if (!args.out_override.empty()) cfg.output_path = args.out_override;
        if (args.workers_override > 0) cfg.n_workers = args.workers_override;
        return floqnoise::cli::run(cfg, std::cout, std::cerr);
    } catch (const floqnoise::cli::ConfigError& e) {
        for (const auto& msg : e.errors()) std::cerr << "config error: " << msg << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
