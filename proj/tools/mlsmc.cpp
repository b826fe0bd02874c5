#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mlsmc/cli.hpp"

int main(int argc, char** argv) {
    using namespace mlsmc;

    CLI::App app{"Morris-Lecar particle filtering toolkit", "mlsmc"};
    app.set_version_flag("--version", cli::kVersion);

    std::string subcommand;
    std::string config_path;
    cli::Overrides overrides;
    app.add_option("subcommand", subcommand, "simulate | filter | pmcmc | pcrb | bench")->required();
    app.add_option("--config", config_path, "configuration file (defaults apply when omitted)");
    app.add_option("--out", overrides.out, "output directory (overrides $MLSMC_OUT_DIR and [output] dir)");
    app.add_option("--seed", overrides.seed, "master seed");
    app.add_option("--workers", overrides.workers, "worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return cli::kValidationError;
    }

    const auto& known = cli::subcommands();
    if (std::find(known.begin(), known.end(), subcommand) == known.end()) {
        std::cerr << "error: unknown subcommand '" << subcommand << "'\n\n" << app.help();
        return cli::kValidationError;
    }

    RunConfig cfg;
    try {
        cfg = config_path.empty() ? parse_config_string("", "<defaults>") : parse_config(config_path);
        cli::apply_overrides(cfg, overrides);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kValidationError;
    }
    return cli::dispatch(subcommand, cfg, std::cout, std::cerr);
}
