#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sch/runner.hpp"
#include "sch/version.hpp"

// Command-line entry point.
//   sch run <config> [--out DIR]   execute a study, write artifacts
//   sch validate <config>          check a config without computing
//   sch invariants                 run the property suite of all modules
//   sch version                    print the tool version
// Worker count comes from SCH_THREADS (default: available parallelism).

int main(int argc, char** argv) {
    CLI::App app{"spectral solver and Monte Carlo convergence harness for the stochastic "
                 "Cahn-Hilliard equation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;

    CLI::App* run = app.add_subcommand("run", "execute a study from a config file");
    run->add_option("config", config_path, "JSON config file")->required();
    run->add_option("--out", out_override, "override the output directory");

    CLI::App* validate = app.add_subcommand("validate", "validate a config without computing");
    validate->add_option("config", config_path, "JSON config file or report.json")->required();

    CLI::App* invariants = app.add_subcommand("invariants", "run the module property suites");
    CLI::App* version = app.add_subcommand("version", "print the tool version");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return sch::cmd_run(config_path, out_override, std::cout);
    if (validate->parsed()) return sch::cmd_validate(config_path, std::cout);
    if (invariants->parsed()) return sch::cmd_invariants(std::cout);
    if (version->parsed()) {
        std::cout << "sch " << sch::version_string << "\n";
        return 0;
    }
    return 1;
}
