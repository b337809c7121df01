// eotlab: entropic optimal transport experiments from a JSON config.
//
//   eotlab solve --config run.json [--out dir] [--seed n]
//   eotlab experiment <name> --config run.json [--out dir] [--seed n]
//
// Exit codes: 0 ok, 2 config error, 3 solver did not converge, 4 domain or
// output error. EOTLAB_THREADS caps the worker count of ladder experiments.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "eotlab/runner.hpp"

namespace {

void add_common(CLI::App* cmd, eotlab::cli::Request& req, std::string& out, std::uint64_t& seed) {
    cmd->add_option("--config", req.config, "Experiment config (JSON)")->required();
    cmd->add_option("--out", out, "Output directory (created if missing)");
    cmd->add_option("--seed", seed, "Seed overriding the config value");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entropic optimal transport regularity experiments"};
    app.set_version_flag("--version", eotlab::cli::kVersion);
    app.require_subcommand(1);

    eotlab::cli::Request req;
    std::string out;
    std::uint64_t seed = 0;

    CLI::App* solve = app.add_subcommand("solve", "Solve the transport problem and write plan.bin and summary.json");
    add_common(solve, req, out, seed);

    CLI::App* experiment = app.add_subcommand("experiment", "Run a named experiment");
    experiment->add_option("name", req.experiment, "One of: expansion, longtraj, quasimin, onestep, campanato, softlemma")
        ->required();
    add_common(experiment, req, out, seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : eotlab::cli::kExitConfig;
    }

    req.command = solve->parsed() ? "solve" : "experiment";
    if (!out.empty()) req.out = out;
    if (solve->count("--seed") + experiment->count("--seed") > 0) req.seed = seed;
    return eotlab::cli::run(req, std::cerr);
}
