#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "doctest.h"
#include "eotlab/io.hpp"
#include "eotlab/runner.hpp"
#include "helpers.hpp"

using namespace eotlab;
namespace fs = std::filesystem;
using io::json;

namespace {

const char* kUniform = R"({"grid": {"dim": 1, "n": 48}, "density": {"kind": "uniform"}, "mass": 1})";

fs::path write_config(const fs::path& dir, const std::string& body) {
    const fs::path p = dir / "run.json";
    io::write_text(p, body);
    return p;
}

int run(const std::string& command, const std::string& experiment, const fs::path& config, const fs::path& out,
        std::string* log_text = nullptr) {
    cli::Request req;
    req.command = command;
    req.experiment = experiment;
    req.config = config;
    req.out = out;
    std::ostringstream log;
    const int code = cli::run(req, log);
    if (log_text) *log_text = log.str();
    return code;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

json without_clock(json manifest) {
    manifest.erase("started_at");
    manifest.erase("finished_at");
    return manifest;
}

}  // namespace

TEST_CASE("solve writes plan, summary and manifest") {
    const auto dir = testing::scratch_dir("cli_solve");
    const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform + R"(, "epsilon": 0.2, "seed": 3})");
    REQUIRE(run("solve", "", cfg, dir / "out") == cli::kExitOk);

    const json summary = json::parse(io::read_text(dir / "out/summary.json"));
    for (const char* key : {"plan", "epsilon", "cost", "entropy", "entropic_cost", "iterations", "marg_err", "converged",
                            "mass", "gibbs_max_rel_error", "max_row_err", "max_col_err"}) {
        CHECK_MESSAGE(summary.contains(key), key);
    }
    CHECK(summary["converged"] == true);

    io::PlanHeader h;
    const PlanMatrix P = io::read_plan(dir / "out/plan.bin", &h);
    CHECK(h.n_source == 48);
    CHECK(P.sum() == doctest::Approx(1.0).epsilon(1e-9));

    const json m = json::parse(io::read_text(dir / "out/manifest.json"));
    CHECK(m["command"] == "solve");
    CHECK(m["seed"] == 3);
    CHECK(m["status"]["exit_code"] == 0);
    CHECK(m["config_snapshot"] == "config.snapshot.json");
    CHECK(io::read_text(dir / "out/config.snapshot.json") == io::read_text(cfg));
    for (const auto& f : m["outputs"]) {
        CHECK(io::sha256_file(dir / "out" / f["file"].get<std::string>()) == f["sha256"]);
    }
}

TEST_CASE("exact plan of identical single atoms costs nothing") {
    const auto dir = testing::scratch_dir("cli_atom");
    const auto cfg = write_config(dir, R"({"source": {"grid": {"dim": 1, "n": 3}, "density": {"kind": "uniform", "support": 0.1}}, "plan": "exact"})");
    REQUIRE(run("solve", "", cfg, dir / "out") == cli::kExitOk);
    const json summary = json::parse(io::read_text(dir / "out/summary.json"));
    CHECK(summary["cost"] == 0.0);
    CHECK(summary["certified"] == true);
}

TEST_CASE("exit codes") {
    const auto dir = testing::scratch_dir("cli_codes");
    std::string log;
    SUBCASE("unknown experiment") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform + "}");
        CHECK(run("experiment", "nonsense", cfg, dir / "o", &log) == cli::kExitConfig);
        CHECK(log.find("expansion") != std::string::npos);
    }
    SUBCASE("malformed and unknown keys") {
        CHECK(run("solve", "", write_config(dir, "{"), dir / "o") == cli::kExitConfig);
        CHECK(run("solve", "", write_config(dir, R"({"source": 1, "extra": 2})"), dir / "o") == cli::kExitConfig);
        CHECK(run("solve", "", dir / "missing.json", dir / "o") == cli::kExitConfig);
    }
    SUBCASE("mass mismatch names the gap") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform +
                                               R"(, "target": {"grid": {"dim": 1, "n": 48}, "density": {"kind": "uniform"}, "mass": 1.5}})");
        CHECK(run("solve", "", cfg, dir / "o", &log) == cli::kExitConfig);
        CHECK(log.find("relative gap") != std::string::npos);
    }
    SUBCASE("non-convergence") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform +
                                               R"(, "solver": {"epsilon": 0.02, "tol": 1e-14, "max_iter": 2}})");
        CHECK(run("solve", "", cfg, dir / "o") == cli::kExitNonConvergence);
        const json m = json::parse(io::read_text(dir / "o/manifest.json"));
        CHECK(m["status"]["name"] == "not_converged");
    }
    SUBCASE("smallness violation is a domain error") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform +
                                               R"(, "epsilon": 0.3, "R0": 0.5})");
        CHECK(run("experiment", "onestep", cfg, dir / "o") == cli::kExitDomain);
    }
    SUBCASE("unwritable output directory") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform + "}");
        io::write_text(dir / "plain_file", "x");
        CHECK(run("solve", "", cfg, dir / "plain_file" / "out") == cli::kExitDomain);
    }
    SUBCASE("missing output directory is created") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform + R"(, "epsilon": 0.3})");
        CHECK(run("solve", "", cfg, dir / "a" / "b" / "c") == cli::kExitOk);
        CHECK(fs::is_directory(dir / "a" / "b" / "c"));
    }
}

TEST_CASE("experiment report schemas") {
    const auto dir = testing::scratch_dir("cli_schema");
    SUBCASE("expansion") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform +
                                               R"(, "eps_ladder": [0.4, 0.3, 0.2], "solver": {"tol": 1e-10}})");
        REQUIRE(run("experiment", "expansion", cfg, dir / "o") == cli::kExitOk);
        const auto lines = lines_of(dir / "o/report.csv");
        REQUIRE(lines.size() == 5);
        CHECK(lines[0] == "kind,epsilon,ot_eps,ot,gap_over_eps2,log_inv_eps2,remainder,resolved,converged");
        CHECK(lines[4].rfind("regression,", 0) == 0);
        CHECK(json::parse(io::read_text(dir / "o/trace.json"))["rows"].size() == 3);
    }
    SUBCASE("campanato on a diagonal plan") {
        const auto cfg = write_config(dir, R"({"source": {"grid": {"dim": 1, "n": 201}, "density": {"kind": "uniform"}},
                                               "plan": "diagonal", "epsilon": 0.02, "R0": 1.0})");
        REQUIRE(run("experiment", "campanato", cfg, dir / "o") == cli::kExitOk);
        const json t = json::parse(io::read_text(dir / "o/trace.json"));
        CHECK(t["stop_reason"] == "reached_epsilon_scale");
        REQUIRE(t["levels"].size() == 4);
        for (const auto& L : t["levels"]) CHECK(L["E"] == 0.0);
        CHECK(lines_of(dir / "o/report.csv")[0] == "k,r,E,D,affine_defect,holder_lambda,holder_mu,gamma,kappa,det_A,contracted");
    }
    SUBCASE("quasimin and softlemma") {
        const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform +
                                               R"(, "epsilon": 0.2, "R": 0.3, "radii": [0.3, 0.5], "rho_ladder": [0.2, 0.4]})");
        REQUIRE(run("experiment", "quasimin", cfg, dir / "q") == cli::kExitOk);
        CHECK(lines_of(dir / "q/defects.csv").size() == 3);
        CHECK(lines_of(dir / "q/report.csv").size() == 3);
        REQUIRE(run("experiment", "softlemma", cfg, dir / "s") == cli::kExitOk);
        CHECK(lines_of(dir / "s/report.csv")[0] == "rho,mass,bound,fitted_constant,lower_ok,upper_ok");
    }
}

TEST_CASE("reruns are bitwise identical") {
    const auto dir = testing::scratch_dir("cli_determinism");
    const auto cfg = write_config(dir, std::string(R"({"source": )") + kUniform +
                                           R"(, "target": {"grid": {"dim": 1, "n": 48}, "density": {"kind": "uniform", "noise": 0.2}, "mass": 1},
                                               "eps_ladder": [0.3, 0.2], "R": 0.1, "seed": 11})");
    for (const char* exp : {"longtraj", "quasimin"}) {
        REQUIRE(run("experiment", exp, cfg, dir / "a") == cli::kExitOk);
        REQUIRE(run("experiment", exp, cfg, dir / "b") == cli::kExitOk);
        for (const auto& entry : fs::directory_iterator(dir / "a")) {
            const auto name = entry.path().filename();
            if (name == "manifest.json") continue;
            CHECK_MESSAGE(io::read_text(entry.path()) == io::read_text(dir / "b" / name), name.string());
        }
        const json ma = json::parse(io::read_text(dir / "a/manifest.json"));
        const json mb = json::parse(io::read_text(dir / "b/manifest.json"));
        CHECK(without_clock(ma) == without_clock(mb));
    }
}

#ifdef EOTLAB_CLI_PATH
TEST_CASE("command-line parsing") {
    const std::string exe = EOTLAB_CLI_PATH;
    CHECK(std::system((exe + " --version > /dev/null").c_str()) == 0);
    // Missing --config is a usage error.
    CHECK(WEXITSTATUS(std::system((exe + " solve > /dev/null 2>&1").c_str())) == cli::kExitConfig);
    CHECK(WEXITSTATUS(std::system((exe + " frobnicate > /dev/null 2>&1").c_str())) == cli::kExitConfig);
}
#endif
