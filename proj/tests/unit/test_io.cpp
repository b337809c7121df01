#include <cmath>
#include <limits>

#include "doctest.h"
#include "eotlab/config.hpp"
#include "eotlab/errors.hpp"
#include "eotlab/io.hpp"
#include "helpers.hpp"

using namespace eotlab;

TEST_CASE("shortest round-trip doubles") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        CHECK(std::stod(io::format_double(v)) == v);
    }
    CHECK(io::format_double(0.5) == "0.5");
}

TEST_CASE("grid measure files") {
    const auto dir = testing::scratch_dir("grid_io");
    const GridSpec s = GridSpec::interval(2, 5, -1.0, 1.5);
    const GridMeasure m = sample_density(s, [](const Vec& x) { return 1.0 + x[0] * x[1] / 3.0; }, 0.4);
    io::write_grid_measure(m, dir / "m.csv");
    CHECK(std::filesystem::exists(io::sidecar_path(dir / "m.csv")));
    const GridMeasure back = io::read_grid_measure(dir / "m.csv");
    CHECK(back.spec() == m.spec());
    CHECK(back.weights() == m.weights());
    CHECK(back.alpha() == m.alpha());

    io::write_text(dir / "bad.csv", "index_0,weight\n0,1\n1,x\n");
    io::write_text(io::sidecar_path(dir / "bad.csv"), io::read_text(io::sidecar_path(dir / "m.csv")));
    CHECK_THROWS((void)io::read_grid_measure(dir / "bad.csv"));
    CHECK_THROWS((void)io::read_grid_measure(dir / "missing.csv"));
}

TEST_CASE("plan files") {
    const auto dir = testing::scratch_dir("plan_io");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PlanMatrix P(5, 7);
    for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = u(rng);
    P(0, 0) = std::numeric_limits<double>::denorm_min();
    io::PlanHeader h;
    h.n_source = 5;
    h.n_target = 7;
    h.epsilon = 0.05;
    io::write_plan(P, h, dir / "plan.bin");
    io::PlanHeader back_h;
    const PlanMatrix back = io::read_plan(dir / "plan.bin", &back_h);
    CHECK(back == P);
    CHECK(back_h.n_source == 5);
    CHECK(back_h.n_target == 7);
    REQUIRE(back_h.epsilon.has_value());
    CHECK(*back_h.epsilon == 0.05);
    CHECK(std::filesystem::file_size(dir / "plan.bin") == 35 * sizeof(double));
}

TEST_CASE("scaling json") {
    Mat A(2, 2);
    A << 1.1, 0.2, 0.3, 0.9;
    Vec b(2);
    b << 0.1, -0.7;
    const Scaling s{A, b, 1.3, 0.7};
    const Scaling back = io::scaling_from_json(io::scaling_to_json(s));
    CHECK(back.A == A);
    CHECK(back.b == b);
    CHECK(back.gamma == 1.3);
    CHECK(back.kappa == 0.7);
}

TEST_CASE("csv writer and hashing") {
    io::CsvWriter w({"a", "b", "c"});
    w.cell(1.5).cell(true).cell(std::string("x"));
    w.end_row();
    w.cell(static_cast<long long>(3)).blank().cell(false);
    w.end_row();
    CHECK(w.str() == "a,b,c\n1.5,1,x\n3,,0\n");
    CHECK(io::sha256_bytes("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config parsing") {
    const std::string base =
        R"({"source": {"grid": {"dim": 1, "n": 16}, "density": {"kind": "uniform"}, "mass": 1}, "epsilon": 0.2)";
    SUBCASE("defaults and overrides") {
        const ExperimentConfig c = parse_config(base + R"(, "R0": 0.4, "solver": {"epsilon": 0.9, "tol": 1e-7}})", ".");
        CHECK(c.epsilon() == 0.2);
        CHECK(c.solver.tol == 1e-7);
        CHECK(c.radius() == 0.4);
        CHECK(c.plan == PlanKind::sinkhorn);
        CHECK(c.target == c.source);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS((void)parse_config("{", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config("{}", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base + R"(, "bogus": 1})", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base + R"(, "plan": "magic"})", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base + R"(, "theta": 1.0})", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base + R"(, "solver": {"max_iter": 0}})", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base + R"(, "R0": -1})", "."), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base + R"(, "eps_ladder": [0.1, -0.2]})", "."), ConfigError);
    }
    SUBCASE("marginals") {
        const ExperimentConfig c = parse_config(base + "}", ".");
        const GridMeasure m = make_marginal(c.source, ".", 0, 0);
        CHECK(m.total_mass() == doctest::Approx(1.0).epsilon(1e-15));
        io::json bad = c.source;
        bad["density"]["kind"] = "triangle";
        CHECK_THROWS_AS((void)make_marginal(bad, ".", 0, 0), ConfigError);
        bad = c.source;
        bad["grid"]["lo"] = 0.5;
        CHECK_THROWS_AS((void)make_marginal(bad, ".", 0, 0), ConfigError);

        io::json noisy = c.source;
        noisy["density"]["noise"] = 0.3;
        const GridMeasure a = make_marginal(noisy, ".", 5, 1);
        const GridMeasure b = make_marginal(noisy, ".", 5, 1);
        const GridMeasure other = make_marginal(noisy, ".", 6, 1);
        CHECK(a.weights() == b.weights());
        CHECK(a.weights() != other.weights());
    }
    SUBCASE("quadratic image density integrates to the pushed mass") {
        const io::json spec = io::json::parse(R"({"kind": "quadratic_image", "q": 0.1})");
        const DensityFn f = analytic_density(spec, 1);
        // T(x) = x + q(1 - x^2) maps [-1,1] onto itself, so the image keeps mass 2.
        const GridMeasure m = sample_density(GridSpec::interval(1, 4001, -1.0, 1.0), f, 0.5);
        CHECK(m.total_mass() == doctest::Approx(2.0).epsilon(1e-3));
        // T(-q + O(q^3)) = 0 and T' = 1 - 2qx there, so the density at 0 is about 1 / (1 + 2q^2).
        CHECK(f(Vec::Zero(1)) == doctest::Approx(1.0 / (1.0 + 2.0 * 0.01)).epsilon(1e-3));
    }
}
