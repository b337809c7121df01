#include <cmath>

#include "doctest.h"
#include "eotlab/errors.hpp"
#include "eotlab/regularity.hpp"
#include "helpers.hpp"

using namespace eotlab;

namespace {

// Plan supported on the graph of x -> x + b0 + S0 x over the atoms of lam.
Coupling graph_plan(const GridMeasure& lam, const Vec& b0, const Mat& S0) {
    const AtomicMeasure src = lam.atoms();
    AtomicMeasure tgt = src;
    for (Eigen::Index i = 0; i < src.points.cols(); ++i) tgt.points.col(i) += b0 + S0 * src.points.col(i);
    Coupling pi{src, tgt, PlanMatrix::Zero(src.size(), src.size())};
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) pi.mass(i, i) = src.weights[i];
    return pi;
}

// Weighted least squares through a Householder QR of the stacked design.
Vec qr_fit(const Coupling& pi, double R) {
    const int d = pi.dim();
    const auto basis = tracefree_basis(d);
    const int p = d + static_cast<int>(basis.size());
    std::vector<Eigen::Index> rows, cols;
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
            if (pi.mass(i, j) > 0.0 && Region::hash(R).contains(pi.source.points.col(i), pi.target.points.col(j))) {
                rows.push_back(i);
                cols.push_back(j);
            }
        }
    }
    Mat G(d * static_cast<Eigen::Index>(rows.size()), p);
    Vec z(G.rows());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double sw = std::sqrt(pi.mass(rows[k], cols[k]));
        const Vec x = pi.source.points.col(rows[k]);
        const auto block = static_cast<Eigen::Index>(k) * d;
        G.block(block, 0, d, d) = sw * Mat::Identity(d, d);
        for (std::size_t q = 0; q < basis.size(); ++q) G.block(block, d + q, d, 1) = sw * basis[q] * x;
        z.segment(block, d) = sw * (pi.target.points.col(cols[k]) - x);
    }
    return G.householderQr().solve(z);
}

GridMeasure shifted_uniform(std::size_t n, double shift) { return testing::uniform_grid(n, -1.0 + shift, 1.0 + shift); }

}  // namespace

TEST_CASE("trace-free basis") {
    CHECK(tracefree_basis(1).empty());
    const auto b2 = tracefree_basis(2);
    CHECK(b2.size() == 2);
    for (const Mat& S : b2) {
        CHECK(S.trace() == 0.0);
        CHECK(S == S.transpose());
    }
}

TEST_CASE("harmonic fit") {
    const GridMeasure lam = testing::uniform_grid(21, -1.0, 1.0, 2);
    SUBCASE("displacement in the model class is recovered") {
        Vec b0(2);
        b0 << 0.03, -0.02;
        Mat S0(2, 2);
        S0 << 0.05, 0.02, 0.02, -0.05;
        const HarmonicFit fit = harmonic_fit(graph_plan(lam, b0, S0), 0.6);
        CHECK((fit.grad0 - b0).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((fit.hess0 - S0).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(fit.residual <= 1e-10);
        CHECK(std::abs(symmetric_expm(-0.5 * fit.hess0).determinant() - 1.0) <= 1e-8);
    }
    SUBCASE("diagonal plan") {
        const HarmonicFit fit = harmonic_fit(Coupling::diagonal(lam.atoms()), 0.6);
        CHECK(fit.coeffs.isZero(0.0));
        CHECK(fit.residual == 0.0);
        CHECK(fit.zero_residual == 0.0);
    }
    SUBCASE("noisy displacement matches an independent QR solve") {
        std::mt19937_64 rng(8);
        std::normal_distribution<double> noise(0.0, 0.01);
        Vec b0(2);
        b0 << 0.02, 0.01;
        Mat S0(2, 2);
        S0 << -0.03, 0.04, 0.04, 0.03;
        Coupling pi = graph_plan(lam, b0, S0);
        for (Eigen::Index i = 0; i < pi.target.points.cols(); ++i) {
            pi.target.points(0, i) += noise(rng);
            pi.target.points(1, i) += noise(rng);
        }
        const HarmonicFit fit = harmonic_fit(pi, 0.7);
        const Vec oracle = qr_fit(pi, 0.7);
        CHECK((fit.coeffs - oracle).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((fit.grad0 - b0).cwiseAbs().maxCoeff() <= 3.0 * 0.01 / std::sqrt(fit.mass / (lam.spec().h * lam.spec().h)));
        CHECK(fit.residual <= fit.zero_residual);
    }
    SUBCASE("one-dimensional fits are translations") {
        const GridMeasure line = testing::uniform_grid(41);
        const HarmonicFit fit = harmonic_fit(graph_plan(line, Vec::Constant(1, 0.04), Mat::Zero(1, 1)), 0.5);
        CHECK(fit.coeffs.size() == 1);
        CHECK(fit.grad0[0] == doctest::Approx(0.04).epsilon(1e-12));
    }
}

TEST_CASE("one step") {
    const GridMeasure lam = testing::uniform_grid(81);
    SUBCASE("diagonal plan of uniform marginals is a fixed point") {
        const OneStepOutcome out = one_step({Coupling::diagonal(lam.atoms()), lam, lam}, 0.5, 0.5, 0.0);
        CHECK(out.scaling_hat.A.isApprox(Mat::Identity(1, 1)));
        CHECK(out.scaling_hat.b.isZero(1e-15));
        CHECK(out.scaling_hat.gamma == doctest::Approx(1.0));
        CHECK(out.E_after == 0.0);
        CHECK(out.next.has_value());
    }
    SUBCASE("constant shift is removed") {
        const GridMeasure mu = shifted_uniform(81, 0.05);
        Coupling pi{lam.atoms(), mu.atoms(), PlanMatrix::Zero(81, 81)};
        for (int i = 0; i < 81; ++i) pi.mass(i, i) = lam.weights()[i];
        const OneStepOutcome out = one_step({pi, lam, mu}, 0.5, 0.5, 0.0);
        CHECK(std::abs(out.fit.grad0[0] - 0.05) <= 1e-3);
        CHECK(std::abs(out.scaling_hat.b[0] - 0.05) <= 1e-3);
        CHECK(out.scaling_hat.A(0, 0) == doctest::Approx(1.0));
        CHECK(out.E_before > 0.0);
        CHECK(out.E_after <= 1e-20);
    }
    SUBCASE("smallness and normalization preconditions") {
        const GridMeasure mu = shifted_uniform(81, 0.2);
        Coupling pi{lam.atoms(), mu.atoms(), PlanMatrix::Zero(81, 81)};
        for (int i = 0; i < 81; ++i) pi.mass(i, i) = lam.weights()[i];
        CHECK_THROWS_AS((void)one_step({pi, lam, mu}, 0.5, 0.5, 0.0), SmallnessError);
        const GridMeasure heavy = lam.scaled(2.0);
        CHECK_THROWS_AS((void)one_step({Coupling::diagonal(heavy.atoms()), heavy, heavy}, 0.5, 0.5, 0.0), DomainError);
        CHECK_THROWS_AS((void)one_step({Coupling::diagonal(lam.atoms()), lam, lam}, 0.5, 1.0, 0.0), DomainError);
    }
}

TEST_CASE("campanato iteration") {
    const GridMeasure lam = testing::uniform_grid(201);
    const TransportState diag{Coupling::diagonal(lam.atoms()), lam, lam};
    SUBCASE("diagonal plan") {
        const CampanatoTrace t = campanato_iterate(diag, 1.0, 0.5, 0.02, 20);
        CHECK(t.stop_reason == StopReason::reached_epsilon_scale);
        // r = 1, 1/2, 1/4, 1/8; the next radius 1/16 is below 5 * 0.02.
        REQUIRE(t.levels.size() == 4);
        for (const auto& L : t.levels) {
            CHECK(L.E == 0.0);
            CHECK(L.composed.A.isApprox(Mat::Identity(1, 1)));
            CHECK(L.composed.gamma == doctest::Approx(1.0));
        }
    }
    SUBCASE("level budget and theta range") {
        CHECK(campanato_iterate(diag, 1.0, 0.5, 0.0, 2).stop_reason == StopReason::max_levels);
        CHECK_THROWS_AS((void)campanato_iterate(diag, 1.0, 1.0, 0.02, 20), DomainError);
    }
    SUBCASE("recorded compositions fold the per-level steps") {
        const GridMeasure heavy = lam.scaled(1.3);
        GridMeasure mu = sample_density(lam.spec(), [](const Vec& x) { return 1.0 + 0.02 * x[0] * x[0]; }, 0.5);
        mu = mu.scaled(heavy.total_mass() / mu.total_mass());
        SinkhornOptions o;
        o.epsilon = 0.03;
        const SinkhornResult res = sinkhorn(heavy, mu, o);
        const CampanatoTrace t = campanato_iterate({res.plan, heavy, mu}, 0.8, 0.5, 0.03, 20);
        REQUIRE(t.levels.size() >= 2);
        for (std::size_t k = 1; k < t.levels.size(); ++k) {
            CHECK(t.levels[k].r < t.levels[k - 1].r);
            const Scaling f = compose(t.levels[k].step, t.levels[k - 1].composed);
            CHECK(f.A.isApprox(t.levels[k].composed.A, 1e-14));
            CHECK(f.b.isApprox(t.levels[k].composed.b, 1e-14));
        }
        CHECK(t.levels[0].composed.kappa == doctest::Approx(1.0 / 1.3).epsilon(1e-2));
    }
}

TEST_CASE("quasi-minimality defect") {
    const GridMeasure lam = testing::uniform_grid(41);
    const DefectReport diag = quasimin_defect(Coupling::diagonal(lam.atoms()), 0.3, 2.75, 0.1);
    CHECK(diag.lhs == 0.0);
    CHECK(diag.competitor_cost == 0.0);
    CHECK(diag.defect == 0.0);

    // An exact optimal plan restricted to its own marginals is optimal.
    GridMeasure mu = sample_density(lam.spec(), [](const Vec& x) { return 1.0 + 0.4 * x[0]; }, 0.5);
    mu = mu.scaled(lam.total_mass() / mu.total_mass());
    const ExactOTResult ot = exact_ot(lam, mu);
    const DefectReport rep = quasimin_defect(ot.plan, 5.0, 2.75, 0.0);
    CHECK(std::abs(rep.defect) <= 1e-12 * rep.lhs + 1e-15);
    CHECK(rep.ot_certified);
    CHECK_THROWS_AS((void)quasimin_defect(ot.plan, 0.3, 1.0, 0.0), DomainError);
}

TEST_CASE("soft lemma") {
    const GridMeasure lam = testing::uniform_grid(41);
    const auto rows = soft_lemma_check(Coupling::diagonal(lam.atoms()), 1.0, {0.1, 0.5}, 0.01, 0.5);
    for (const auto& r : rows) CHECK(r.mass == 0.0);

    const Coupling prod = Coupling::product(lam.atoms(), lam.atoms());
    const auto far = soft_lemma_check(prod, 2.0, {5.0}, 0.01, 0.5);
    CHECK(far[0].mass == 0.0);
    const auto near = soft_lemma_check(prod, 2.0, {0.5}, 0.01, 0.5);
    CHECK(near[0].mass > 0.0);
    CHECK(near[0].bound == doctest::Approx(0.01 * 2.0 / std::pow(0.5, 3)));
}

TEST_CASE("ladder experiments") {
    const GridMeasure lam = testing::uniform_grid(101);
    SinkhornOptions o;
    SUBCASE("single-entry ladder has no slope") {
        const LongTrajTable t = long_traj_experiment(lam, lam, 0.1, {0.2}, o);
        CHECK(t.rows.size() == 1);
        CHECK_FALSE(t.slope_mass.has_value());
        const ExpansionTable e = expansion_experiment(lam, lam, {0.2}, o);
        CHECK(e.rows.size() == 1);
        CHECK_FALSE(e.slope.has_value());
    }
    SUBCASE("single atom has no entropic gap") {
        const GridSpec s = GridSpec::interval(1, 5, -1.0, 1.0);
        const GridMeasure dot(s, {0, 0, 1, 0, 0}, 0.5);
        const ExpansionTable e = expansion_experiment(dot, dot, {0.3, 0.2}, o);
        for (const auto& r : e.rows) {
            CHECK(r.ot == 0.0);
            CHECK(std::abs(r.ot_eps) <= 1e-15);
        }
    }
    SUBCASE("near-deterministic regime has no long trajectories") {
        const LongTrajTable t = long_traj_experiment(lam, lam, 0.1, {0.03, 0.02}, o);
        for (const auto& r : t.rows) CHECK(r.mass_ratio <= 1e-30);
    }
}
