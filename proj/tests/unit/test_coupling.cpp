#include <cmath>
#include <limits>

#include "doctest.h"
#include "eotlab/coupling.hpp"
#include "eotlab/errors.hpp"
#include "helpers.hpp"

using namespace eotlab;

namespace {

Coupling random_coupling(std::mt19937_64& rng, int dim, int n, int m) {
    const AtomicMeasure a = testing::random_atoms(rng, dim, n);
    const AtomicMeasure b = testing::random_atoms(rng, dim, m);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PlanMatrix P(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) P(i, j) = u(rng);
    }
    Coupling pi{a, b, P};
    pi.source.weights = pi.row_sums();
    pi.target.weights = pi.col_sums();
    return pi;
}

Coupling graph_1d(const std::vector<double>& xs, double (*T)(double)) {
    std::vector<double> ys;
    for (double x : xs) ys.push_back(T(x));
    const std::vector<double> w(xs.size(), 1.0 / static_cast<double>(xs.size()));
    Coupling pi{testing::atoms_1d(xs, w), testing::atoms_1d(ys, w), PlanMatrix::Zero(xs.size(), xs.size())};
    for (std::size_t i = 0; i < xs.size(); ++i) pi.mass(i, i) = w[i];
    return pi;
}

}  // namespace

TEST_CASE("marginal checks") {
    std::mt19937_64 rng(7);
    const AtomicMeasure lam = testing::random_atoms(rng, 2, 6, 1.0, false);
    const AtomicMeasure mu = testing::random_atoms(rng, 2, 5, 1.0, false);
    CHECK(check_marginals(Coupling::product(lam, mu), 1e-12).pass);
    CHECK(check_marginals(Coupling::diagonal(lam), 1e-12).pass);

    Coupling bad = Coupling::product(lam, mu);
    bad.mass(2, 3) += 1e-3;
    const MarginalReport rep = check_marginals(bad, 1e-6);
    CHECK_FALSE(rep.pass);
    CHECK(rep.max_row_err == doctest::Approx(1e-3 / lam.weights[2]).epsilon(1e-9));
    CHECK(rep.max_col_err == doctest::Approx(1e-3 / mu.weights[3]).epsilon(1e-9));

    Coupling negative = Coupling::diagonal(lam);
    negative.mass(0, 1) = -1e-20;
    CHECK_FALSE(check_marginals(negative, 1e-6).pass);
}

TEST_CASE("regions and restriction") {
    std::mt19937_64 rng(11);
    const Coupling pi = random_coupling(rng, 2, 7, 6);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(restrict(pi, Region::hash(inf)).mass == pi.mass);
    CHECK(restrict(pi, Region::long_trajectories(1.0, 1e6)).mass.isZero(0.0));

    for (double R : {0.1, 0.4, 0.9}) {
        const double in = region_moments(pi, Region::hash(R)).mass;
        const double out = region_moments(pi, Region::complement(Region::hash(R))).mass;
        CHECK(in + out == doctest::Approx(pi.total_mass()).epsilon(1e-15));
    }

    const Vec x = Vec::Constant(1, 0.5);
    const Vec y = Vec::Constant(1, 2.0);
    CHECK(Region::hash(0.5).contains(x, y));
    CHECK_FALSE(Region::hash(0.4).contains(x, y));
    CHECK(Region::pr(0.5, 4.0).contains(x, y));
    CHECK_FALSE(Region::pr(0.5, 3.0).contains(x, y));
    CHECK(Region::ball_pair(0.5, 2.0).contains(x, y));
    CHECK_FALSE(Region::ball_pair(2.0, 0.5).contains(x, y));
}

TEST_CASE("local energy") {
    const GridMeasure lam = testing::uniform_grid(21);
    CHECK(local_energy(Coupling::diagonal(lam.atoms()), 0.5) == 0.0);

    const Coupling single{testing::atoms_1d({0.0}, {1.0}), testing::atoms_1d({0.5}, {1.0}), PlanMatrix::Ones(1, 1)};
    CHECK(local_energy(single, 1.0) == doctest::Approx(0.25));

    std::mt19937_64 rng(3);
    for (int dim : {1, 2}) {
        const Coupling pi = random_coupling(rng, dim, 9, 8);
        const double R = 0.6;
        double brute = 0.0;
        for (int i = 0; i < 9; ++i) {
            for (int j = 0; j < 8; ++j) {
                const Vec xv = pi.source.points.col(i);
                const Vec yv = pi.target.points.col(j);
                if (xv.norm() <= R || yv.norm() <= R) brute += (xv - yv).squaredNorm() * pi.mass(i, j);
            }
        }
        CHECK(local_energy(pi, R) == doctest::Approx(brute / std::pow(R, dim + 2)).epsilon(1e-13));
    }
    CHECK_THROWS_AS((void)local_energy(single, 0.0), DomainError);
}

TEST_CASE("long trajectory statistics") {
    const GridMeasure lam = testing::uniform_grid(21);
    const LongTrajectoryStats diag = long_trajectory_stats(Coupling::diagonal(lam.atoms()), 0.5, 0.1);
    CHECK(diag.energy == 0.0);
    CHECK(diag.mass == 0.0);

    std::mt19937_64 rng(5);
    const Coupling pi = random_coupling(rng, 2, 8, 8);
    const LongTrajectoryStats none = long_trajectory_stats(pi, 0.5, 10.0);
    CHECK(none.energy == 0.0);
    CHECK(none.mass == 0.0);

    const double R = 0.5;
    const LongTrajectoryStats all = long_trajectory_stats(pi, R, 0.0);
    CHECK(all.energy == doctest::Approx(local_energy(pi, R)).epsilon(1e-14));
    CHECK(all.mass == doctest::Approx(region_moments(pi, Region::hash(R)).mass / (R * R)).epsilon(1e-14));
}

TEST_CASE("affine fit") {
    const std::vector<double> xs{-0.4, -0.1, 0.0, 0.2, 0.3};
    SUBCASE("exact affine graph") {
        const AffineFit fit = affine_fit(graph_1d(xs, [](double x) { return 2.0 * x + 1.0; }), 0.5);
        CHECK(fit.A(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(fit.b[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fit.defect <= 1e-24);
    }
    SUBCASE("diagonal") {
        const AffineFit fit = affine_fit(graph_1d(xs, [](double x) { return x; }), 0.5);
        CHECK(fit.A(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(fit.b[0]) <= 1e-12);
        CHECK(fit.defect <= 1e-26);
    }
    SUBCASE("matches a coarse-to-fine grid search") {
        const Coupling pi{testing::atoms_1d({-0.3, 0.1, 0.4}, {0.2, 0.5, 0.3}),
                          testing::atoms_1d({-0.1, 0.5, 0.2}, {0.25, 0.45, 0.3}),
                          PlanMatrix{{0.15, 0.0, 0.05}, {0.1, 0.3, 0.1}, {0.0, 0.15, 0.15}}};
        const double r = 0.6;
        double best = std::numeric_limits<double>::infinity();
        double ca = 1.0, cb = 0.0, span = 4.0;
        for (int level = 0; level < 40; ++level) {
            double ba = ca, bb = cb;
            for (int i = -10; i <= 10; ++i) {
                for (int j = -10; j <= 10; ++j) {
                    const double a = ca + span * i / 10.0;
                    const double b = cb + span * j / 10.0;
                    const double v = affine_objective(pi, r, 0.0, Mat::Constant(1, 1, a), Vec::Constant(1, b));
                    if (v < best) {
                        best = v;
                        ba = a;
                        bb = b;
                    }
                }
            }
            ca = ba;
            cb = bb;
            span *= 0.5;
        }
        const AffineFit fit = affine_fit(pi, r);
        CHECK(fit.defect == doctest::Approx(best).epsilon(1e-6));
        CHECK(fit.A(0, 0) == doctest::Approx(ca).epsilon(1e-6));
        CHECK(fit.b[0] == doctest::Approx(cb).epsilon(1e-6));
    }
    SUBCASE("beta rescales the defect") {
        const Coupling pi = graph_1d(xs, [](double x) { return x + 0.3 * x * x; });
        const double r = 0.5;
        CHECK(affine_fit(pi, r, 0.5).defect == doctest::Approx(affine_fit(pi, r, 0.0).defect / r).epsilon(1e-12));
    }
    SUBCASE("empty region is degenerate") {
        const AffineFit fit = affine_fit(graph_1d({0.8, 0.9}, [](double x) { return x; }), 0.1);
        CHECK(fit.degenerate);
        CHECK(fit.defect == 0.0);
    }
}

TEST_CASE("crossing statistics") {
    auto single = [](Vec x, Vec y) {
        AtomicMeasure a{x, Vec::Ones(1)};
        AtomicMeasure b{y, Vec::Ones(1)};
        return Coupling{a, b, PlanMatrix::Ones(1, 1)};
    };
    const double R = 1.0;
    CHECK(crossing_stats(single(Vec::Constant(2, 0.1), Vec::Constant(2, -0.2)), R).crossing_mass == 0.0);
    const CrossingStats out = crossing_stats(single(Vec::Constant(2, 0.1), Vec::Constant(2, 2.0)), R);
    CHECK(out.crossing_mass == 1.0);
    CHECK(out.crossing_energy == doctest::Approx(2.0 * 1.9 * 1.9));

    // Horizontal chords at heights around R: included iff the segment comes within R of the origin.
    for (double height : {0.95, 0.999, 1.0 - 1e-9, 1.001, 1.05}) {
        Vec x(2), y(2);
        x << -2.0, height;
        y << 2.0, height;
        double closest = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 10000; ++k) {
            const double t = k / 10000.0;
            closest = std::min(closest, (x + t * (y - x)).norm());
        }
        const bool expected = closest <= R;
        CHECK((crossing_stats(single(x, y), R).crossing_mass == 1.0) == expected);
    }
}
