#pragma once

#include <memory>
#include <variant>

#include "eotlab/measure.hpp"

namespace eotlab {

using PlanMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense transport plan between two atomic measures. Rows index source atoms,
/// columns index target atoms. The atoms' weights are the prescribed marginals.
struct Coupling {
    AtomicMeasure source;
    AtomicMeasure target;
    PlanMatrix mass;

    [[nodiscard]] int dim() const noexcept { return source.dim(); }
    [[nodiscard]] double total_mass() const;
    [[nodiscard]] Vec row_sums() const;
    [[nodiscard]] Vec col_sums() const;

    /// Product plan lam x mu / mass.
    [[nodiscard]] static Coupling product(const AtomicMeasure& lam, const AtomicMeasure& mu);
    /// Identity plan of a measure onto itself.
    [[nodiscard]] static Coupling diagonal(const AtomicMeasure& lam);
};

struct MarginalReport {
    double max_row_err = 0.0;
    double max_col_err = 0.0;
    bool pass = false;
};

/// Per-row/column relative deviation of the plan marginals from the atoms'
/// weights. Rows whose prescribed weight is zero are measured against the
/// total mass instead.
[[nodiscard]] MarginalReport check_marginals(const Coupling& pi, double tol = 1e-8);

/// Pair-set membership predicate, evaluated at atom positions.
class Region {
public:
    /// (B_R x R^d) u (R^d x B_R)
    [[nodiscard]] static Region hash(double R);
    /// (B_R x B_{Lambda R}) u (B_{Lambda R} x B_R)
    [[nodiscard]] static Region pr(double R, double Lambda);
    /// hash(R) intersected with {|x - y| >= threshold}
    [[nodiscard]] static Region long_trajectories(double R, double threshold);
    /// B_{Rx} x B_{Ry}
    [[nodiscard]] static Region ball_pair(double Rx, double Ry);
    [[nodiscard]] static Region complement(Region inner);

    [[nodiscard]] bool contains(const Vec& x, const Vec& y) const;
    /// Same predicate from precomputed |x|, |y| and |x - y|.
    [[nodiscard]] bool contains(double nx, double ny, double dxy) const;

private:
    struct Hash { double R; };
    struct PR { double R; double Lambda; };
    struct LongTraj { double R; double threshold; };
    struct Ball2 { double Rx; double Ry; };
    struct Complement { std::shared_ptr<const Region> inner; };
    using Kind = std::variant<Hash, PR, LongTraj, Ball2, Complement>;

    explicit Region(Kind k) : kind_(std::move(k)) {}
    Kind kind_;
};

/// Zero every entry outside `region`. Atoms are kept; marginals are not
/// re-imposed.
[[nodiscard]] Coupling restrict(const Coupling& pi, const Region& region);

struct RegionMoments {
    double mass = 0.0;
    double second_moment = 0.0;  // sum of |x-y|^2 pi(x,y)
};

[[nodiscard]] RegionMoments region_moments(const Coupling& pi, const Region& region);

/// E(pi, R) = R^{-(d+2)} * sum over hash(R) of |x-y|^2 pi.
[[nodiscard]] double local_energy(const Coupling& pi, double R);

struct LongTrajectoryStats {
    double energy = 0.0;  // R^{-(d+2)} * restricted second moment
    double mass = 0.0;    // R^{-d} * restricted mass
};

[[nodiscard]] LongTrajectoryStats long_trajectory_stats(const Coupling& pi, double R, double threshold);

struct AffineFit {
    Mat A;
    Vec b;
    double defect = 0.0;
    double beta = 0.0;
    double r = 0.0;
    bool degenerate = false;  // zero mass in hash(r)
    bool ridge = false;       // normal equations were regularized
};

/// Weighted least-squares fit y ~ A x + b over hash(r), with defect
/// normalized by r^{d+2+2 beta}.
[[nodiscard]] AffineFit affine_fit(const Coupling& pi, double r, double beta = 0.0);

/// Value of the affine-fit objective at a given (A, b).
[[nodiscard]] double affine_objective(const Coupling& pi, double r, double beta, const Mat& A, const Vec& b);

struct CrossingStats {
    double crossing_energy = 0.0;
    double crossing_mass = 0.0;
};

/// Pairs whose segment [x, y] meets the sphere of radius R.
[[nodiscard]] CrossingStats crossing_stats(const Coupling& pi, double R);

/// min over t in [0,1] of |(1-t) x + t y|.
[[nodiscard]] double segment_distance_to_origin(const Vec& x, const Vec& y);

}  // namespace eotlab
