#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eotlab/scaling.hpp"
#include "eotlab/solvers.hpp"

namespace eotlab {

/// Thresholds and geometry factors of the regularity experiments. None of
/// these have canonical values; they are experiment parameters.
struct RegularityParams {
    double eps1 = 0.1;               // smallness threshold for an improvement step
    double delta = 0.05;             // quasi-minimality slack entering the smallness test
    double Lambda = 11.0 / 4.0;      // competitor region factor
    double theta = 0.5;              // contraction ratio between levels
    double c0 = 5.0;                 // iteration stops once r_k <= c0 * epsilon
    double beta = 0.0;               // exponent of the affine defect
    double fit_radius_factor = 1.0;  // harmonic fit over hash(factor * R)
    double r_avg = 0.0;              // density averaging radius; <= 0 means 3 * grid spacing
    AdmissibilityWindows windows;
};

struct HarmonicFit {
    Vec coeffs;  // linear part first, then trace-free quadratic coefficients
    Vec grad0;
    Mat hess0;
    double residual = 0.0;       // sum over the fit region of |y - x - grad phi(x)|^2 pi
    double zero_residual = 0.0;  // same with phi = 0
    double mass = 0.0;
    bool degenerate = false;
    bool ridge = false;
};

enum class HarmonicBasis { linear, linear_and_quadratic };

/// Weighted least-squares projection of the displacement y - x onto gradients
/// of harmonic polynomials of degree <= 2 over hash(fit_radius).
[[nodiscard]] HarmonicFit harmonic_fit(const Coupling& pi, double fit_radius,
                                       HarmonicBasis basis = HarmonicBasis::linear_and_quadratic);

/// Gradient field basis of the harmonic quadratics: symmetric trace-free matrices.
[[nodiscard]] std::vector<Mat> tracefree_basis(int dim);

/// Plan and marginals carried through the rescaling cascade.
struct TransportState {
    Coupling plan;
    GridMeasure lam;
    GridMeasure mu;
};

struct OneStepOutcome {
    Scaling scaling_hat;
    double R = 0.0;
    double theta = 0.0;
    double E_before = 0.0;
    double E_after = 0.0;
    double D_before = 0.0;
    double D_after = 0.0;
    double smallness = 0.0;  // E + D + eps^2 / R^2 + delta at the input scale
    HarmonicFit fit;
    std::optional<TransportState> next;
};

[[nodiscard]] double averaging_radius(const GridMeasure& lam, const GridMeasure& mu, const RegularityParams& p);

/// One improvement step at scale R: harmonic fit, s_hat = (exp(-hess0/2),
/// grad0, mu(b)^{1/d}, 1), and energy/data before (at R) and after (at theta R).
/// Throws SmallnessError or AdmissibilityError.
[[nodiscard]] OneStepOutcome one_step(const TransportState& state, double R, double theta, double epsilon,
                                      const RegularityParams& p = {});

enum class StopReason { reached_epsilon_scale, admissibility_exit, smallness_violated, max_levels };

[[nodiscard]] std::string to_string(StopReason r);

struct CampanatoLevel {
    int k = 0;
    double r = 0.0;
    Scaling step;      // s_k (the normalizing scaling at level 0)
    Scaling composed;  // t_k
    double E = 0.0;
    double D = 0.0;
    double affine_defect = 0.0;  // of the original plan at radius r
    double holder_lambda = 0.0;
    double holder_mu = 0.0;
};

struct CampanatoTrace {
    std::vector<CampanatoLevel> levels;
    StopReason stop_reason = StopReason::max_levels;
    std::string stop_detail;
    double R0 = 0.0;
    double theta = 0.0;
    double epsilon = 0.0;
};

/// Normalizes the marginals at the origin, then iterates one_step with
/// r_k = theta^k R0 while r_k > c0 * epsilon, composing the scalings.
[[nodiscard]] CampanatoTrace campanato_iterate(const TransportState& initial, double R0, double theta, double epsilon,
                                               int max_levels, const RegularityParams& p = {});

struct DefectReport {
    double R = 0.0;
    double Lambda = 0.0;
    double lhs = 0.0;              // sum over hash(R) of |x-y|^2 pi
    double mass_PR = 0.0;          // pi(P_R)
    double ot_bar = 0.0;           // OT of the normalized marginals of pi restricted to P_R
    double competitor_cost = 0.0;  // mass_PR * ot_bar
    double defect = 0.0;           // lhs - competitor_cost
    double mass_hash_LR = 0.0;     // pi(hash(Lambda R))
    double eps2_mass = 0.0;        // epsilon^2 * mass_hash_LR
    double energy_2R = 0.0;        // sum over hash(2R) of |x-y|^2 pi
    bool degenerate = false;
    bool ot_certified = false;
};

[[nodiscard]] DefectReport quasimin_defect(const Coupling& pi, double R, double Lambda, double epsilon);

struct LongTrajRow {
    double epsilon = 0.0;
    double r2_over_eps2 = 0.0;
    double energy = 0.0;  // R^{-(d+2)} second moment over hash(4R) n {|x-y| >= 7R}
    double mass = 0.0;    // R^{-d} mass of the same set
    double E5R = 0.0;
    double energy_ratio = 0.0;
    double mass_ratio = 0.0;
    bool converged = false;
};

struct LongTrajTable {
    std::vector<LongTrajRow> rows;
    std::optional<double> slope_mass;    // d log(mass_ratio) / d (R^2/eps^2)
    std::optional<double> slope_energy;  // same for energy_ratio
};

struct LongTrajGeometry {
    double inner = 4.0;      // hash(inner * R)
    double threshold = 7.0;  // |x - y| >= threshold * R
    double energy = 5.0;     // normalizing energy E(pi, energy * R)
};

[[nodiscard]] LongTrajTable long_traj_experiment(const GridMeasure& lam, const GridMeasure& mu, double R,
                                                 const std::vector<double>& eps_ladder, const SinkhornOptions& opt,
                                                 const LongTrajGeometry& geo = {});

struct ExpansionRow {
    double epsilon = 0.0;
    double ot_eps = 0.0;
    double ot = 0.0;
    double gap_over_eps2 = 0.0;  // (OT_eps - OT) / eps^2
    double log_inv_eps2 = 0.0;   // log(eps^{-2})
    double remainder = 0.0;      // gap_over_eps2 - (d/2) log(eps^{-2})
    bool resolved = true;        // eps >= 3h
    bool converged = false;
};

struct ExpansionTable {
    std::vector<ExpansionRow> rows;
    std::optional<double> slope;            // of gap_over_eps2 against log_inv_eps2, resolved rows
    std::optional<double> remainder_spread;  // max |remainder| / min |remainder|, resolved rows
    double mass = 0.0;                       // original mass; the experiment runs on normalized marginals
};

[[nodiscard]] ExpansionTable expansion_experiment(const GridMeasure& lam, const GridMeasure& mu,
                                                  const std::vector<double>& eps_ladder, const SinkhornOptions& opt);

struct SoftLemmaRow {
    double rho = 0.0;
    double mass = 0.0;   // pi(hash(R - margin) n {|x-y| >= rho})
    double bound = 0.0;  // Delta_R R^d / rho^{d+2}
    double fitted_constant = 0.0;
    bool lower_ok = false;  // E(pi, R) < rho^{d+2}
    bool upper_ok = false;  // rho^{d+2} < R^{d+2}
};

[[nodiscard]] std::vector<SoftLemmaRow> soft_lemma_check(const Coupling& pi, double R,
                                                         const std::vector<double>& rho_ladder, double Delta_R,
                                                         double margin = 1.0);

/// Worker count for ladder experiments: EOTLAB_THREADS if set, else hardware.
[[nodiscard]] unsigned worker_count();

}  // namespace eotlab
