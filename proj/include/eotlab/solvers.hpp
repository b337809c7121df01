#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eotlab/coupling.hpp"

namespace eotlab {

struct SinkhornOptions {
    double epsilon = 0.1;  // length scale; regularization strength is epsilon^2
    double tol = 1e-9;     // total-variation marginal error, relative to mass
    int max_iter = 100000;
    int stabilize_every = 10;  // potential recentering and error-history cadence
    bool overrelax = true;        // adaptive over-relaxation once the linear rate is visible
    bool epsilon_scaling = true;  // warm start along a halving epsilon ladder
};

struct SinkhornResult {
    Coupling plan;
    Vec f;  // source potential
    Vec g;  // target potential
    double epsilon = 0.0;
    int iterations = 0;
    double marg_err = 0.0;
    double primal_cost = 0.0;
    double entropy = 0.0;  // relative entropy of plan w.r.t. lam (x) mu
    bool converged = false;
    double mass = 0.0;
    /// Marginal error every `stabilize_every` iterations.
    std::vector<double> error_history;
};

/// Log-domain Sinkhorn for the quadratic cost with regularization epsilon^2.
///
/// Marginals are normalized to probability measures internally; the returned
/// plan, potentials and costs refer to the original masses, so that
/// plan(x,y) = exp((f(x) + g(y) - |x-y|^2) / epsilon^2) lam(x) mu(y).
[[nodiscard]] SinkhornResult sinkhorn(const AtomicMeasure& lam, const AtomicMeasure& mu, const SinkhornOptions& opt);
[[nodiscard]] SinkhornResult sinkhorn(const GridMeasure& lam, const GridMeasure& mu, const SinkhornOptions& opt);

/// primal_cost + epsilon^2 * entropy.
[[nodiscard]] double entropic_cost(const SinkhornResult& res);

/// Relative entropy sum pi log(pi / (lam mu)) evaluated entry by entry from
/// the materialized plan.
[[nodiscard]] double direct_entropy(const Coupling& pi);

/// Max relative error between log(pi(x,y) pi(x',y') / (pi(x,y') pi(x',y))) and
/// -(|x-y|^2 + |x'-y'|^2 - |x'-y|^2 - |x-y'|^2) / epsilon^2 over random quadruples.
[[nodiscard]] double gibbs_identity_check(const SinkhornResult& res, int n_samples, std::uint64_t seed = 0);

struct ExactOTResult {
    Coupling plan;
    double cost = 0.0;
    std::string method = "successive-shortest-path";
    Vec u;  // source dual potential
    Vec v;  // target dual potential
    double dual_value = 0.0;
    double duality_gap = 0.0;     // |primal - dual| relative to cost scale
    double dual_violation = 0.0;  // max (u_i + v_j - c_ij)_+ relative to max cost
    bool certified = false;       // both of the above <= 1e-9
};

/// Unregularized quadratic transport between atomic measures of equal mass,
/// solved as a min-cost flow by successive shortest paths with potentials.
[[nodiscard]] ExactOTResult exact_ot(const AtomicMeasure& lam, const AtomicMeasure& mu);
[[nodiscard]] ExactOTResult exact_ot(const GridMeasure& lam, const GridMeasure& mu);

/// Largest support handled by exact_ot on either side.
inline constexpr std::size_t kMaxExactSupport = 4096;

/// Throws InputError when relative mass gap exceeds 1e-12.
void require_equal_mass(double lam_mass, double mu_mass, const char* who);

}  // namespace eotlab
