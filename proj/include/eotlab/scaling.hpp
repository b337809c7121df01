#pragma once

#include <utility>

#include "eotlab/coupling.hpp"

namespace eotlab {

/// Admissible rescaling s = (A, b, gamma, kappa).
///
/// Acts on source points by x -> A^{-T} x, on target points by
/// y -> gamma * A (y - b), and multiplies mass by kappa. The source map uses
/// A^{-T} so that compositions of scalings stay in the family when the
/// matrices do not commute; for symmetric A it is the usual A^{-1}.
struct Scaling {
    Mat A;
    Vec b;
    double gamma = 1.0;
    double kappa = 1.0;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(A.rows()); }
    [[nodiscard]] static Scaling identity(int dim);

    [[nodiscard]] Vec map_source(const Vec& x) const;
    [[nodiscard]] Vec map_target(const Vec& y) const;
};

/// Compact windows K (for kappa) and G (for gamma).
struct AdmissibilityWindows {
    double kappa_min = 0.2;
    double kappa_max = 5.0;
    double gamma_min = 0.5;
    double gamma_max = 2.0;
};

struct AdmissibilityCheck {
    bool symmetric = false;
    bool positive_definite = false;
    bool gamma_in_window = false;
    bool kappa_in_window = false;
    double det = 0.0;
    double condition = 0.0;
};

[[nodiscard]] AdmissibilityCheck inspect(const Scaling& s, const AdmissibilityWindows& w = {});

/// Throws AdmissibilityError unless A is symmetric positive-definite and
/// gamma, kappa lie in their windows. With `unit_det`, also |det A - 1| <= 1e-8.
void require_admissible(const Scaling& s, const AdmissibilityWindows& w = {}, bool unit_det = false);

/// Throws AdmissibilityError unless A is well conditioned with positive
/// determinant and gamma, kappa lie in their windows. Used for composed
/// scalings, whose matrix need not be symmetric.
void require_composable(const Scaling& s, const AdmissibilityWindows& w = {});

/// s2 after s1: applying the result equals applying s1 and then s2.
[[nodiscard]] Scaling compose(const Scaling& s2, const Scaling& s1, const AdmissibilityWindows& w = {});

/// Naive rule (A2 A1, b1 + gamma2 A2 b2, gamma2 gamma1, kappa2 kappa1), which
/// treats the shift of s2 as if it acted before s1. It fails the pushforward
/// identity whenever b2 != 0; kept so that a regression test can pin this.
[[nodiscard]] Scaling compose_naive(const Scaling& s2, const Scaling& s1);

/// Pushforward of atoms by the source (resp. target) map, weights times kappa.
[[nodiscard]] AtomicMeasure push_source(const Scaling& s, const AtomicMeasure& m);
[[nodiscard]] AtomicMeasure push_target(const Scaling& s, const AtomicMeasure& m);

/// Conservative deposition of atoms onto a grid of spacing h whose nodes
/// include the origin: multilinear (cloud-in-cell) weights, total mass exact.
[[nodiscard]] GridMeasure deposit(const AtomicMeasure& atoms, double h, double alpha);

/// (lam_s, mu_s) resampled on regular grids. When A is a multiple of the
/// identity the image lattice is itself regular and weights are carried over
/// unchanged; otherwise the atoms are deposited with `deposit`.
[[nodiscard]] std::pair<GridMeasure, GridMeasure> apply_to_measures(const Scaling& s, const GridMeasure& lam,
                                                                    const GridMeasure& mu);

/// pi_s = kappa * Q_# pi, with marginals (kappa Q1_# lam, kappa Q2_# mu).
[[nodiscard]] Coupling apply_to_coupling(const Scaling& s, const Coupling& pi);

/// Normalizing scaling (Id, 0, (mu0/lam0)^{1/d}, 1/lam0) giving unit
/// densities at the origin on both sides.
[[nodiscard]] Scaling normalizing_scaling(double lam0, double mu0, int dim);

}  // namespace eotlab
