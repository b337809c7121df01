#include "eotlab/scaling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "eotlab/errors.hpp"

namespace eotlab {

Scaling Scaling::identity(int dim) { return {Mat::Identity(dim, dim), Vec::Zero(dim), 1.0, 1.0}; }

Vec Scaling::map_source(const Vec& x) const { return A.transpose().partialPivLu().solve(x); }

Vec Scaling::map_target(const Vec& y) const { return gamma * (A * (y - b)); }

AdmissibilityCheck inspect(const Scaling& s, const AdmissibilityWindows& w) {
    AdmissibilityCheck c;
    const double scale = std::max(1.0, s.A.cwiseAbs().maxCoeff());
    c.symmetric = (s.A - s.A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
    if (c.symmetric) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(s.A);
        c.positive_definite = eig.eigenvalues().minCoeff() > 0.0;
    }
    Eigen::JacobiSVD<Mat> svd(s.A);
    const Vec sv = svd.singularValues();
    c.condition = sv.minCoeff() > 0.0 ? sv.maxCoeff() / sv.minCoeff() : INFINITY;
    c.det = s.A.determinant();
    c.gamma_in_window = s.gamma >= w.gamma_min && s.gamma <= w.gamma_max;
    c.kappa_in_window = s.kappa >= w.kappa_min && s.kappa <= w.kappa_max;
    return c;
}

namespace {

void require_windows(const Scaling& s, const AdmissibilityCheck& c, const AdmissibilityWindows& w) {
    if (!c.gamma_in_window) {
        std::ostringstream msg;
        msg << "scaling: gamma=" << s.gamma << " outside [" << w.gamma_min << ", " << w.gamma_max << "]";
        throw AdmissibilityError(msg.str());
    }
    if (!c.kappa_in_window) {
        std::ostringstream msg;
        msg << "scaling: kappa=" << s.kappa << " outside [" << w.kappa_min << ", " << w.kappa_max << "]";
        throw AdmissibilityError(msg.str());
    }
}

void require_shapes(const Scaling& s) {
    if (s.A.rows() != s.A.cols() || s.b.size() != s.A.rows()) throw InputError("scaling: inconsistent shapes");
}

}  // namespace

void require_admissible(const Scaling& s, const AdmissibilityWindows& w, bool unit_det) {
    require_shapes(s);
    const AdmissibilityCheck c = inspect(s, w);
    if (!c.symmetric) throw AdmissibilityError("scaling: A is not symmetric");
    if (!c.positive_definite) throw AdmissibilityError("scaling: A is not positive-definite");
    if (unit_det && std::abs(c.det - 1.0) > 1e-8) throw AdmissibilityError("scaling: det A differs from 1");
    require_windows(s, c, w);
}

void require_composable(const Scaling& s, const AdmissibilityWindows& w) {
    require_shapes(s);
    const AdmissibilityCheck c = inspect(s, w);
    if (!(c.det > 0.0) || !(c.condition <= 1e12)) throw AdmissibilityError("scaling: A singular or orientation-reversing");
    require_windows(s, c, w);
}

Scaling compose(const Scaling& s2, const Scaling& s1, const AdmissibilityWindows& w) {
    if (s1.dim() != s2.dim()) throw InputError("compose: dimension mismatch");
    Scaling out;
    out.A = s2.A * s1.A;
    out.b = s1.b + s1.A.partialPivLu().solve(s2.b) / s1.gamma;
    out.gamma = s2.gamma * s1.gamma;
    out.kappa = s2.kappa * s1.kappa;
    require_composable(out, w);
    return out;
}

Scaling compose_naive(const Scaling& s2, const Scaling& s1) {
    return {s2.A * s1.A, s1.b + s2.gamma * (s2.A * s2.b), s2.gamma * s1.gamma, s2.kappa * s1.kappa};
}

AtomicMeasure push_source(const Scaling& s, const AtomicMeasure& m) {
    AtomicMeasure out;
    out.points = s.A.transpose().partialPivLu().solve(m.points);
    out.weights = s.kappa * m.weights;
    return out;
}

AtomicMeasure push_target(const Scaling& s, const AtomicMeasure& m) {
    AtomicMeasure out;
    out.points = s.gamma * (s.A * (m.points.colwise() - s.b));
    out.weights = s.kappa * m.weights;
    return out;
}

GridMeasure deposit(const AtomicMeasure& atoms, double h, double alpha) {
    const int d = atoms.dim();
    if (d != 1 && d != 2) throw DomainError("deposit: dim must be 1 or 2");
    if (!(h > 0.0)) throw DomainError("deposit: spacing must be positive");
    std::vector<long> lo(static_cast<std::size_t>(d), 0);
    std::vector<long> hi(static_cast<std::size_t>(d), 0);
    for (int k = 0; k < d; ++k) {
        const double mn = std::min(0.0, atoms.points.row(k).minCoeff());
        const double mx = std::max(0.0, atoms.points.row(k).maxCoeff());
        lo[k] = static_cast<long>(std::floor(mn / h));
        hi[k] = static_cast<long>(std::floor(mx / h)) + 1;  // spare node on top
    }
    GridSpec spec;
    spec.dim = d;
    spec.h = h;
    for (int k = 0; k < d; ++k) {
        spec.origin_offset.push_back(static_cast<double>(-lo[k]));
        spec.extent.push_back(static_cast<std::size_t>(hi[k] - lo[k] + 1));
    }
    std::vector<double> w(spec.size(), 0.0);
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        const double mass = atoms.weights[static_cast<Eigen::Index>(a)];
        if (mass == 0.0) continue;
        std::array<std::size_t, 2> base{};
        std::array<double, 2> frac{};
        for (int k = 0; k < d; ++k) {
            const double u = atoms.points(k, static_cast<Eigen::Index>(a)) / h - static_cast<double>(lo[k]);
            const double f = std::floor(u);
            base[k] = static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(spec.extent[k] - 2)));
            frac[k] = std::clamp(u - static_cast<double>(base[k]), 0.0, 1.0);
        }
        if (d == 1) {
            w[base[0]] += mass * (1.0 - frac[0]);
            w[base[0] + 1] += mass * frac[0];
        } else {
            const std::size_t n1 = spec.extent[1];
            for (int c0 = 0; c0 < 2; ++c0) {
                for (int c1 = 0; c1 < 2; ++c1) {
                    const double f = (c0 ? frac[0] : 1.0 - frac[0]) * (c1 ? frac[1] : 1.0 - frac[1]);
                    w[(base[0] + c0) * n1 + base[1] + c1] += mass * f;
                }
            }
        }
    }
    return {spec, std::move(w), alpha};
}

namespace {

// a when A == a * Id (to rounding), otherwise NaN.
double isotropic_factor(const Mat& A) {
    const double a = A.trace() / static_cast<double>(A.rows());
    const double err = (A - a * Mat::Identity(A.rows(), A.cols())).cwiseAbs().maxCoeff();
    return err <= 1e-14 * std::abs(a) ? a : std::nan("");
}

}  // namespace

std::pair<GridMeasure, GridMeasure> apply_to_measures(const Scaling& s, const GridMeasure& lam, const GridMeasure& mu) {
    if (lam.dim() != s.dim() || mu.dim() != s.dim()) throw InputError("apply_to_measures: dimension mismatch");
    const AdmissibilityCheck c = inspect(s);
    if (!(c.condition <= 1e12) || !(c.det > 0.0)) throw DomainError("apply_to_measures: A is singular");
    if (!(s.gamma > 0.0) || !(s.kappa > 0.0)) throw DomainError("apply_to_measures: gamma, kappa must be positive");

    const double a = isotropic_factor(s.A);
    if (!std::isnan(a)) {
        GridSpec src = lam.spec();
        src.h = lam.spec().h / a;
        GridSpec dst = mu.spec();
        dst.h = mu.spec().h * s.gamma * a;
        for (int k = 0; k < s.dim(); ++k) dst.origin_offset[k] = mu.spec().origin_offset[k] + s.b[k] / mu.spec().h;
        std::vector<double> wl(lam.weights());
        std::vector<double> wm(mu.weights());
        for (double& v : wl) v *= s.kappa;
        for (double& v : wm) v *= s.kappa;
        return {GridMeasure(src, std::move(wl), lam.alpha()), GridMeasure(dst, std::move(wm), mu.alpha())};
    }
    const double det = c.det;
    const double d = static_cast<double>(s.dim());
    const double h_src = lam.spec().h * std::pow(det, -1.0 / d);
    const double h_dst = mu.spec().h * s.gamma * std::pow(det, 1.0 / d);
    return {deposit(push_source(s, lam.atoms()), h_src, lam.alpha()),
            deposit(push_target(s, mu.atoms()), h_dst, mu.alpha())};
}

Coupling apply_to_coupling(const Scaling& s, const Coupling& pi) {
    if (pi.dim() != s.dim()) throw InputError("apply_to_coupling: dimension mismatch");
    const MarginalReport before = check_marginals(pi);
    Coupling out{push_source(s, pi.source), push_target(s, pi.target), s.kappa * pi.mass};
    const MarginalReport after = check_marginals(out);
    const double slack = 1e-12;
    if (after.max_row_err > before.max_row_err + slack || after.max_col_err > before.max_col_err + slack) {
        throw ConsistencyError("apply_to_coupling: transformed plan lost marginal consistency");
    }
    return out;
}

Scaling normalizing_scaling(double lam0, double mu0, int dim) {
    if (!(lam0 > 0.0) || !(mu0 > 0.0)) throw DomainError("normalizing_scaling: densities at 0 must be positive");
    Scaling s = Scaling::identity(dim);
    s.gamma = std::pow(mu0 / lam0, 1.0 / static_cast<double>(dim));
    s.kappa = 1.0 / lam0;
    return s;
}

}  // namespace eotlab
