#include "eotlab/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eotlab/errors.hpp"

namespace eotlab {

std::vector<Mat> tracefree_basis(int dim) {
    std::vector<Mat> basis;
    if (dim < 2) return basis;
    // Diagonal part: e_k e_k^T - e_{k+1} e_{k+1}^T.
    for (int k = 0; k + 1 < dim; ++k) {
        Mat s = Mat::Zero(dim, dim);
        s(k, k) = 1.0;
        s(k + 1, k + 1) = -1.0;
        basis.push_back(s);
    }
    for (int a = 0; a < dim; ++a) {
        for (int b = a + 1; b < dim; ++b) {
            Mat s = Mat::Zero(dim, dim);
            s(a, b) = s(b, a) = 1.0;
            basis.push_back(s);
        }
    }
    return basis;
}

HarmonicFit harmonic_fit(const Coupling& pi, double fit_radius, HarmonicBasis basis) {
    if (!(fit_radius > 0.0)) throw DomainError("harmonic_fit: radius must be positive");
    const int d = pi.dim();
    const std::vector<Mat> quad = basis == HarmonicBasis::linear ? std::vector<Mat>{} : tracefree_basis(d);
    const int q = static_cast<int>(quad.size());
    const int p = d + q;
    const Region region = Region::hash(fit_radius);

    // Displacement model z ~ G(x) theta with G(x) = [Id | S_1 x | ... | S_q x].
    auto design = [&](const Vec& x) {
        Mat G(d, p);
        G.leftCols(d) = Mat::Identity(d, d);
        for (int k = 0; k < q; ++k) G.col(d + k) = quad[static_cast<std::size_t>(k)] * x;
        return G;
    };

    Mat normal = Mat::Zero(p, p);
    Vec rhs = Vec::Zero(p);
    CompensatedSum mass;
    CompensatedSum zero_res;
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        const Vec x = pi.source.points.col(i);
        const double nx = x.norm();
        const Mat G = design(x);
        const Mat GtG = G.transpose() * G;
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
            const double w = pi.mass(i, j);
            if (w == 0.0) continue;
            const Vec z = pi.target.points.col(j) - x;
            if (!region.contains(nx, pi.target.points.col(j).norm(), z.norm())) continue;
            mass.add(w);
            zero_res.add(w * z.squaredNorm());
            normal += w * GtG;
            rhs += w * (G.transpose() * z);
        }
    }

    HarmonicFit fit;
    fit.mass = mass.value();
    fit.zero_residual = zero_res.value();
    fit.coeffs = Vec::Zero(p);
    fit.grad0 = Vec::Zero(d);
    fit.hess0 = Mat::Zero(d, d);
    if (!(fit.mass > 0.0)) {
        fit.degenerate = true;
        return fit;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(normal);
    const double top = eig.eigenvalues().maxCoeff();
    const double bottom = eig.eigenvalues().minCoeff();
    if (!(bottom * 1e10 >= top)) {
        normal += 1e-12 * std::max(1.0, normal.trace() / p) * Mat::Identity(p, p);
        fit.ridge = true;
    }
    fit.coeffs = normal.ldlt().solve(rhs);
    fit.grad0 = fit.coeffs.head(d);
    for (int k = 0; k < q; ++k) fit.hess0 += fit.coeffs[d + k] * quad[static_cast<std::size_t>(k)];

    CompensatedSum res;
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        const Vec x = pi.source.points.col(i);
        const double nx = x.norm();
        const Vec model = fit.grad0 + fit.hess0 * x;
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
            const double w = pi.mass(i, j);
            if (w == 0.0) continue;
            const Vec z = pi.target.points.col(j) - x;
            if (!region.contains(nx, pi.target.points.col(j).norm(), z.norm())) continue;
            res.add(w * (z - model).squaredNorm());
        }
    }
    fit.residual = res.value();
    return fit;
}

double averaging_radius(const GridMeasure& lam, const GridMeasure& mu, const RegularityParams& p) {
    const double floor = std::max(lam.spec().h, mu.spec().h);
    return p.r_avg > 0.0 ? std::max(p.r_avg, floor) : 3.0 * floor;
}

OneStepOutcome one_step(const TransportState& state, double R, double theta, double epsilon, const RegularityParams& p) {
    if (!(R > 0.0)) throw DomainError("one_step: R must be positive");
    if (!(theta > 0.0 && theta < 1.0)) throw DomainError("one_step: theta must lie in (0,1)");
    const int d = state.plan.dim();
    const double r_avg = averaging_radius(state.lam, state.mu, p);
    const Vec origin = Vec::Zero(d);
    const double lam0 = density_at(state.lam, origin, r_avg);
    const double mu0 = density_at(state.mu, origin, r_avg);
    if (std::abs(lam0 - 1.0) > 1e-2 || std::abs(mu0 - 1.0) > 1e-2) {
        std::ostringstream msg;
        msg << "one_step: marginals not normalized at the origin (lam(0)=" << lam0 << ", mu(0)=" << mu0 << ")";
        throw DomainError(msg.str());
    }

    OneStepOutcome out;
    out.R = R;
    out.theta = theta;
    out.E_before = local_energy(state.plan, R);
    out.D_before = data_term(state.lam, state.mu, R, r_avg).D;
    out.smallness = out.E_before + out.D_before + epsilon * epsilon / (R * R) + p.delta;
    if (!(out.smallness < p.eps1)) {
        std::ostringstream msg;
        msg << "one_step: smallness " << out.smallness << " >= eps1 " << p.eps1 << " at R=" << R;
        throw SmallnessError(msg.str());
    }

    out.fit = harmonic_fit(state.plan, p.fit_radius_factor * R);
    Scaling s;
    s.A = symmetric_expm(-0.5 * out.fit.hess0);
    s.b = out.fit.grad0;
    if (!state.mu.spec().contains_in_hull(s.b)) throw AdmissibilityError("one_step: shift b leaves the target grid");
    s.gamma = std::pow(density_at(state.mu, s.b, r_avg), 1.0 / d);
    s.kappa = 1.0;
    require_admissible(s, p.windows, /*unit_det=*/true);
    out.scaling_hat = s;

    auto [lam_hat, mu_hat] = apply_to_measures(s, state.lam, state.mu);
    Coupling plan_hat = apply_to_coupling(s, state.plan);
    const double r_next = theta * R;
    out.E_after = local_energy(plan_hat, r_next);
    out.D_after = data_term(lam_hat, mu_hat, r_next, averaging_radius(lam_hat, mu_hat, p)).D;
    out.next.emplace(TransportState{std::move(plan_hat), std::move(lam_hat), std::move(mu_hat)});
    return out;
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::reached_epsilon_scale: return "reached_epsilon_scale";
        case StopReason::admissibility_exit: return "admissibility_exit";
        case StopReason::smallness_violated: return "smallness_violated";
        case StopReason::max_levels: return "max_levels";
    }
    return "unknown";
}

namespace {

CampanatoLevel describe_level(int k, double r, const Scaling& step, const Scaling& composed, const TransportState& st,
                              const Coupling& original, const RegularityParams& p) {
    CampanatoLevel lv;
    lv.k = k;
    lv.r = r;
    lv.step = step;
    lv.composed = composed;
    lv.E = local_energy(st.plan, r);
    const DataTermReport D = data_term(st.lam, st.mu, r, averaging_radius(st.lam, st.mu, p));
    lv.D = D.D;
    lv.holder_lambda = D.holder_lambda;
    lv.holder_mu = D.holder_mu;
    lv.affine_defect = affine_fit(original, r, p.beta).defect;
    return lv;
}

}  // namespace

CampanatoTrace campanato_iterate(const TransportState& initial, double R0, double theta, double epsilon, int max_levels,
                                 const RegularityParams& p) {
    if (!(theta > 0.0 && theta < 1.0)) throw DomainError("campanato_iterate: theta must lie in (0,1)");
    if (!(R0 > 0.0)) throw DomainError("campanato_iterate: R0 must be positive");
    if (!(epsilon >= 0.0)) throw DomainError("campanato_iterate: epsilon must be >= 0");
    const int d = initial.plan.dim();
    CampanatoTrace trace;
    trace.R0 = R0;
    trace.theta = theta;
    trace.epsilon = epsilon;

    const double r_avg = averaging_radius(initial.lam, initial.mu, p);
    const Vec origin = Vec::Zero(d);
    const Scaling bar = normalizing_scaling(density_at(initial.lam, origin, r_avg), density_at(initial.mu, origin, r_avg), d);
    try {
        require_admissible(bar, p.windows);
    } catch (const AdmissibilityError& e) {
        trace.stop_reason = StopReason::admissibility_exit;
        trace.stop_detail = e.what();
        return trace;
    }
    auto [lam0, mu0] = apply_to_measures(bar, initial.lam, initial.mu);
    TransportState state{apply_to_coupling(bar, initial.plan), std::move(lam0), std::move(mu0)};
    Scaling composed = bar;
    double r = R0;
    trace.levels.push_back(describe_level(0, r, bar, composed, state, initial.plan, p));

    for (int k = 1;; ++k) {
        const double r_next = theta * r;
        if (r_next <= p.c0 * epsilon) {
            trace.stop_reason = StopReason::reached_epsilon_scale;
            break;
        }
        if (k > max_levels) {
            trace.stop_reason = StopReason::max_levels;
            break;
        }
        try {
            OneStepOutcome step = one_step(state, r, theta, epsilon, p);
            composed = compose(step.scaling_hat, composed, p.windows);
            state = std::move(*step.next);
            r = r_next;
            trace.levels.push_back(describe_level(k, r, step.scaling_hat, composed, state, initial.plan, p));
        } catch (const SmallnessError& e) {
            trace.stop_reason = StopReason::smallness_violated;
            trace.stop_detail = e.what();
            break;
        } catch (const AdmissibilityError& e) {
            trace.stop_reason = StopReason::admissibility_exit;
            trace.stop_detail = e.what();
            break;
        } catch (const DomainError& e) {
            trace.stop_reason = StopReason::admissibility_exit;
            trace.stop_detail = e.what();
            break;
        }
    }
    return trace;
}

DefectReport quasimin_defect(const Coupling& pi, double R, double Lambda, double epsilon) {
    if (!(R > 0.0)) throw DomainError("quasimin_defect: R must be positive");
    if (!(Lambda > 1.0)) throw DomainError("quasimin_defect: Lambda must exceed 1");
    DefectReport rep;
    rep.R = R;
    rep.Lambda = Lambda;
    rep.lhs = region_moments(pi, Region::hash(R)).second_moment;
    rep.mass_hash_LR = region_moments(pi, Region::hash(Lambda * R)).mass;
    rep.eps2_mass = epsilon * epsilon * rep.mass_hash_LR;
    rep.energy_2R = region_moments(pi, Region::hash(2.0 * R)).second_moment;

    const Coupling local = restrict(pi, Region::pr(R, Lambda));
    rep.mass_PR = local.total_mass();
    if (!(rep.mass_PR > 0.0)) {
        rep = DefectReport{R, Lambda};
        rep.degenerate = true;
        return rep;
    }
    AtomicMeasure lam_bar{pi.source.points, local.row_sums() / rep.mass_PR};
    AtomicMeasure mu_bar{pi.target.points, local.col_sums() / rep.mass_PR};
    // Row/column sums of the same entries agree only to rounding.
    mu_bar.weights *= lam_bar.total_mass() / mu_bar.total_mass();
    const ExactOTResult ot = exact_ot(lam_bar, mu_bar);
    rep.ot_bar = ot.cost;
    rep.ot_certified = ot.certified;
    rep.competitor_cost = rep.mass_PR * ot.cost;
    rep.defect = rep.lhs - rep.competitor_cost;
    return rep;
}

std::vector<SoftLemmaRow> soft_lemma_check(const Coupling& pi, double R, const std::vector<double>& rho_ladder,
                                           double Delta_R, double margin) {
    if (!(R > 0.0)) throw DomainError("soft_lemma_check: R must be positive");
    const int d = pi.dim();
    const double energy = local_energy(pi, R);
    const double inner = R - margin;
    std::vector<SoftLemmaRow> rows;
    for (double rho : rho_ladder) {
        if (!(rho > 0.0)) throw DomainError("soft_lemma_check: rho must be positive");
        SoftLemmaRow row;
        row.rho = rho;
        row.mass = inner > 0.0 ? region_moments(pi, Region::long_trajectories(inner, rho)).mass : 0.0;
        row.bound = Delta_R * std::pow(R, d) / std::pow(rho, d + 2);
        row.fitted_constant = row.bound > 0.0 ? row.mass / row.bound : 0.0;
        row.lower_ok = energy < std::pow(rho, d + 2);
        row.upper_ok = std::pow(rho, d + 2) < std::pow(R, d + 2);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace eotlab
