#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "eotlab/errors.hpp"
#include "eotlab/solvers.hpp"

namespace eotlab {

void require_equal_mass(double lam_mass, double mu_mass, const char* who) {
    const double scale = std::max(std::abs(lam_mass), std::abs(mu_mass));
    const double gap = std::abs(lam_mass - mu_mass) / scale;
    if (!(gap <= 1e-12)) {
        std::ostringstream msg;
        msg << who << ": marginal masses differ (relative gap " << gap << ")";
        throw InputError(msg.str());
    }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

PlanMatrix cost_matrix(const Mat& xs, const Mat& ys) {
    PlanMatrix c(xs.cols(), ys.cols());
    for (Eigen::Index i = 0; i < xs.cols(); ++i) {
        for (Eigen::Index j = 0; j < ys.cols(); ++j) c(i, j) = (xs.col(i) - ys.col(j)).squaredNorm();
    }
    return c;
}

Vec safe_log(const Vec& w) {
    Vec out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? std::log(w[i]) : kNegInf;
    return out;
}

// f_i = -e2 * log sum_j exp(log_b_j + (g_j - C_ij) / e2)
void update_rows(const PlanMatrix& C, const Vec& g, const Vec& log_b, double e2, Vec& f) {
    const Eigen::Index n = C.rows();
    const Eigen::Index m = C.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
        double top = kNegInf;
        for (Eigen::Index j = 0; j < m; ++j) top = std::max(top, log_b[j] + (g[j] - C(i, j)) / e2);
        double s = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) s += std::exp(log_b[j] + (g[j] - C(i, j)) / e2 - top);
        f[i] = -e2 * (top + std::log(s));
    }
}

// g_j = -e2 * log sum_i exp(log_a_i + (f_i - C_ij) / e2), swept row-wise.
void update_cols(const PlanMatrix& C, const Vec& f, const Vec& log_a, double e2, Vec& g) {
    const Eigen::Index n = C.rows();
    const Eigen::Index m = C.cols();
    Vec top = Vec::Constant(m, kNegInf);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (log_a[i] == kNegInf) continue;
        for (Eigen::Index j = 0; j < m; ++j) top[j] = std::max(top[j], log_a[i] + (f[i] - C(i, j)) / e2);
    }
    Vec s = Vec::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (log_a[i] == kNegInf) continue;
        for (Eigen::Index j = 0; j < m; ++j) s[j] += std::exp(log_a[i] + (f[i] - C(i, j)) / e2 - top[j]);
    }
    for (Eigen::Index j = 0; j < m; ++j) g[j] = -e2 * (top[j] + std::log(s[j]));
}

double tv_error(const Vec& got, const Vec& want) {
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < got.size(); ++i) acc.add(std::abs(got[i] - want[i]));
    return acc.value();
}

struct StageOutcome {
    int iterations = 0;
    double error = INFINITY;
};

// Marginal error of the plan (f, g) on the side whose exact update is `next`.
double side_error(const Vec& w, const Vec& cur, const Vec& next, double e2) {
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) acc.add(w[i] * std::abs(std::expm1((cur[i] - next[i]) / e2)));
    }
    return acc.value();
}

void recenter(const Vec& a, Vec& f, Vec& g) {
    CompensatedSum mean;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (a[i] > 0.0) {
            mean.add(f[i]);
            ++count;
        }
    }
    const double shift = mean.value() / static_cast<double>(std::max<Eigen::Index>(count, 1));
    f.array() -= shift;
    g.array() += shift;
}

// Sinkhorn sweeps at fixed e2 until the row error of (f, g) drops below tol,
// with g an exact column update of f on return.
//
// Over-relaxation: once the contraction rate rho of plain sweeps is stable
// over two windows, omega = 2 / (1 + sqrt(1 - rho)) is used for both halves.
// A growing error switches relaxation off for the rest of the stage.
StageOutcome run_stage(const PlanMatrix& C, const Vec& a, const Vec& b, const Vec& log_a, const Vec& log_b,
                       double e2, double tol, int max_iter, int every, bool overrelax, Vec& f, Vec& g,
                       std::vector<double>* history) {
    Vec f_next(f.size());
    Vec g_next(g.size());
    update_cols(C, f, log_a, e2, g);
    double omega = 1.0;
    bool relax_allowed = overrelax;
    double prev_rate = -1.0;
    double window_start = INFINITY;
    int relax_start_iter = 0;
    double relax_start_error = INFINITY;
    StageOutcome out;
    for (int iter = 1;; ++iter) {
        update_rows(C, g, log_b, e2, f_next);
        out.error = side_error(a, f, f_next, e2);
        if (omega != 1.0 && out.error <= tol) {
            // Columns are not exact under relaxation: settle them first.
            update_cols(C, f, log_a, e2, g);
            update_rows(C, g, log_b, e2, f_next);
            out.error = side_error(a, f, f_next, e2);
        }
        out.iterations = iter;
        if (history != nullptr && iter % every == 0) history->push_back(out.error);
        if (out.error <= tol) return out;
        if (iter >= max_iter) break;

        if (omega == 1.0) {
            f.swap(f_next);
            update_cols(C, f, log_a, e2, g);
        } else {
            f += omega * (f_next - f);
            update_cols(C, f, log_a, e2, g_next);
            g += omega * (g_next - g);
        }
        if (iter % every != 0) continue;
        recenter(a, f, g);
        if (relax_allowed) {
            if (omega != 1.0) {
                // SOR transients can raise the error for a while; give up only on
                // blow-up or when a long window brought no progress.
                const bool blown = out.error > 100.0 * relax_start_error;
                const bool stalled = iter - relax_start_iter >= 50 * every && out.error >= relax_start_error;
                if (blown || stalled) {
                    omega = 1.0;
                    relax_allowed = false;
                }
            } else if (iter >= 10 * every && std::isfinite(window_start) && out.error < window_start &&
                       out.error > 0.0) {
                const double rate = std::pow(out.error / window_start, 1.0 / every);
                // Two consecutive windows must agree on 1 - rho to 10%.
                if (prev_rate > 0.0 && std::abs(rate - prev_rate) <= 0.1 * (1.0 - rate) && rate > 0.5) {
                    omega = std::min(1.98, 2.0 / (1.0 + std::sqrt(1.0 - rate)));
                    relax_start_iter = iter;
                    relax_start_error = out.error;
                }
                prev_rate = rate;
            }
        }
        window_start = out.error;
    }
    if (omega != 1.0) update_cols(C, f, log_a, e2, g);
    (void)b;
    return out;
}

}  // namespace

SinkhornResult sinkhorn(const AtomicMeasure& lam, const AtomicMeasure& mu, const SinkhornOptions& opt) {
    if (lam.dim() != mu.dim()) throw InputError("sinkhorn: dimension mismatch");
    if (!(opt.epsilon > 0.0)) throw DomainError("sinkhorn: epsilon must be positive");
    if (opt.max_iter < 1) throw DomainError("sinkhorn: max_iter must be >= 1");
    const double mass_l = lam.total_mass();
    const double mass_m = mu.total_mass();
    require_equal_mass(mass_l, mass_m, "sinkhorn");

    const double e2 = opt.epsilon * opt.epsilon;
    const Vec a = lam.weights / mass_l;
    const Vec b = mu.weights / mass_m;
    const Vec log_a = safe_log(a);
    const Vec log_b = safe_log(b);
    const PlanMatrix C = cost_matrix(lam.points, mu.points);
    const Eigen::Index n = C.rows();
    const Eigen::Index m = C.cols();
    const int every = std::max(1, opt.stabilize_every);

    SinkhornResult res;
    res.epsilon = opt.epsilon;
    res.mass = mass_l;
    Vec f = Vec::Zero(n);
    Vec g = Vec::Zero(m);
    update_rows(C, g, log_b, 1.0, f);

    // Epsilon scaling: solve coarsely along a halving ladder from the cost
    // diameter down to the target, warm-starting the potentials.
    std::vector<double> ladder;
    if (opt.epsilon_scaling) {
        const double diameter = std::sqrt(std::max(C.maxCoeff(), 0.0));
        for (double e = 0.5 * diameter; e > 2.0 * opt.epsilon; e *= 0.5) ladder.push_back(e);
    }
    ladder.push_back(opt.epsilon);

    StageOutcome last;
    int used = 0;
    for (std::size_t k = 0; k < ladder.size(); ++k) {
        const bool final_stage = k + 1 == ladder.size();
        const double stage_tol = final_stage ? opt.tol : std::max(opt.tol, 1e-3);
        const int budget = std::max(1, opt.max_iter - used);
        last = run_stage(C, a, b, log_a, log_b, ladder[k] * ladder[k], stage_tol, budget, every,
                         opt.overrelax, f, g, final_stage ? &res.error_history : nullptr);
        used += last.iterations;
        if (used >= opt.max_iter && !final_stage) {
            // Out of budget before reaching the target epsilon: finish with one sweep there.
            last = run_stage(C, a, b, log_a, log_b, e2, opt.tol, 1, every, false, f, g, &res.error_history);
            used += last.iterations;
            break;
        }
    }
    res.iterations = used;
    res.converged = last.error <= opt.tol;

    // Potentials for the unnormalized marginals absorb the 1/mass factor.
    const double log_mass = std::log(mass_l);
    res.f = f.array() - e2 * log_mass;
    res.g = g;
    res.plan = Coupling{lam, mu, PlanMatrix::Zero(n, m)};
    CompensatedSum cost;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (log_a[i] == kNegInf) continue;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (log_b[j] == kNegInf) continue;
            const double v = mass_l * std::exp((f[i] + g[j] - C(i, j)) / e2 + log_a[i] + log_b[j]);
            res.plan.mass(i, j) = v;
            cost.add(C(i, j) * v);
        }
    }
    res.primal_cost = cost.value();
    const Vec rows = res.plan.row_sums();
    const Vec cols = res.plan.col_sums();
    res.marg_err = std::max(tv_error(rows, lam.weights), tv_error(cols, mu.weights)) / mass_l;

    CompensatedSum dual;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (rows[i] > 0.0) dual.add(res.f[i] * rows[i]);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        if (cols[j] > 0.0) dual.add(res.g[j] * cols[j]);
    }
    res.entropy = (dual.value() - res.primal_cost) / e2;
    return res;
}

SinkhornResult sinkhorn(const GridMeasure& lam, const GridMeasure& mu, const SinkhornOptions& opt) {
    return sinkhorn(lam.atoms(), mu.atoms(), opt);
}

double entropic_cost(const SinkhornResult& res) { return res.primal_cost + res.epsilon * res.epsilon * res.entropy; }

double direct_entropy(const Coupling& pi) {
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
            const double p = pi.mass(i, j);
            if (p > 0.0) acc.add(p * (std::log(p) - std::log(pi.source.weights[i]) - std::log(pi.target.weights[j])));
        }
    }
    return acc.value();
}

double gibbs_identity_check(const SinkhornResult& res, int n_samples, std::uint64_t seed) {
    const PlanMatrix& P = res.plan.mass;
    const Mat& xs = res.plan.source.points;
    const Mat& ys = res.plan.target.points;
    const double e2 = res.epsilon * res.epsilon;
    constexpr double kTiny = std::numeric_limits<double>::min();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick_i(0, P.rows() - 1);
    std::uniform_int_distribution<Eigen::Index> pick_j(0, P.cols() - 1);
    auto cost = [&](Eigen::Index i, Eigen::Index j) { return (xs.col(i) - ys.col(j)).squaredNorm(); };
    double worst = 0.0;
    int taken = 0;
    // Resampling budget guards against plans that are mostly zero.
    const long budget = 1000L * std::max(n_samples, 1);
    for (long tries = 0; taken < n_samples && tries < budget; ++tries) {
        const Eigen::Index i = pick_i(rng);
        const Eigen::Index k = pick_i(rng);
        const Eigen::Index j = pick_j(rng);
        const Eigen::Index l = pick_j(rng);
        // Subnormal entries have lost significant bits; their logarithms are not comparable.
        if (P(i, j) < kTiny || P(k, l) < kTiny || P(i, l) < kTiny || P(k, j) < kTiny) continue;
        const double lhs = std::log(P(i, j)) + std::log(P(k, l)) - std::log(P(i, l)) - std::log(P(k, j));
        const double rhs = -(cost(i, j) + cost(k, l) - cost(k, j) - cost(i, l)) / e2;
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
        ++taken;
    }
    if (taken == 0) throw DomainError("gibbs_identity_check: no quadruple with normal positive entries found");
    return worst;
}

}  // namespace eotlab
