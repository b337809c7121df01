#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "eotlab/errors.hpp"
#include "eotlab/solvers.hpp"

namespace eotlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Eigen::Index> support_of(const Vec& w) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) s.push_back(i);
    }
    return s;
}

// Transportation problem on the supports, solved by successive shortest
// paths. Node ids: sources 0..n-1, sinks n..n+m-1. Reduced cost of an arc
// u->v is c(u,v) - pot(u) + pot(v) and stays nonnegative on residual arcs.
class TransportSolver {
public:
    TransportSolver(Mat cost, Vec supply, Vec demand)
        : c_(std::move(cost)), excess_(std::move(supply)), deficit_(std::move(demand)),
          n_(c_.rows()), m_(c_.cols()), flow_(Mat::Zero(n_, m_)), pot_(Vec::Zero(n_ + m_)) {}

    void run() {
        const Eigen::Index N = n_ + m_;
        std::vector<double> dist(static_cast<std::size_t>(N));
        std::vector<Eigen::Index> pred(static_cast<std::size_t>(N));
        std::vector<char> done(static_cast<std::size_t>(N));
        while (has_excess() && has_deficit()) {
            std::fill(dist.begin(), dist.end(), kInf);
            std::fill(pred.begin(), pred.end(), -1);
            std::fill(done.begin(), done.end(), 0);
            for (Eigen::Index i = 0; i < n_; ++i) {
                if (excess_[i] > 0.0) dist[static_cast<std::size_t>(i)] = 0.0;
            }
            Eigen::Index target = -1;
            for (;;) {
                Eigen::Index v = -1;
                double best = kInf;
                for (Eigen::Index u = 0; u < N; ++u) {
                    const auto su = static_cast<std::size_t>(u);
                    if (!done[su] && dist[su] < best) {
                        best = dist[su];
                        v = u;
                    }
                }
                if (v < 0) break;
                const auto sv = static_cast<std::size_t>(v);
                if (v >= n_ && deficit_[v - n_] > 0.0) {
                    target = v;
                    break;
                }
                done[sv] = 1;
                if (v < n_) {
                    for (Eigen::Index j = 0; j < m_; ++j) {
                        const auto sj = static_cast<std::size_t>(n_ + j);
                        if (done[sj]) continue;
                        const double rc = std::max(0.0, c_(v, j) - pot_[v] + pot_[n_ + j]);
                        if (dist[sv] + rc < dist[sj]) {
                            dist[sj] = dist[sv] + rc;
                            pred[sj] = v;
                        }
                    }
                } else {
                    const Eigen::Index j = v - n_;
                    for (Eigen::Index i = 0; i < n_; ++i) {
                        const auto si = static_cast<std::size_t>(i);
                        if (done[si] || flow_(i, j) <= 0.0) continue;
                        const double rc = std::max(0.0, -c_(i, j) - pot_[v] + pot_[i]);
                        if (dist[sv] + rc < dist[si]) {
                            dist[si] = dist[sv] + rc;
                            pred[si] = v;
                        }
                    }
                }
            }
            if (target < 0) throw ConsistencyError("exact_ot: no augmenting path");
            const double reach = dist[static_cast<std::size_t>(target)];
            for (Eigen::Index u = 0; u < N; ++u) pot_[u] -= std::min(dist[static_cast<std::size_t>(u)], reach);
            augment(target, pred);
        }
    }

    [[nodiscard]] const Mat& flow() const { return flow_; }
    // Dual variables with u_i + v_j <= c_ij.
    [[nodiscard]] Vec u() const { return pot_.head(n_); }
    [[nodiscard]] Vec v() const { return -pot_.tail(m_); }
    [[nodiscard]] double leftover() const { return std::max(excess_.sum(), deficit_.sum()); }

private:
    bool has_excess() const { return (excess_.array() > 0.0).any(); }
    bool has_deficit() const { return (deficit_.array() > 0.0).any(); }

    void augment(Eigen::Index target, const std::vector<Eigen::Index>& pred) {
        // Bottleneck over the path: sink deficit, source excess, backward flows.
        double delta = deficit_[target - n_];
        Eigen::Index node = target;
        while (pred[static_cast<std::size_t>(node)] >= 0) {
            const Eigen::Index prev = pred[static_cast<std::size_t>(node)];
            if (prev >= n_) delta = std::min(delta, flow_(node, prev - n_));  // backward arc sink->source
            node = prev;
        }
        const Eigen::Index source = node;
        delta = std::min(delta, excess_[source]);

        node = target;
        while (pred[static_cast<std::size_t>(node)] >= 0) {
            const Eigen::Index prev = pred[static_cast<std::size_t>(node)];
            if (prev < n_) {
                flow_(prev, node - n_) += delta;
            } else {
                double& f = flow_(node, prev - n_);
                f = (f == delta) ? 0.0 : f - delta;
            }
            node = prev;
        }
        excess_[source] = (excess_[source] == delta) ? 0.0 : excess_[source] - delta;
        double& def = deficit_[target - n_];
        def = (def == delta) ? 0.0 : def - delta;
    }

    Mat c_;
    Vec excess_;
    Vec deficit_;
    Eigen::Index n_;
    Eigen::Index m_;
    Mat flow_;
    Vec pot_;
};

}  // namespace

ExactOTResult exact_ot(const AtomicMeasure& lam, const AtomicMeasure& mu) {
    if (lam.dim() != mu.dim()) throw InputError("exact_ot: dimension mismatch");
    const double mass = lam.total_mass();
    require_equal_mass(mass, mu.total_mass(), "exact_ot");
    const auto rows = support_of(lam.weights);
    const auto cols = support_of(mu.weights);
    if (rows.size() > kMaxExactSupport || cols.size() > kMaxExactSupport) {
        std::ostringstream msg;
        msg << "exact_ot: support exceeds " << kMaxExactSupport << " points";
        throw InputError(msg.str());
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(cols.size());
    Mat cost(n, m);
    Vec supply(n);
    Vec demand(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        supply[i] = lam.weights[rows[i]];
        for (Eigen::Index j = 0; j < m; ++j) cost(i, j) = (lam.points.col(rows[i]) - mu.points.col(cols[j])).squaredNorm();
    }
    for (Eigen::Index j = 0; j < m; ++j) demand[j] = mu.weights[cols[j]];

    TransportSolver solver(cost, supply, demand);
    solver.run();
    if (solver.leftover() > 1e-9 * mass) throw ConsistencyError("exact_ot: unbalanced residual after solve");

    ExactOTResult res;
    res.plan = Coupling{lam, mu, PlanMatrix::Zero(lam.size(), mu.size())};
    res.u = Vec::Zero(lam.weights.size());
    res.v = Vec::Zero(mu.weights.size());
    const Vec u = solver.u();
    const Vec v = solver.v();
    CompensatedSum primal;
    const double cmax = std::max(cost.size() > 0 ? cost.maxCoeff() : 0.0, 0.0);
    double violation = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double f = solver.flow()(i, j);
            res.plan.mass(rows[i], cols[j]) = f;
            primal.add(cost(i, j) * f);
            violation = std::max(violation, u[i] + v[j] - cost(i, j));
        }
    }
    // The dual objective cancels terms of size |u| a + |v| b; rounding is
    // measured against that magnitude.
    CompensatedSum dual;
    CompensatedSum dual_abs;
    for (Eigen::Index i = 0; i < n; ++i) {
        res.u[rows[i]] = u[i];
        dual.add(u[i] * supply[i]);
        dual_abs.add(std::abs(u[i]) * supply[i]);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        res.v[cols[j]] = v[j];
        dual.add(v[j] * demand[j]);
        dual_abs.add(std::abs(v[j]) * demand[j]);
    }
    res.cost = primal.value();
    res.dual_value = dual.value();
    const double scale = std::max({std::abs(res.cost), dual_abs.value(), 1e-12 * mass * cmax, 1e-300});
    res.duality_gap = std::abs(res.cost - res.dual_value) / scale;
    res.dual_violation = violation / std::max(cmax, 1e-300);
    res.certified = res.duality_gap <= 1e-9 && res.dual_violation <= 1e-9;
    return res;
}

ExactOTResult exact_ot(const GridMeasure& lam, const GridMeasure& mu) { return exact_ot(lam.atoms(), mu.atoms()); }

}  // namespace eotlab
