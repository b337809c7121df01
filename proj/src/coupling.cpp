#include "eotlab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "eotlab/errors.hpp"

namespace eotlab {

namespace {

Vec norms_of(const Mat& pts) {
    Vec n(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) n[i] = pts.col(i).norm();
    return n;
}

void require_positive_radius(double R, const char* who) {
    if (!(R > 0.0)) throw DomainError(std::string(who) + ": radius must be positive");
}

// Visits entries of the plan whose pair lies in `region`, row by row.
template <typename F>
void for_each_in_region(const Coupling& pi, const Region& region, F&& f) {
    const Vec nx = norms_of(pi.source.points);
    const Vec ny = norms_of(pi.target.points);
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        const auto x = pi.source.points.col(i);
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
            const double d2 = (x - pi.target.points.col(j)).squaredNorm();
            if (region.contains(nx[i], ny[j], std::sqrt(d2))) f(i, j, d2);
        }
    }
}

}  // namespace

double Coupling::total_mass() const {
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < mass.rows(); ++i) {
        for (Eigen::Index j = 0; j < mass.cols(); ++j) acc.add(mass(i, j));
    }
    return acc.value();
}

Vec Coupling::row_sums() const {
    Vec r(mass.rows());
    for (Eigen::Index i = 0; i < mass.rows(); ++i) {
        CompensatedSum acc;
        for (Eigen::Index j = 0; j < mass.cols(); ++j) acc.add(mass(i, j));
        r[i] = acc.value();
    }
    return r;
}

Vec Coupling::col_sums() const {
    std::vector<CompensatedSum> acc(static_cast<std::size_t>(mass.cols()));
    for (Eigen::Index i = 0; i < mass.rows(); ++i) {
        for (Eigen::Index j = 0; j < mass.cols(); ++j) acc[static_cast<std::size_t>(j)].add(mass(i, j));
    }
    Vec c(mass.cols());
    for (Eigen::Index j = 0; j < mass.cols(); ++j) c[j] = acc[static_cast<std::size_t>(j)].value();
    return c;
}

Coupling Coupling::product(const AtomicMeasure& lam, const AtomicMeasure& mu) {
    if (lam.dim() != mu.dim()) throw InputError("Coupling::product: dimension mismatch");
    Coupling pi{lam, mu, PlanMatrix(lam.size(), mu.size())};
    const double m = lam.total_mass();
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) pi.mass(i, j) = lam.weights[i] * mu.weights[j] / m;
    }
    return pi;
}

Coupling Coupling::diagonal(const AtomicMeasure& lam) {
    Coupling pi{lam, lam, PlanMatrix::Zero(lam.size(), lam.size())};
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) pi.mass(i, i) = lam.weights[i];
    return pi;
}

MarginalReport check_marginals(const Coupling& pi, double tol) {
    MarginalReport rep;
    const double total = std::max(pi.source.total_mass(), pi.target.total_mass());
    auto rel = [total](double got, double want) {
        const double scale = want > 0.0 ? want : total;
        return std::abs(got - want) / scale;
    };
    const Vec r = pi.row_sums();
    const Vec c = pi.col_sums();
    for (Eigen::Index i = 0; i < r.size(); ++i) rep.max_row_err = std::max(rep.max_row_err, rel(r[i], pi.source.weights[i]));
    for (Eigen::Index j = 0; j < c.size(); ++j) rep.max_col_err = std::max(rep.max_col_err, rel(c[j], pi.target.weights[j]));
    bool negative = (pi.mass.array() < 0.0).any();
    rep.pass = !negative && rep.max_row_err <= tol && rep.max_col_err <= tol;
    return rep;
}

Region Region::hash(double R) { return Region(Hash{R}); }
Region Region::pr(double R, double Lambda) { return Region(PR{R, Lambda}); }
Region Region::long_trajectories(double R, double threshold) { return Region(LongTraj{R, threshold}); }
Region Region::ball_pair(double Rx, double Ry) { return Region(Ball2{Rx, Ry}); }
Region Region::complement(Region inner) {
    return Region(Complement{std::make_shared<const Region>(std::move(inner))});
}

bool Region::contains(const Vec& x, const Vec& y) const { return contains(x.norm(), y.norm(), (x - y).norm()); }

bool Region::contains(double nx, double ny, double dxy) const {
    struct Visitor {
        double nx, ny, dxy;
        bool operator()(const Hash& k) const { return within_radius(nx, k.R) || within_radius(ny, k.R); }
        bool operator()(const PR& k) const {
            const double big = k.Lambda * k.R;
            return (within_radius(nx, k.R) && within_radius(ny, big)) ||
                   (within_radius(nx, big) && within_radius(ny, k.R));
        }
        bool operator()(const LongTraj& k) const {
            return (within_radius(nx, k.R) || within_radius(ny, k.R)) && dxy >= k.threshold;
        }
        bool operator()(const Ball2& k) const { return within_radius(nx, k.Rx) && within_radius(ny, k.Ry); }
        bool operator()(const Complement& k) const { return !k.inner->contains(nx, ny, dxy); }
    };
    return std::visit(Visitor{nx, ny, dxy}, kind_);
}

Coupling restrict(const Coupling& pi, const Region& region) {
    Coupling out{pi.source, pi.target, PlanMatrix::Zero(pi.mass.rows(), pi.mass.cols())};
    for_each_in_region(pi, region, [&](Eigen::Index i, Eigen::Index j, double) { out.mass(i, j) = pi.mass(i, j); });
    return out;
}

RegionMoments region_moments(const Coupling& pi, const Region& region) {
    CompensatedSum mass;
    CompensatedSum moment;
    for_each_in_region(pi, region, [&](Eigen::Index i, Eigen::Index j, double d2) {
        const double w = pi.mass(i, j);
        mass.add(w);
        moment.add(d2 * w);
    });
    return {mass.value(), moment.value()};
}

double local_energy(const Coupling& pi, double R) {
    require_positive_radius(R, "local_energy");
    const double m2 = region_moments(pi, Region::hash(R)).second_moment;
    return m2 / std::pow(R, pi.dim() + 2);
}

LongTrajectoryStats long_trajectory_stats(const Coupling& pi, double R, double threshold) {
    require_positive_radius(R, "long_trajectory_stats");
    if (!(threshold >= 0.0)) throw DomainError("long_trajectory_stats: threshold must be >= 0");
    const RegionMoments m = region_moments(pi, Region::long_trajectories(R, threshold));
    const int d = pi.dim();
    return {m.second_moment / std::pow(R, d + 2), m.mass / std::pow(R, d)};
}

double affine_objective(const Coupling& pi, double r, double beta, const Mat& A, const Vec& b) {
    require_positive_radius(r, "affine_objective");
    CompensatedSum acc;
    for_each_in_region(pi, Region::hash(r), [&](Eigen::Index i, Eigen::Index j, double) {
        const Vec res = pi.target.points.col(j) - A * pi.source.points.col(i) - b;
        acc.add(res.squaredNorm() * pi.mass(i, j));
    });
    return acc.value() / std::pow(r, pi.dim() + 2 + 2.0 * beta);
}

AffineFit affine_fit(const Coupling& pi, double r, double beta) {
    require_positive_radius(r, "affine_fit");
    const int d = pi.dim();
    const int p = d + 1;
    // Normal equations for W = [A | b] with regressor z = (x, 1).
    std::vector<CompensatedSum> m(static_cast<std::size_t>(p * p));
    std::vector<CompensatedSum> c(static_cast<std::size_t>(d * p));
    CompensatedSum total;
    for_each_in_region(pi, Region::hash(r), [&](Eigen::Index i, Eigen::Index j, double) {
        const double w = pi.mass(i, j);
        if (w == 0.0) return;
        total.add(w);
        Vec z(p);
        z.head(d) = pi.source.points.col(i);
        z[d] = 1.0;
        const auto y = pi.target.points.col(j);
        for (int a = 0; a < p; ++a) {
            for (int bb = 0; bb < p; ++bb) m[static_cast<std::size_t>(a * p + bb)].add(w * z[a] * z[bb]);
            for (int k = 0; k < d; ++k) c[static_cast<std::size_t>(k * p + a)].add(w * y[k] * z[a]);
        }
    });

    AffineFit fit;
    fit.beta = beta;
    fit.r = r;
    if (!(total.value() > 0.0)) {
        fit.A = Mat::Identity(d, d);
        fit.b = Vec::Zero(d);
        fit.degenerate = true;
        return fit;
    }
    Mat M(p, p);
    Mat C(d, p);
    for (int a = 0; a < p; ++a) {
        for (int bb = 0; bb < p; ++bb) M(a, bb) = m[static_cast<std::size_t>(a * p + bb)].value();
        for (int k = 0; k < d; ++k) C(k, a) = c[static_cast<std::size_t>(k * p + a)].value();
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(M);
    const double top = eig.eigenvalues().maxCoeff();
    const double bottom = eig.eigenvalues().minCoeff();
    if (!(bottom > 1e-12 * top)) {
        M += 1e-12 * std::max(1.0, M.trace() / p) * Mat::Identity(p, p);
        fit.ridge = true;
    }
    const Mat W = M.ldlt().solve(C.transpose()).transpose();
    fit.A = W.leftCols(d);
    fit.b = W.col(d);
    fit.defect = affine_objective(pi, r, beta, fit.A, fit.b);
    return fit;
}

double segment_distance_to_origin(const Vec& x, const Vec& y) {
    const Vec dir = y - x;
    const double len2 = dir.squaredNorm();
    if (len2 == 0.0) return x.norm();
    const double t = std::clamp(-x.dot(dir) / len2, 0.0, 1.0);
    return (x + t * dir).norm();
}

CrossingStats crossing_stats(const Coupling& pi, double R) {
    require_positive_radius(R, "crossing_stats");
    CompensatedSum energy;
    CompensatedSum mass;
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
        const Vec x = pi.source.points.col(i);
        for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
            const double w = pi.mass(i, j);
            if (w == 0.0) continue;
            const Vec y = pi.target.points.col(j);
            const double far = std::max(x.norm(), y.norm());
            if (segment_distance_to_origin(x, y) <= R && R <= far) {
                energy.add((x - y).squaredNorm() * w);
                mass.add(w);
            }
        }
    }
    return {energy.value(), mass.value()};
}

}  // namespace eotlab
