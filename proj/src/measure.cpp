#include "eotlab/measure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eotlab/errors.hpp"

namespace eotlab {

GridSpec GridSpec::interval(int dim, std::size_t n, double lo, double hi) {
    if (n < 2 || !(hi > lo)) throw DomainError("GridSpec::interval: need n >= 2 and hi > lo");
    GridSpec spec;
    spec.dim = dim;
    spec.h = (hi - lo) / static_cast<double>(n - 1);
    spec.origin_offset.assign(static_cast<std::size_t>(dim), -lo / spec.h);
    spec.extent.assign(static_cast<std::size_t>(dim), n);
    spec.validate();
    return spec;
}

void GridSpec::validate() const {
    if (dim != 1 && dim != 2) throw DomainError("GridSpec: dim must be 1 or 2");
    if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("GridSpec: spacing must be positive");
    if (origin_offset.size() != static_cast<std::size_t>(dim) || extent.size() != static_cast<std::size_t>(dim)) {
        throw DomainError("GridSpec: origin_offset/extent length must equal dim");
    }
    for (int k = 0; k < dim; ++k) {
        if (extent[k] < 2) throw DomainError("GridSpec: extent must be >= 2 per axis");
        const double o = origin_offset[k];
        if (!(o >= -1e-9 && o <= static_cast<double>(extent[k] - 1) + 1e-9)) {
            throw DomainError("GridSpec: origin outside grid hull");
        }
    }
}

std::size_t GridSpec::size() const noexcept {
    std::size_t n = 1;
    for (auto e : extent) n *= e;
    return n;
}

std::vector<std::size_t> GridSpec::multi_index(std::size_t flat) const {
    std::vector<std::size_t> idx(static_cast<std::size_t>(dim));
    for (int k = dim - 1; k >= 0; --k) {
        idx[k] = flat % extent[k];
        flat /= extent[k];
    }
    return idx;
}

std::size_t GridSpec::flat_index(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (int k = 0; k < dim; ++k) flat = flat * extent[k] + idx[k];
    return flat;
}

Vec GridSpec::point(std::size_t flat) const {
    Vec x(dim);
    for (int k = dim - 1; k >= 0; --k) {
        const auto i = flat % extent[k];
        flat /= extent[k];
        x[k] = (static_cast<double>(i) - origin_offset[k]) * h;
    }
    return x;
}

Vec GridSpec::lower_corner() const {
    Vec x(dim);
    for (int k = 0; k < dim; ++k) x[k] = -origin_offset[k] * h;
    return x;
}

Vec GridSpec::upper_corner() const {
    Vec x(dim);
    for (int k = 0; k < dim; ++k) x[k] = (static_cast<double>(extent[k] - 1) - origin_offset[k]) * h;
    return x;
}

bool GridSpec::contains_in_hull(const Vec& x) const {
    if (x.size() != dim) return false;
    const Vec lo = lower_corner();
    const Vec hi = upper_corner();
    const double slack = 1e-12 * h;
    for (int k = 0; k < dim; ++k) {
        if (x[k] < lo[k] - slack || x[k] > hi[k] + slack) return false;
    }
    return true;
}

double GridSpec::cell_volume() const noexcept { return dim == 1 ? h : h * h; }

double AtomicMeasure::total_mass() const {
    return compensated_total(std::span<const double>(weights.data(), static_cast<std::size_t>(weights.size())));
}

GridMeasure::GridMeasure(GridSpec spec, std::vector<double> weights, double alpha)
    : spec_(std::move(spec)), weights_(std::move(weights)), alpha_(alpha) {
    spec_.validate();
    if (weights_.size() != spec_.size()) {
        std::ostringstream msg;
        msg << "GridMeasure: expected " << spec_.size() << " weights, got " << weights_.size();
        throw InputError(msg.str());
    }
    if (!(alpha_ > 0.0 && alpha_ < 1.0)) throw DomainError("GridMeasure: alpha must lie in (0,1)");
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("GridMeasure: weights must be finite and >= 0");
    }
    if (!(total_mass() > 0.0)) throw DomainError("GridMeasure: total mass must be positive");
}

double GridMeasure::total_mass() const { return compensated_total(weights_); }

AtomicMeasure GridMeasure::atoms() const {
    AtomicMeasure a;
    a.points.resize(spec_.dim, static_cast<Eigen::Index>(size()));
    a.weights.resize(static_cast<Eigen::Index>(size()));
    for (std::size_t p = 0; p < size(); ++p) {
        a.points.col(static_cast<Eigen::Index>(p)) = spec_.point(p);
        a.weights[static_cast<Eigen::Index>(p)] = weights_[p];
    }
    return a;
}

GridMeasure GridMeasure::scaled(double factor) const {
    if (!(factor > 0.0)) throw DomainError("GridMeasure::scaled: factor must be positive");
    std::vector<double> w(weights_);
    for (double& v : w) v *= factor;
    return {spec_, std::move(w), alpha_};
}

GridMeasure GridMeasure::normalized() const { return scaled(1.0 / total_mass()); }

namespace {

// Inclusive index window along one axis covering [c - r, c + r].
std::pair<std::size_t, std::size_t> axis_window(const GridSpec& s, int k, double c, double r) {
    const double lo = std::ceil((c - r) / s.h + s.origin_offset[k] - 1e-9);
    const double hi = std::floor((c + r) / s.h + s.origin_offset[k] + 1e-9);
    const double top = static_cast<double>(s.extent[k] - 1);
    const double a = std::clamp(lo, 0.0, top);
    const double b = std::clamp(hi, 0.0, top);
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

// Visits every grid point inside B_r(center) in row-major order.
template <typename F>
void for_each_in_ball(const GridSpec& s, const Vec& center, double r, F&& f) {
    if (s.dim == 1) {
        auto [a, b] = axis_window(s, 0, center[0], r);
        for (std::size_t i = a; i <= b; ++i) {
            const Vec x = s.point(i);
            if (within_radius((x - center).norm(), r)) f(i, x);
        }
        return;
    }
    auto [a0, b0] = axis_window(s, 0, center[0], r);
    auto [a1, b1] = axis_window(s, 1, center[1], r);
    for (std::size_t i = a0; i <= b0; ++i) {
        for (std::size_t j = a1; j <= b1; ++j) {
            const std::size_t flat = i * s.extent[1] + j;
            const Vec x = s.point(flat);
            if (within_radius((x - center).norm(), r)) f(flat, x);
        }
    }
}

}  // namespace

double density_at(const GridMeasure& m, const Vec& x, double r_avg) {
    const GridSpec& s = m.spec();
    if (x.size() != s.dim) throw DomainError("density_at: point dimension mismatch");
    if (!s.contains_in_hull(x)) throw DomainError("density_at: point outside grid hull");
    if (!(r_avg >= s.h * (1.0 - 1e-12))) throw DomainError("density_at: r_avg must be >= h");
    CompensatedSum mass;
    std::size_t count = 0;
    for_each_in_ball(s, x, r_avg, [&](std::size_t p, const Vec&) {
        mass.add(m.weights()[p]);
        ++count;
    });
    if (count == 0) throw DomainError("density_at: averaging ball contains no grid points");
    return mass.value() / (static_cast<double>(count) * s.cell_volume());
}

double holder_seminorm(const GridMeasure& m, double radius) {
    if (!(radius > 0.0)) throw DomainError("holder_seminorm: radius must be positive");
    const GridSpec& s = m.spec();
    std::vector<Vec> pts;
    std::vector<double> rho;
    for_each_in_ball(s, Vec::Zero(s.dim), radius, [&](std::size_t p, const Vec& x) {
        pts.push_back(x);
        rho.push_back(m.density(p));
    });
    if (pts.size() < 2) throw DomainError("holder_seminorm: ball contains fewer than two grid points");
    const double alpha = m.alpha();
    double best = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double diff = std::abs(rho[i] - rho[j]);
            if (diff == 0.0) continue;
            const double q = diff / std::pow((pts[i] - pts[j]).norm(), alpha);
            best = std::max(best, q);
        }
    }
    return best;
}

DataTermReport data_term(const GridMeasure& lam, const GridMeasure& mu, double radius, double r_avg) {
    if (lam.dim() != mu.dim()) throw InputError("data_term: dimension mismatch");
    if (lam.alpha() != mu.alpha()) throw InputError("data_term: Hölder exponents differ");
    DataTermReport rep;
    rep.R = radius;
    rep.holder_lambda = holder_seminorm(lam, radius);
    rep.holder_mu = holder_seminorm(mu, radius);
    const Vec origin = Vec::Zero(lam.dim());
    rep.origin_gap = std::abs(density_at(lam, origin, r_avg) - density_at(mu, origin, r_avg));
    const double scale = std::pow(radius, 2.0 * lam.alpha());
    rep.D = scale * (rep.holder_lambda * rep.holder_lambda + rep.holder_mu * rep.holder_mu) +
            rep.origin_gap * rep.origin_gap;
    return rep;
}

GridMeasure sample_density(const GridSpec& spec, const DensityFn& density, double alpha) {
    spec.validate();
    std::vector<double> w(spec.size());
    const double vol = spec.cell_volume();
    for (std::size_t p = 0; p < w.size(); ++p) w[p] = density(spec.point(p)) * vol;
    return {spec, std::move(w), alpha};
}

}  // namespace eotlab
