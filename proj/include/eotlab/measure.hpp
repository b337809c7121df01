#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "eotlab/numeric.hpp"

namespace eotlab {

/// Regular grid in dimension 1 or 2 with uniform spacing `h`.
///
/// Grid point with multi-index i sits at x = (i - origin_offset) * h, so
/// `origin_offset` holds the (possibly fractional) grid coordinates of the
/// physical origin. Flat indices are row-major: the last axis varies fastest.
struct GridSpec {
    int dim = 1;
    std::vector<double> origin_offset;
    double h = 1.0;
    std::vector<std::size_t> extent;

    /// Grid with n points per axis spanning [lo, hi] on every axis.
    [[nodiscard]] static GridSpec interval(int dim, std::size_t n, double lo, double hi);

    /// Throws DomainError unless dim is 1 or 2, h > 0, extent >= 2 per axis and
    /// the origin lies in the convex hull of the grid points.
    void validate() const;

    [[nodiscard]] std::size_t size() const noexcept;
    [[nodiscard]] Vec point(std::size_t flat) const;
    [[nodiscard]] std::vector<std::size_t> multi_index(std::size_t flat) const;
    [[nodiscard]] std::size_t flat_index(std::span<const std::size_t> idx) const;
    [[nodiscard]] bool contains_in_hull(const Vec& x) const;
    [[nodiscard]] double cell_volume() const noexcept;
    /// Physical position of the grid corner with the smallest coordinates.
    [[nodiscard]] Vec lower_corner() const;
    [[nodiscard]] Vec upper_corner() const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Finite list of weighted points; the common currency of pushforwards and
/// couplings. Points are stored column-wise (dim x n).
struct AtomicMeasure {
    Mat points;
    Vec weights;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(points.rows()); }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(weights.size()); }
    [[nodiscard]] double total_mass() const;
};

/// Nonnegative weights on a regular grid: weight = density * h^dim.
class GridMeasure {
public:
    GridMeasure(GridSpec spec, std::vector<double> weights, double alpha);

    [[nodiscard]] const GridSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] int dim() const noexcept { return spec_.dim; }
    [[nodiscard]] std::size_t size() const noexcept { return weights_.size(); }
    [[nodiscard]] double total_mass() const;
    [[nodiscard]] double density(std::size_t flat) const noexcept {
        return weights_[flat] / spec_.cell_volume();
    }

    [[nodiscard]] AtomicMeasure atoms() const;
    /// Same grid with every weight multiplied by `factor` (> 0).
    [[nodiscard]] GridMeasure scaled(double factor) const;
    /// Probability-normalized copy.
    [[nodiscard]] GridMeasure normalized() const;

private:
    GridSpec spec_;
    std::vector<double> weights_;
    double alpha_;
};

/// Ball average of the density: mass of B_r(x) divided by the summed cell
/// volume of the grid points inside it.
[[nodiscard]] double density_at(const GridMeasure& m, const Vec& x, double r_avg);

/// Exact discrete Hölder seminorm [m]_{alpha,R} over grid points in B_R(0).
[[nodiscard]] double holder_seminorm(const GridMeasure& m, double radius);

struct DataTermReport {
    double R = 0.0;
    double holder_lambda = 0.0;
    double holder_mu = 0.0;
    double origin_gap = 0.0;
    double D = 0.0;
};

/// D(R) = R^{2 alpha} ([lam]^2 + [mu]^2) + |lam(0) - mu(0)|^2.
[[nodiscard]] DataTermReport data_term(const GridMeasure& lam, const GridMeasure& mu, double radius,
                                       double r_avg);

/// Default ball-averaging radius: three grid spacings.
[[nodiscard]] inline double default_r_avg(const GridMeasure& m) noexcept { return 3.0 * m.spec().h; }

using DensityFn = std::function<double(const Vec&)>;

/// Samples a density at grid points: weight = density(x) * h^dim.
[[nodiscard]] GridMeasure sample_density(const GridSpec& spec, const DensityFn& density, double alpha);

}  // namespace eotlab
