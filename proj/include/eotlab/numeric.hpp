#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include <Eigen/Dense>

namespace eotlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Neumaier-compensated accumulator. Order of add() calls fixes the result.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    CompensatedSum& operator+=(double v) noexcept {
        add(v);
        return *this;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

[[nodiscard]] double compensated_total(std::span<const double> values) noexcept;

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

/// Ordinary least-squares line through (x, y). Needs at least two distinct x.
[[nodiscard]] LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// exp(M) for a symmetric matrix via its eigendecomposition.
[[nodiscard]] Mat symmetric_expm(const Mat& m);

/// True iff radius-R ball membership holds for a point at distance `norm`.
/// Cell-center distances that equal R up to rounding are counted inside.
[[nodiscard]] inline bool within_radius(double norm, double radius) noexcept {
    return norm <= radius + 1e-12 * (1.0 + std::abs(radius));
}

}  // namespace eotlab
