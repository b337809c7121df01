#include "eotlab/numeric.hpp"

#include "eotlab/errors.hpp"

namespace eotlab {

double compensated_total(std::span<const double> values) noexcept {
    CompensatedSum acc;
    for (double v : values) acc.add(v);
    return acc.value();
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("fit_line: size mismatch");
    if (x.size() < 2) throw DomainError("fit_line: need at least two points");
    const auto n = static_cast<double>(x.size());
    const double mx = compensated_total(x) / n;
    const double my = compensated_total(y) / n;
    CompensatedSum sxx;
    CompensatedSum sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - mx) * (x[i] - mx));
        sxy.add((x[i] - mx) * (y[i] - my));
    }
    if (sxx.value() <= 0.0) throw DomainError("fit_line: abscissae are all equal");
    LineFit fit;
    fit.slope = sxy.value() / sxx.value();
    fit.intercept = my - fit.slope * mx;
    fit.points = x.size();
    return fit;
}

Mat symmetric_expm(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
    const Vec ev = eig.eigenvalues().array().exp();
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace eotlab
