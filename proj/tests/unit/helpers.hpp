#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "eotlab/coupling.hpp"
#include "eotlab/measure.hpp"

namespace testing {

using eotlab::AtomicMeasure;
using eotlab::GridMeasure;
using eotlab::GridSpec;
using eotlab::Mat;
using eotlab::Vec;

inline GridMeasure uniform_grid(std::size_t n, double lo = -1.0, double hi = 1.0, int dim = 1, double alpha = 0.5) {
    return eotlab::sample_density(GridSpec::interval(dim, n, lo, hi), [](const Vec&) { return 1.0; }, alpha);
}

inline AtomicMeasure atoms_1d(const std::vector<double>& xs, const std::vector<double>& ws) {
    AtomicMeasure m;
    m.points.resize(1, static_cast<Eigen::Index>(xs.size()));
    m.weights.resize(static_cast<Eigen::Index>(ws.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        m.points(0, static_cast<Eigen::Index>(i)) = xs[i];
        m.weights[static_cast<Eigen::Index>(i)] = ws[i];
    }
    return m;
}

inline AtomicMeasure random_atoms(std::mt19937_64& rng, int dim, int n, double spread = 1.0, bool uniform = true) {
    std::uniform_real_distribution<double> u(-spread, spread);
    std::uniform_real_distribution<double> w(0.2, 1.0);
    AtomicMeasure m;
    m.points.resize(dim, n);
    m.weights.resize(n);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < dim; ++k) m.points(k, j) = u(rng);
        m.weights[j] = uniform ? 1.0 / n : w(rng);
    }
    if (!uniform) m.weights /= m.weights.sum();
    return m;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("eotlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
