#include "eotlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "eotlab/errors.hpp"

namespace eotlab {

using io::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

Vec get_vec(const json& obj, const char* key, int dim, double fill, const std::string& where) {
    if (!obj.contains(key)) return Vec::Constant(dim, fill);
    const auto v = get_or<std::vector<double>>(obj, key, {}, where);
    if (v.size() != static_cast<std::size_t>(dim)) throw ConfigError(where + "." + key + ": expected " + std::to_string(dim) + " entries");
    return Eigen::Map<const Vec>(v.data(), dim);
}

std::vector<double> positive_list(const json& obj, const char* key) {
    auto v = get_or<std::vector<double>>(obj, key, {}, "config");
    for (double x : v) {
        if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string("config.") + key + ": entries must be positive");
    }
    return v;
}

double positive(const json& obj, const char* key, double fallback, const std::string& where) {
    const double v = get_or<double>(obj, key, fallback, where);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(where + "." + key + ": must be positive");
    return v;
}

// SplitMix64 finalizer; decorrelates (seed, stream) pairs for the noise RNG.
std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

DensityFn analytic_density(const json& density, int dim) {
    const std::string where = "density";
    if (!density.is_object() || !density.contains("kind")) throw ConfigError("density: missing 'kind'");
    const auto kind = get_or<std::string>(density, "kind", "", where);
    DensityFn base;
    if (kind == "uniform") {
        reject_unknown(density, {"kind", "value", "support", "noise"}, where);
        const double v = positive(density, "value", 1.0, where);
        base = [v](const Vec&) { return v; };
    } else if (kind == "affine") {
        reject_unknown(density, {"kind", "c0", "slope", "support", "noise"}, where);
        const double c0 = positive(density, "c0", 1.0, where);
        const Vec slope = get_vec(density, "slope", dim, 0.0, where);
        base = [c0, slope](const Vec& x) { return std::max(0.0, c0 + slope.dot(x)); };
    } else if (kind == "gaussian") {
        reject_unknown(density, {"kind", "mean", "sigma", "peak", "support", "noise"}, where);
        const Vec mean = get_vec(density, "mean", dim, 0.0, where);
        const double sigma = positive(density, "sigma", 1.0, where);
        const double peak = positive(density, "peak", 1.0, where);
        base = [mean, sigma, peak](const Vec& x) { return peak * std::exp(-(x - mean).squaredNorm() / (2 * sigma * sigma)); };
    } else if (kind == "perturbed_uniform") {
        reject_unknown(density, {"kind", "amplitude", "frequency", "support", "noise"}, where);
        const double amp = get_or<double>(density, "amplitude", 0.1, where);
        const double freq = get_or<double>(density, "frequency", 1.0, where);
        if (!(std::abs(amp) < 1.0)) throw ConfigError("density.amplitude: must satisfy |amplitude| < 1");
        // 1 + amp * prod_k sin(freq * pi * x_k): equals 1 at the origin.
        base = [amp, freq](const Vec& x) {
            double p = 1.0;
            for (Eigen::Index k = 0; k < x.size(); ++k) p *= std::sin(freq * std::numbers::pi * x[k]);
            return 1.0 + amp * p;
        };
    } else if (kind == "quadratic_image") {
        // Image of the unit density on [-1,1] under T(x) = x + q (1 - x^2).
        reject_unknown(density, {"kind", "q", "support", "noise"}, where);
        if (dim != 1) throw ConfigError("density quadratic_image: only dim 1 is supported");
        const double q = get_or<double>(density, "q", 0.0, where);
        if (!(std::abs(q) < 0.5)) throw ConfigError("density.q: must satisfy |q| < 0.5");
        base = [q](const Vec& y) {
            if (std::abs(y[0]) > 1.0) return 0.0;
            const double x = q == 0.0 ? y[0] : (1.0 - std::sqrt(1.0 - 4.0 * q * (y[0] - q))) / (2.0 * q);
            return 1.0 / (1.0 - 2.0 * q * x);
        };
    } else {
        throw ConfigError("density: unknown kind '" + kind +
                          "' (expected uniform, affine, gaussian, perturbed_uniform, quadratic_image)");
    }
    if (density.contains("support")) {
        const double half = positive(density, "support", 1.0, where);
        return [base, half](const Vec& x) { return x.cwiseAbs().maxCoeff() <= half + 1e-12 ? base(x) : 0.0; };
    }
    return base;
}

GridMeasure make_marginal(const json& spec, const fs::path& base_dir, std::uint64_t seed, std::uint64_t stream) {
    if (!spec.is_object()) throw ConfigError("marginal: expected an object");
    if (spec.contains("file")) {
        reject_unknown(spec, {"file"}, "marginal");
        fs::path p = get_or<std::string>(spec, "file", "", "marginal");
        if (p.is_relative()) p = base_dir / p;
        return io::read_grid_measure(p);
    }
    reject_unknown(spec, {"grid", "density", "alpha", "mass"}, "marginal");
    if (!spec.contains("grid") || !spec.contains("density")) throw ConfigError("marginal: needs 'file' or 'grid' + 'density'");
    const json& g = spec.at("grid");
    reject_unknown(g, {"dim", "n", "lo", "hi"}, "grid");
    const int dim = get_or<int>(g, "dim", 1, "grid");
    const auto n = get_or<std::size_t>(g, "n", 0, "grid");
    const double lo = get_or<double>(g, "lo", -1.0, "grid");
    const double hi = get_or<double>(g, "hi", 1.0, "grid");
    if (dim != 1 && dim != 2) throw ConfigError("grid.dim: must be 1 or 2");
    if (n < 2) throw ConfigError("grid.n: must be >= 2");
    if (!(lo <= 0.0 && hi >= 0.0 && hi > lo)) throw ConfigError("grid: need lo <= 0 <= hi and lo < hi");
    const double alpha = get_or<double>(spec, "alpha", 0.5, "marginal");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("marginal.alpha: must lie in (0,1)");

    const DensityFn density = analytic_density(spec.at("density"), dim);
    const double noise = get_or<double>(spec.at("density"), "noise", 0.0, "density");
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("density.noise: must lie in [0,1)");

    GridSpec grid;
    try {
        grid = GridSpec::interval(dim, n, lo, hi);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    DensityFn sampled = density;
    if (noise > 0.0) {
        // Multiplicative cell noise (1 + noise * U(-1,1)), one draw per cell in flat order.
        std::mt19937_64 rng(mix(seed ^ mix(stream)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> factors(grid.size());
        for (double& f : factors) f = 1.0 + noise * u(rng);
        sampled = [density, factors, grid](const Vec& x) {
            std::vector<std::size_t> idx;
            for (Eigen::Index k = 0; k < x.size(); ++k) {
                idx.push_back(static_cast<std::size_t>(std::llround(x[k] / grid.h + grid.origin_offset[k])));
            }
            return density(x) * factors[grid.flat_index(idx)];
        };
    }
    try {
        GridMeasure m = sample_density(grid, sampled, alpha);
        if (spec.contains("mass")) m = m.scaled(positive(spec, "mass", 1.0, "marginal") / m.total_mass());
        return m;
    } catch (const DomainError& e) {
        throw ConfigError(std::string("marginal: ") + e.what());
    }
}

std::string to_string(PlanKind k) {
    switch (k) {
        case PlanKind::sinkhorn: return "sinkhorn";
        case PlanKind::exact: return "exact";
        case PlanKind::diagonal: return "diagonal";
    }
    return "unknown";
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
    ExperimentConfig c;
    c.raw_text = text;
    c.base_dir = base_dir;
    try {
        c.raw = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    const json& j = c.raw;
    reject_unknown(j, {"source", "target", "plan", "solver", "epsilon", "eps_ladder", "rho_ladder", "radii", "R0", "R",
                       "theta", "Lambda", "beta", "thresholds", "r_avg", "fit_radius_factor", "windows", "max_levels",
                       "Delta_R", "margin", "gibbs_samples", "seed", "output_dir"},
                   "config");
    if (!j.contains("source")) throw ConfigError("config: missing 'source'");
    c.source = j.at("source");
    c.target = j.contains("target") ? j.at("target") : j.at("source");

    const auto plan = get_or<std::string>(j, "plan", "sinkhorn", "config");
    if (plan == "sinkhorn") {
        c.plan = PlanKind::sinkhorn;
    } else if (plan == "exact") {
        c.plan = PlanKind::exact;
    } else if (plan == "diagonal") {
        c.plan = PlanKind::diagonal;
    } else {
        throw ConfigError("config.plan: unknown kind '" + plan + "' (expected sinkhorn, exact, diagonal)");
    }

    if (j.contains("solver")) {
        const json& s = j.at("solver");
        reject_unknown(s, {"epsilon", "tol", "max_iter", "stabilize_every", "overrelax", "epsilon_scaling"}, "solver");
        c.solver.epsilon = positive(s, "epsilon", c.solver.epsilon, "solver");
        c.solver.tol = positive(s, "tol", c.solver.tol, "solver");
        c.solver.max_iter = get_or<int>(s, "max_iter", c.solver.max_iter, "solver");
        c.solver.stabilize_every = get_or<int>(s, "stabilize_every", c.solver.stabilize_every, "solver");
        c.solver.overrelax = get_or<bool>(s, "overrelax", c.solver.overrelax, "solver");
        c.solver.epsilon_scaling = get_or<bool>(s, "epsilon_scaling", c.solver.epsilon_scaling, "solver");
        if (c.solver.max_iter < 1) throw ConfigError("solver.max_iter: must be >= 1");
        if (c.solver.stabilize_every < 1) throw ConfigError("solver.stabilize_every: must be >= 1");
    }
    // A top-level epsilon is the single source of truth for both solver and experiments.
    if (j.contains("epsilon")) c.solver.epsilon = positive(j, "epsilon", 0.1, "config");

    c.eps_ladder = positive_list(j, "eps_ladder");
    c.rho_ladder = positive_list(j, "rho_ladder");
    c.radii = positive_list(j, "radii");
    c.R0 = positive(j, "R0", c.R0, "config");
    if (j.contains("R")) c.R = positive(j, "R", 1.0, "config");
    c.params.theta = get_or<double>(j, "theta", c.params.theta, "config");
    if (!(c.params.theta > 0.0 && c.params.theta < 1.0)) throw ConfigError("config.theta: must lie in (0,1)");
    c.params.Lambda = get_or<double>(j, "Lambda", c.params.Lambda, "config");
    if (!(c.params.Lambda > 1.0)) throw ConfigError("config.Lambda: must exceed 1");
    c.params.beta = get_or<double>(j, "beta", c.params.beta, "config");
    if (!(c.params.beta >= 0.0)) throw ConfigError("config.beta: must be >= 0");
    c.params.r_avg = get_or<double>(j, "r_avg", c.params.r_avg, "config");
    c.params.fit_radius_factor = positive(j, "fit_radius_factor", c.params.fit_radius_factor, "config");
    if (j.contains("thresholds")) {
        const json& t = j.at("thresholds");
        reject_unknown(t, {"eps1", "delta", "c0"}, "thresholds");
        c.params.eps1 = positive(t, "eps1", c.params.eps1, "thresholds");
        c.params.delta = get_or<double>(t, "delta", c.params.delta, "thresholds");
        if (!(c.params.delta >= 0.0)) throw ConfigError("thresholds.delta: must be >= 0");
        c.params.c0 = positive(t, "c0", c.params.c0, "thresholds");
    }
    if (j.contains("windows")) {
        const json& w = j.at("windows");
        reject_unknown(w, {"kappa_min", "kappa_max", "gamma_min", "gamma_max"}, "windows");
        auto& win = c.params.windows;
        win.kappa_min = positive(w, "kappa_min", win.kappa_min, "windows");
        win.kappa_max = positive(w, "kappa_max", win.kappa_max, "windows");
        win.gamma_min = positive(w, "gamma_min", win.gamma_min, "windows");
        win.gamma_max = positive(w, "gamma_max", win.gamma_max, "windows");
        if (win.kappa_min > win.kappa_max || win.gamma_min > win.gamma_max) throw ConfigError("windows: empty window");
    }
    c.max_levels = get_or<int>(j, "max_levels", c.max_levels, "config");
    if (c.max_levels < 0) throw ConfigError("config.max_levels: must be >= 0");
    if (j.contains("Delta_R")) {
        c.Delta_R = get_or<double>(j, "Delta_R", 0.0, "config");
        if (!(*c.Delta_R >= 0.0)) throw ConfigError("config.Delta_R: must be >= 0");
    }
    c.margin = get_or<double>(j, "margin", c.margin, "config");
    if (!(c.margin >= 0.0)) throw ConfigError("config.margin: must be >= 0");
    c.gibbs_samples = get_or<int>(j, "gibbs_samples", c.gibbs_samples, "config");
    if (c.gibbs_samples < 0) throw ConfigError("config.gibbs_samples: must be >= 0");
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "config");
    if (j.contains("output_dir")) {
        fs::path out = get_or<std::string>(j, "output_dir", "", "config");
        c.output_dir = out.is_relative() ? base_dir / out : out;
    }
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    const std::string text = io::read_text(path);
    return parse_config(text, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

}  // namespace eotlab
