#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eotlab/io.hpp"
#include "eotlab/regularity.hpp"

namespace eotlab {

/// Builds a marginal from its config entry: either {"file": "m.csv"} (relative
/// to base_dir) or {"grid": {...}, "density": {...}, "alpha": a, "mass": m}.
/// `stream` separates the noise streams of source and target.
[[nodiscard]] GridMeasure make_marginal(const io::json& spec, const std::filesystem::path& base_dir,
                                        std::uint64_t seed, std::uint64_t stream);

/// Density of a named analytic family evaluated at x (noise excluded).
[[nodiscard]] DensityFn analytic_density(const io::json& density, int dim);

enum class PlanKind { sinkhorn, exact, diagonal };

struct ExperimentConfig {
    std::string raw_text;
    io::json raw;
    std::filesystem::path base_dir;

    io::json source;
    io::json target;
    PlanKind plan = PlanKind::sinkhorn;
    SinkhornOptions solver;
    RegularityParams params;

    double R0 = 1.0;
    std::optional<double> R;
    std::vector<double> eps_ladder;
    std::vector<double> rho_ladder;
    std::vector<double> radii;
    std::optional<double> Delta_R;
    double margin = 1.0;
    int max_levels = 20;
    int gibbs_samples = 1000;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> output_dir;

    [[nodiscard]] double epsilon() const { return solver.epsilon; }
    /// Scale for single-radius experiments: R if given, else R0.
    [[nodiscard]] double radius() const { return R.value_or(R0); }
};

/// Parses and validates a config document; unknown keys are rejected.
/// Throws ConfigError with a message naming the offending key.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

[[nodiscard]] std::string to_string(PlanKind k);

}  // namespace eotlab
