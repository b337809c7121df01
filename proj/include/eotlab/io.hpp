#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "eotlab/coupling.hpp"
#include "eotlab/scaling.hpp"

namespace eotlab::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] std::string format_double(double v);

// GridMeasure: CSV `index_0[,index_1],weight` and a sidecar with the same
// stem and extension .json holding {dim, h, origin_offset, extent, alpha}.
[[nodiscard]] fs::path sidecar_path(const fs::path& csv);
void write_grid_measure(const GridMeasure& m, const fs::path& csv);
[[nodiscard]] GridMeasure read_grid_measure(const fs::path& csv);
[[nodiscard]] json grid_spec_to_json(const GridSpec& s, double alpha);

struct PlanHeader {
    std::size_t n_source = 0;
    std::size_t n_target = 0;
    json source_grid;  // grid_spec_to_json of the marginals
    json target_grid;
    std::optional<double> epsilon;  // absent for exact and prescribed plans
};

/// Row-major little-endian doubles in `bin`, header JSON next to it (`bin` + ".json").
void write_plan(const PlanMatrix& plan, const PlanHeader& header, const fs::path& bin);
[[nodiscard]] PlanMatrix read_plan(const fs::path& bin, PlanHeader* header = nullptr);

[[nodiscard]] json scaling_to_json(const Scaling& s);
[[nodiscard]] Scaling scaling_from_json(const json& j);

struct RadiusRow {
    double R = 0.0;
    double E = 0.0;
    double D = 0.0;
    double long_energy = 0.0;
    double long_mass = 0.0;
    double defect_beta0 = 0.0;
};

/// Per-radius diagnostics. long_* use hash(4R) n {|x-y| >= 7R} normalized by R.
[[nodiscard]] std::vector<RadiusRow> radius_report(const Coupling& pi, const GridMeasure& lam, const GridMeasure& mu,
                                                   const std::vector<double>& radii, double r_avg);
void write_radius_report(const std::vector<RadiusRow>& rows, const fs::path& csv);

/// Minimal CSV writer; fields are never quoted, so callers pass plain tokens.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    CsvWriter& cell(double v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(bool v);
    CsvWriter& cell(const std::string& v);
    CsvWriter& blank();
    void end_row();
    [[nodiscard]] std::string str() const { return out_; }
    void save(const fs::path& path) const;

private:
    void sep();
    std::size_t columns_;
    std::size_t filled_ = 0;
    std::string out_;
};

/// Writes text atomically enough for our purposes; throws std::runtime_error on I/O failure.
void write_text(const fs::path& path, const std::string& text);
[[nodiscard]] std::string read_text(const fs::path& path);

/// Lowercase hex SHA-256 of a file's bytes.
[[nodiscard]] std::string sha256_file(const fs::path& path);
[[nodiscard]] std::string sha256_bytes(const std::string& bytes);

}  // namespace eotlab::io
