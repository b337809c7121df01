#include "eotlab/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "eotlab/errors.hpp"

namespace eotlab::io {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- grids

fs::path sidecar_path(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".json");
    return p;
}

json grid_spec_to_json(const GridSpec& s, double alpha) {
    json j;
    j["dim"] = s.dim;
    j["h"] = s.h;
    j["origin_offset"] = s.origin_offset;
    j["extent"] = s.extent;
    j["alpha"] = alpha;
    return j;
}

void write_grid_measure(const GridMeasure& m, const fs::path& csv) {
    const GridSpec& s = m.spec();
    std::string text = s.dim == 1 ? "index_0,weight\n" : "index_0,index_1,weight\n";
    for (std::size_t p = 0; p < m.size(); ++p) {
        for (std::size_t i : s.multi_index(p)) text += std::to_string(i) + ",";
        text += format_double(m.weights()[p]) + "\n";
    }
    write_text(csv, text);
    write_text(sidecar_path(csv), grid_spec_to_json(s, m.alpha()).dump(2) + "\n");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw ConfigError(where + ": not a number: '" + s + "'");
    return v;
}

}  // namespace

GridMeasure read_grid_measure(const fs::path& csv) {
    json meta;
    try {
        meta = json::parse(read_text(sidecar_path(csv)));
    } catch (const json::exception& e) {
        throw ConfigError(sidecar_path(csv).string() + ": " + e.what());
    }
    GridSpec spec;
    double alpha = 0.0;
    try {
        spec.dim = meta.at("dim").get<int>();
        spec.h = meta.at("h").get<double>();
        spec.origin_offset = meta.at("origin_offset").get<std::vector<double>>();
        spec.extent = meta.at("extent").get<std::vector<std::size_t>>();
        alpha = meta.at("alpha").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(sidecar_path(csv).string() + ": " + e.what());
    }
    try {
        spec.validate();
    } catch (const DomainError& e) {
        throw ConfigError(sidecar_path(csv).string() + ": " + e.what());
    }

    std::istringstream in(read_text(csv));
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string expected = spec.dim == 1 ? "index_0,weight" : "index_0,index_1,weight";
    if (line != expected) throw ConfigError(csv.string() + ": header must be '" + expected + "'");

    std::vector<double> w(spec.size(), 0.0);
    std::vector<char> seen(spec.size(), 0);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = csv.string() + ":" + std::to_string(lineno);
        const auto fields = split_csv(line);
        if (fields.size() != static_cast<std::size_t>(spec.dim) + 1) throw ConfigError(where + ": wrong field count");
        std::vector<std::size_t> idx;
        for (int k = 0; k < spec.dim; ++k) {
            const double v = parse_double(fields[k], where);
            if (v < 0 || v != std::floor(v) || v >= static_cast<double>(spec.extent[k])) {
                throw ConfigError(where + ": index out of range");
            }
            idx.push_back(static_cast<std::size_t>(v));
        }
        const std::size_t flat = spec.flat_index(idx);
        if (seen[flat]) throw ConfigError(where + ": duplicate index");
        seen[flat] = 1;
        w[flat] = parse_double(fields.back(), where);
    }
    try {
        return {spec, std::move(w), alpha};
    } catch (const std::exception& e) {
        throw ConfigError(csv.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- plans

void write_plan(const PlanMatrix& plan, const PlanHeader& header, const fs::path& bin) {
    std::string bytes(static_cast<std::size_t>(plan.size()) * sizeof(double), '\0');
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            auto bits = std::bit_cast<std::uint64_t>(plan(i, j));
            for (int b = 0; b < 8; ++b) bytes[pos++] = static_cast<char>((bits >> (8 * b)) & 0xffu);
        }
    }
    write_text(bin, bytes);
    json h;
    h["n_source"] = header.n_source;
    h["n_target"] = header.n_target;
    h["source_grid"] = header.source_grid;
    h["target_grid"] = header.target_grid;
    h["epsilon"] = header.epsilon ? json(*header.epsilon) : json(nullptr);
    h["layout"] = "row-major float64 little-endian";
    write_text(bin.string() + ".json", h.dump(2) + "\n");
}

PlanMatrix read_plan(const fs::path& bin, PlanHeader* header) {
    json h;
    try {
        h = json::parse(read_text(bin.string() + ".json"));
    } catch (const json::exception& e) {
        throw ConfigError(bin.string() + ".json: " + e.what());
    }
    PlanHeader ph;
    try {
        ph.n_source = h.at("n_source").get<std::size_t>();
        ph.n_target = h.at("n_target").get<std::size_t>();
        ph.source_grid = h.value("source_grid", json());
        ph.target_grid = h.value("target_grid", json());
        if (h.contains("epsilon") && !h["epsilon"].is_null()) ph.epsilon = h["epsilon"].get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(bin.string() + ".json: " + e.what());
    }
    const std::string bytes = read_text(bin);
    if (bytes.size() != ph.n_source * ph.n_target * sizeof(double)) {
        throw ConfigError(bin.string() + ": size does not match header");
    }
    PlanMatrix plan(static_cast<Eigen::Index>(ph.n_source), static_cast<Eigen::Index>(ph.n_target));
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
            plan(i, j) = std::bit_cast<double>(bits);
        }
    }
    if (header != nullptr) *header = std::move(ph);
    return plan;
}

// ---------------------------------------------------------------- scalings

json scaling_to_json(const Scaling& s) {
    json j;
    std::vector<double> a;
    for (Eigen::Index r = 0; r < s.A.rows(); ++r) {
        for (Eigen::Index c = 0; c < s.A.cols(); ++c) a.push_back(s.A(r, c));
    }
    j["A"] = a;
    j["b"] = std::vector<double>(s.b.data(), s.b.data() + s.b.size());
    j["gamma"] = s.gamma;
    j["kappa"] = s.kappa;
    return j;
}

Scaling scaling_from_json(const json& j) {
    try {
        const auto a = j.at("A").get<std::vector<double>>();
        const auto b = j.at("b").get<std::vector<double>>();
        const auto d = static_cast<Eigen::Index>(b.size());
        if (d < 1 || a.size() != static_cast<std::size_t>(d * d)) throw ConfigError("scaling: A must be dim x dim");
        Scaling s;
        s.A.resize(d, d);
        s.b.resize(d);
        for (Eigen::Index r = 0; r < d; ++r) {
            s.b[r] = b[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < d; ++c) s.A(r, c) = a[static_cast<std::size_t>(r * d + c)];
        }
        s.gamma = j.at("gamma").get<double>();
        s.kappa = j.at("kappa").get<double>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scaling: ") + e.what());
    }
}

// ---------------------------------------------------------------- reports

std::vector<RadiusRow> radius_report(const Coupling& pi, const GridMeasure& lam, const GridMeasure& mu,
                                     const std::vector<double>& radii, double r_avg) {
    const int d = pi.dim();
    std::vector<RadiusRow> rows;
    for (double R : radii) {
        RadiusRow row;
        row.R = R;
        row.E = local_energy(pi, R);
        row.D = data_term(lam, mu, R, r_avg).D;
        const RegionMoments lt = region_moments(pi, Region::long_trajectories(4.0 * R, 7.0 * R));
        row.long_energy = lt.second_moment / std::pow(R, d + 2);
        row.long_mass = lt.mass / std::pow(R, d);
        row.defect_beta0 = affine_fit(pi, R, 0.0).defect;
        rows.push_back(row);
    }
    return rows;
}

void write_radius_report(const std::vector<RadiusRow>& rows, const fs::path& csv) {
    CsvWriter w({"R", "E", "D", "long_energy", "long_mass", "defect_beta0"});
    for (const auto& r : rows) {
        w.cell(r.R).cell(r.E).cell(r.D).cell(r.long_energy).cell(r.long_mass).cell(r.defect_beta0);
        w.end_row();
    }
    w.save(csv);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t k = 0; k < header.size(); ++k) out_ += (k ? "," : "") + header[k];
    out_ += "\n";
}

void CsvWriter::sep() {
    if (filled_ >= columns_) throw std::logic_error("CsvWriter: too many cells in row");
    if (filled_ > 0) out_ += ",";
    ++filled_;
}

CsvWriter& CsvWriter::cell(double v) {
    sep();
    out_ += format_double(v);
    return *this;
}

CsvWriter& CsvWriter::cell(long long v) {
    sep();
    out_ += std::to_string(v);
    return *this;
}

CsvWriter& CsvWriter::cell(bool v) {
    sep();
    out_ += v ? "1" : "0";
    return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
    sep();
    out_ += v;
    return *this;
}

CsvWriter& CsvWriter::blank() {
    sep();
    return *this;
}

void CsvWriter::end_row() {
    if (filled_ != columns_) throw std::logic_error("CsvWriter: row has missing cells");
    out_ += "\n";
    filled_ = 0;
}

void CsvWriter::save(const fs::path& path) const { write_text(path, out_); }

// ---------------------------------------------------------------- hashing

std::string sha256_bytes(const std::string& bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += kHex[md[i] >> 4];
        hex += kHex[md[i] & 0xf];
    }
    return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_text(path)); }

}  // namespace eotlab::io
