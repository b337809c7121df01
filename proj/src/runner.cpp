#include "eotlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <ostream>

#include "eotlab/config.hpp"
#include "eotlab/errors.hpp"

namespace eotlab::cli {

using io::json;
namespace fs = std::filesystem;

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"expansion", "longtraj", "quasimin", "onestep", "campanato", "softlemma"};
    return names;
}

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

std::string joined(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
    return s;
}

struct Inputs {
    GridMeasure lam;
    GridMeasure mu;
};

Inputs build_inputs(const ExperimentConfig& cfg) {
    return {make_marginal(cfg.source, cfg.base_dir, cfg.seed, 1), make_marginal(cfg.target, cfg.base_dir, cfg.seed, 2)};
}

struct PlanOutcome {
    Coupling plan;
    json summary;
    bool converged = true;
    std::optional<double> epsilon;
};

PlanOutcome build_plan(const ExperimentConfig& cfg, const Inputs& in) {
    PlanOutcome out;
    json& s = out.summary;
    s["plan"] = to_string(cfg.plan);
    switch (cfg.plan) {
        case PlanKind::sinkhorn: {
            const SinkhornResult r = sinkhorn(in.lam, in.mu, cfg.solver);
            out.plan = r.plan;
            out.converged = r.converged;
            out.epsilon = r.epsilon;
            s["epsilon"] = r.epsilon;
            s["cost"] = num(r.primal_cost);
            s["entropy"] = num(r.entropy);
            s["entropic_cost"] = num(entropic_cost(r));
            s["iterations"] = r.iterations;
            s["marg_err"] = num(r.marg_err);
            s["converged"] = r.converged;
            s["mass"] = r.mass;
            if (cfg.gibbs_samples > 0) {
                try {
                    s["gibbs_max_rel_error"] = num(gibbs_identity_check(r, cfg.gibbs_samples, cfg.seed));
                } catch (const DomainError&) {
                    s["gibbs_max_rel_error"] = nullptr;
                }
            }
            break;
        }
        case PlanKind::exact: {
            const ExactOTResult r = exact_ot(in.lam, in.mu);
            out.plan = r.plan;
            s["cost"] = num(r.cost);
            s["method"] = r.method;
            s["dual_value"] = num(r.dual_value);
            s["duality_gap"] = num(r.duality_gap);
            s["dual_violation"] = num(r.dual_violation);
            s["certified"] = r.certified;
            s["marg_err"] = 0.0;
            s["converged"] = true;
            s["mass"] = in.lam.total_mass();
            break;
        }
        case PlanKind::diagonal: {
            if (!(in.lam.spec() == in.mu.spec())) throw ConfigError("plan diagonal: source and target grids differ");
            const double mass = in.lam.total_mass();
            for (std::size_t p = 0; p < in.lam.size(); ++p) {
                if (std::abs(in.lam.weights()[p] - in.mu.weights()[p]) > 1e-12 * mass) {
                    throw ConfigError("plan diagonal: source and target weights differ");
                }
            }
            out.plan = Coupling::diagonal(in.lam.atoms());
            s["cost"] = 0.0;
            s["marg_err"] = 0.0;
            s["converged"] = true;
            s["mass"] = mass;
            break;
        }
    }
    const MarginalReport mr = check_marginals(out.plan);
    s["max_row_err"] = num(mr.max_row_err);
    s["max_col_err"] = num(mr.max_col_err);
    return out;
}

/// Output directory bookkeeping: every written file is recorded for the manifest.
class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) {}

    void prepare() {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec || !fs::is_directory(root_)) throw std::runtime_error("cannot create output directory " + root_.string());
        // Probe writability up front so that a read-only target fails before any work.
        const fs::path probe = root_ / ".eotlab_probe";
        io::write_text(probe, "");
        fs::remove(probe, ec);
    }

    void text(const std::string& name, const std::string& content) {
        io::write_text(root_ / name, content);
        record(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
    void record(const std::string& name) {
        if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    }
    [[nodiscard]] const fs::path& root() const { return root_; }
    [[nodiscard]] const std::vector<std::string>& files() const { return files_; }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

struct Status {
    int code = kExitOk;
    std::string name = "ok";
    std::string message;
};

// ---------------------------------------------------------------- experiments

bool run_expansion(const ExperimentConfig& cfg, const Inputs& in, OutputDir& out) {
    if (cfg.eps_ladder.empty()) throw ConfigError("expansion: config needs 'eps_ladder'");
    const ExpansionTable t = expansion_experiment(in.lam, in.mu, cfg.eps_ladder, cfg.solver);
    io::CsvWriter w({"kind", "epsilon", "ot_eps", "ot", "gap_over_eps2", "log_inv_eps2", "remainder", "resolved", "converged"});
    json rows = json::array();
    bool converged = true;
    for (const auto& r : t.rows) {
        w.cell(std::string("point")).cell(r.epsilon).cell(r.ot_eps).cell(r.ot).cell(r.gap_over_eps2).cell(r.log_inv_eps2);
        w.cell(r.remainder).cell(r.resolved).cell(r.converged);
        w.end_row();
        converged = converged && r.converged;
        rows.push_back({{"epsilon", r.epsilon}, {"ot_eps", num(r.ot_eps)}, {"ot", num(r.ot)},
                        {"gap_over_eps2", num(r.gap_over_eps2)}, {"log_inv_eps2", num(r.log_inv_eps2)},
                        {"remainder", num(r.remainder)}, {"resolved", r.resolved}, {"converged", r.converged}});
    }
    // Regression row: slope in gap_over_eps2, remainder spread in remainder.
    w.cell(std::string("regression")).blank().blank().blank();
    if (t.slope) w.cell(*t.slope); else w.blank();
    w.blank();
    if (t.remainder_spread) w.cell(*t.remainder_spread); else w.blank();
    w.blank().blank();
    w.end_row();
    out.text("report.csv", w.str());
    json trace{{"experiment", "expansion"}, {"mass", t.mass}, {"slope", opt_num(t.slope)},
               {"expected_slope", 0.5 * in.lam.dim()}, {"remainder_spread", opt_num(t.remainder_spread)}, {"rows", rows}};
    out.json_file("trace.json", trace);
    return converged;
}

bool run_longtraj(const ExperimentConfig& cfg, const Inputs& in, OutputDir& out) {
    if (cfg.eps_ladder.empty()) throw ConfigError("longtraj: config needs 'eps_ladder'");
    const double R = cfg.radius();
    const LongTrajTable t = long_traj_experiment(in.lam, in.mu, R, cfg.eps_ladder, cfg.solver);
    io::CsvWriter w({"kind", "epsilon", "r2_over_eps2", "energy", "mass", "E5R", "energy_ratio", "mass_ratio", "converged"});
    json rows = json::array();
    bool converged = true;
    for (const auto& r : t.rows) {
        w.cell(std::string("point")).cell(r.epsilon).cell(r.r2_over_eps2).cell(r.energy).cell(r.mass).cell(r.E5R);
        w.cell(r.energy_ratio).cell(r.mass_ratio).cell(r.converged);
        w.end_row();
        converged = converged && r.converged;
        rows.push_back({{"epsilon", r.epsilon}, {"r2_over_eps2", r.r2_over_eps2}, {"energy", num(r.energy)},
                        {"mass", num(r.mass)}, {"E5R", num(r.E5R)}, {"energy_ratio", num(r.energy_ratio)},
                        {"mass_ratio", num(r.mass_ratio)}, {"converged", r.converged}});
    }
    // Regression row: slopes of log(ratio) against R^2/eps^2 in the ratio columns.
    w.cell(std::string("regression")).blank().blank().blank().blank().blank();
    if (t.slope_energy) w.cell(*t.slope_energy); else w.blank();
    if (t.slope_mass) w.cell(*t.slope_mass); else w.blank();
    w.blank();
    w.end_row();
    out.text("report.csv", w.str());
    out.json_file("trace.json", json{{"experiment", "longtraj"}, {"R", R}, {"slope_mass", opt_num(t.slope_mass)},
                                     {"slope_energy", opt_num(t.slope_energy)}, {"rows", rows}});
    return converged;
}

json defect_json(const DefectReport& d) {
    return {{"R", d.R}, {"Lambda", d.Lambda}, {"lhs", num(d.lhs)}, {"mass_PR", num(d.mass_PR)}, {"ot_bar", num(d.ot_bar)},
            {"competitor_cost", num(d.competitor_cost)}, {"defect", num(d.defect)}, {"mass_hash_LR", num(d.mass_hash_LR)},
            {"eps2_mass", num(d.eps2_mass)}, {"energy_2R", num(d.energy_2R)}, {"degenerate", d.degenerate},
            {"ot_certified", d.ot_certified}};
}

bool run_quasimin(const ExperimentConfig& cfg, const Inputs& in, const PlanOutcome& plan, OutputDir& out) {
    const std::vector<double> radii = cfg.radii.empty() ? std::vector<double>{cfg.radius()} : cfg.radii;
    const double eps = plan.epsilon.value_or(cfg.epsilon());
    io::CsvWriter w({"R", "Lambda", "lhs", "mass_PR", "ot_bar", "competitor_cost", "defect", "mass_hash_LR", "eps2_mass",
                     "energy_2R", "defect_ratio", "degenerate", "ot_certified"});
    json defects = json::array();
    for (double R : radii) {
        const DefectReport d = quasimin_defect(plan.plan, R, cfg.params.Lambda, eps);
        const double ratio = d.eps2_mass > 0.0 ? d.defect / d.eps2_mass : std::numeric_limits<double>::quiet_NaN();
        w.cell(d.R).cell(d.Lambda).cell(d.lhs).cell(d.mass_PR).cell(d.ot_bar).cell(d.competitor_cost).cell(d.defect);
        w.cell(d.mass_hash_LR).cell(d.eps2_mass).cell(d.energy_2R).cell(ratio).cell(d.degenerate).cell(d.ot_certified);
        w.end_row();
        json dj = defect_json(d);
        dj["defect_ratio"] = num(ratio);
        defects.push_back(dj);
    }
    out.text("defects.csv", w.str());
    const double r_avg = averaging_radius(in.lam, in.mu, cfg.params);
    io::write_radius_report(io::radius_report(plan.plan, in.lam, in.mu, radii, r_avg), out.root() / "report.csv");
    out.record("report.csv");
    out.json_file("trace.json", json{{"experiment", "quasimin"}, {"epsilon", eps}, {"plan", plan.summary}, {"defects", defects}});
    return plan.converged;
}

TransportState normalized_state(const ExperimentConfig& cfg, const Inputs& in, const Coupling& plan, Scaling& bar) {
    const int d = in.lam.dim();
    const double r_avg = averaging_radius(in.lam, in.mu, cfg.params);
    const Vec origin = Vec::Zero(d);
    bar = normalizing_scaling(density_at(in.lam, origin, r_avg), density_at(in.mu, origin, r_avg), d);
    require_admissible(bar, cfg.params.windows);
    auto [lam, mu] = apply_to_measures(bar, in.lam, in.mu);
    return {apply_to_coupling(bar, plan), std::move(lam), std::move(mu)};
}

bool run_onestep(const ExperimentConfig& cfg, const Inputs& in, const PlanOutcome& plan, OutputDir& out) {
    Scaling bar;
    const TransportState state = normalized_state(cfg, in, plan.plan, bar);
    const double R = cfg.radius();
    const double eps = plan.epsilon.value_or(cfg.epsilon());
    const OneStepOutcome o = one_step(state, R, cfg.params.theta, eps, cfg.params);
    io::CsvWriter w({"R", "theta", "E_before", "E_after", "D_before", "D_after", "smallness", "contracted", "fit_residual",
                     "fit_zero_residual", "gamma"});
    w.cell(o.R).cell(o.theta).cell(o.E_before).cell(o.E_after).cell(o.D_before).cell(o.D_after).cell(o.smallness);
    w.cell(o.E_after <= o.E_before).cell(o.fit.residual).cell(o.fit.zero_residual).cell(o.scaling_hat.gamma);
    w.end_row();
    out.text("report.csv", w.str());
    json trace{{"experiment", "onestep"},
               {"R", R},
               {"theta", o.theta},
               {"epsilon", eps},
               {"normalizing_scaling", io::scaling_to_json(bar)},
               {"scaling_hat", io::scaling_to_json(o.scaling_hat)},
               {"det_A", o.scaling_hat.A.determinant()},
               {"E_before", num(o.E_before)},
               {"E_after", num(o.E_after)},
               {"D_before", num(o.D_before)},
               {"D_after", num(o.D_after)},
               {"smallness", num(o.smallness)},
               {"contracted", o.E_after <= o.E_before},
               {"fit",
                {{"coeffs", std::vector<double>(o.fit.coeffs.data(), o.fit.coeffs.data() + o.fit.coeffs.size())},
                 {"residual", num(o.fit.residual)},
                 {"zero_residual", num(o.fit.zero_residual)},
                 {"mass", num(o.fit.mass)},
                 {"degenerate", o.fit.degenerate},
                 {"ridge", o.fit.ridge}}}};
    out.json_file("trace.json", trace);
    return plan.converged;
}

bool run_campanato(const ExperimentConfig& cfg, const Inputs& in, const PlanOutcome& plan, OutputDir& out) {
    const double eps = plan.epsilon.value_or(cfg.epsilon());
    const CampanatoTrace t =
        campanato_iterate(TransportState{plan.plan, in.lam, in.mu}, cfg.R0, cfg.params.theta, eps, cfg.max_levels, cfg.params);
    io::CsvWriter w({"k", "r", "E", "D", "affine_defect", "holder_lambda", "holder_mu", "gamma", "kappa", "det_A", "contracted"});
    json levels = json::array();
    for (std::size_t i = 0; i < t.levels.size(); ++i) {
        const CampanatoLevel& L = t.levels[i];
        w.cell(static_cast<long long>(L.k)).cell(L.r).cell(L.E).cell(L.D).cell(L.affine_defect).cell(L.holder_lambda);
        w.cell(L.holder_mu).cell(L.composed.gamma).cell(L.composed.kappa).cell(L.composed.A.determinant());
        if (i == 0) w.blank(); else w.cell(L.E <= t.levels[i - 1].E);
        w.end_row();
        levels.push_back({{"k", L.k}, {"r", L.r}, {"step", io::scaling_to_json(L.step)},
                          {"composed", io::scaling_to_json(L.composed)}, {"E", num(L.E)}, {"D", num(L.D)},
                          {"affine_defect", num(L.affine_defect)}, {"holder_lambda", num(L.holder_lambda)},
                          {"holder_mu", num(L.holder_mu)}});
    }
    out.text("report.csv", w.str());
    out.json_file("trace.json", json{{"experiment", "campanato"}, {"R0", t.R0}, {"theta", t.theta}, {"epsilon", t.epsilon},
                                     {"stop_reason", to_string(t.stop_reason)}, {"stop_detail", t.stop_detail},
                                     {"levels", levels}});
    return plan.converged;
}

bool run_softlemma(const ExperimentConfig& cfg, const PlanOutcome& plan, OutputDir& out) {
    if (cfg.rho_ladder.empty()) throw ConfigError("softlemma: config needs 'rho_ladder'");
    const double R = cfg.radius();
    const double eps = plan.epsilon.value_or(cfg.epsilon());
    json delta_source;
    double Delta_R = 0.0;
    if (cfg.Delta_R) {
        Delta_R = *cfg.Delta_R;
        delta_source = "config";
    } else {
        Delta_R = std::max(0.0, quasimin_defect(plan.plan, R, cfg.params.Lambda, eps).defect);
        delta_source = "quasimin_defect";
    }
    const auto rows = soft_lemma_check(plan.plan, R, cfg.rho_ladder, Delta_R, cfg.margin);
    io::CsvWriter w({"rho", "mass", "bound", "fitted_constant", "lower_ok", "upper_ok"});
    json jrows = json::array();
    double cmax = 0.0;
    for (const auto& r : rows) {
        w.cell(r.rho).cell(r.mass).cell(r.bound).cell(r.fitted_constant).cell(r.lower_ok).cell(r.upper_ok);
        w.end_row();
        cmax = std::max(cmax, r.fitted_constant);
        jrows.push_back({{"rho", r.rho}, {"mass", num(r.mass)}, {"bound", num(r.bound)},
                         {"fitted_constant", num(r.fitted_constant)}, {"lower_ok", r.lower_ok}, {"upper_ok", r.upper_ok}});
    }
    out.text("report.csv", w.str());
    out.json_file("trace.json", json{{"experiment", "softlemma"}, {"R", R}, {"margin", cfg.margin}, {"Delta_R", Delta_R},
                                     {"Delta_R_source", delta_source}, {"max_fitted_constant", cmax}, {"rows", jrows}});
    return plan.converged;
}

bool run_solve(const ExperimentConfig& cfg, const Inputs& in, OutputDir& out) {
    const PlanOutcome plan = build_plan(cfg, in);
    io::PlanHeader h;
    h.n_source = in.lam.size();
    h.n_target = in.mu.size();
    h.source_grid = io::grid_spec_to_json(in.lam.spec(), in.lam.alpha());
    h.target_grid = io::grid_spec_to_json(in.mu.spec(), in.mu.alpha());
    h.epsilon = plan.epsilon;
    io::write_plan(plan.plan.mass, h, out.root() / "plan.bin");
    out.record("plan.bin");
    out.record("plan.bin.json");
    out.json_file("summary.json", plan.summary);
    return plan.converged;
}

bool dispatch(const Request& req, const ExperimentConfig& cfg, OutputDir& out) {
    const Inputs in = build_inputs(cfg);
    if (req.command == "solve") return run_solve(cfg, in, out);
    const std::string& name = req.experiment;
    if (name == "expansion") return run_expansion(cfg, in, out);
    if (name == "longtraj") return run_longtraj(cfg, in, out);
    const PlanOutcome plan = build_plan(cfg, in);
    if (name == "quasimin") return run_quasimin(cfg, in, plan, out);
    if (name == "onestep") return run_onestep(cfg, in, plan, out);
    if (name == "campanato") return run_campanato(cfg, in, plan, out);
    return run_softlemma(cfg, plan, out);
}

json input_hashes(const ExperimentConfig& cfg) {
    json inputs = json::array();
    inputs.push_back({{"role", "config"}, {"sha256", io::sha256_bytes(cfg.raw_text)}});
    for (const auto* spec : {&cfg.source, &cfg.target}) {
        if (!spec->is_object() || !spec->contains("file")) continue;
        fs::path p = spec->at("file").get<std::string>();
        if (p.is_relative()) p = cfg.base_dir / p;
        for (const fs::path& f : {p, io::sidecar_path(p)}) {
            std::error_code ec;
            if (fs::exists(f, ec)) inputs.push_back({{"role", "marginal"}, {"path", f.string()}, {"sha256", io::sha256_file(f)}});
        }
    }
    return inputs;
}

void write_manifest(const Request& req, const ExperimentConfig& cfg, OutputDir& out, const Status& st,
                    const std::string& started) {
    out.text("config.snapshot.json", cfg.raw_text);
    json outputs = json::array();
    for (const auto& f : out.files()) {
        const fs::path p = out.root() / f;
        std::error_code ec;
        if (!fs::exists(p, ec)) continue;
        outputs.push_back({{"file", f}, {"bytes", fs::file_size(p)}, {"sha256", io::sha256_file(p)}});
    }
    json m{{"artifact", "eotlab"},
           {"version", kVersion},
           {"command", req.command},
           {"experiment", req.command == "experiment" ? json(req.experiment) : json(nullptr)},
           {"config_path", req.config.string()},
           {"config_snapshot", "config.snapshot.json"},
           {"seed", cfg.seed},
           {"started_at", started},
           {"finished_at", utc_now()},
           {"inputs", input_hashes(cfg)},
           {"outputs", outputs},
           {"status", {{"name", st.name}, {"exit_code", st.code}, {"message", st.message}}}};
    io::write_text(out.root() / "manifest.json", m.dump(2) + "\n");
}

}  // namespace

int run(const Request& req, std::ostream& log) {
    const std::string started = utc_now();
    if (req.command != "solve" && req.command != "experiment") {
        log << "error: unknown command '" << req.command << "' (expected solve, experiment)\n";
        return kExitConfig;
    }
    if (req.command == "experiment") {
        const auto& names = experiment_names();
        if (std::find(names.begin(), names.end(), req.experiment) == names.end()) {
            log << "error: unknown experiment '" << req.experiment << "'; valid names: " << joined(names) << "\n";
            return kExitConfig;
        }
    }

    ExperimentConfig cfg;
    try {
        cfg = load_config(req.config);
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (req.seed) cfg.seed = *req.seed;

    const fs::path root = req.out.value_or(cfg.output_dir.value_or(fs::path("eotlab_out")));
    OutputDir out(root);
    try {
        out.prepare();
    } catch (const std::exception& e) {
        log << "output error: " << e.what() << "\n";
        return kExitDomain;
    }

    Status st;
    try {
        if (!dispatch(req, cfg, out)) {
            st = {kExitNonConvergence, "not_converged", "solver did not reach the requested tolerance"};
        }
    } catch (const ConfigError& e) {
        st = {kExitConfig, "config_error", e.what()};
    } catch (const InputError& e) {
        st = {kExitConfig, "input_error", e.what()};
    } catch (const SmallnessError& e) {
        st = {kExitDomain, "smallness_violated", e.what()};
    } catch (const DomainError& e) {
        st = {kExitDomain, "domain_error", e.what()};
    } catch (const AdmissibilityError& e) {
        st = {kExitDomain, "admissibility_exit", e.what()};
    } catch (const ConsistencyError& e) {
        st = {kExitDomain, "consistency_error", e.what()};
    } catch (const std::runtime_error& e) {
        st = {kExitDomain, "io_error", e.what()};
    }
    try {
        write_manifest(req, cfg, out, st, started);
    } catch (const std::exception& e) {
        log << "output error: " << e.what() << "\n";
        return kExitDomain;
    }
    if (st.code != kExitOk) log << st.name << ": " << st.message << "\n";
    return st.code;
}

}  // namespace eotlab::cli
