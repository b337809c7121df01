#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "eotlab/config.hpp"
#include "eotlab/errors.hpp"
#include "eotlab/regularity.hpp"
#include "eotlab/runner.hpp"

namespace py = pybind11;
using namespace eotlab;

namespace {

GridMeasure make_grid(int dim, std::size_t n, double lo, double hi, const std::vector<double>& weights, double alpha) {
    return {GridSpec::interval(dim, n, lo, hi), weights, alpha};
}

GridMeasure from_density(int dim, std::size_t n, double lo, double hi, const py::dict& density, double alpha,
                         std::optional<double> mass) {
    const io::json spec = io::json::parse(py::str(py::module_::import("json").attr("dumps")(density)).cast<std::string>());
    GridMeasure m = sample_density(GridSpec::interval(dim, n, lo, hi), analytic_density(spec, dim), alpha);
    return mass ? m.scaled(*mass / m.total_mass()) : m;
}

SinkhornOptions options(double epsilon, double tol, int max_iter, int stabilize_every) {
    SinkhornOptions o;
    o.epsilon = epsilon;
    o.tol = tol;
    o.max_iter = max_iter;
    o.stabilize_every = stabilize_every;
    return o;
}

int run_cli(const std::string& command, const std::string& experiment, const std::string& config,
            std::optional<std::string> out, std::optional<std::uint64_t> seed) {
    cli::Request req;
    req.command = command;
    req.experiment = experiment;
    req.config = config;
    if (out) req.out = *out;
    req.seed = seed;
    std::ostringstream log;
    const int code = cli::run(req, log);
    if (!log.str().empty()) py::print(log.str(), py::arg("end") = "", py::arg("file") = py::module_::import("sys").attr("stderr"));
    return code;
}

}  // namespace

PYBIND11_MODULE(_eotlab, m) {
    m.doc() = "Entropic optimal transport on regular grids";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<AdmissibilityError>(m, "AdmissibilityError", PyExc_RuntimeError);
    py::register_exception<ConsistencyError>(m, "ConsistencyError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    // Registered last so it is matched before its DomainError base.
    py::register_exception<SmallnessError>(m, "SmallnessError", PyExc_ValueError);

    py::class_<GridSpec>(m, "GridSpec")
        .def_static("interval", &GridSpec::interval, py::arg("dim"), py::arg("n"), py::arg("lo"), py::arg("hi"))
        .def_readonly("dim", &GridSpec::dim)
        .def_readonly("h", &GridSpec::h)
        .def_readonly("origin_offset", &GridSpec::origin_offset)
        .def_readonly("extent", &GridSpec::extent)
        .def("size", &GridSpec::size)
        .def("point", &GridSpec::point);

    py::class_<AtomicMeasure>(m, "AtomicMeasure")
        .def(py::init([](Mat points, Vec weights) { return AtomicMeasure{std::move(points), std::move(weights)}; }),
             py::arg("points"), py::arg("weights"))
        .def_readonly("points", &AtomicMeasure::points)
        .def_readonly("weights", &AtomicMeasure::weights)
        .def("total_mass", &AtomicMeasure::total_mass);

    py::class_<GridMeasure>(m, "GridMeasure")
        .def(py::init<GridSpec, std::vector<double>, double>(), py::arg("spec"), py::arg("weights"), py::arg("alpha"))
        .def_property_readonly("spec", &GridMeasure::spec)
        .def_property_readonly("weights", &GridMeasure::weights)
        .def_property_readonly("alpha", &GridMeasure::alpha)
        .def("total_mass", &GridMeasure::total_mass)
        .def("atoms", &GridMeasure::atoms)
        .def("normalized", &GridMeasure::normalized)
        .def("scaled", &GridMeasure::scaled);

    m.def("grid_measure", &make_grid, py::arg("dim"), py::arg("n"), py::arg("lo"), py::arg("hi"), py::arg("weights"),
          py::arg("alpha") = 0.5, "Grid measure with n points per axis on [lo, hi]^dim and the given weights.");
    m.def("sample_density", &from_density, py::arg("dim"), py::arg("n"), py::arg("lo"), py::arg("hi"), py::arg("density"),
          py::arg("alpha") = 0.5, py::arg("mass") = py::none(),
          "Sample a named analytic density, e.g. {'kind': 'perturbed_uniform', 'amplitude': 0.2}.");
    m.def("density_at", &density_at, py::arg("measure"), py::arg("x"), py::arg("r_avg"));
    m.def("holder_seminorm", &holder_seminorm, py::arg("measure"), py::arg("radius"));

    py::class_<Coupling>(m, "Coupling")
        .def(py::init([](AtomicMeasure s, AtomicMeasure t, PlanMatrix p) { return Coupling{std::move(s), std::move(t), std::move(p)}; }),
             py::arg("source"), py::arg("target"), py::arg("mass"))
        .def_readonly("source", &Coupling::source)
        .def_readonly("target", &Coupling::target)
        .def_readonly("mass", &Coupling::mass)
        .def("total_mass", &Coupling::total_mass)
        .def("row_sums", &Coupling::row_sums)
        .def("col_sums", &Coupling::col_sums)
        .def_static("diagonal", &Coupling::diagonal)
        .def_static("product", &Coupling::product);

    py::class_<MarginalReport>(m, "MarginalReport")
        .def_readonly("max_row_err", &MarginalReport::max_row_err)
        .def_readonly("max_col_err", &MarginalReport::max_col_err)
        .def_readonly("passed", &MarginalReport::pass);
    m.def("check_marginals", &check_marginals, py::arg("plan"), py::arg("tol") = 1e-8);
    m.def("local_energy", &local_energy, py::arg("plan"), py::arg("R"));

    py::class_<AffineFit>(m, "AffineFit")
        .def_readonly("A", &AffineFit::A)
        .def_readonly("b", &AffineFit::b)
        .def_readonly("defect", &AffineFit::defect)
        .def_readonly("degenerate", &AffineFit::degenerate);
    m.def("affine_fit", &affine_fit, py::arg("plan"), py::arg("r"), py::arg("beta") = 0.0);

    py::class_<SinkhornResult>(m, "SinkhornResult")
        .def_readonly("plan", &SinkhornResult::plan)
        .def_readonly("f", &SinkhornResult::f)
        .def_readonly("g", &SinkhornResult::g)
        .def_readonly("epsilon", &SinkhornResult::epsilon)
        .def_readonly("iterations", &SinkhornResult::iterations)
        .def_readonly("marg_err", &SinkhornResult::marg_err)
        .def_readonly("primal_cost", &SinkhornResult::primal_cost)
        .def_readonly("entropy", &SinkhornResult::entropy)
        .def_readonly("converged", &SinkhornResult::converged)
        .def_property_readonly("entropic_cost", &entropic_cost);
    m.def(
        "sinkhorn",
        [](const GridMeasure& l, const GridMeasure& u, double eps, double tol, int max_iter, int every) {
            return sinkhorn(l, u, options(eps, tol, max_iter, every));
        },
        py::arg("lam"), py::arg("mu"), py::arg("epsilon"), py::arg("tol") = 1e-9, py::arg("max_iter") = 100000,
        py::arg("stabilize_every") = 10, py::call_guard<py::gil_scoped_release>());
    m.def("gibbs_identity_check", &gibbs_identity_check, py::arg("result"), py::arg("n_samples"), py::arg("seed") = 0);

    py::class_<ExactOTResult>(m, "ExactOTResult")
        .def_readonly("plan", &ExactOTResult::plan)
        .def_readonly("cost", &ExactOTResult::cost)
        .def_readonly("method", &ExactOTResult::method)
        .def_readonly("duality_gap", &ExactOTResult::duality_gap)
        .def_readonly("certified", &ExactOTResult::certified);
    m.def("exact_ot", py::overload_cast<const GridMeasure&, const GridMeasure&>(&exact_ot), py::arg("lam"), py::arg("mu"),
          py::call_guard<py::gil_scoped_release>());
    m.def("exact_ot_atoms", py::overload_cast<const AtomicMeasure&, const AtomicMeasure&>(&exact_ot), py::arg("lam"),
          py::arg("mu"), py::call_guard<py::gil_scoped_release>());

    py::class_<Scaling>(m, "Scaling")
        .def(py::init([](Mat A, Vec b, double gamma, double kappa) { return Scaling{std::move(A), std::move(b), gamma, kappa}; }),
             py::arg("A"), py::arg("b"), py::arg("gamma"), py::arg("kappa"))
        .def_readonly("A", &Scaling::A)
        .def_readonly("b", &Scaling::b)
        .def_readonly("gamma", &Scaling::gamma)
        .def_readonly("kappa", &Scaling::kappa)
        .def("map_source", &Scaling::map_source)
        .def("map_target", &Scaling::map_target);
    m.def("compose", [](const Scaling& s2, const Scaling& s1) { return compose(s2, s1); }, py::arg("s2"), py::arg("s1"),
          "s2 after s1.");
    m.def("apply_to_coupling", &apply_to_coupling, py::arg("scaling"), py::arg("plan"));

    py::class_<DefectReport>(m, "DefectReport")
        .def_readonly("lhs", &DefectReport::lhs)
        .def_readonly("competitor_cost", &DefectReport::competitor_cost)
        .def_readonly("defect", &DefectReport::defect)
        .def_readonly("eps2_mass", &DefectReport::eps2_mass)
        .def_readonly("degenerate", &DefectReport::degenerate);
    m.def("quasimin_defect", &quasimin_defect, py::arg("plan"), py::arg("R"), py::arg("Lambda") = 2.75,
          py::arg("epsilon") = 0.0);

    py::class_<HarmonicFit>(m, "HarmonicFit")
        .def_readonly("coeffs", &HarmonicFit::coeffs)
        .def_readonly("grad0", &HarmonicFit::grad0)
        .def_readonly("hess0", &HarmonicFit::hess0)
        .def_readonly("residual", &HarmonicFit::residual);
    m.def("harmonic_fit", [](const Coupling& pi, double r) { return harmonic_fit(pi, r); }, py::arg("plan"),
          py::arg("fit_radius"));

    m.def(
        "expansion_experiment",
        [](const GridMeasure& l, const GridMeasure& u, const std::vector<double>& ladder, double tol) {
            const ExpansionTable t = expansion_experiment(l, u, ladder, options(0.1, tol, 100000, 10));
            py::list rows;
            for (const auto& r : t.rows) {
                py::dict d;
                d["epsilon"] = r.epsilon;
                d["ot_eps"] = r.ot_eps;
                d["ot"] = r.ot;
                d["gap_over_eps2"] = r.gap_over_eps2;
                d["remainder"] = r.remainder;
                d["resolved"] = r.resolved;
                rows.append(d);
            }
            py::dict out;
            out["rows"] = rows;
            out["slope"] = t.slope ? py::cast(*t.slope) : py::none();
            out["remainder_spread"] = t.remainder_spread ? py::cast(*t.remainder_spread) : py::none();
            return out;
        },
        py::arg("lam"), py::arg("mu"), py::arg("eps_ladder"), py::arg("tol") = 1e-10);

    m.def(
        "campanato_iterate",
        [](const Coupling& pi, const GridMeasure& l, const GridMeasure& u, double R0, double theta, double eps, int max_levels) {
            const CampanatoTrace t = campanato_iterate(TransportState{pi, l, u}, R0, theta, eps, max_levels);
            py::list levels;
            for (const auto& L : t.levels) {
                py::dict d;
                d["k"] = L.k;
                d["r"] = L.r;
                d["E"] = L.E;
                d["D"] = L.D;
                d["affine_defect"] = L.affine_defect;
                d["composed"] = L.composed;
                levels.append(d);
            }
            py::dict out;
            out["levels"] = levels;
            out["stop_reason"] = to_string(t.stop_reason);
            return out;
        },
        py::arg("plan"), py::arg("lam"), py::arg("mu"), py::arg("R0"), py::arg("theta"), py::arg("epsilon"),
        py::arg("max_levels") = 20);

    m.def("run", &run_cli, py::arg("command"), py::arg("experiment") = "", py::arg("config"), py::arg("out") = py::none(),
          py::arg("seed") = py::none(), "Run a CLI command in-process and return its exit code.");
    m.attr("__version__") = cli::kVersion;
}
