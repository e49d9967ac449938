#include "flowfilt/acceptance.hpp"
#include "flowfilt/ensemble_estimation.hpp"
#include "flowfilt/errors.hpp"
#include "flowfilt/experiment.hpp"
#include "flowfilt/moment_propagation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace flowfilt;

namespace {

FlowParameterization flow_from(const GaussianPrior& prior, const LinearMeasurement& meas, const std::string& flow,
                               std::optional<Matrix> Q0, std::optional<double> alpha) {
    return make_flow(FlowDescriptor{flow, std::move(Q0), alpha}, prior, meas);
}

}  // namespace

PYBIND11_MODULE(_flowfilt, m) {
    m.doc() = "Parameterized stochastic particle flow filters";
    m.attr("__version__") = kVersion;

    auto base = py::register_exception<FlowError>(m, "FlowError", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<AdmissibilityError>(m, "AdmissibilityError", base.ptr());
    py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
    py::register_exception<InsufficientSampleError>(m, "InsufficientSampleError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

    py::class_<GaussianPrior>(m, "GaussianPrior")
        .def(py::init<Vector, Matrix>(), py::arg("x_prior"), py::arg("P_g"))
        .def_property_readonly("x_prior", &GaussianPrior::x_prior)
        .def_property_readonly("P_g", &GaussianPrior::P_g)
        .def_property_readonly("information", &GaussianPrior::information)
        .def_property_readonly("dim", &GaussianPrior::dim);

    py::class_<LinearMeasurement>(m, "LinearMeasurement")
        .def(py::init<Matrix, Matrix, Vector>(), py::arg("H"), py::arg("R"), py::arg("z"))
        .def_property_readonly("H", &LinearMeasurement::H)
        .def_property_readonly("R", &LinearMeasurement::R)
        .def_property_readonly("z", &LinearMeasurement::z)
        .def_property_readonly("information", &LinearMeasurement::information);

    py::enum_<Scheme>(m, "Scheme")
        .value("EulerMaruyama", Scheme::EulerMaruyama)
        .value("DeterministicRK4", Scheme::DeterministicRK4);

    py::class_<LambdaGrid>(m, "LambdaGrid")
        .def_static("uniform", &LambdaGrid::uniform, py::arg("steps") = LambdaGrid::kDefaultSteps,
                    py::arg("scheme") = Scheme::EulerMaruyama)
        .def_property_readonly("nodes", &LambdaGrid::nodes)
        .def_property_readonly("steps", &LambdaGrid::steps);

    py::class_<FlowParameterization>(m, "FlowParameterization")
        .def_property_readonly("description", [](const FlowParameterization& p) { return p.description(); });

    m.def("make_flow", &flow_from, py::arg("prior"), py::arg("meas"), py::arg("flow") = "fixed_q",
          py::arg("Q0") = py::none(), py::arg("alpha") = py::none());

    py::class_<ParticleEnsemble>(m, "ParticleEnsemble")
        .def_readonly("particles", &ParticleEnsemble::particles)
        .def_readonly("ids", &ParticleEnsemble::ids)
        .def_readonly("seed", &ParticleEnsemble::seed)
        .def_readonly("lam", &ParticleEnsemble::lambda)
        .def_property_readonly("size", &ParticleEnsemble::size);

    m.def("sample_prior", &sample_prior, py::arg("N"), py::arg("prior"), py::arg("seed"));
    m.def(
        "propagate_ensemble",
        [](const ParticleEnsemble& e, const FlowParameterization& p, const LambdaGrid& grid, const GaussianPrior& prior,
           const LinearMeasurement& meas, unsigned threads) {
            py::gil_scoped_release release;
            return propagate_ensemble(e, p, grid, prior, meas, PropagationOptions{threads});
        },
        py::arg("ensemble"), py::arg("flow"), py::arg("grid"), py::arg("prior"), py::arg("meas"),
        py::arg("threads") = 0);
    m.def("mean_estimate", &mean_estimate);
    m.def("covariance_estimate", &covariance_estimate);

    m.def(
        "closed_form_posterior",
        [](double lambda, const GaussianPrior& prior, const LinearMeasurement& meas) {
            const auto g = closed_form_posterior(lambda, prior, meas);
            return py::make_tuple(g.mean, g.covariance);
        },
        py::arg("lam"), py::arg("prior"), py::arg("meas"));
    m.def("lmv_estimate", &lmv_estimate);
    m.def(
        "solve_moment_odes",
        [](const FlowParameterization& p, const LambdaGrid& grid, const GaussianPrior& prior,
           const LinearMeasurement& meas) {
            const auto path = solve_moment_odes(p, grid, prior, meas);
            return py::make_tuple(path.nodes, path.means, path.covariances);
        },
        py::arg("flow"), py::arg("grid"), py::arg("prior"), py::arg("meas"));

    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::string& base_dir) {
            const auto config = parse_config(nlohmann::json::parse(config_json), base_dir);
            RunArtifacts out;
            {
                py::gil_scoped_release release;
                out = execute(config);
            }
            return py::make_tuple(out.summary.dump(), out.files);
        },
        py::arg("config_json"), py::arg("base_dir") = "",
        "Runs an experiment config in memory; returns (summary JSON, {file name: content}).");

    py::class_<CriterionResult>(m, "CriterionResult")
        .def_readonly("id", &CriterionResult::id)
        .def_readonly("name", &CriterionResult::name)
        .def_readonly("passed", &CriterionResult::passed)
        .def_readonly("seconds", &CriterionResult::seconds)
        .def_readonly("detail", &CriterionResult::detail)
        .def("__repr__", &format_result);

    m.def(
        "run_criterion",
        [](int id, unsigned threads) {
            py::gil_scoped_release release;
            return run_criterion(id, AcceptanceOptions{threads, {}});
        },
        py::arg("id"), py::arg("threads") = 0);
}
