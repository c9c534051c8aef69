#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "resinv/config.hpp"
#include "resinv/darcy.hpp"
#include "resinv/evaluation.hpp"
#include "resinv/grid.hpp"
#include "resinv/mlp.hpp"
#include "resinv/pipeline.hpp"
#include "resinv/random_field.hpp"
#include "resinv/rare_events.hpp"
#include "resinv/training.hpp"

namespace py = pybind11;
using namespace resinv;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Amortized physics-informed inversion for Darcy flow: "
            "KL random fields, a differentiable pressure solver with discrete "
            "adjoints, MLP training and the evaluation/rare-event pipeline.";

  // grid
  py::class_<GridSpec>(m, "GridSpec")
      .def_readonly("nx", &GridSpec::nx)
      .def_readonly("ny", &GridSpec::ny)
      .def_readonly("lx", &GridSpec::lx)
      .def_readonly("ly", &GridSpec::ly)
      .def_readonly("dx", &GridSpec::dx)
      .def_readonly("dy", &GridSpec::dy)
      .def("n_nodes", &GridSpec::n_nodes)
      .def("n_interior", &GridSpec::n_interior)
      .def("idx", &GridSpec::idx, py::arg("i"), py::arg("j"));
  py::class_<BoundaryConditions>(m, "BoundaryConditions")
      .def(py::init([](double left, double right, double top, double bottom) {
             return BoundaryConditions{left, right, top, bottom};
           }),
           py::arg("left"), py::arg("right"), py::arg("top"), py::arg("bottom"))
      .def_readwrite("left", &BoundaryConditions::p_left)
      .def_readwrite("right", &BoundaryConditions::p_right)
      .def_readwrite("top", &BoundaryConditions::p_top)
      .def_readwrite("bottom", &BoundaryConditions::p_bottom);
  py::class_<ObservationSet>(m, "ObservationSet")
      .def_readonly("node_indices", &ObservationSet::node_indices)
      .def_readonly("seed", &ObservationSet::seed)
      .def("n_obs", &ObservationSet::n_obs);
  m.def("build_grid", &build_grid, py::arg("nx"), py::arg("ny"), py::arg("lx"),
        py::arg("ly"));
  m.def("boundary_mask",
        [](const GridSpec& grid, const BoundaryConditions& bc) {
          return boundary_mask(grid, bc);
        },
        py::arg("grid"), py::arg("bc"));
  m.def("sample_observation_nodes", &sample_observation_nodes, py::arg("grid"),
        py::arg("n_obs"), py::arg("seed"));

  // random field
  py::class_<CovarianceSpec>(m, "CovarianceSpec")
      .def(py::init([](double sigma2, double corr_length) {
             return CovarianceSpec{sigma2, corr_length};
           }),
           py::arg("sigma2"), py::arg("corr_length"))
      .def_readwrite("sigma2", &CovarianceSpec::sigma2)
      .def_readwrite("corr_length", &CovarianceSpec::corr_length);
  py::class_<KLBasis>(m, "KLBasis")
      .def_readonly("nx", &KLBasis::nx)
      .def_readonly("ny", &KLBasis::ny)
      .def_readonly("n_modes", &KLBasis::n_modes)
      .def_readonly("eigenvalues", &KLBasis::eigenvalues)
      .def_readonly("modes", &KLBasis::modes)
      .def_readonly("mean_log_k", &KLBasis::mean_log_k)
      .def_readonly("energy_fraction", &KLBasis::energy_fraction);
  py::class_<PermeabilityField>(m, "PermeabilityField")
      .def_readonly("log_k", &PermeabilityField::log_k)
      .def_readonly("k", &PermeabilityField::k);
  m.def("covariance_matrix",
        [](const GridSpec& grid, const CovarianceSpec& spec) {
          return covariance_matrix(grid, spec);
        },
        py::arg("grid"), py::arg("spec"));
  m.def("compute_kl_basis", &compute_kl_basis, py::arg("cov"), py::arg("n_modes"),
        py::arg("mean_log_k") = 0.0);
  m.def("build_kl_basis", &build_kl_basis, py::arg("grid"), py::arg("spec"),
        py::arg("n_modes"), py::arg("mean_log_k") = 0.0);
  m.def("realize_log_permeability",
        [](const KLBasis& basis, const CoeffVector& coeffs) {
          return realize_log_permeability(basis, coeffs);
        },
        py::arg("basis"), py::arg("coeffs"));
  m.def("sample_coefficients",
        [](int n_modes, std::uint64_t seed) {
          Rng rng(seed);
          return sample_coefficients(n_modes, rng);
        },
        py::arg("n_modes"), py::arg("seed"));
  m.def("save_kl_basis", &save_kl_basis, py::arg("basis"), py::arg("path"));
  m.def("load_kl_basis", &load_kl_basis, py::arg("path"));

  // darcy
  py::class_<ModelContext>(m, "ModelContext")
      .def(py::init<GridSpec, BoundaryConditions, KLBasis, ObservationSet>(),
           py::arg("grid"), py::arg("bc"), py::arg("basis"), py::arg("obs"))
      .def_readonly("grid", &ModelContext::grid)
      .def_readonly("bc", &ModelContext::bc)
      .def_readonly("basis", &ModelContext::basis)
      .def_readonly("obs", &ModelContext::obs)
      .def("n_obs", &ModelContext::n_obs)
      .def("n_modes", &ModelContext::n_modes);
  m.def("forward",
        [](const CoeffVector& coeffs, const ModelContext& ctx) {
          const ForwardResult result = forward(coeffs, ctx);
          return py::make_tuple(result.pressure.p, result.observed);
        },
        py::arg("coeffs"), py::arg("ctx"),
        "Returns (full pressure field, observed pressures).");
  m.def("adjoint_gradient", &adjoint_gradient, py::arg("coeffs"),
        py::arg("grad_wrt_observed"), py::arg("ctx"));

  // mlp
  py::class_<MlpParams>(m, "MlpParams")
      .def_readonly("n_in", &MlpParams::n_in)
      .def_readonly("n_hidden", &MlpParams::n_hidden)
      .def_readonly("n_out", &MlpParams::n_out)
      .def_readonly("weights", &MlpParams::weights)
      .def_readonly("biases", &MlpParams::biases);
  m.def("mlp_init", &mlp_init, py::arg("n_in"), py::arg("n_out"), py::arg("seed"),
        py::arg("n_hidden") = kDefaultHiddenWidth);
  m.def("mlp_forward",
        [](const MlpParams& params, const Eigen::MatrixXd& inputs) {
          return mlp_forward(params, inputs, nullptr);
        },
        py::arg("params"), py::arg("inputs"));

  // training
  py::enum_<DatasetRole>(m, "DatasetRole")
      .value("train", DatasetRole::kTrain)
      .value("validation", DatasetRole::kValidation)
      .value("test", DatasetRole::kTest);
  py::enum_<ModelKind>(m, "ModelKind")
      .value("data_driven", ModelKind::kDataDriven)
      .value("physics_informed", ModelKind::kPhysicsInformed);
  py::class_<SampleRecord>(m, "SampleRecord")
      .def_readonly("coeffs", &SampleRecord::coeffs)
      .def_readonly("clean", &SampleRecord::clean)
      .def_readonly("noisy", &SampleRecord::noisy);
  py::class_<Dataset>(m, "Dataset")
      .def_readonly("records", &Dataset::records)
      .def_readonly("noise_level", &Dataset::noise_level)
      .def("size", &Dataset::size);
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("n_batches", &TrainConfig::n_batches)
      .def_readwrite("samples_per_iteration", &TrainConfig::samples_per_iteration)
      .def_readwrite("n_iterations", &TrainConfig::n_iterations)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("coef_scale", &TrainConfig::coef_scale)
      .def_readwrite("alpha_coef", &TrainConfig::alpha_coef)
      .def_readwrite("noise_level", &TrainConfig::noise_level)
      .def_readwrite("model_kind", &TrainConfig::model_kind)
      .def_readwrite("validate_every", &TrainConfig::validate_every);
  py::class_<IterationStats>(m, "IterationStats")
      .def_readonly("iteration", &IterationStats::iteration)
      .def_readonly("train_total", &IterationStats::train_total)
      .def_readonly("train_pres", &IterationStats::train_pres)
      .def_readonly("train_coef", &IterationStats::train_coef);
  py::class_<ValidationPoint>(m, "ValidationPoint")
      .def_readonly("iteration", &ValidationPoint::iteration)
      .def_readonly("coef_loss", &ValidationPoint::coef_loss)
      .def_readonly("pres_loss", &ValidationPoint::pres_loss);
  py::class_<TrainHistory>(m, "TrainHistory")
      .def_readonly("iterations", &TrainHistory::iterations)
      .def_readonly("validations", &TrainHistory::validations);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("params", &TrainResult::params)
      .def_readonly("history", &TrainResult::history);
  m.def("generate_dataset",
        [](int n, const ModelContext& ctx, double noise, std::uint64_t seed,
           DatasetRole role, int threads) {
          return generate_dataset(n, ctx, noise, seed, role, threads);
        },
        py::arg("n_samples"), py::arg("ctx"), py::arg("noise_level"),
        py::arg("seed"), py::arg("role") = DatasetRole::kTrain,
        py::arg("n_threads") = 1);
  m.def("coef_loss", &coef_loss, py::arg("pred"), py::arg("target"));
  m.def("pressure_loss",
        [](const Eigen::MatrixXd& coeff_preds, const Eigen::MatrixXd& noisy,
           const ModelContext& ctx) {
          const PressureLossResult result =
              pressure_loss(coeff_preds, noisy, ctx);
          return py::make_tuple(result.value, result.adjoint_seeds);
        },
        py::arg("coeff_preds"), py::arg("noisy_pressures"), py::arg("ctx"));
  m.def("total_pi_loss", &total_pi_loss, py::arg("coef"), py::arg("pres"),
        py::arg("alpha_coef"));
  m.def("train",
        [](const Dataset& dataset, const Dataset& validation,
           const TrainConfig& config, const ModelContext& ctx,
           std::uint64_t seed, int threads) {
          TrainOptions options;
          options.n_threads = threads;
          return train(dataset, validation, config, ctx, seed, options);
        },
        py::arg("dataset"), py::arg("validation"), py::arg("config"),
        py::arg("ctx"), py::arg("seed"), py::arg("n_threads") = 1);
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("params"), py::arg("state"),
        py::arg("path"));

  // evaluation
  py::class_<BoxStats>(m, "BoxStats")
      .def_readonly("median", &BoxStats::median)
      .def_readonly("q1", &BoxStats::q1)
      .def_readonly("q3", &BoxStats::q3)
      .def_readonly("lo_whisker", &BoxStats::lo_whisker)
      .def_readonly("hi_whisker", &BoxStats::hi_whisker);
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("n_used", &EvalReport::n_used)
      .def_readonly("n_failed", &EvalReport::n_failed)
      .def_readonly("pres_dd", &EvalReport::pres_dd)
      .def_readonly("pres_pi", &EvalReport::pres_pi)
      .def_readonly("perm_dd", &EvalReport::perm_dd)
      .def_readonly("perm_pi", &EvalReport::perm_pi)
      .def_readonly("win_pres_pi", &EvalReport::win_pres_pi)
      .def_readonly("win_perm_pi", &EvalReport::win_perm_pi)
      .def_readonly("mean_pres_dd", &EvalReport::mean_pres_dd)
      .def_readonly("mean_pres_pi", &EvalReport::mean_pres_pi)
      .def_readonly("mean_perm_dd", &EvalReport::mean_perm_dd)
      .def_readonly("mean_perm_pi", &EvalReport::mean_perm_pi)
      .def_readonly("reduction_pres_pct", &EvalReport::reduction_pres_pct)
      .def_readonly("reduction_perm_pct", &EvalReport::reduction_perm_pct)
      .def_readonly("box_pres_dd", &EvalReport::box_pres_dd)
      .def_readonly("box_pres_pi", &EvalReport::box_pres_pi);
  m.def("pressure_rmse", &pressure_rmse, py::arg("pred_obs"), py::arg("ref_obs"));
  m.def("perm_rel_l2", &perm_rel_l2, py::arg("pred_logk"), py::arg("true_logk"));
  m.def("ecdf", &ecdf, py::arg("values"));
  m.def("box_stats", &box_stats, py::arg("values"));
  m.def("compare_models", &compare_models, py::arg("dd"), py::arg("pi"),
        py::arg("test"), py::arg("ctx"), py::arg("coef_scale"),
        py::arg("n_threads") = 1);

  // rare events
  py::class_<TailSample>(m, "TailSample")
      .def_readonly("coeffs", &TailSample::coeffs)
      .def_readonly("qoi", &TailSample::qoi)
      .def_readonly("weight", &TailSample::weight);
  py::class_<BruteForceTail>(m, "BruteForceTail")
      .def_readonly("threshold", &BruteForceTail::threshold)
      .def_readonly("tail", &BruteForceTail::tail)
      .def_readonly("qoi_values", &BruteForceTail::qoi_values);
  py::class_<ImportanceSamples>(m, "ImportanceSamples")
      .def_readonly("samples", &ImportanceSamples::samples)
      .def_readonly("acceptance_rate", &ImportanceSamples::acceptance_rate)
      .def_readonly("n_proposed", &ImportanceSamples::n_proposed)
      .def_readonly("low_yield", &ImportanceSamples::low_yield);
  m.def("qoi", &qoi, py::arg("coeffs"), py::arg("ctx"), py::arg("critical_node"));
  m.def("qoi_gradient", &qoi_gradient, py::arg("coeffs"), py::arg("ctx"),
        py::arg("critical_node"));
  m.def("brute_force_tail", &brute_force_tail, py::arg("n"), py::arg("quantile"),
        py::arg("ctx"), py::arg("critical_node"), py::arg("seed"),
        py::arg("n_threads") = 1);
  m.def("find_shift",
        [](double threshold, const ModelContext& ctx, int critical_node,
           std::optional<CoeffVector> warm_start,
           std::optional<double> median_hint) {
          FindShiftSettings settings;
          settings.warm_start = std::move(warm_start);
          settings.median_hint = median_hint;
          return find_shift(threshold, ctx, critical_node, settings);
        },
        py::arg("threshold"), py::arg("ctx"), py::arg("critical_node"),
        py::arg("warm_start") = std::nullopt,
        py::arg("median_hint") = std::nullopt);
  m.def("importance_sample_tail", &importance_sample_tail, py::arg("shift"),
        py::arg("n"), py::arg("threshold"), py::arg("ctx"),
        py::arg("critical_node"), py::arg("seed"), py::arg("n_threads") = 1);
  m.def("tail_probability_estimate", &tail_probability_estimate,
        py::arg("samples"));
  m.def("resolve_critical_node", &resolve_critical_node, py::arg("grid"),
        py::arg("x"), py::arg("y"));
}
