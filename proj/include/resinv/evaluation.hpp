#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "resinv/darcy.hpp"
#include "resinv/mlp.hpp"
#include "resinv/training.hpp"

namespace resinv {

// RMSE between inferred and reference pressures at the monitoring nodes (MPa).
double pressure_rmse(const Eigen::VectorXd& pred_obs,
                     const Eigen::VectorXd& ref_obs);

// ||pred - true|| / ||true|| over all nodes of the log-permeability field;
// returns ||pred|| when the reference is identically zero.
double perm_rel_l2(const Eigen::VectorXd& pred_logk,
                   const Eigen::VectorXd& true_logk);

// Right-continuous ECDF over distinct values: (value, fraction <= value).
std::vector<std::pair<double, double>> ecdf(const std::vector<double>& values);

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double lo_whisker = 0.0;
  double hi_whisker = 0.0;
};

// Quartiles by linear interpolation of order statistics; whiskers at the most
// extreme data points within 1.5 IQR of the box.
BoxStats box_stats(const std::vector<double>& values);

// Linear-interpolation empirical quantile, the same convention box_stats uses.
double quantile_interpolated(std::vector<double> values, double p);

struct Histogram {
  double lo = 0.0;
  double bin_width = 0.0;
  std::vector<int> counts;
};

// Freedman-Diaconis bin count with a floor of 20 bins.
Histogram histogram(const std::vector<double>& values, int min_bins = 20);

// Per-sample errors and aggregate statistics for a data-driven /
// physics-informed model pair on one test set.
struct EvalReport {
  std::vector<double> pres_dd, pres_pi;  // pressure RMSE per used sample
  std::vector<double> perm_dd, perm_pi;  // relative L2 log-permeability error
  int n_used = 0;
  int n_failed = 0;

  double win_pres_pi = 0.0;  // fraction of samples PI wins (ties count 0.5)
  double win_perm_pi = 0.0;
  double mean_pres_dd = 0.0, mean_pres_pi = 0.0;
  double mean_perm_dd = 0.0, mean_perm_pi = 0.0;
  double reduction_pres_pct = 0.0;  // (mean_dd - mean_pi) / mean_dd * 100
  double reduction_perm_pct = 0.0;

  BoxStats box_pres_dd, box_pres_pi, box_perm_dd, box_perm_pi;
  std::vector<std::pair<double, double>> ecdf_pres_dd, ecdf_pres_pi;
  std::vector<std::pair<double, double>> ecdf_perm_dd, ecdf_perm_pi;
  Histogram hist_pres_dd, hist_pres_pi, hist_perm_dd, hist_perm_pi;
};

// Networks are applied to the clean test pressures (the reference data carry
// no noise); errors come from re-simulating the inferred coefficients.
EvalReport compare_models(const MlpParams& dd, const MlpParams& pi,
                          const Dataset& test, const ModelContext& ctx,
                          double coef_scale, int n_threads = 1);

// Scenario letters encode (train size, observation count, correlation
// length), L(arge)/S(mall) in that order.
struct ScenarioSpec {
  std::string name;
  int train_size = 0;
  int n_obs = 0;
  double corr_length = 0.0;
};

struct ScenarioFactors {
  int train_large = 50000, train_small = 5000;
  int obs_large = 200, obs_small = 50;
  double corr_large = 100.0, corr_small = 10.0;
};

extern const std::array<const char*, 8> kScenarioNames;  // LLL ... SSS

ScenarioSpec scenario_from_name(const std::string& name,
                                const ScenarioFactors& factors = {});

struct ScenarioRunConfig {
  GridSpec grid;
  BoundaryConditions bc;
  double sigma2 = 1.0;
  double mean_log_k = 0.0;
  int n_modes = 0;
  std::uint64_t obs_seed = 0;
  TrainConfig train_config;  // n_obs-independent parts reused per scenario
  int n_validation = 0;
  int n_test = 0;
  std::uint64_t master_seed = 0;
  int n_threads = 1;
};

struct ScenarioResult {
  ScenarioSpec spec;
  EvalReport report;
  std::optional<std::string> error;  // set when the scenario failed
};

// One full train-and-compare cycle per scenario: fresh basis for the
// scenario's correlation length, fresh observation set, fresh datasets, both
// models trained, evaluated on a fresh test set. A failing scenario is
// reported and does not abort the rest.
std::vector<ScenarioResult> run_scenarios(const std::vector<ScenarioSpec>& specs,
                                          const ScenarioRunConfig& config);

// CSV emission. `write_summary_csv` writes one row per (named) report;
// `write_report_csvs` writes per-sample, ECDF, box and histogram files with
// the given path prefix.
void write_summary_csv(const std::vector<std::pair<std::string, const EvalReport*>>& reports,
                       const std::string& path);
void write_report_csvs(const EvalReport& report, const std::string& prefix);

}  // namespace resinv
