#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "resinv/darcy.hpp"
#include "resinv/mlp.hpp"

namespace resinv {

enum class DatasetRole { kTrain, kValidation, kTest };
enum class ModelKind { kDataDriven, kPhysicsInformed };

std::string to_string(DatasetRole role);
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// One (coefficients, clean pressures, noisy pressures) triple.
struct SampleRecord {
  CoeffVector coeffs;
  Eigen::VectorXd clean;  // MPa at the observation nodes
  Eigen::VectorXd noisy;  // clean * (1 + noise_level * xi)
};

struct Dataset {
  std::vector<SampleRecord> records;
  DatasetRole role = DatasetRole::kTrain;
  std::uint64_t seed = 0;
  double noise_level = 0.0;
  std::uint64_t basis_id = 0;
  std::uint64_t obs_id = 0;
  int nx = 0, ny = 0;

  int size() const { return static_cast<int>(records.size()); }
  int n_modes() const { return records.empty() ? 0 : static_cast<int>(records[0].coeffs.size()); }
  int n_obs() const { return records.empty() ? 0 : static_cast<int>(records[0].clean.size()); }

  // Batch views (row per sample).
  Eigen::MatrixXd coeff_matrix(const std::vector<int>& idx) const;
  Eigen::MatrixXd noisy_matrix(const std::vector<int>& idx) const;
  Eigen::MatrixXd clean_matrix(const std::vector<int>& idx) const;
};

std::uint64_t context_basis_id(const KLBasis& basis);
std::uint64_t context_obs_id(const ObservationSet& obs);

// Draws coefficients, runs the forward model and perturbs the observations
// multiplicatively: noisy_i = clean_i * (1 + noise_level * xi_i). Sample j
// uses the derived stream (seed, j), so generation parallelizes without
// changing any draw.
Dataset generate_dataset(int n_samples, const ModelContext& ctx,
                         double noise_level, std::uint64_t seed,
                         DatasetRole role, int n_threads = 1);

// Same pipeline for externally supplied coefficient vectors (rare-event
// tails reuse the bulk formatting and noise convention).
Dataset generate_dataset_from_coeffs(const std::vector<CoeffVector>& coeffs,
                                     const ModelContext& ctx, double noise_level,
                                     std::uint64_t seed, DatasetRole role,
                                     int n_threads = 1);

// DSET binary file.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// Mean over samples of the per-sample mean-square coefficient mismatch.
double coef_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct PressureLossResult {
  double value = 0.0;
  // d(loss)/d(observed) per sample: 2 (F(k) - p) / (N_s N_obs).
  Eigen::MatrixXd adjoint_seeds;
};

// Mean over samples of the per-sample mean-square pressure mismatch through
// the forward model. When grad_coeffs is non-null it also returns
// d(loss)/d(coeff_preds), reusing each sample's factorization for the
// adjoint solve.
PressureLossResult pressure_loss(const Eigen::MatrixXd& coeff_preds,
                                 const Eigen::MatrixXd& noisy_pressures,
                                 const ModelContext& ctx,
                                 Eigen::MatrixXd* grad_coeffs = nullptr,
                                 int n_threads = 1);

// Eq.-4 combination; alpha_coef must be positive.
double total_pi_loss(double coef, double pres, double alpha_coef);

struct TrainConfig {
  int batch_size = 5;
  int n_batches = 100;
  int samples_per_iteration = 500;
  int n_iterations = 500;
  double learning_rate = 1e-4;
  double coef_scale = 0.1;  // network predicts coef_scale * k
  double alpha_coef = 0.1;
  double noise_level = 0.1;
  ModelKind model_kind = ModelKind::kPhysicsInformed;
  int validate_every = 10;

  void validate() const;
};

struct ValidationPoint {
  std::int64_t iteration = 0;
  double coef_loss = 0.0;  // scaled space
  double pres_loss = 0.0;
};

struct IterationStats {
  std::int64_t iteration = 0;
  double train_total = 0.0;  // J: pres + alpha * coef for PI, coef for DD
  double train_pres = 0.0;   // 0 for data-driven
  double train_coef = 0.0;
  double wall_ms = 0.0;
  int skipped_batches = 0;
};

struct TrainHistory {
  std::vector<IterationStats> iterations;
  std::vector<ValidationPoint> validations;
};

// History CSV: iteration, train_loss, val_coef_loss, val_pres_loss, wall_ms
// (validation fields empty between cadence points).
void save_history_csv(const TrainHistory& history, const std::string& path);

struct TrainOptions {
  int n_threads = 1;
  // When set, each iteration row is appended and flushed so an aborted run
  // keeps its history.
  std::optional<std::string> history_path;
  // Resume support: continue from these parameters and iteration offset.
  std::optional<MlpParams> initial_params;
  std::optional<AdamState> initial_state;
  std::int64_t start_iteration = 0;
};

struct TrainResult {
  MlpParams params;
  AdamState state;
  TrainHistory history;
};

// Permutation-based epoch sampler: every index appears exactly once per
// epoch; reshuffles when exhausted.
class PermutationSampler {
 public:
  PermutationSampler(int n, std::uint64_t seed);
  int next();

 private:
  void reshuffle();
  std::vector<int> order_;
  int pos_ = 0;
  Rng rng_;
};

TrainResult train(const Dataset& dataset, const Dataset& validation,
                  const TrainConfig& config, const ModelContext& ctx,
                  std::uint64_t seed, const TrainOptions& options = {});

}  // namespace resinv
