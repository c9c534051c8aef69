#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "resinv/darcy.hpp"
#include "resinv/evaluation.hpp"
#include "resinv/training.hpp"

namespace resinv {

// Tail definition: pressure at one critical interior node, extreme above the
// (1 - quantile) level of its Monte Carlo distribution.
struct RareEventConfig {
  int critical_node = -1;
  double quantile = 0.01;
  std::optional<double> threshold;  // MPa; derived from quantile when unset
  int n_bruteforce = 10000;

  void validate(const GridSpec& grid) const;
};

struct TailSample {
  CoeffVector coeffs;
  double qoi = 0.0;     // MPa
  double weight = 1.0;  // likelihood ratio; 1 for brute-force samples
};

// Full-field pressure at the critical node (not restricted to observation
// nodes).
double qoi(const CoeffVector& coeffs, const ModelContext& ctx,
           int critical_node);

// d(qoi)/d(coeffs) via the adjoint with a unit seed on the critical node.
CoeffVector qoi_gradient(const CoeffVector& coeffs, const ModelContext& ctx,
                         int critical_node);

struct BruteForceTail {
  double threshold = 0.0;  // empirical (1 - quantile) level (interpolated)
  std::vector<TailSample> tail;
  std::vector<double> qoi_values;  // all n draws, in draw order
};

// n Monte Carlo draws from the prior; the tail keeps every sample with
// qoi >= threshold at unit weight. Sample j uses stream (seed, j).
BruteForceTail brute_force_tail(int n, double quantile, const ModelContext& ctx,
                                int critical_node, std::uint64_t seed,
                                int n_threads = 1);

// Value-and-gradient functional, so the optimizer and samplers can run
// against closed-form toys in tests.
using QoiFn = std::function<double(const CoeffVector&)>;
using QoiGradFn = std::function<CoeffVector(const CoeffVector&)>;

struct FindShiftSettings {
  int max_mu_stages = 8;
  int max_inner_iterations = 200;
  double initial_mu = 1.0;
  double mu_factor = 10.0;
  double initial_step = 0.5;
  double qoi_tolerance = 1e-3;  // accept qoi >= threshold - tolerance
  std::optional<CoeffVector> warm_start;
  std::optional<double> median_hint;  // reference median of the QoI
};

// Approximate minimizer of 0.5 ||k||^2 subject to qoi(k) >= threshold, by
// gradient ascent on -0.5||k||^2 - mu min(0, qoi - threshold)^2 with
// escalating mu. Throws NumericError when no iterate reaches
// threshold - qoi_tolerance.
CoeffVector find_shift(double threshold, int n_modes, const QoiFn& qoi_fn,
                       const QoiGradFn& grad_fn,
                       const FindShiftSettings& settings = {});
CoeffVector find_shift(double threshold, const ModelContext& ctx,
                       int critical_node,
                       const FindShiftSettings& settings = {});

struct ImportanceSamples {
  std::vector<TailSample> samples;  // accepted: qoi >= threshold
  double acceptance_rate = 0.0;
  int n_proposed = 0;
  bool low_yield = false;  // acceptance below 5%
};

// Draw k ~ N(shift, I); keep qoi >= threshold with weight
// phi(k)/phi(k - shift) = exp(-k . shift + 0.5 ||shift||^2).
ImportanceSamples importance_sample_tail(const CoeffVector& shift, int n,
                                         double threshold,
                                         const ModelContext& ctx,
                                         int critical_node, std::uint64_t seed,
                                         int n_threads = 1);
ImportanceSamples importance_sample_tail_fn(const CoeffVector& shift, int n,
                                            double threshold, const QoiFn& qoi_fn,
                                            std::uint64_t seed);

// (sum of accepted weights) / n, the tilted-Gaussian estimate of
// P(qoi >= threshold).
double tail_probability_estimate(const ImportanceSamples& samples);

// Tail-sample file: dataset layout plus per-record weight and a
// (threshold, shift, acceptance rate) metadata block.
struct TailDataset {
  Dataset dataset;
  std::vector<double> weights;
  double threshold = 0.0;
  CoeffVector shift;
  double acceptance_rate = 0.0;
};

void save_tail_dataset(const TailDataset& tail, const std::string& path);
TailDataset load_tail_dataset(const std::string& path);

// The four train/evaluate compositions around the rare regime.
enum class RareCase { kTrainBulkEvalBulk, kTrainBulkEvalRare,
                      kTrainBulkRareEvalRare, kTrainRareEvalRare };

std::string to_string(RareCase c);  // tBeB, tBeR, tBnReR, tReR

struct RareCasesConfig {
  TrainConfig train_config;
  MlpParams base_dd;  // bulk-trained models, reused for tBeB / tBeR
  MlpParams base_pi;
  std::uint64_t seed = 0;
  int n_threads = 1;
};

struct RareCaseResult {
  RareCase rare_case;
  EvalReport report;
  std::optional<std::string> error;
};

// tBnReR trains on bulk+rare concatenated (unweighted, standard permutation
// shuffle); tReR trains on rare only with the rare validation set.
std::vector<RareCaseResult> run_rare_cases(
    const Dataset& bulk_train, const Dataset& bulk_val, const Dataset& rare_train,
    const Dataset& rare_val, const Dataset& bulk_test, const Dataset& rare_test,
    const ModelContext& ctx, const RareCasesConfig& config);

}  // namespace resinv
