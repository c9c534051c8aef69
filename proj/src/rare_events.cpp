#include "resinv/rare_events.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "resinv/errors.hpp"
#include "resinv/io_util.hpp"
#include "resinv/parallel.hpp"

namespace resinv {

void RareEventConfig::validate(const GridSpec& grid) const {
  if (!(quantile > 0.0 && quantile < 1.0))
    throw ConfigError("rare-event quantile must lie in (0, 1)");
  if (critical_node < 0 || critical_node >= grid.n_nodes())
    throw ConfigError("critical node is outside the grid");
  const int i = grid.node_i(critical_node);
  const int j = grid.node_j(critical_node);
  if (grid.on_boundary(i, j))
    throw ConfigError("critical node must be interior");
  if (n_bruteforce < 1 || static_cast<double>(n_bruteforce) * quantile < 1.0)
    throw ConfigError("n_bruteforce * quantile must be at least 1");
}

double qoi(const CoeffVector& coeffs, const ModelContext& ctx,
           int critical_node) {
  DarcySolve solve(coeffs, ctx);
  return solve.pressure()[critical_node];
}

CoeffVector qoi_gradient(const CoeffVector& coeffs, const ModelContext& ctx,
                         int critical_node) {
  DarcySolve solve(coeffs, ctx);
  return DarcySolve::chain_to_coeffs(ctx.basis,
                                     solve.grad_log_k_at_node(critical_node));
}

BruteForceTail brute_force_tail(int n, double quantile, const ModelContext& ctx,
                                int critical_node, std::uint64_t seed,
                                int n_threads) {
  if (n < 1 || static_cast<double>(n) * quantile < 1.0)
    throw std::invalid_argument("need n * quantile >= 1 for a nonempty tail");

  BruteForceTail result;
  std::vector<CoeffVector> coeffs(n);
  result.qoi_values.resize(n);
  parallel_for(n, n_threads, [&](int j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    coeffs[j] = sample_coefficients(ctx.n_modes(), rng);
    result.qoi_values[j] = qoi(coeffs[j], ctx, critical_node);
  });

  result.threshold = quantile_interpolated(result.qoi_values, 1.0 - quantile);
  for (int j = 0; j < n; ++j)
    if (result.qoi_values[j] >= result.threshold)
      result.tail.push_back(TailSample{coeffs[j], result.qoi_values[j], 1.0});
  return result;
}

CoeffVector find_shift(double threshold, int n_modes, const QoiFn& qoi_fn,
                       const QoiGradFn& grad_fn,
                       const FindShiftSettings& settings) {
  const CoeffVector origin = CoeffVector::Zero(n_modes);
  const double median =
      settings.median_hint ? *settings.median_hint : qoi_fn(origin);
  if (!(threshold > median))
    throw std::invalid_argument(
        "find_shift needs a threshold above the median QoI (threshold=" +
        std::to_string(threshold) + ", median=" + std::to_string(median) + ")");

  CoeffVector x = settings.warm_start ? *settings.warm_start : origin;

  bool found = false;
  CoeffVector best = x;
  double best_half_norm2 = 0.0;
  const auto consider = [&](const CoeffVector& cand, double value) {
    if (value < threshold - settings.qoi_tolerance) return;
    const double half_norm2 = 0.5 * cand.squaredNorm();
    if (!found || half_norm2 < best_half_norm2) {
      best = cand;
      best_half_norm2 = half_norm2;
      found = true;
    }
  };
  consider(x, qoi_fn(x));

  double mu = settings.initial_mu;
  for (int stage = 0; stage < settings.max_mu_stages; ++stage, mu *= settings.mu_factor) {
    double step = settings.initial_step;
    double value = qoi_fn(x);
    double objective = -0.5 * x.squaredNorm() -
                       mu * std::pow(std::min(0.0, value - threshold), 2);
    for (int it = 0; it < settings.max_inner_iterations; ++it) {
      const double gap = std::min(0.0, value - threshold);
      const CoeffVector ascent = -x - 2.0 * mu * gap * grad_fn(x);
      if (ascent.norm() < 1e-12) break;
      const CoeffVector trial = x + step * ascent;
      const double trial_value = qoi_fn(trial);
      const double trial_objective =
          -0.5 * trial.squaredNorm() -
          mu * std::pow(std::min(0.0, trial_value - threshold), 2);
      if (trial_objective > objective) {
        x = trial;
        value = trial_value;
        objective = trial_objective;
        consider(x, value);
        step *= 1.2;
      } else {
        step *= 0.5;
        if (step < 1e-12) break;
      }
    }
  }

  if (!found)
    throw NumericError("find_shift did not reach the threshold; best qoi = " +
                       std::to_string(qoi_fn(x)));
  return best;
}

CoeffVector find_shift(double threshold, const ModelContext& ctx,
                       int critical_node, const FindShiftSettings& settings) {
  return find_shift(
      threshold, ctx.n_modes(),
      [&](const CoeffVector& k) { return qoi(k, ctx, critical_node); },
      [&](const CoeffVector& k) { return qoi_gradient(k, ctx, critical_node); },
      settings);
}

namespace {

double importance_weight(const CoeffVector& k, const CoeffVector& shift) {
  return std::exp(-k.dot(shift) + 0.5 * shift.squaredNorm());
}

ImportanceSamples importance_impl(const CoeffVector& shift, int n,
                                  double threshold, const QoiFn& qoi_fn,
                                  std::uint64_t seed, int n_threads) {
  if (n < 1) throw std::invalid_argument("need at least one proposal");
  const int n_modes = static_cast<int>(shift.size());

  std::vector<double> values(n);
  std::vector<CoeffVector> draws(n);
  parallel_for(n, n_threads, [&](int j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    draws[j] = shift + sample_coefficients(n_modes, rng);
    values[j] = qoi_fn(draws[j]);
  });

  ImportanceSamples result;
  result.n_proposed = n;
  for (int j = 0; j < n; ++j) {
    if (values[j] < threshold) continue;
    result.samples.push_back(
        TailSample{draws[j], values[j], importance_weight(draws[j], shift)});
  }
  result.acceptance_rate =
      static_cast<double>(result.samples.size()) / static_cast<double>(n);
  result.low_yield = result.acceptance_rate < 0.05;
  if (result.low_yield)
    std::cerr << "[rare] low importance-sampling yield: "
              << 100.0 * result.acceptance_rate << "% accepted\n";
  return result;
}

}  // namespace

ImportanceSamples importance_sample_tail(const CoeffVector& shift, int n,
                                         double threshold,
                                         const ModelContext& ctx,
                                         int critical_node, std::uint64_t seed,
                                         int n_threads) {
  return importance_impl(
      shift, n, threshold,
      [&](const CoeffVector& k) { return qoi(k, ctx, critical_node); }, seed,
      n_threads);
}

ImportanceSamples importance_sample_tail_fn(const CoeffVector& shift, int n,
                                            double threshold,
                                            const QoiFn& qoi_fn,
                                            std::uint64_t seed) {
  return importance_impl(shift, n, threshold, qoi_fn, seed, 1);
}

double tail_probability_estimate(const ImportanceSamples& samples) {
  double sum = 0.0;
  for (const auto& s : samples.samples) sum += s.weight;
  return sum / static_cast<double>(samples.n_proposed);
}

void save_tail_dataset(const TailDataset& tail, const std::string& path) {
  if (tail.weights.size() != tail.dataset.records.size())
    throw std::invalid_argument("tail weights do not match records");
  auto out = io::open_out(path);
  io::write_magic(out, "TAIL");
  io::write_u64(out, static_cast<std::uint64_t>(tail.dataset.role));
  io::write_u64(out, tail.dataset.seed);
  io::write_f64(out, tail.dataset.noise_level);
  io::write_u64(out, tail.dataset.basis_id);
  io::write_u64(out, tail.dataset.obs_id);
  io::write_u64(out, static_cast<std::uint64_t>(tail.dataset.nx));
  io::write_u64(out, static_cast<std::uint64_t>(tail.dataset.ny));
  io::write_f64(out, tail.threshold);
  io::write_f64(out, tail.acceptance_rate);
  io::write_u64(out, static_cast<std::uint64_t>(tail.shift.size()));
  io::write_vec(out, tail.shift);
  io::write_u64(out, static_cast<std::uint64_t>(tail.dataset.size()));
  io::write_u64(out, static_cast<std::uint64_t>(tail.dataset.n_modes()));
  io::write_u64(out, static_cast<std::uint64_t>(tail.dataset.n_obs()));
  for (int j = 0; j < tail.dataset.size(); ++j) {
    const auto& rec = tail.dataset.records[j];
    io::write_vec(out, rec.coeffs);
    io::write_vec(out, rec.clean);
    io::write_vec(out, rec.noisy);
    io::write_f64(out, tail.weights[j]);
  }
  if (!out) throw IoError("failed writing tail dataset to " + path);
}

TailDataset load_tail_dataset(const std::string& path) {
  auto in = io::open_in(path);
  io::expect_magic(in, "TAIL", "tail dataset");
  TailDataset tail;
  tail.dataset.role = static_cast<DatasetRole>(io::read_u64(in));
  tail.dataset.seed = io::read_u64(in);
  tail.dataset.noise_level = io::read_f64(in);
  tail.dataset.basis_id = io::read_u64(in);
  tail.dataset.obs_id = io::read_u64(in);
  tail.dataset.nx = static_cast<int>(io::read_u64(in));
  tail.dataset.ny = static_cast<int>(io::read_u64(in));
  tail.threshold = io::read_f64(in);
  tail.acceptance_rate = io::read_f64(in);
  const auto n_shift = io::read_u64(in);
  tail.shift = io::read_vec(in, static_cast<Eigen::Index>(n_shift));
  const auto n = io::read_u64(in);
  const auto n_modes = io::read_u64(in);
  const auto n_obs = io::read_u64(in);
  tail.dataset.records.resize(n);
  tail.weights.resize(n);
  for (std::uint64_t j = 0; j < n; ++j) {
    auto& rec = tail.dataset.records[j];
    rec.coeffs = io::read_vec(in, static_cast<Eigen::Index>(n_modes));
    rec.clean = io::read_vec(in, static_cast<Eigen::Index>(n_obs));
    rec.noisy = io::read_vec(in, static_cast<Eigen::Index>(n_obs));
    tail.weights[j] = io::read_f64(in);
  }
  return tail;
}

std::string to_string(RareCase c) {
  switch (c) {
    case RareCase::kTrainBulkEvalBulk: return "tBeB";
    case RareCase::kTrainBulkEvalRare: return "tBeR";
    case RareCase::kTrainBulkRareEvalRare: return "tBnReR";
    case RareCase::kTrainRareEvalRare: return "tReR";
  }
  return "?";
}

namespace {

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.records.insert(out.records.end(), b.records.begin(), b.records.end());
  return out;
}

}  // namespace

std::vector<RareCaseResult> run_rare_cases(
    const Dataset& bulk_train, const Dataset& bulk_val, const Dataset& rare_train,
    const Dataset& rare_val, const Dataset& bulk_test, const Dataset& rare_test,
    const ModelContext& ctx, const RareCasesConfig& config) {
  const double scale = config.train_config.coef_scale;
  std::vector<RareCaseResult> results;

  const auto evaluate = [&](RareCase c, const MlpParams& dd, const MlpParams& pi,
                            const Dataset& test) {
    RareCaseResult result;
    result.rare_case = c;
    try {
      result.report = compare_models(dd, pi, test, ctx, scale, config.n_threads);
    } catch (const std::exception& e) {
      result.error = e.what();
      std::cerr << "[rare] case " << to_string(c) << " failed: " << e.what()
                << "\n";
    }
    results.push_back(std::move(result));
  };

  // Cases reusing the bulk base models.
  evaluate(RareCase::kTrainBulkEvalBulk, config.base_dd, config.base_pi,
           bulk_test);
  evaluate(RareCase::kTrainBulkEvalRare, config.base_dd, config.base_pi,
           rare_test);

  const auto train_pair = [&](const Dataset& train_set, const Dataset& val_set,
                              std::uint64_t seed_tag,
                              MlpParams& dd_out, MlpParams& pi_out) {
    TrainOptions options;
    options.n_threads = config.n_threads;
    TrainConfig dd_config = config.train_config;
    dd_config.model_kind = ModelKind::kDataDriven;
    dd_out = train(train_set, val_set, dd_config, ctx,
                   derive_seed(config.seed, seed_tag), options)
                 .params;
    TrainConfig pi_config = config.train_config;
    pi_config.model_kind = ModelKind::kPhysicsInformed;
    pi_out = train(train_set, val_set, pi_config, ctx,
                   derive_seed(config.seed, seed_tag + 1), options)
                 .params;
  };

  {
    RareCaseResult result;
    result.rare_case = RareCase::kTrainBulkRareEvalRare;
    try {
      MlpParams dd, pi;
      train_pair(concat_datasets(bulk_train, rare_train), bulk_val, 0x30, dd, pi);
      result.report = compare_models(dd, pi, rare_test, ctx, scale,
                                     config.n_threads);
    } catch (const std::exception& e) {
      result.error = e.what();
      std::cerr << "[rare] case tBnReR failed: " << e.what() << "\n";
    }
    results.push_back(std::move(result));
  }
  {
    RareCaseResult result;
    result.rare_case = RareCase::kTrainRareEvalRare;
    try {
      MlpParams dd, pi;
      train_pair(rare_train, rare_val, 0x40, dd, pi);
      result.report = compare_models(dd, pi, rare_test, ctx, scale,
                                     config.n_threads);
    } catch (const std::exception& e) {
      result.error = e.what();
      std::cerr << "[rare] case tReR failed: " << e.what() << "\n";
    }
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace resinv
