#include "resinv/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "resinv/errors.hpp"
#include "resinv/io_util.hpp"
#include "resinv/parallel.hpp"

namespace resinv {

namespace {

// Stream tags under a training seed.
constexpr std::uint64_t kStreamInit = 0x11;
constexpr std::uint64_t kStreamShuffle = 0x22;

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_doubles(const double* data, std::size_t n, std::uint64_t h) {
  return fnv1a64(data, n * sizeof(double), h);
}

}  // namespace

std::string to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::kTrain: return "train";
    case DatasetRole::kValidation: return "validation";
    case DatasetRole::kTest: return "test";
  }
  return "?";
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kDataDriven ? "data_driven" : "physics_informed";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "data_driven") return ModelKind::kDataDriven;
  if (name == "physics_informed") return ModelKind::kPhysicsInformed;
  throw ConfigError("unknown model kind: " + name);
}

Eigen::MatrixXd Dataset::coeff_matrix(const std::vector<int>& idx) const {
  Eigen::MatrixXd m(static_cast<int>(idx.size()), n_modes());
  for (std::size_t r = 0; r < idx.size(); ++r)
    m.row(static_cast<int>(r)) = records[idx[r]].coeffs.transpose();
  return m;
}

Eigen::MatrixXd Dataset::noisy_matrix(const std::vector<int>& idx) const {
  Eigen::MatrixXd m(static_cast<int>(idx.size()), n_obs());
  for (std::size_t r = 0; r < idx.size(); ++r)
    m.row(static_cast<int>(r)) = records[idx[r]].noisy.transpose();
  return m;
}

Eigen::MatrixXd Dataset::clean_matrix(const std::vector<int>& idx) const {
  Eigen::MatrixXd m(static_cast<int>(idx.size()), n_obs());
  for (std::size_t r = 0; r < idx.size(); ++r)
    m.row(static_cast<int>(r)) = records[idx[r]].clean.transpose();
  return m;
}

std::uint64_t context_basis_id(const KLBasis& basis) {
  std::uint64_t h = 1469598103934665603ull;
  const double header[6] = {static_cast<double>(basis.nx),
                            static_cast<double>(basis.ny),
                            static_cast<double>(basis.n_modes),
                            basis.sigma2, basis.corr_length, basis.mean_log_k};
  h = hash_doubles(header, 6, h);
  h = hash_doubles(basis.eigenvalues.data(), basis.eigenvalues.size(), h);
  return h;
}

std::uint64_t context_obs_id(const ObservationSet& obs) {
  std::uint64_t h = 1469598103934665603ull;
  h = fnv1a64(&obs.seed, sizeof(obs.seed), h);
  h = fnv1a64(obs.node_indices.data(), obs.node_indices.size() * sizeof(int), h);
  return h;
}

namespace {

Dataset generate_impl(int n_samples, const ModelContext& ctx, double noise_level,
                      std::uint64_t seed, DatasetRole role, int n_threads,
                      const std::vector<CoeffVector>* given_coeffs) {
  if (n_samples < 1) throw std::invalid_argument("dataset needs at least one sample");
  Dataset ds;
  ds.records.resize(n_samples);
  ds.role = role;
  ds.seed = seed;
  ds.noise_level = noise_level;
  ds.basis_id = context_basis_id(ctx.basis);
  ds.obs_id = context_obs_id(ctx.obs);
  ds.nx = ctx.grid.nx;
  ds.ny = ctx.grid.ny;

  std::vector<std::string> failures(n_samples);
  parallel_for(n_samples, n_threads, [&](int j) {
    try {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
      SampleRecord rec;
      rec.coeffs = given_coeffs ? (*given_coeffs)[j]
                                : sample_coefficients(ctx.n_modes(), rng);
      DarcySolve solve(rec.coeffs, ctx);
      rec.clean = solve.observed(ctx.obs);
      rec.noisy = rec.clean;
      if (noise_level > 0.0)
        for (Eigen::Index i = 0; i < rec.noisy.size(); ++i)
          rec.noisy[i] = rec.clean[i] * (1.0 + noise_level * rng.normal());
      if (!rec.clean.allFinite() || !rec.noisy.allFinite())
        throw NumericError("non-finite pressures");
      ds.records[j] = std::move(rec);
    } catch (const std::exception& e) {
      failures[j] = e.what();
    }
  });
  for (int j = 0; j < n_samples; ++j)
    if (!failures[j].empty())
      throw NumericError("dataset generation failed at sample " +
                         std::to_string(j) + ": " + failures[j]);
  return ds;
}

}  // namespace

Dataset generate_dataset(int n_samples, const ModelContext& ctx,
                         double noise_level, std::uint64_t seed,
                         DatasetRole role, int n_threads) {
  return generate_impl(n_samples, ctx, noise_level, seed, role, n_threads,
                       nullptr);
}

Dataset generate_dataset_from_coeffs(const std::vector<CoeffVector>& coeffs,
                                     const ModelContext& ctx, double noise_level,
                                     std::uint64_t seed, DatasetRole role,
                                     int n_threads) {
  return generate_impl(static_cast<int>(coeffs.size()), ctx, noise_level, seed,
                       role, n_threads, &coeffs);
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  auto out = io::open_out(path);
  io::write_magic(out, "DSET");
  io::write_u64(out, static_cast<std::uint64_t>(dataset.role));
  io::write_u64(out, dataset.seed);
  io::write_f64(out, dataset.noise_level);
  io::write_u64(out, dataset.basis_id);
  io::write_u64(out, dataset.obs_id);
  io::write_u64(out, static_cast<std::uint64_t>(dataset.nx));
  io::write_u64(out, static_cast<std::uint64_t>(dataset.ny));
  io::write_u64(out, static_cast<std::uint64_t>(dataset.size()));
  io::write_u64(out, static_cast<std::uint64_t>(dataset.n_modes()));
  io::write_u64(out, static_cast<std::uint64_t>(dataset.n_obs()));
  for (const auto& rec : dataset.records) {
    io::write_vec(out, rec.coeffs);
    io::write_vec(out, rec.clean);
    io::write_vec(out, rec.noisy);
  }
  if (!out) throw IoError("failed writing dataset to " + path);
}

Dataset load_dataset(const std::string& path) {
  auto in = io::open_in(path);
  io::expect_magic(in, "DSET", "dataset");
  Dataset ds;
  ds.role = static_cast<DatasetRole>(io::read_u64(in));
  ds.seed = io::read_u64(in);
  ds.noise_level = io::read_f64(in);
  ds.basis_id = io::read_u64(in);
  ds.obs_id = io::read_u64(in);
  ds.nx = static_cast<int>(io::read_u64(in));
  ds.ny = static_cast<int>(io::read_u64(in));
  const auto n = io::read_u64(in);
  const auto n_modes = io::read_u64(in);
  const auto n_obs = io::read_u64(in);
  ds.records.resize(n);
  for (auto& rec : ds.records) {
    rec.coeffs = io::read_vec(in, static_cast<Eigen::Index>(n_modes));
    rec.clean = io::read_vec(in, static_cast<Eigen::Index>(n_obs));
    rec.noisy = io::read_vec(in, static_cast<Eigen::Index>(n_obs));
  }
  return ds;
}

double coef_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("coef_loss shape mismatch");
  const double n_s = static_cast<double>(pred.rows());
  const double n_kl = static_cast<double>(pred.cols());
  return (pred - target).squaredNorm() / (n_s * n_kl);
}

PressureLossResult pressure_loss(const Eigen::MatrixXd& coeff_preds,
                                 const Eigen::MatrixXd& noisy_pressures,
                                 const ModelContext& ctx,
                                 Eigen::MatrixXd* grad_coeffs, int n_threads) {
  const int n_s = static_cast<int>(coeff_preds.rows());
  if (noisy_pressures.rows() != n_s ||
      noisy_pressures.cols() != ctx.n_obs() ||
      coeff_preds.cols() != ctx.n_modes())
    throw std::invalid_argument("pressure_loss shape mismatch");

  PressureLossResult result;
  result.adjoint_seeds.resize(n_s, ctx.n_obs());
  if (grad_coeffs) grad_coeffs->resize(n_s, ctx.n_modes());
  Eigen::VectorXd sample_loss(n_s);

  const double denom = static_cast<double>(n_s) * ctx.n_obs();
  parallel_for(n_s, n_threads, [&](int j) {
    DarcySolve solve(coeff_preds.row(j).transpose(), ctx);
    const Eigen::VectorXd residual =
        solve.observed(ctx.obs) - noisy_pressures.row(j).transpose();
    sample_loss[j] = residual.squaredNorm() / denom;
    const Eigen::VectorXd seed = 2.0 * residual / denom;
    result.adjoint_seeds.row(j) = seed.transpose();
    if (grad_coeffs)
      grad_coeffs->row(j) =
          DarcySolve::chain_to_coeffs(
              ctx.basis, solve.grad_log_k_observed(ctx.obs, seed))
              .transpose();
  });
  result.value = sample_loss.sum();
  return result;
}

double total_pi_loss(double coef, double pres, double alpha_coef) {
  if (!(alpha_coef > 0.0))
    throw std::invalid_argument("alpha_coef must be positive");
  return pres + alpha_coef * coef;
}

void TrainConfig::validate() const {
  if (batch_size < 1 || n_batches < 1 || samples_per_iteration < 1 ||
      n_iterations < 1 || validate_every < 1)
    throw ConfigError("training counts must be positive");
  if (batch_size * n_batches != samples_per_iteration)
    throw ConfigError("batch_size * n_batches must equal samples_per_iteration");
  if (!(learning_rate > 0.0) || !(coef_scale > 0.0) || !(alpha_coef > 0.0))
    throw ConfigError("learning_rate, coef_scale and alpha_coef must be positive");
  if (noise_level < 0.0) throw ConfigError("noise_level must be nonnegative");
}

PermutationSampler::PermutationSampler(int n, std::uint64_t seed) : rng_(seed) {
  if (n < 1) throw std::invalid_argument("sampler needs at least one element");
  order_.resize(n);
  for (int i = 0; i < n; ++i) order_[i] = i;
  reshuffle();
}

void PermutationSampler::reshuffle() {
  for (int i = static_cast<int>(order_.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng_.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order_[i], order_[j]);
  }
  pos_ = 0;
}

int PermutationSampler::next() {
  if (pos_ == static_cast<int>(order_.size())) reshuffle();
  return order_[pos_++];
}

namespace {

void append_history_row(std::ofstream& out, const IterationStats& stats,
                        const ValidationPoint* val) {
  out << stats.iteration << ',' << io::format_double(stats.train_total) << ',';
  if (val) out << io::format_double(val->coef_loss);
  out << ',';
  if (val) out << io::format_double(val->pres_loss);
  out << ',' << io::format_double(stats.wall_ms) << '\n';
  out.flush();
}

}  // namespace

void save_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open history CSV for writing: " + path);
  out << "iteration,train_loss,val_coef_loss,val_pres_loss,wall_ms\n";
  std::size_t v = 0;
  for (const auto& it : history.iterations) {
    const ValidationPoint* val = nullptr;
    if (v < history.validations.size() &&
        history.validations[v].iteration == it.iteration)
      val = &history.validations[v++];
    append_history_row(out, it, val);
  }
}

TrainResult train(const Dataset& dataset, const Dataset& validation,
                  const TrainConfig& config, const ModelContext& ctx,
                  std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  if (dataset.size() < 1) throw std::invalid_argument("empty training dataset");
  if (dataset.n_obs() != ctx.n_obs() || dataset.n_modes() != ctx.n_modes())
    throw std::invalid_argument("dataset does not match model context");

  const double s = config.coef_scale;
  const bool physics = config.model_kind == ModelKind::kPhysicsInformed;

  TrainResult result;
  if (options.initial_params) {
    result.params = *options.initial_params;
    result.state = options.initial_state
                       ? *options.initial_state
                       : make_adam_state(result.params, config.learning_rate);
  } else {
    result.params =
        mlp_init(ctx.n_obs(), ctx.n_modes(), derive_seed(seed, kStreamInit));
    result.state = make_adam_state(result.params, config.learning_rate);
  }
  result.state.learning_rate = config.learning_rate;

  PermutationSampler sampler(dataset.size(), derive_seed(seed, kStreamShuffle));

  std::ofstream history_file;
  if (options.history_path) {
    const bool fresh = options.start_iteration == 0;
    history_file.open(*options.history_path,
                      fresh ? std::ios::trunc : std::ios::app);
    if (!history_file)
      throw IoError("cannot open history CSV: " + *options.history_path);
    if (fresh)
      history_file << "iteration,train_loss,val_coef_loss,val_pres_loss,wall_ms\n";
  }

  // Fixed validation inputs, identical at every cadence point.
  Eigen::MatrixXd val_inputs, val_targets_scaled, val_noisy;
  if (validation.size() > 0) {
    std::vector<int> all(validation.size());
    for (int i = 0; i < validation.size(); ++i) all[i] = i;
    val_inputs = validation.noisy_matrix(all);
    val_targets_scaled = s * validation.coeff_matrix(all);
    val_noisy = val_inputs;
  }

  std::vector<int> batch_idx(config.batch_size);
  for (std::int64_t it = 1; it <= config.n_iterations; ++it) {
    const auto tic = std::chrono::steady_clock::now();
    double sum_pres = 0.0, sum_coef = 0.0;
    int used_batches = 0, skipped = 0;

    for (int b = 0; b < config.n_batches; ++b) {
      for (int k = 0; k < config.batch_size; ++k) batch_idx[k] = sampler.next();
      const Eigen::MatrixXd inputs = dataset.noisy_matrix(batch_idx);
      const Eigen::MatrixXd targets_scaled = s * dataset.coeff_matrix(batch_idx);

      ForwardCache cache;
      const Eigen::MatrixXd preds_scaled =
          mlp_forward(result.params, inputs, &cache);

      const double batch_coef = coef_loss(preds_scaled, targets_scaled);
      Eigen::MatrixXd grad_out =
          2.0 * (preds_scaled - targets_scaled) /
          (static_cast<double>(config.batch_size) * ctx.n_modes());
      if (physics) grad_out *= config.alpha_coef;

      double batch_pres = 0.0;
      bool ok = std::isfinite(batch_coef);
      if (physics && ok) {
        const Eigen::MatrixXd coeff_preds = preds_scaled / s;
        try {
          Eigen::MatrixXd grad_coeffs;
          const PressureLossResult pl = pressure_loss(
              coeff_preds, inputs, ctx, &grad_coeffs, options.n_threads);
          batch_pres = pl.value;
          ok = std::isfinite(batch_pres) && grad_coeffs.allFinite();
          if (ok) grad_out += grad_coeffs / s;
        } catch (const NumericError&) {
          ok = false;
        }
      }

      if (!ok) {
        ++skipped;
        continue;
      }

      const MlpGradients grads = mlp_backward(result.params, cache, grad_out);
      adam_step(result.params, grads, result.state);
      sum_coef += batch_coef;
      sum_pres += batch_pres;
      ++used_batches;
    }
    if (skipped > 0)
      std::cerr << "[train] iteration " << it << ": skipped " << skipped << "/"
                << config.n_batches << " batches (non-finite simulator output)\n";
    if (used_batches == 0)
      throw NumericError("every batch of iteration " + std::to_string(it) +
                         " was skipped");

    IterationStats stats;
    stats.iteration = options.start_iteration + it;
    stats.train_coef = sum_coef / used_batches;
    stats.train_pres = sum_pres / used_batches;
    stats.train_total =
        physics ? total_pi_loss(stats.train_coef, stats.train_pres,
                                config.alpha_coef)
                : stats.train_coef;
    stats.skipped_batches = skipped;

    const ValidationPoint* val_ptr = nullptr;
    ValidationPoint val;
    if (validation.size() > 0 &&
        (it % config.validate_every == 0 || it == config.n_iterations)) {
      const Eigen::MatrixXd val_preds =
          mlp_forward(result.params, val_inputs, nullptr);
      val.iteration = stats.iteration;
      val.coef_loss = coef_loss(val_preds, val_targets_scaled);
      // Both model kinds validate the pressure mismatch through the simulator.
      val.pres_loss =
          pressure_loss(val_preds / s, val_noisy, ctx, nullptr, options.n_threads)
              .value;
      result.history.validations.push_back(val);
      val_ptr = &val;
    }

    stats.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - tic)
                        .count();
    result.history.iterations.push_back(stats);
    if (history_file.is_open()) append_history_row(history_file, stats, val_ptr);
  }
  return result;
}

}  // namespace resinv
