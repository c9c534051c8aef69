#include "resinv/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "resinv/errors.hpp"
#include "resinv/io_util.hpp"

namespace resinv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream out;
  out << "0x" << std::hex << std::setfill('0') << std::setw(16) << h;
  return out.str();
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace

RunManifest::RunManifest(const ExperimentConfig& config, const RunPaths& paths)
    : paths_(paths), config_hash_(config_hash(config)) {
  ensure_dir(paths_.dir);
  // Archive the resolved config verbatim.
  std::ofstream out(paths_.config());
  if (!out) throw IoError("cannot write " + paths_.config());
  out << config_to_json(config);

  // Load previously registered artifacts so commands compose.
  if (fs::exists(paths_.manifest())) {
    std::ifstream in(paths_.manifest());
    json j;
    try {
      in >> j;
      if (j.contains("artifacts"))
        for (auto it = j["artifacts"].begin(); it != j["artifacts"].end(); ++it)
          artifacts_.emplace_back(it.key(), it.value().get<std::string>());
    } catch (const json::exception&) {
      // A corrupt manifest is rebuilt from scratch.
      artifacts_.clear();
    }
  }
}

void RunManifest::add_artifact(const std::string& name, const std::string& path) {
  for (auto& [n, p] : artifacts_) {
    if (n == name) {
      p = path;
      return;
    }
  }
  artifacts_.emplace_back(name, path);
}

void RunManifest::write() const {
  json j;
  j["config_hash"] = hash_hex(config_hash_);
  j["created"] = timestamp_utc();
  j["version"] = kVersion;
  json arts = json::object();
  for (const auto& [name, path] : artifacts_) {
    if (!fs::exists(path))
      throw IoError("manifest artifact \"" + name + "\" missing on disk: " + path);
    arts[name] = path;
  }
  j["artifacts"] = arts;
  std::ofstream out(paths_.manifest());
  if (!out) throw IoError("cannot write " + paths_.manifest());
  out << j.dump(2) << "\n";
}

ModelContext make_context(const ExperimentConfig& config, const KLBasis& basis) {
  const GridSpec grid = config.grid();
  const ObservationSet obs =
      sample_observation_nodes(grid, config.n_obs, config.obs_seed);
  return ModelContext(grid, config.bc, basis, obs);
}

KLBasis ensure_basis(const ExperimentConfig& config, const RunPaths& paths) {
  if (fs::exists(paths.basis())) {
    KLBasis basis = load_kl_basis(paths.basis());
    if (basis.nx == config.nx && basis.ny == config.ny &&
        basis.n_modes == config.n_modes && basis.sigma2 == config.sigma2 &&
        basis.corr_length == config.corr_length &&
        basis.mean_log_k == config.mean_log_k)
      return basis;
  }
  const GridSpec grid = config.grid();
  KLBasis basis = build_kl_basis(grid, {config.sigma2, config.corr_length},
                                 config.n_modes, config.mean_log_k);
  save_kl_basis(basis, paths.basis());
  return basis;
}

Dataset ensure_dataset(const ExperimentConfig& config, const RunPaths& paths,
                       DatasetRole role, int n, const ModelContext& ctx,
                       int threads) {
  const std::string path = paths.dataset(role);
  const std::uint64_t seed =
      derive_seed(config.master_seed,
                  role == DatasetRole::kTrain      ? streams::kTrainDataset
                  : role == DatasetRole::kValidation ? streams::kValDataset
                                                     : streams::kTestDataset);
  if (fs::exists(path)) {
    Dataset ds = load_dataset(path);
    if (ds.size() == n && ds.seed == seed &&
        ds.basis_id == context_basis_id(ctx.basis) &&
        ds.obs_id == context_obs_id(ctx.obs))
      return ds;
  }
  Dataset ds = generate_dataset(n, ctx, config.train.noise_level, seed, role,
                                threads);
  save_dataset(ds, path);
  return ds;
}

std::string cmd_basis(const ExperimentConfig& config, const RunPaths& paths) {
  RunManifest manifest(config, paths);
  ensure_basis(config, paths);
  manifest.add_artifact("basis", paths.basis());
  manifest.write();
  return paths.basis();
}

std::string cmd_gen(const ExperimentConfig& config, const RunPaths& paths,
                    DatasetRole role, int n, int threads) {
  if (n < 1) throw ConfigError("dataset size must be positive (got " +
                               std::to_string(n) + ")");
  RunManifest manifest(config, paths);
  const KLBasis basis = ensure_basis(config, paths);
  const ModelContext ctx = make_context(config, basis);
  ensure_dataset(config, paths, role, n, ctx, threads);
  manifest.add_artifact("basis", paths.basis());
  manifest.add_artifact("dataset_" + to_string(role), paths.dataset(role));
  manifest.write();
  return paths.dataset(role);
}

std::string cmd_train(const ExperimentConfig& config, const RunPaths& paths,
                      ModelKind kind, int threads, bool resume) {
  RunManifest manifest(config, paths);
  const KLBasis basis = ensure_basis(config, paths);
  const ModelContext ctx = make_context(config, basis);
  const Dataset train_set = ensure_dataset(config, paths, DatasetRole::kTrain,
                                           config.datasets.n_train, ctx, threads);
  const Dataset val_set =
      ensure_dataset(config, paths, DatasetRole::kValidation,
                     config.datasets.n_validation, ctx, threads);

  TrainConfig train_config = config.train;
  train_config.model_kind = kind;

  TrainOptions options;
  options.n_threads = threads;
  options.history_path = paths.history(kind);
  if (resume && fs::exists(paths.checkpoint(kind))) {
    MlpParams params;
    AdamState state;
    load_checkpoint(paths.checkpoint(kind), params, state);
    options.initial_params = std::move(params);
    // Resume numbering after the completed optimizer steps.
    options.start_iteration = state.t / train_config.n_batches;
    options.initial_state = std::move(state);
  }

  const std::uint64_t seed =
      derive_seed(config.master_seed, kind == ModelKind::kDataDriven
                                          ? streams::kTrainDataDriven
                                          : streams::kTrainPhysics);
  const TrainResult result =
      train(train_set, val_set, train_config, ctx, seed, options);
  save_checkpoint(result.params, result.state, paths.checkpoint(kind));

  manifest.add_artifact("basis", paths.basis());
  manifest.add_artifact("dataset_train", paths.dataset(DatasetRole::kTrain));
  manifest.add_artifact("dataset_validation",
                        paths.dataset(DatasetRole::kValidation));
  manifest.add_artifact("checkpoint_" + to_string(kind), paths.checkpoint(kind));
  manifest.add_artifact("history_" + to_string(kind), paths.history(kind));
  manifest.write();
  return paths.checkpoint(kind);
}

std::string cmd_eval(const ExperimentConfig& config, const RunPaths& paths,
                     const std::string& dd_path, const std::string& pi_path,
                     const std::string& test_path, int threads) {
  RunManifest manifest(config, paths);
  const KLBasis basis = ensure_basis(config, paths);
  const ModelContext ctx = make_context(config, basis);

  MlpParams dd, pi;
  AdamState state;
  load_checkpoint(dd_path.empty() ? paths.checkpoint(ModelKind::kDataDriven)
                                  : dd_path,
                  dd, state);
  load_checkpoint(pi_path.empty() ? paths.checkpoint(ModelKind::kPhysicsInformed)
                                  : pi_path,
                  pi, state);
  Dataset test;
  if (test_path.empty())
    test = ensure_dataset(config, paths, DatasetRole::kTest,
                          config.datasets.n_test, ctx, threads);
  else
    test = load_dataset(test_path);

  const EvalReport report =
      compare_models(dd, pi, test, ctx, config.train.coef_scale, threads);
  write_summary_csv({{"base", &report}}, paths.eval_summary());
  write_report_csvs(report, paths.eval_prefix());

  manifest.add_artifact("eval_summary", paths.eval_summary());
  manifest.add_artifact("eval_samples", paths.eval_prefix() + "samples.csv");
  manifest.write();
  return paths.eval_summary();
}

std::string cmd_scenarios(const ExperimentConfig& config, const RunPaths& paths,
                          int threads) {
  RunManifest manifest(config, paths);

  ScenarioRunConfig run;
  run.grid = config.grid();
  run.bc = config.bc;
  run.sigma2 = config.sigma2;
  run.mean_log_k = config.mean_log_k;
  run.n_modes = config.n_modes;
  run.obs_seed = config.obs_seed;
  run.train_config = config.train;
  run.train_config.n_iterations = config.scenarios.n_iterations;
  run.n_validation = config.scenarios.n_validation;
  run.n_test = config.scenarios.n_test;
  run.master_seed = config.master_seed;
  run.n_threads = threads;

  std::vector<ScenarioSpec> specs;
  for (const char* name : kScenarioNames)
    specs.push_back(scenario_from_name(name, config.scenarios.factors));

  const std::vector<ScenarioResult> results = run_scenarios(specs, run);

  std::vector<std::pair<std::string, const EvalReport*>> rows;
  for (const auto& result : results) {
    if (result.error) continue;
    rows.emplace_back(result.spec.name, &result.report);
    write_report_csvs(result.report, paths.scenario_prefix(result.spec.name));
  }
  if (rows.empty()) throw NumericError("all scenarios failed");
  write_summary_csv(rows, paths.scenario_summary());

  manifest.add_artifact("scenarios_summary", paths.scenario_summary());
  manifest.write();
  return paths.scenario_summary();
}

std::string cmd_rare(const ExperimentConfig& config, const RunPaths& paths,
                     int threads) {
  RunManifest manifest(config, paths);
  const KLBasis basis = ensure_basis(config, paths);
  const ModelContext ctx = make_context(config, basis);

  RareEventConfig rare_config;
  rare_config.critical_node =
      resolve_critical_node(ctx.grid, config.rare.critical_x, config.rare.critical_y);
  rare_config.quantile = config.rare.quantile;
  rare_config.n_bruteforce = config.rare.n_bruteforce;
  rare_config.validate(ctx.grid);
  const int node = rare_config.critical_node;

  // Base bulk artifacts; train the base models if absent.
  const Dataset bulk_train = ensure_dataset(config, paths, DatasetRole::kTrain,
                                            config.datasets.n_train, ctx, threads);
  const Dataset bulk_val =
      ensure_dataset(config, paths, DatasetRole::kValidation,
                     config.datasets.n_validation, ctx, threads);
  const Dataset bulk_test = ensure_dataset(config, paths, DatasetRole::kTest,
                                           config.datasets.n_test, ctx, threads);
  for (ModelKind kind : {ModelKind::kDataDriven, ModelKind::kPhysicsInformed})
    if (!fs::exists(paths.checkpoint(kind)))
      cmd_train(config, paths, kind, threads);
  MlpParams base_dd, base_pi;
  AdamState state;
  load_checkpoint(paths.checkpoint(ModelKind::kDataDriven), base_dd, state);
  load_checkpoint(paths.checkpoint(ModelKind::kPhysicsInformed), base_pi, state);

  // Tail harvest: brute force for the threshold, then the tilted Gaussian
  // centered on the instanton shift.
  const BruteForceTail brute = brute_force_tail(
      rare_config.n_bruteforce, rare_config.quantile, ctx, node,
      derive_seed(config.master_seed, streams::kRareBruteForce), threads);
  const double threshold = config.rare.threshold
                               ? *config.rare.threshold
                               : brute.threshold;

  FindShiftSettings shift_settings;
  shift_settings.median_hint =
      quantile_interpolated(brute.qoi_values, 0.5);
  const TailSample* warm = nullptr;
  for (const auto& s : brute.tail)
    if (s.qoi >= threshold && (!warm || s.coeffs.squaredNorm() < warm->coeffs.squaredNorm()))
      warm = &s;
  if (warm) shift_settings.warm_start = warm->coeffs;
  const CoeffVector shift = find_shift(threshold, ctx, node, shift_settings);

  const int needed =
      config.rare.n_train + config.rare.n_validation + config.rare.n_test;
  ImportanceSamples tails = importance_sample_tail(
      shift, config.rare.n_importance, threshold, ctx, node,
      derive_seed(config.master_seed, streams::kRareImportance), threads);
  if (static_cast<int>(tails.samples.size()) < needed)
    throw NumericError("importance sampling yielded " +
                       std::to_string(tails.samples.size()) + " tail samples; " +
                       std::to_string(needed) +
                       " needed — raise rare.n_importance");

  std::vector<CoeffVector> tail_coeffs;
  tail_coeffs.reserve(needed);
  std::vector<double> tail_weights;
  for (int i = 0; i < needed; ++i) {
    tail_coeffs.push_back(tails.samples[i].coeffs);
    tail_weights.push_back(tails.samples[i].weight);
  }

  // Same generation path (and noise convention) as the bulk datasets.
  const auto slice = [&](int begin, int count, DatasetRole role,
                         std::uint64_t stream) {
    std::vector<CoeffVector> part(tail_coeffs.begin() + begin,
                                  tail_coeffs.begin() + begin + count);
    return generate_dataset_from_coeffs(part, ctx, config.train.noise_level,
                                        derive_seed(config.master_seed, stream),
                                        role, threads);
  };
  const Dataset rare_train = slice(0, config.rare.n_train, DatasetRole::kTrain,
                                   streams::kRareTrainNoise);
  const Dataset rare_val =
      slice(config.rare.n_train, config.rare.n_validation,
            DatasetRole::kValidation, streams::kRareValNoise);
  const Dataset rare_test =
      slice(config.rare.n_train + config.rare.n_validation, config.rare.n_test,
            DatasetRole::kTest, streams::kRareTestNoise);

  TailDataset tail_file;
  tail_file.dataset = rare_train;
  tail_file.weights.assign(tail_weights.begin(),
                           tail_weights.begin() + config.rare.n_train);
  tail_file.threshold = threshold;
  tail_file.shift = shift;
  tail_file.acceptance_rate = tails.acceptance_rate;
  save_tail_dataset(tail_file, paths.tail_file());

  RareCasesConfig cases_config;
  cases_config.train_config = config.train;
  cases_config.base_dd = base_dd;
  cases_config.base_pi = base_pi;
  cases_config.seed = derive_seed(config.master_seed, streams::kRareCases);
  cases_config.n_threads = threads;

  const std::vector<RareCaseResult> results =
      run_rare_cases(bulk_train, bulk_val, rare_train, rare_val, bulk_test,
                     rare_test, ctx, cases_config);

  std::vector<std::pair<std::string, const EvalReport*>> rows;
  for (const auto& result : results) {
    if (result.error) continue;
    rows.emplace_back(to_string(result.rare_case), &result.report);
    write_report_csvs(result.report,
                      paths.rare_prefix(to_string(result.rare_case)));
  }
  if (rows.empty()) throw NumericError("all rare-event cases failed");
  write_summary_csv(rows, paths.rare_summary());

  manifest.add_artifact("rare_tail", paths.tail_file());
  manifest.add_artifact("rare_summary", paths.rare_summary());
  manifest.write();
  return paths.rare_summary();
}

int cmd_report(const RunPaths& paths, std::ostream& out) {
  if (!fs::exists(paths.manifest()))
    throw IoError("no manifest in " + paths.dir + "; run a command first");
  std::ifstream in(paths.manifest());
  json j;
  in >> j;
  out << "run directory : " << paths.dir << "\n";
  out << "config hash   : " << j.value("config_hash", "?") << "\n";
  out << "created       : " << j.value("created", "?") << "\n";
  out << "version       : " << j.value("version", "?") << "\n";
  out << "artifacts:\n";
  if (j.contains("artifacts"))
    for (auto it = j["artifacts"].begin(); it != j["artifacts"].end(); ++it)
      out << "  " << it.key() << " -> " << it.value().get<std::string>() << "\n";

  for (const std::string& summary :
       {paths.eval_summary(), paths.scenario_summary(), paths.rare_summary()}) {
    if (!fs::exists(summary)) continue;
    out << "\n" << summary << ":\n";
    std::ifstream csv(summary);
    std::string line;
    while (std::getline(csv, line)) out << "  " << line << "\n";
  }
  return 0;
}

}  // namespace resinv
