#include "resinv/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "resinv/errors.hpp"

namespace resinv {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64_str(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Pulls a key and records it as consumed; unknown keys fail fast.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }
  ~StrictObject() = default;

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key))
      throw ConfigError(where_ + " is missing required key \"" + key + "\"");
    seen_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  template <typename T>
  std::optional<T> maybe(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    return require<T>(key);
  }

  const json& child(const std::string& key) {
    if (!j_.contains(key))
      throw ConfigError(where_ + " is missing required key \"" + key + "\"");
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("unknown key \"" + it.key() + "\" in " + where_);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  StrictObject root(j, "config");

  {
    StrictObject grid(root.child("grid"), "grid");
    cfg.nx = grid.require<int>("nx");
    cfg.ny = grid.require<int>("ny");
    cfg.lx = grid.require<double>("lx");
    cfg.ly = grid.require<double>("ly");
    grid.finish();
  }
  {
    StrictObject bc(root.child("boundary"), "boundary");
    cfg.bc.p_left = bc.require<double>("left");
    cfg.bc.p_right = bc.require<double>("right");
    cfg.bc.p_top = bc.require<double>("top");
    cfg.bc.p_bottom = bc.require<double>("bottom");
    bc.finish();
  }
  {
    StrictObject cov(root.child("covariance"), "covariance");
    cfg.kernel = cov.require<std::string>("kernel");
    cfg.sigma2 = cov.require<double>("sigma2");
    cfg.corr_length = cov.require<double>("corr_length");
    cov.finish();
  }
  {
    StrictObject field(root.child("field"), "field");
    cfg.n_modes = field.require<int>("n_modes");
    cfg.mean_log_k = field.require<double>("mean_log_k");
    field.finish();
  }
  {
    StrictObject obs(root.child("observations"), "observations");
    cfg.n_obs = obs.require<int>("n_obs");
    cfg.obs_seed = obs.require<std::uint64_t>("seed");
    obs.finish();
  }
  {
    StrictObject train(root.child("train"), "train");
    cfg.train.batch_size = train.require<int>("batch_size");
    cfg.train.n_batches = train.require<int>("n_batches");
    cfg.train.samples_per_iteration = train.require<int>("samples_per_iteration");
    cfg.train.n_iterations = train.require<int>("n_iterations");
    cfg.train.learning_rate = train.require<double>("learning_rate");
    cfg.train.coef_scale = train.require<double>("coef_scale");
    cfg.train.alpha_coef = train.require<double>("alpha_coef");
    cfg.train.noise_level = train.require<double>("noise_level");
    cfg.train.validate_every = train.require<int>("validate_every");
    train.finish();
  }
  {
    StrictObject sizes(root.child("datasets"), "datasets");
    cfg.datasets.n_train = sizes.require<int>("n_train");
    cfg.datasets.n_validation = sizes.require<int>("n_validation");
    cfg.datasets.n_test = sizes.require<int>("n_test");
    sizes.finish();
  }
  {
    StrictObject rare(root.child("rare"), "rare");
    cfg.rare.critical_x = rare.require<double>("critical_x");
    cfg.rare.critical_y = rare.require<double>("critical_y");
    cfg.rare.quantile = rare.require<double>("quantile");
    cfg.rare.threshold = rare.maybe<double>("threshold");
    cfg.rare.n_bruteforce = rare.require<int>("n_bruteforce");
    cfg.rare.n_importance = rare.require<int>("n_importance");
    cfg.rare.n_train = rare.require<int>("n_train");
    cfg.rare.n_validation = rare.require<int>("n_validation");
    cfg.rare.n_test = rare.require<int>("n_test");
    rare.finish();
  }
  {
    StrictObject sc(root.child("scenarios"), "scenarios");
    cfg.scenarios.factors.train_large = sc.require<int>("train_large");
    cfg.scenarios.factors.train_small = sc.require<int>("train_small");
    cfg.scenarios.factors.obs_large = sc.require<int>("obs_large");
    cfg.scenarios.factors.obs_small = sc.require<int>("obs_small");
    cfg.scenarios.factors.corr_large = sc.require<double>("corr_large");
    cfg.scenarios.factors.corr_small = sc.require<double>("corr_small");
    cfg.scenarios.n_validation = sc.require<int>("n_validation");
    cfg.scenarios.n_test = sc.require<int>("n_test");
    cfg.scenarios.n_iterations = sc.require<int>("n_iterations");
    sc.finish();
  }
  cfg.output_dir = root.require<std::string>("output_dir");
  cfg.master_seed = root.require<std::uint64_t>("master_seed");
  root.finish();

  cfg.validate();
  return cfg;
}

json config_to_json_obj(const ExperimentConfig& c) {
  json j;
  j["grid"] = {{"nx", c.nx}, {"ny", c.ny}, {"lx", c.lx}, {"ly", c.ly}};
  j["boundary"] = {{"left", c.bc.p_left},
                   {"right", c.bc.p_right},
                   {"top", c.bc.p_top},
                   {"bottom", c.bc.p_bottom}};
  j["covariance"] = {{"kernel", c.kernel},
                     {"sigma2", c.sigma2},
                     {"corr_length", c.corr_length}};
  j["field"] = {{"n_modes", c.n_modes}, {"mean_log_k", c.mean_log_k}};
  j["observations"] = {{"n_obs", c.n_obs}, {"seed", c.obs_seed}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"n_batches", c.train.n_batches},
                {"samples_per_iteration", c.train.samples_per_iteration},
                {"n_iterations", c.train.n_iterations},
                {"learning_rate", c.train.learning_rate},
                {"coef_scale", c.train.coef_scale},
                {"alpha_coef", c.train.alpha_coef},
                {"noise_level", c.train.noise_level},
                {"validate_every", c.train.validate_every}};
  j["datasets"] = {{"n_train", c.datasets.n_train},
                   {"n_validation", c.datasets.n_validation},
                   {"n_test", c.datasets.n_test}};
  j["rare"] = {{"critical_x", c.rare.critical_x},
               {"critical_y", c.rare.critical_y},
               {"quantile", c.rare.quantile},
               {"n_bruteforce", c.rare.n_bruteforce},
               {"n_importance", c.rare.n_importance},
               {"n_train", c.rare.n_train},
               {"n_validation", c.rare.n_validation},
               {"n_test", c.rare.n_test}};
  if (c.rare.threshold) j["rare"]["threshold"] = *c.rare.threshold;
  j["scenarios"] = {{"train_large", c.scenarios.factors.train_large},
                    {"train_small", c.scenarios.factors.train_small},
                    {"obs_large", c.scenarios.factors.obs_large},
                    {"obs_small", c.scenarios.factors.obs_small},
                    {"corr_large", c.scenarios.factors.corr_large},
                    {"corr_small", c.scenarios.factors.corr_small},
                    {"n_validation", c.scenarios.n_validation},
                    {"n_test", c.scenarios.n_test},
                    {"n_iterations", c.scenarios.n_iterations}};
  j["output_dir"] = c.output_dir;
  j["master_seed"] = c.master_seed;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  const GridSpec g = grid();  // re-checks nx, ny, lx, ly
  if (kernel != "exponential")
    throw ConfigError("covariance.kernel must be \"exponential\"");
  if (!(sigma2 > 0.0) || !(corr_length > 0.0))
    throw ConfigError("covariance.sigma2 and corr_length must be positive");
  if (n_modes < 1 || n_modes > g.n_nodes())
    throw ConfigError("field.n_modes must be in [1, nx*ny]");
  if (n_obs < 1 || n_obs > g.n_interior())
    throw ConfigError("observations.n_obs exceeds the interior node count");
  train.validate();
  if (datasets.n_train < 1 || datasets.n_validation < 1 || datasets.n_test < 1)
    throw ConfigError("datasets sizes must be positive");
  if (!(rare.quantile > 0.0 && rare.quantile < 1.0))
    throw ConfigError("rare.quantile must lie in (0, 1)");
  if (rare.n_bruteforce < 1 ||
      static_cast<double>(rare.n_bruteforce) * rare.quantile < 1.0)
    throw ConfigError("rare.n_bruteforce * quantile must be at least 1");
  if (rare.n_importance < 1 || rare.n_train < 1 || rare.n_validation < 1 ||
      rare.n_test < 1)
    throw ConfigError("rare sample counts must be positive");
  if (scenarios.factors.train_large < 1 || scenarios.factors.train_small < 1 ||
      scenarios.n_validation < 1 || scenarios.n_test < 1 ||
      scenarios.n_iterations < 1)
    throw ConfigError("scenario counts must be positive");
  if (scenarios.factors.obs_large > g.n_interior() ||
      scenarios.factors.obs_small > g.n_interior() ||
      scenarios.factors.obs_large < 1 || scenarios.factors.obs_small < 1)
    throw ConfigError("scenario observation counts exceed the interior node count");
  if (!(scenarios.factors.corr_large > 0.0) ||
      !(scenarios.factors.corr_small > 0.0))
    throw ConfigError("scenario correlation lengths must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig config_from_preset(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "paper") {
    // Full-scale setup; hours of runtime.
    cfg.nx = cfg.ny = 51;
    cfg.n_modes = 200;
    cfg.n_obs = 200;
    cfg.train.n_iterations = 10000;
    cfg.train.learning_rate = 1e-4;
    cfg.datasets = {50000, 200, 1000};
    cfg.rare.n_bruteforce = 10000;
    cfg.rare.n_importance = 80000;
    cfg.rare.n_train = 5000;
    cfg.rare.n_validation = 200;
    cfg.rare.n_test = 1000;
    cfg.scenarios.factors = ScenarioFactors{};  // 50k/5k, 200/50, 100/10
    cfg.scenarios.n_validation = 200;
    cfg.scenarios.n_test = 1000;
    cfg.scenarios.n_iterations = 10000;
    cfg.master_seed = 20260808;
    return cfg;
  }
  if (name == "desk") {
    // Minutes-scale profile for development and acceptance runs.
    cfg.nx = cfg.ny = 26;
    cfg.n_modes = 20;
    cfg.n_obs = 200;
    cfg.train.n_iterations = 500;
    cfg.train.learning_rate = 1e-3;
    cfg.datasets = {2000, 100, 200};
    cfg.rare.n_bruteforce = 10000;
    cfg.rare.n_importance = 20000;
    cfg.rare.n_train = 500;
    cfg.rare.n_validation = 20;
    cfg.rare.n_test = 100;
    cfg.scenarios.factors = ScenarioFactors{600, 250, 50, 20, 100.0, 10.0};
    cfg.scenarios.n_validation = 50;
    cfg.scenarios.n_test = 80;
    cfg.scenarios.n_iterations = 100;
    cfg.master_seed = 20260808;
    return cfg;
  }
  throw ConfigError("unknown preset \"" + name + "\" (expected desk or paper)");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

std::string config_to_json(const ExperimentConfig& config) {
  return config_to_json_obj(config).dump(2) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a64_str(config_to_json(config));
}

int resolve_critical_node(const GridSpec& grid, double x, double y) {
  int best = -1;
  double best_d2 = 0.0;
  for (int j = 1; j < grid.ny - 1; ++j) {
    for (int i = 1; i < grid.nx - 1; ++i) {
      const double dx = grid.x_of(i) - x;
      const double dy = grid.y_of(j) - y;
      const double d2 = dx * dx + dy * dy;
      if (best < 0 || d2 < best_d2) {
        best = grid.idx(i, j);
        best_d2 = d2;
      }
    }
  }
  return best;
}

}  // namespace resinv
