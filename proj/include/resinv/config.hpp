#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "resinv/darcy.hpp"
#include "resinv/evaluation.hpp"
#include "resinv/grid.hpp"
#include "resinv/training.hpp"

namespace resinv {

// Derived-seed stream tags under the master seed. Parallel components each
// own a stream, so the draw sequence of one never depends on another.
namespace streams {
inline constexpr std::uint64_t kTrainDataset = 0x10;
inline constexpr std::uint64_t kValDataset = 0x11;
inline constexpr std::uint64_t kTestDataset = 0x12;
inline constexpr std::uint64_t kTrainDataDriven = 0x20;
inline constexpr std::uint64_t kTrainPhysics = 0x21;
inline constexpr std::uint64_t kRareBruteForce = 0x200;
inline constexpr std::uint64_t kRareImportance = 0x201;
inline constexpr std::uint64_t kRareTrainNoise = 0x202;
inline constexpr std::uint64_t kRareValNoise = 0x203;
inline constexpr std::uint64_t kRareTestNoise = 0x204;
inline constexpr std::uint64_t kRareCases = 0x210;
}  // namespace streams

struct DatasetSizes {
  int n_train = 0;
  int n_validation = 0;
  int n_test = 0;
};

struct RareSection {
  double critical_x = 150.0;  // m; resolved to the nearest interior node
  double critical_y = 150.0;
  double quantile = 0.01;
  std::optional<double> threshold;  // MPa; empirical quantile when unset
  int n_bruteforce = 10000;
  int n_importance = 40000;  // proposals drawn from the tilted Gaussian
  int n_train = 0;
  int n_validation = 0;
  int n_test = 0;
};

struct ScenarioSection {
  ScenarioFactors factors;
  int n_validation = 0;
  int n_test = 0;
  int n_iterations = 0;  // scenario trainings may use fewer iterations
};

// The single JSON document a run archives verbatim. Unknown keys anywhere
// are rejected.
struct ExperimentConfig {
  int nx = 51, ny = 51;
  double lx = 200.0, ly = 200.0;
  BoundaryConditions bc{10.0, 0.0, 0.5, 0.0};
  std::string kernel = "exponential";
  double sigma2 = 1.0;
  double corr_length = 100.0;
  int n_modes = 200;
  double mean_log_k = 0.0;
  int n_obs = 200;
  std::uint64_t obs_seed = 1;
  TrainConfig train;
  DatasetSizes datasets;
  RareSection rare;
  ScenarioSection scenarios;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;

  void validate() const;
  GridSpec grid() const { return build_grid(nx, ny, lx, ly); }
};

ExperimentConfig config_from_preset(const std::string& name);  // desk | paper
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);  // sorted keys
std::uint64_t config_hash(const ExperimentConfig& config);

// Nearest interior node to physical coordinates.
int resolve_critical_node(const GridSpec& grid, double x, double y);

}  // namespace resinv
