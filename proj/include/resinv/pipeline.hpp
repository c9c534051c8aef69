#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "resinv/config.hpp"
#include "resinv/rare_events.hpp"

namespace resinv {

// Conventional artifact names inside a run directory.
struct RunPaths {
  std::string dir;

  std::string config() const { return dir + "/config.json"; }
  std::string manifest() const { return dir + "/manifest.json"; }
  std::string basis() const { return dir + "/basis.klb"; }
  std::string dataset(DatasetRole role) const {
    return dir + "/" + to_string(role) + ".dset";
  }
  std::string checkpoint(ModelKind kind) const {
    return dir + "/" + (kind == ModelKind::kDataDriven ? "dd" : "pi") + ".mlp";
  }
  std::string history(ModelKind kind) const {
    return dir + "/history_" +
           (kind == ModelKind::kDataDriven ? "dd" : "pi") + ".csv";
  }
  std::string eval_prefix() const { return dir + "/eval_"; }
  std::string eval_summary() const { return dir + "/eval_summary.csv"; }
  std::string scenario_summary() const { return dir + "/scenarios_summary.csv"; }
  std::string scenario_prefix(const std::string& name) const {
    return dir + "/scenario_" + name + "_";
  }
  std::string tail_file() const { return dir + "/rare_tail.tail"; }
  std::string rare_summary() const { return dir + "/rare_summary.csv"; }
  std::string rare_prefix(const std::string& case_name) const {
    return dir + "/rare_" + case_name + "_";
  }
};

// Archives the resolved config and registers artifacts; every command goes
// through this so a run directory is always re-runnable.
class RunManifest {
 public:
  RunManifest(const ExperimentConfig& config, const RunPaths& paths);
  void add_artifact(const std::string& name, const std::string& path);
  void write() const;

 private:
  RunPaths paths_;
  std::uint64_t config_hash_;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

// Pipeline commands; each returns the primary artifact path. `threads`
// controls deterministic slot-parallel sections only.
std::string cmd_basis(const ExperimentConfig& config, const RunPaths& paths);
std::string cmd_gen(const ExperimentConfig& config, const RunPaths& paths,
                    DatasetRole role, int n, int threads);
std::string cmd_train(const ExperimentConfig& config, const RunPaths& paths,
                      ModelKind kind, int threads, bool resume = false);
std::string cmd_eval(const ExperimentConfig& config, const RunPaths& paths,
                     const std::string& dd_path, const std::string& pi_path,
                     const std::string& test_path, int threads);
std::string cmd_scenarios(const ExperimentConfig& config, const RunPaths& paths,
                          int threads);
std::string cmd_rare(const ExperimentConfig& config, const RunPaths& paths,
                     int threads);
int cmd_report(const RunPaths& paths, std::ostream& out);

// Shared helpers.
ModelContext make_context(const ExperimentConfig& config, const KLBasis& basis);
KLBasis ensure_basis(const ExperimentConfig& config, const RunPaths& paths);
Dataset ensure_dataset(const ExperimentConfig& config, const RunPaths& paths,
                       DatasetRole role, int n, const ModelContext& ctx,
                       int threads);

}  // namespace resinv
