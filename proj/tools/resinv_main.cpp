#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "resinv/errors.hpp"
#include "resinv/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string preset = "desk";
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "Path to an experiment config JSON (overrides the preset)");
  cmd->add_option("--out", args.out_dir, "Run directory for artifacts");
  cmd->add_option("--threads", args.threads, "Worker threads for parallel sections")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--preset", args.preset, "Built-in config preset")
      ->check(CLI::IsMember({"desk", "paper"}));
}

resinv::ExperimentConfig resolve_config(const CommonArgs& args) {
  resinv::ExperimentConfig config = args.config_path.empty()
                                        ? resinv::config_from_preset(args.preset)
                                        : resinv::load_config(args.config_path);
  if (!args.out_dir.empty()) config.output_dir = args.out_dir;
  config.validate();
  return config;
}

resinv::RunPaths paths_for(const resinv::ExperimentConfig& config) {
  return resinv::RunPaths{config.output_dir};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Amortized physics-informed reservoir characterization pipeline"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* basis = app.add_subcommand("basis", "Build and save the KL basis");
  add_common(basis, args);

  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  add_common(gen, args);
  std::string role_name = "train";
  int gen_n = -1;
  gen->add_option("--role", role_name, "Dataset role")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  gen->add_option("--n", gen_n, "Number of samples (defaults to the config size)");

  auto* train = app.add_subcommand("train", "Train one model");
  add_common(train, args);
  std::string model_name = "physics_informed";
  bool resume = false;
  train->add_option("--model", model_name, "Training objective")
      ->check(CLI::IsMember({"data_driven", "physics_informed"}));
  train->add_flag("--resume", resume, "Continue from an existing checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a model pair on a test set");
  add_common(eval, args);
  std::string dd_path, pi_path, test_path;
  eval->add_option("--dd", dd_path, "Data-driven checkpoint (default: run dir)");
  eval->add_option("--pi", pi_path, "Physics-informed checkpoint (default: run dir)");
  eval->add_option("--test", test_path, "Test dataset file (default: run dir)");

  auto* scenarios =
      app.add_subcommand("scenarios", "Run the eight LLL..SSS scenarios");
  add_common(scenarios, args);

  auto* rare = app.add_subcommand("rare", "Tail sampling and the four rare cases");
  add_common(rare, args);

  auto* report = app.add_subcommand("report", "Print a run summary");
  add_common(report, args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      resinv::RunPaths paths{args.out_dir.empty()
                                 ? resolve_config(args).output_dir
                                 : args.out_dir};
      return resinv::cmd_report(paths, std::cout);
    }

    const resinv::ExperimentConfig config = resolve_config(args);
    const resinv::RunPaths paths = paths_for(config);

    if (basis->parsed()) {
      std::cout << resinv::cmd_basis(config, paths) << "\n";
    } else if (gen->parsed()) {
      resinv::DatasetRole role = resinv::DatasetRole::kTrain;
      int n = config.datasets.n_train;
      if (role_name == "validation") {
        role = resinv::DatasetRole::kValidation;
        n = config.datasets.n_validation;
      } else if (role_name == "test") {
        role = resinv::DatasetRole::kTest;
        n = config.datasets.n_test;
      }
      if (gen_n >= 0) n = gen_n;
      std::cout << resinv::cmd_gen(config, paths, role, n, args.threads) << "\n";
    } else if (train->parsed()) {
      std::cout << resinv::cmd_train(config, paths,
                                     resinv::model_kind_from_string(model_name),
                                     args.threads, resume)
                << "\n";
    } else if (eval->parsed()) {
      std::cout << resinv::cmd_eval(config, paths, dd_path, pi_path, test_path,
                                    args.threads)
                << "\n";
    } else if (scenarios->parsed()) {
      std::cout << resinv::cmd_scenarios(config, paths, args.threads) << "\n";
    } else if (rare->parsed()) {
      std::cout << resinv::cmd_rare(config, paths, args.threads) << "\n";
    }
    return 0;
  } catch (const resinv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const resinv::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const resinv::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
