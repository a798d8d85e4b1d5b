#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "amaml/meta.hpp"
#include "amaml/metrics.hpp"
#include "amaml/model.hpp"
#include "amaml/tasks.hpp"

namespace amaml::experiment {

struct BenchPlan {
  std::vector<double> horizons = {0.5, 1.0, 2.0, 5.0};
  std::vector<std::string> algorithms = {"amaml", "maml", "fomaml", "reptile", "imaml"};
  int updates = 3;
};

/// Everything one run needs, loaded from a JSON config file and validated
/// against every module's preconditions before any compute starts. The
/// effective config (after CLI overrides) is snapshotted next to results.
struct ExperimentConfig {
  std::string family = "cosmixture";  // cosmixture | alpine | movielens | jester
  std::string data_path;              // rating file for the CF families
  int shots = 50;
  int vals = 50;
  int eval_points = 100;  // held-out evaluation examples per synthetic test task
  std::vector<int> hidden = {32, 32};
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = available parallelism
  int test_tasks = 100;
  int epochs_max = 200;
  int checkpoint_every = 10;
  std::string normalizer = "mean_abs";
  meta::MetaConfig meta;
  BenchPlan bench;

  bool is_synthetic() const { return family == "cosmixture" || family == "alpine"; }
  tasks::SyntheticFamily synthetic_family() const;
  model::MlpSpec mlp_spec(int input_dim) const;

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
};

/// Built from a config once per run: data loaded, user split fixed, model
/// spec resolved. Task construction is a pure function of (seed, iter, slot).
struct TaskEnvironment {
  ExperimentConfig cfg;
  model::MlpSpec spec;
  std::optional<tasks::CFCatalogue> catalogue;
  std::vector<int> train_users;
  std::vector<int> test_users;

  static TaskEnvironment create(const ExperimentConfig& cfg);

  meta::TaskSource meta_task_source() const;
  std::vector<model::Task> sample_test_tasks() const;
};

// θ-file: flat little-endian float64 payload next to a JSON sidecar carrying
// the dimension, the spec hash, the seed, and the producing algorithm.
std::uint64_t spec_hash(const model::MlpSpec& spec);
void write_theta(const std::filesystem::path& bin_path, const Eigen::VectorXd& theta,
                 const model::MlpSpec& spec, std::uint64_t seed, const std::string& algorithm);
struct ThetaFile {
  Eigen::VectorXd theta;
  std::string algorithm;
};
ThetaFile read_theta(const std::filesystem::path& bin_path, const model::MlpSpec& expected_spec);

struct MetaTrainOutputs {
  std::filesystem::path theta_bin;
  std::filesystem::path log_jsonl;
  std::filesystem::path config_json;
};
MetaTrainOutputs run_meta_train(const ExperimentConfig& cfg, const std::string& out_dir);

struct MetaTestOptions {
  bool baseline_random = false;  // also emit the curve of the untrained init
};
void run_meta_test(const ExperimentConfig& cfg, const std::string& theta_path,
                   const std::string& out_dir, const MetaTestOptions& options = {});

struct GradCheckOptions {
  bool corrupt_adjoint_sign = false;  // test hook: must make the check fail
};
/// Runs the estimator-consistency suite and prints one line per check.
/// Returns true when every check passed.
bool run_grad_check(const ExperimentConfig& cfg, const GradCheckOptions& options,
                    std::ostream& out);

/// Small config suited to runtime gradient verification (low-dimensional
/// MLP, short horizon).
ExperimentConfig grad_check_defaults();

void run_bench(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace amaml::experiment
