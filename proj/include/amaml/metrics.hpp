#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "amaml/meta.hpp"
#include "amaml/model.hpp"

namespace amaml::metrics {

enum class Normalizer { MeanAbsTarget, StdTarget };

Normalizer normalizer_from_name(const std::string& name);
const char* normalizer_name(Normalizer n);

/// RMSE(pred, truth) divided by the target scale: mean |truth| by default,
/// or the target standard deviation. A vanishing normalizer is an error.
double nrmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth,
             Normalizer normalizer = Normalizer::MeanAbsTarget);

/// Test-time adaptation error as a function of plain-GD training epochs,
/// aggregated over tasks (mean and population std, divergent tasks excluded
/// and counted).
struct AdaptationCurve {
  std::string algorithm;
  std::string config_snapshot;
  std::vector<int> epochs;
  std::vector<double> nrmse_mean;
  std::vector<double> nrmse_std;
  std::vector<int> excluded;  // divergent tasks dropped at each checkpoint
};

/// For each test task: start at θ, run epochs_max full-batch GD steps of
/// size alpha on the task's shot set, and record nRMSE on the task's
/// held-out points at epoch 0 and every checkpoint_every epochs.
AdaptationCurve adaptation_curve(const model::MlpSpec& spec, const Eigen::VectorXd& theta,
                                 const std::vector<model::Task>& test_tasks, int epochs_max,
                                 double alpha, int checkpoint_every = 10, int threads = 1,
                                 Normalizer normalizer = Normalizer::MeanAbsTarget);

void write_curve_csv(const AdaptationCurve& curve, const std::string& path);

/// Per-algorithm resource accounting over a training log.
struct ResourceSummary {
  std::string algorithm;
  long iters = 0;
  double mean_grad_calls = 0.0;
  double mean_hvp_calls = 0.0;
  long peak_state_floats = 0;
  double mean_wall_ms = 0.0;
};

ResourceSummary resource_report(const std::string& algorithm,
                                std::span<const meta::MetaIterLog> log);

}  // namespace amaml::metrics
