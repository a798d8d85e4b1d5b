#include "amaml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "amaml/parallel.hpp"

namespace amaml::metrics {

Normalizer normalizer_from_name(const std::string& name) {
  if (name == "mean_abs") return Normalizer::MeanAbsTarget;
  if (name == "std") return Normalizer::StdTarget;
  throw ConfigError("unknown nRMSE normalizer '" + name + "' (expected mean_abs|std)");
}

const char* normalizer_name(Normalizer n) {
  return n == Normalizer::MeanAbsTarget ? "mean_abs" : "std";
}

double nrmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, Normalizer normalizer) {
  if (pred.size() != truth.size()) throw ContractError("nrmse: length mismatch");
  if (pred.size() < 1) throw ContractError("nrmse: need at least one value");

  const double rmse = std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
  double scale = 0.0;
  if (normalizer == Normalizer::MeanAbsTarget) {
    scale = truth.cwiseAbs().mean();
  } else {
    const double mean = truth.mean();
    scale = std::sqrt((truth.array() - mean).square().mean());
  }
  if (!(scale > 1e-300)) {
    throw DataError("nrmse: degenerate targets, normalizer is zero");
  }
  return rmse / scale;
}

AdaptationCurve adaptation_curve(const model::MlpSpec& spec, const Eigen::VectorXd& theta,
                                 const std::vector<model::Task>& test_tasks, int epochs_max,
                                 double alpha, int checkpoint_every, int threads,
                                 Normalizer normalizer) {
  spec.validate();
  if (test_tasks.empty()) throw ContractError("adaptation_curve: need at least one test task");
  if (epochs_max < 0) throw ContractError("adaptation_curve: epochs_max must be >= 0");
  if (checkpoint_every < 1) throw ContractError("adaptation_curve: checkpoint spacing must be >= 1");
  if (!(alpha > 0.0)) throw ContractError("adaptation_curve: step size must be positive");
  if (threads <= 0) threads = hardware_threads();

  std::vector<int> checkpoints{0};
  for (int e = checkpoint_every; e <= epochs_max; e += checkpoint_every) checkpoints.push_back(e);
  const std::size_t n_checks = checkpoints.size();
  const std::size_t n_tasks = test_tasks.size();

  // errors(task, checkpoint); NaN marks a diverged task from that point on.
  std::vector<std::vector<double>> errors(n_tasks, std::vector<double>(n_checks));

  parallel_for(static_cast<int>(n_tasks), threads, [&](int ti) {
    const model::Task& task = test_tasks[static_cast<std::size_t>(ti)];
    const model::MlpLossField train_loss(spec, task.train);
    auto record = [&](std::size_t ci, const Eigen::VectorXd& u) {
      const Eigen::MatrixXd pred = model::predict_all(spec, u, task.val.inputs);
      errors[static_cast<std::size_t>(ti)][ci] =
          nrmse(Eigen::Map<const Eigen::VectorXd>(pred.data(), pred.size()),
                Eigen::Map<const Eigen::VectorXd>(task.val.targets.data(),
                                                  task.val.targets.size()),
                normalizer);
    };

    Eigen::VectorXd u = theta;
    std::size_t ci = 0;
    record(ci++, u);
    bool diverged = false;
    for (int e = 1; e <= epochs_max && ci < n_checks; ++e) {
      if (!diverged) {
        try {
          u -= alpha * ad::grad(train_loss, u);
          if (!u.allFinite()) diverged = true;
        } catch (const NumericalError&) {
          diverged = true;
        }
      }
      if (e == checkpoints[ci]) {
        if (diverged) {
          errors[static_cast<std::size_t>(ti)][ci] = std::numeric_limits<double>::quiet_NaN();
          ++ci;
        } else {
          record(ci++, u);
        }
      }
    }
    while (ci < n_checks) {
      errors[static_cast<std::size_t>(ti)][ci++] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  AdaptationCurve curve;
  curve.epochs = checkpoints;
  curve.nrmse_mean.resize(n_checks);
  curve.nrmse_std.resize(n_checks);
  curve.excluded.resize(n_checks);
  int warned = 0;
  for (std::size_t ci = 0; ci < n_checks; ++ci) {
    double sum = 0.0, sum_sq = 0.0;
    int kept = 0;
    for (std::size_t ti = 0; ti < n_tasks; ++ti) {
      const double e = errors[ti][ci];
      if (std::isnan(e)) continue;
      sum += e;
      sum_sq += e * e;
      ++kept;
    }
    curve.excluded[ci] = static_cast<int>(n_tasks) - kept;
    warned = std::max(warned, curve.excluded[ci]);
    if (kept == 0) {
      curve.nrmse_mean[ci] = std::numeric_limits<double>::quiet_NaN();
      curve.nrmse_std[ci] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = sum / kept;
    curve.nrmse_mean[ci] = mean;
    curve.nrmse_std[ci] = std::sqrt(std::max(0.0, sum_sq / kept - mean * mean));
  }
  if (warned > 0) {
    // Warning only; the curve records exclusion counts per checkpoint.
    std::cerr << "[amaml] warning: adaptation_curve: " << warned << " of " << n_tasks
              << " tasks diverged and were excluded\n";
  }
  return curve;
}

void write_curve_csv(const AdaptationCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_curve_csv: cannot open '" + path + "' for writing");
  out << "epoch,mean,std\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.epochs.size(); ++i) {
    out << curve.epochs[i] << ',' << curve.nrmse_mean[i] << ',' << curve.nrmse_std[i] << '\n';
  }
}

ResourceSummary resource_report(const std::string& algorithm,
                                std::span<const meta::MetaIterLog> log) {
  ResourceSummary summary;
  summary.algorithm = algorithm;
  summary.iters = static_cast<long>(log.size());
  if (log.empty()) return summary;
  for (const auto& entry : log) {
    summary.mean_grad_calls += static_cast<double>(entry.grad_calls);
    summary.mean_hvp_calls += static_cast<double>(entry.hvp_calls);
    summary.mean_wall_ms += entry.wall_ms;
    summary.peak_state_floats = std::max(summary.peak_state_floats, entry.peak_state_floats);
  }
  const double n = static_cast<double>(log.size());
  summary.mean_grad_calls /= n;
  summary.mean_hvp_calls /= n;
  summary.mean_wall_ms /= n;
  return summary;
}

}  // namespace amaml::metrics
