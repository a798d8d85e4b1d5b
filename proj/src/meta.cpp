#include "amaml/meta.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "amaml/parallel.hpp"

namespace amaml::meta {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

bool warnings_enabled() {
  static const bool quiet = [] {
    const char* v = std::getenv("AMAML_LOG");
    return v != nullptr && std::string(v) == "quiet";
  }();
  return !quiet;
}

void warn(const std::string& msg) {
  if (warnings_enabled()) std::cerr << "[amaml] warning: " << msg << '\n';
}

void check_theta(const DifferentiableTask& task, const Eigen::VectorXd& theta) {
  if (!task.train_loss || !task.val_loss) {
    throw ContractError("task is missing train or validation loss");
  }
  if (task.train_loss->dim() != task.val_loss->dim()) {
    throw ContractError("task train/val losses disagree on parameter dimension");
  }
  if (static_cast<std::size_t>(theta.size()) != task.train_loss->dim()) {
    std::ostringstream os;
    os << "theta length " << theta.size() << " != task parameter dimension "
       << task.train_loss->dim();
    throw ContractError(os.str());
  }
  if (!theta.allFinite()) throw ContractError("theta has non-finite entries");
}

[[noreturn]] void rethrow_with_task(const DifferentiableTask& task) {
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError("task '" + task.id + "': " + e.what());
  }
}

/// K gradient-descent steps u ← u − α∇L(u); optionally stores every iterate.
long run_inner_gd(const ad::ScalarField& loss, Eigen::VectorXd& u, int steps, double alpha,
                  std::vector<Eigen::VectorXd>* trajectory) {
  if (steps < 1) throw ContractError("inner GD needs at least one step (K >= 1)");
  if (!(alpha > 0.0)) throw ContractError("inner GD step size must be positive");
  long grad_calls = 0;
  if (trajectory) trajectory->push_back(u);
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd g = ad::grad(loss, u);
    ++grad_calls;
    u -= alpha * g;
    if (!u.allFinite()) {
      std::ostringstream os;
      os << "inner gradient descent overflowed at step " << k + 1 << " of " << steps;
      throw NumericalError(os.str());
    }
    if (trajectory) trajectory->push_back(u);
  }
  return grad_calls;
}

}  // namespace

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::AMaml: return "amaml";
    case Algorithm::Maml: return "maml";
    case Algorithm::Fomaml: return "fomaml";
    case Algorithm::Reptile: return "reptile";
    case Algorithm::Imaml: return "imaml";
  }
  return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "amaml") return Algorithm::AMaml;
  if (name == "maml") return Algorithm::Maml;
  if (name == "fomaml") return Algorithm::Fomaml;
  if (name == "reptile") return Algorithm::Reptile;
  if (name == "imaml") return Algorithm::Imaml;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected amaml|maml|fomaml|reptile|imaml)");
}

ode::SolverConfig MetaConfig::solver() const {
  ode::SolverConfig s;
  s.method = forward_method;
  s.rtol = rtol;
  s.atol = atol;
  s.grid_step = grid_step;
  s.horizon = horizon;
  return s;
}

void MetaConfig::validate() const {
  if (!(inner_step > 0.0)) throw ConfigError("MetaConfig: inner step alpha must be positive");
  if (!(outer_lr > 0.0)) throw ConfigError("MetaConfig: outer learning rate must be positive");
  if (batch_size < 1) throw ConfigError("MetaConfig: batch size must be >= 1");
  if (max_meta_iters < 0) throw ConfigError("MetaConfig: meta iteration budget must be >= 0");
  if (stop_tol < 0.0) throw ConfigError("MetaConfig: stop tolerance must be >= 0");
  if (inner_steps < 1) throw ConfigError("MetaConfig: inner step count K must be >= 1");
  if (!(prox_strength > 0.0)) throw ConfigError("MetaConfig: proximal strength must be positive");
  if (cg_steps < 1) throw ConfigError("MetaConfig: CG step count must be >= 1");
  solver().validate();
}

DifferentiableTask bind_task(const model::MlpSpec& spec, const model::Task& task) {
  DifferentiableTask out;
  out.train_loss = std::make_shared<model::MlpLossField>(spec, task.train);
  out.val_loss = std::make_shared<model::MlpLossField>(spec, task.val);
  out.id = task.id;
  return out;
}

AdjointResult adjoint_task_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                                const MetaConfig& cfg) {
  check_theta(task, theta);
  const Eigen::Index d = theta.size();
  AdjointResult out;
  try {
    ode::SolverConfig solver_cfg = cfg.solver();
    if (task.horizon_override) {
      solver_cfg.horizon = *task.horizon_override;
    }
    solver_cfg.validate();

    long grad_calls = 0;
    const ode::VectorField dynamics = [&](const Eigen::VectorXd& u, Eigen::VectorXd& du) {
      du = -ad::grad(*task.train_loss, u);
      ++grad_calls;
    };
    ode::ForwardResult fwd = ode::solve_forward(dynamics, theta, solver_cfg);

    const Eigen::VectorXd& u_final = fwd.grid.states.back();
    ad::ValueGrad val = ad::value_and_grad(*task.val_loss, u_final);
    ++grad_calls;

    const ode::HvpMap hvp_at = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                   Eigen::VectorXd& hv) { hv = -ad::hvp(*task.train_loss, u, v); };
    ode::AdjointStats adj_stats;
    out.grad = ode::solve_adjoint(hvp_at, fwd.grid, std::move(val.grad), &adj_stats);

    out.val_loss = val.value;
    out.forward_steps = fwd.stats.accepted_steps;
    out.grad_calls = grad_calls;
    out.hvp_calls = adj_stats.hvp_calls;
    const long grid_floats = static_cast<long>(fwd.grid.states.size()) * d;
    out.peak_state_floats =
        grid_floats + std::max(fwd.stats.workspace_floats, adj_stats.workspace_floats);
  } catch (const NumericalError&) {
    rethrow_with_task(task);
  }
  return out;
}

AdjointResult unrolled_maml_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                                 const MetaConfig& cfg) {
  check_theta(task, theta);
  const int steps = cfg.inner_steps;
  const double alpha = cfg.inner_step;
  AdjointResult out;
  try {
    std::vector<Eigen::VectorXd> trajectory;
    trajectory.reserve(static_cast<std::size_t>(steps) + 1);
    Eigen::VectorXd u = theta;
    out.grad_calls += run_inner_gd(*task.train_loss, u, steps, alpha, &trajectory);

    ad::ValueGrad val = ad::value_and_grad(*task.val_loss, u);
    ++out.grad_calls;
    Eigen::VectorXd v = std::move(val.grad);
    for (int k = steps - 1; k >= 0; --k) {
      v -= alpha * ad::hvp(*task.train_loss, trajectory[static_cast<std::size_t>(k)], v);
      ++out.hvp_calls;
      if (!v.allFinite()) {
        std::ostringstream os;
        os << "unrolled backward recursion overflowed at step " << k;
        throw NumericalError(os.str());
      }
    }
    out.grad = std::move(v);
    out.val_loss = val.value;
    out.forward_steps = steps;
    out.peak_state_floats = static_cast<long>(trajectory.size() + 3) * theta.size();
  } catch (const NumericalError&) {
    rethrow_with_task(task);
  }
  return out;
}

AdjointResult fomaml_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                          const MetaConfig& cfg) {
  check_theta(task, theta);
  AdjointResult out;
  try {
    Eigen::VectorXd u = theta;
    out.grad_calls += run_inner_gd(*task.train_loss, u, cfg.inner_steps, cfg.inner_step, nullptr);
    ad::ValueGrad val = ad::value_and_grad(*task.val_loss, u);
    ++out.grad_calls;
    out.grad = std::move(val.grad);
    out.val_loss = val.value;
    out.forward_steps = cfg.inner_steps;
    out.peak_state_floats = 3 * theta.size();
  } catch (const NumericalError&) {
    rethrow_with_task(task);
  }
  return out;
}

AdjointResult reptile_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                           const MetaConfig& cfg) {
  AdjointResult out = fomaml_grad(task, theta, cfg);
  out.grad -= theta;
  return out;
}

AdjointResult imaml_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                         const MetaConfig& cfg) {
  check_theta(task, theta);
  if (cfg.inner_steps < 1) throw ContractError("imaml_grad: inner step count K must be >= 1");
  if (!(cfg.prox_strength > 0.0)) {
    throw ContractError("imaml_grad: proximal strength must be positive");
  }
  const double prox = cfg.prox_strength;
  AdjointResult out;
  try {
    // Inner training on the proximal-regularized loss
    // ∇L̂(u) = ∇L(u) + prox·(u − θ).
    Eigen::VectorXd u = theta;
    for (int k = 0; k < cfg.inner_steps; ++k) {
      Eigen::VectorXd g = ad::grad(*task.train_loss, u) + prox * (u - theta);
      ++out.grad_calls;
      u -= cfg.inner_step * g;
      if (!u.allFinite()) {
        std::ostringstream os;
        os << "proximal inner descent overflowed at step " << k + 1;
        throw NumericalError(os.str());
      }
    }

    ad::ValueGrad val = ad::value_and_grad(*task.val_loss, u);
    ++out.grad_calls;

    // CG on (I + H_tr(ψ)/prox)·g = ∇val(ψ); the operator is applied through
    // exact HVPs only.
    const Eigen::VectorXd& b = val.grad;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd r = b;
    Eigen::VectorXd p = r;
    Eigen::VectorXd ap(theta.size());
    double rr = r.squaredNorm();
    Eigen::VectorXd best_x = x;
    double best_res = std::sqrt(rr);
    for (int k = 0; k < cfg.cg_steps && rr > 1e-30; ++k) {
      ap = p + ad::hvp(*task.train_loss, u, p) / prox;
      ++out.hvp_calls;
      const double p_ap = p.dot(ap);
      if (!(p_ap > 0.0)) {
        warn("task '" + task.id + "': CG met non-positive curvature at iteration " +
             std::to_string(k) + "; returning best iterate");
        break;
      }
      const double step = rr / p_ap;
      x += step * p;
      r -= step * ap;
      const double rr_next = r.squaredNorm();
      if (std::sqrt(rr_next) < best_res) {
        best_res = std::sqrt(rr_next);
        best_x = x;
      }
      p = r + (rr_next / rr) * p;
      rr = rr_next;
    }

    out.grad = std::move(best_x);
    out.val_loss = val.value;
    out.forward_steps = cfg.inner_steps;
    out.peak_state_floats = 7 * theta.size();
  } catch (const NumericalError&) {
    rethrow_with_task(task);
  }
  return out;
}

AdjointResult task_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                        const MetaConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::AMaml: return adjoint_task_grad(task, theta, cfg);
    case Algorithm::Maml: return unrolled_maml_grad(task, theta, cfg);
    case Algorithm::Fomaml: return fomaml_grad(task, theta, cfg);
    case Algorithm::Reptile: return reptile_grad(task, theta, cfg);
    case Algorithm::Imaml: return imaml_grad(task, theta, cfg);
  }
  throw ContractError("task_grad: unhandled algorithm");
}

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr) {
  if (grad.size() != theta.size()) throw ContractError("adam_step: gradient length mismatch");
  if (state.m.size() != theta.size()) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
    state.step = 0;
  }
  ++state.step;
  state.m = kAdamBeta1 * state.m + (1.0 - kAdamBeta1) * grad;
  state.v = kAdamBeta2 * state.v + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
  const double m_corr = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double v_corr = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  theta.array() -=
      lr * (state.m.array() / m_corr) / ((state.v.array() / v_corr).sqrt() + kAdamEps);
}

MetaTrainResult meta_train(const TaskSource& source, Eigen::VectorXd theta0,
                           const MetaConfig& cfg, int threads,
                           const std::function<void(const MetaIterLog&)>& on_iter) {
  cfg.validate();
  if (!source) throw ContractError("meta_train: task source is empty");
  if (threads <= 0) threads = hardware_threads();

  MetaTrainResult result;
  result.theta = std::move(theta0);
  AdamState adam;

  const int batch = cfg.batch_size;
  std::vector<AdjointResult> grads(static_cast<std::size_t>(batch));

  for (int iter = 0; iter < cfg.max_meta_iters; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();

    auto errors = parallel_try(batch, threads, [&](int slot) {
      const DifferentiableTask task = source(iter, slot);
      grads[static_cast<std::size_t>(slot)] = task_grad(task, result.theta, cfg);
    });

    MetaIterLog entry;
    entry.iter = iter;
    Eigen::VectorXd mean_grad = Eigen::VectorXd::Zero(result.theta.size());
    int kept = 0;
    for (int slot = 0; slot < batch; ++slot) {
      if (auto& err = errors[static_cast<std::size_t>(slot)]) {
        if (!cfg.skip_diverged_tasks) std::rethrow_exception(err);
        try {
          std::rethrow_exception(err);
        } catch (const NumericalError& e) {
          warn(std::string("skipping diverged task: ") + e.what());
          ++entry.skipped_tasks;
          continue;
        }
        // Contract and configuration errors are never skippable.
      }
      const AdjointResult& g = grads[static_cast<std::size_t>(slot)];
      mean_grad += g.grad;
      entry.mean_val_loss += g.val_loss;
      entry.grad_calls += g.grad_calls;
      entry.hvp_calls += g.hvp_calls;
      entry.peak_state_floats = std::max(entry.peak_state_floats, g.peak_state_floats);
      ++kept;
    }
    if (kept == 0) {
      throw NumericalError("meta_train: every task in the batch diverged at iteration " +
                           std::to_string(iter));
    }
    mean_grad /= static_cast<double>(kept);
    entry.mean_val_loss /= static_cast<double>(kept);
    entry.grad_norm = mean_grad.norm();

    const Eigen::VectorXd theta_prev = result.theta;
    adam_step(result.theta, mean_grad, adam, cfg.outer_lr);
    const double delta = (result.theta - theta_prev).norm();

    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
    result.log.push_back(entry);
    if (on_iter) on_iter(entry);
    result.iters_run = iter + 1;

    if (cfg.stop_tol > 0.0 && delta < cfg.stop_tol) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace amaml::meta
