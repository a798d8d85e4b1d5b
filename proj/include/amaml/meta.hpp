#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "amaml/autodiff.hpp"
#include "amaml/model.hpp"
#include "amaml/odesolve.hpp"

namespace amaml::meta {

enum class Algorithm { AMaml, Maml, Fomaml, Reptile, Imaml };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

/// All scalar hyperparameters of the outer loop and the per-task gradient
/// estimators. Defaults follow the synthetic-benchmark settings.
struct MetaConfig {
  double inner_step = 0.01;    // α: inner GD step size (and Euler step)
  double outer_lr = 1e-3;      // η: ADAM learning rate
  int batch_size = 5;          // B: tasks per outer update
  int max_meta_iters = 5000;   // G
  double stop_tol = 0.0;       // ξ: stop when ‖Δθ‖₂ < ξ; 0 disables
  double horizon = 2.0;        // T: inner ODE integration time
  double grid_step = 0.01;     // h: state-tracking / adjoint step
  int inner_steps = 200;       // K: GD steps of the discrete baselines
  double prox_strength = 1.0;  // iMAML proximal regularizer strength
  int cg_steps = 5;            // iMAML conjugate-gradient iterations
  double rtol = 1e-6;
  double atol = 1e-8;
  ode::Method forward_method = ode::Method::RK45;
  Algorithm algorithm = Algorithm::AMaml;
  /// When set, a task whose gradient computation diverges is logged and
  /// skipped; otherwise the error propagates and aborts the run.
  bool skip_diverged_tasks = false;

  ode::SolverConfig solver() const;
  void validate() const;
};

/// Differentiable objectives of one task: train loss for the inner dynamics,
/// validation loss for the meta objective. Built from an MlpSpec + Task in
/// production; tests plug in closed-form fields directly.
struct DifferentiableTask {
  std::shared_ptr<const ad::ScalarField> train_loss;
  std::shared_ptr<const ad::ScalarField> val_loss;
  std::string id;
  /// Per-task override of cfg.horizon (the stopping time T may vary by task).
  std::optional<double> horizon_override;
};

DifferentiableTask bind_task(const model::MlpSpec& spec, const model::Task& task);

/// Per-task gradient estimate plus diagnostics. `grad` is dJ_n/dθ.
struct AdjointResult {
  Eigen::VectorXd grad;
  double val_loss = 0.0;  // J_n at the trained parameters
  long forward_steps = 0;
  long grad_calls = 0;
  long hvp_calls = 0;
  long peak_state_floats = 0;
};

/// Algorithm 2: forward gradient-flow solve from θ, λ(T) = ∇val at u(T),
/// modified-Euler adjoint sweep; returns λ(0) as the gradient.
AdjointResult adjoint_task_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                                const MetaConfig& cfg);

/// Exact gradient of the K-step inner GD unroll, by the transpose recursion
/// v_k = v_{k+1} − α·H_tr(u_k)·v_{k+1}; algebraically identical to
/// back-propagating through the unrolled graph, without building one.
AdjointResult unrolled_maml_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                                 const MetaConfig& cfg);

/// K GD steps, then the raw validation gradient at the trained parameters.
AdjointResult fomaml_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                          const MetaConfig& cfg);

/// The validation gradient at the trained parameters minus θ.
AdjointResult reptile_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                           const MetaConfig& cfg);

/// Proximal inner training on L + (λ/2)‖u−θ‖², then a conjugate-gradient
/// solve of (I + H_tr/λ)·g = ∇val.
AdjointResult imaml_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                         const MetaConfig& cfg);

/// Dispatch on cfg.algorithm.
AdjointResult task_grad(const DifferentiableTask& task, const Eigen::VectorXd& theta,
                        const MetaConfig& cfg);

struct AdamState {
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

/// Standard bias-corrected ADAM update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr);

struct MetaIterLog {
  int iter = 0;
  double mean_val_loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  long grad_calls = 0;
  long hvp_calls = 0;
  long peak_state_floats = 0;
  int skipped_tasks = 0;
};

/// Supplies the task for outer iteration `iter`, batch slot `slot`. Must be
/// a pure function of its arguments for runs to be reproducible under any
/// thread count.
using TaskSource = std::function<DifferentiableTask(int iter, int slot)>;

struct MetaTrainResult {
  Eigen::VectorXd theta;
  std::vector<MetaIterLog> log;
  int iters_run = 0;
  bool stopped_early = false;
};

/// Algorithm 1: up to G iterations of (sample B tasks, average per-task
/// gradients, ADAM-update θ); stops early when ‖Δθ‖₂ < ξ. Per-task
/// gradients may run in parallel; aggregation is in slot order.
MetaTrainResult meta_train(const TaskSource& source, Eigen::VectorXd theta0,
                           const MetaConfig& cfg, int threads = 1,
                           const std::function<void(const MetaIterLog&)>& on_iter = {});

}  // namespace amaml::meta
