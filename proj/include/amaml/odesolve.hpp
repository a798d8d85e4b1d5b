#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amaml/errors.hpp"

namespace amaml::ode {

enum class Method { RK45, RK4, ForwardEuler };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

/// Forward-integration configuration. The horizon is realized as J·h with
/// J = T/h; configs where T/h is not an integer (to 1e-9 relative) are
/// rejected rather than silently shortening the horizon.
struct SolverConfig {
  Method method = Method::RK45;
  double rtol = 1e-6;
  double atol = 1e-8;
  double grid_step = 0.01;  // h: spacing of the tracked state grid
  double horizon = 1.0;     // T

  /// Optional debug dump of the tracked grid, CSV with header t,idx,value.
  std::optional<std::string> dump_path;

  /// J = T/h (validated integer).
  int grid_intervals() const;
  void validate() const;
};

/// States tracked at t_j = j·h, j = 0..J; states[0] = u(0), states[J] = u(T).
struct TrajectoryGrid {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;

  int intervals() const { return static_cast<int>(times.size()) - 1; }
  double spacing() const;
  Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
};

/// The adjoint variable λ(t) is a plain d-vector.
using AdjointState = Eigen::VectorXd;

/// du/dt = f(u), written into the output argument.
using VectorField = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// (u, v) ↦ H(u)·v where H = ∂f/∂u.
using HvpMap =
    std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct ForwardStats {
  long accepted_steps = 0;
  long rejected_steps = 0;
  long rhs_evals = 0;
  /// State-sized working floats held alongside the grid (d-vector buffers).
  long workspace_floats = 0;
};

struct ForwardResult {
  TrajectoryGrid grid;
  ForwardStats stats;
};

/// Integrates du/dt = f(u) from u(0) = u0 over [0, T] and returns the states
/// on the uniform h-grid. With Method::ForwardEuler the grid states are
/// exactly the iterates of gradient descent with step h on the underlying
/// loss. RK45 is Dormand–Prince 5(4) with adaptive steps; grid states are
/// read off accepted steps through a 4th-order Hermite interpolant.
ForwardResult solve_forward(const VectorField& f, const Eigen::VectorXd& u0,
                            const SolverConfig& cfg);

struct AdjointStats {
  long hvp_calls = 0;
  long workspace_floats = 0;
};

/// Solves the adjoint ODE dλ/dt = −H(u(t))·λ backward over the tracked grid
/// with the two-stage modified-Euler scheme
///   λ̃_j = λ_{j+1} + h·H(u_{j+1})·λ_{j+1}
///   λ_j = λ_{j+1} + h/2·[H(u_{j+1})·λ_{j+1} + H(u_j)·λ̃_j]
/// and returns λ(0). Global accuracy is O(h²); exactly two HVP evaluations
/// per backward step, and the loss itself is never evaluated.
AdjointState solve_adjoint(const HvpMap& hvp_at, const TrajectoryGrid& grid,
                           AdjointState lambda_T, AdjointStats* stats = nullptr);

/// Writes the grid as CSV rows `t,idx,value` (one row per state component).
void dump_trajectory_csv(const TrajectoryGrid& grid, const std::string& path);

}  // namespace amaml::ode
