#include "amaml/odesolve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace amaml::ode {

const char* method_name(Method m) {
  switch (m) {
    case Method::RK45: return "rk45";
    case Method::RK4: return "rk4";
    case Method::ForwardEuler: return "euler";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "rk45") return Method::RK45;
  if (name == "rk4") return Method::RK4;
  if (name == "euler") return Method::ForwardEuler;
  throw ConfigError("unknown ODE method '" + name + "' (expected rk45|rk4|euler)");
}

int SolverConfig::grid_intervals() const {
  const double ratio = horizon / grid_step;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << "SolverConfig: T/h = " << ratio << " is not a positive integer (T=" << horizon
       << ", h=" << grid_step << ")";
    throw ConfigError(os.str());
  }
  return static_cast<int>(rounded);
}

void SolverConfig::validate() const {
  if (!(grid_step > 0.0)) throw ConfigError("SolverConfig: grid step h must be positive");
  if (!(horizon > 0.0)) throw ConfigError("SolverConfig: horizon T must be positive");
  if (grid_step > horizon * (1.0 + 1e-12)) {
    throw ConfigError("SolverConfig: grid step h must not exceed horizon T");
  }
  if (method == Method::RK45 && (!(rtol > 0.0) || !(atol > 0.0))) {
    throw ConfigError("SolverConfig: rtol and atol must be positive for adaptive methods");
  }
  (void)grid_intervals();
}

double TrajectoryGrid::spacing() const {
  if (times.size() < 2) throw ContractError("TrajectoryGrid: need at least two grid points");
  return times[1] - times[0];
}

namespace {

void check_state_finite(const Eigen::VectorXd& y, double t) {
  if (!y.allFinite()) {
    std::ostringstream os;
    os << "solve_forward: state overflowed (non-finite) at t = " << t;
    throw NumericalError(os.str());
  }
}

// Dormand–Prince 5(4) tableau.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
// 5th-order weights (also the last stage row: FSAL).
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192, kB5 = -2187.0 / 6784,
                 kB6 = 11.0 / 84;
// Embedded 4th-order weights.
constexpr double kE1 = 5179.0 / 57600, kE3 = 7571.0 / 16695, kE4 = 393.0 / 640,
                 kE5 = -92097.0 / 339200, kE6 = 187.0 / 2100, kE7 = 1.0 / 40;

/// Cubic Hermite interpolant over one accepted step (4th-order accurate).
Eigen::VectorXd hermite(const Eigen::VectorXd& y0, const Eigen::VectorXd& f0,
                        const Eigen::VectorXd& y1, const Eigen::VectorXd& f1, double dt,
                        double theta) {
  const double t2 = theta * theta;
  const double t3 = t2 * theta;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + theta;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y0 + (h10 * dt) * f0 + h01 * y1 + (h11 * dt) * f1;
}

ForwardResult solve_rk45(const VectorField& f, const Eigen::VectorXd& u0,
                         const SolverConfig& cfg) {
  const int grid_n = cfg.grid_intervals();
  const double h = cfg.grid_step;
  const double t_end = grid_n * h;
  const Eigen::Index d = u0.size();

  ForwardResult out;
  out.grid.times.resize(grid_n + 1);
  for (int j = 0; j <= grid_n; ++j) out.grid.times[j] = j * h;
  out.grid.states.reserve(grid_n + 1);
  out.grid.states.push_back(u0);

  // Working set: y, ynew, ystage plus seven stage slopes — 10 state vectors.
  Eigen::VectorXd y = u0, ynew(d), ystage(d);
  Eigen::VectorXd k1(d), k2(d), k3(d), k4(d), k5(d), k6(d), k7(d);
  out.stats.workspace_floats = 10 * d;

  f(y, k1);
  ++out.stats.rhs_evals;

  double t = 0.0;
  double dt = std::min(h, t_end);
  int next_grid = 1;

  while (next_grid <= grid_n) {
    dt = std::min(dt, t_end - t);
    if (dt < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "solve_forward: step size underflow at t = " << t << " (dt = " << dt << ")";
      throw NumericalError(os.str());
    }

    ystage = y + dt * kA21 * k1;
    f(ystage, k2);
    ystage = y + dt * (kA31 * k1 + kA32 * k2);
    f(ystage, k3);
    ystage = y + dt * (kA41 * k1 + kA42 * k2 + kA43 * k3);
    f(ystage, k4);
    ystage = y + dt * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4);
    f(ystage, k5);
    ystage = y + dt * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5);
    f(ystage, k6);
    ynew = y + dt * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
    f(ynew, k7);
    out.stats.rhs_evals += 6;

    check_state_finite(ynew, t + dt);

    // Scaled RMS error of the embedded 4th-order solution.
    ystage = ynew - (y + dt * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7));
    double err = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double scale = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double e = ystage[i] / scale;
      err += e * e;
    }
    err = std::sqrt(err / static_cast<double>(d));

    if (std::isfinite(err) && err <= 1.0) {
      const double t1 = t + dt;
      while (next_grid <= grid_n &&
             out.grid.times[next_grid] <= t1 + 1e-12 * std::max(1.0, std::abs(t1))) {
        const double tg = out.grid.times[next_grid];
        const double theta = std::clamp((tg - t) / dt, 0.0, 1.0);
        out.grid.states.push_back(theta >= 1.0 - 1e-12 ? ynew
                                                       : hermite(y, k1, ynew, k7, dt, theta));
        ++next_grid;
      }
      t = t1;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      ++out.stats.accepted_steps;
    } else {
      ++out.stats.rejected_steps;
    }

    const double factor =
        std::isfinite(err) ? std::clamp(0.9 * std::pow(std::max(err, 1e-300), -0.2), 0.2, 5.0)
                           : 0.2;
    dt *= factor;
  }

  return out;
}

ForwardResult solve_fixed(const VectorField& f, const Eigen::VectorXd& u0,
                          const SolverConfig& cfg) {
  const int grid_n = cfg.grid_intervals();
  const double h = cfg.grid_step;
  const Eigen::Index d = u0.size();

  ForwardResult out;
  out.grid.times.resize(grid_n + 1);
  for (int j = 0; j <= grid_n; ++j) out.grid.times[j] = j * h;
  out.grid.states.reserve(grid_n + 1);
  out.grid.states.push_back(u0);

  Eigen::VectorXd y = u0;
  if (cfg.method == Method::ForwardEuler) {
    Eigen::VectorXd k1(d);
    out.stats.workspace_floats = 2 * d;
    for (int j = 0; j < grid_n; ++j) {
      f(y, k1);
      ++out.stats.rhs_evals;
      y += h * k1;
      check_state_finite(y, (j + 1) * h);
      out.grid.states.push_back(y);
      ++out.stats.accepted_steps;
    }
  } else {  // classic RK4 on the grid
    Eigen::VectorXd k1(d), k2(d), k3(d), k4(d), ystage(d);
    out.stats.workspace_floats = 6 * d;
    for (int j = 0; j < grid_n; ++j) {
      f(y, k1);
      ystage = y + (0.5 * h) * k1;
      f(ystage, k2);
      ystage = y + (0.5 * h) * k2;
      f(ystage, k3);
      ystage = y + h * k3;
      f(ystage, k4);
      out.stats.rhs_evals += 4;
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      check_state_finite(y, (j + 1) * h);
      out.grid.states.push_back(y);
      ++out.stats.accepted_steps;
    }
  }
  return out;
}

}  // namespace

ForwardResult solve_forward(const VectorField& f, const Eigen::VectorXd& u0,
                            const SolverConfig& cfg) {
  cfg.validate();
  if (u0.size() == 0) throw ContractError("solve_forward: empty initial state");
  if (!u0.allFinite()) throw ContractError("solve_forward: non-finite initial state");

  ForwardResult out =
      cfg.method == Method::RK45 ? solve_rk45(f, u0, cfg) : solve_fixed(f, u0, cfg);
  if (cfg.dump_path) dump_trajectory_csv(out.grid, *cfg.dump_path);
  return out;
}

AdjointState solve_adjoint(const HvpMap& hvp_at, const TrajectoryGrid& grid,
                           AdjointState lambda_T, AdjointStats* stats) {
  if (grid.states.size() < 2) {
    throw ContractError("solve_adjoint: trajectory grid needs at least two states");
  }
  const Eigen::Index d = grid.dim();
  if (lambda_T.size() != d) {
    std::ostringstream os;
    os << "solve_adjoint: lambda(T) length " << lambda_T.size() << " != grid state dimension "
       << d;
    throw ContractError(os.str());
  }
  const double h = grid.spacing();
  const int grid_n = grid.intervals();

  Eigen::VectorXd lambda = std::move(lambda_T);
  Eigen::VectorXd lambda_mid(d), hv_right(d), hv_mid(d);
  AdjointStats local;
  local.workspace_floats = 4 * d;

  for (int j = grid_n - 1; j >= 0; --j) {
    hvp_at(grid.states[j + 1], lambda, hv_right);
    lambda_mid = lambda + h * hv_right;
    hvp_at(grid.states[j], lambda_mid, hv_mid);
    lambda += (0.5 * h) * (hv_right + hv_mid);
    local.hvp_calls += 2;
    if (!lambda.allFinite()) {
      std::ostringstream os;
      os << "solve_adjoint: adjoint state diverged (non-finite) at backward step j = " << j
         << " (t = " << grid.times[j] << ")";
      throw NumericalError(os.str());
    }
  }

  if (stats) *stats = local;
  return lambda;
}

void dump_trajectory_csv(const TrajectoryGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("dump_trajectory_csv: cannot open '" + path + "' for writing");
  out << "t,idx,value\n";
  out.precision(17);
  for (std::size_t j = 0; j < grid.states.size(); ++j) {
    for (Eigen::Index i = 0; i < grid.states[j].size(); ++i) {
      out << grid.times[j] << ',' << i << ',' << grid.states[j][i] << '\n';
    }
  }
}

}  // namespace amaml::ode
