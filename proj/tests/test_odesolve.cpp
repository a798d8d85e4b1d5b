#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "amaml/fields.hpp"
#include "amaml/model.hpp"
#include "amaml/odesolve.hpp"

#include "test_util.hpp"

using namespace amaml;

namespace {

ode::VectorField linear_decay() {
  return [](const Eigen::VectorXd& u, Eigen::VectorXd& du) { du = -u; };
}

Eigen::VectorXd scalar(double v) {
  Eigen::VectorXd u(1);
  u[0] = v;
  return u;
}

/// Analytic grid of the scalar linear hook u' = -u, u(0) = 1.
ode::TrajectoryGrid exact_decay_grid(double h, int intervals) {
  ode::TrajectoryGrid grid;
  for (int j = 0; j <= intervals; ++j) {
    grid.times.push_back(j * h);
    grid.states.push_back(scalar(std::exp(-j * h)));
  }
  return grid;
}

}  // namespace

TEST_CASE("config validation rejects a non-integer T/h") {
  ode::SolverConfig cfg;
  cfg.horizon = 1.0;
  cfg.grid_step = 0.3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg.grid_step = 0.25;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.grid_intervals() == 4);
}

TEST_CASE("config validation rejects h > T and non-positive tolerances") {
  ode::SolverConfig cfg;
  cfg.horizon = 0.1;
  cfg.grid_step = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg.grid_step = 0.1;
  cfg.rtol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("forward Euler reproduces the hand-iterated recurrence") {
  ode::SolverConfig cfg;
  cfg.method = ode::Method::ForwardEuler;
  cfg.grid_step = 0.01;
  cfg.horizon = 0.1;
  const auto result = ode::solve_forward(linear_decay(), scalar(1.0), cfg);
  CHECK(result.grid.states.size() == 11);
  CHECK(result.grid.states.back()[0] ==
        doctest::Approx(std::pow(0.99, 10)).epsilon(1e-15));  // 0.904382...
  CHECK(result.stats.rhs_evals == 10);
}

TEST_CASE("forward Euler is bit-identical to an independent GD loop") {
  const auto inst = testutil::random_mlp_instance({2, 6, 1}, 5, 51);
  const auto loss = std::make_shared<model::MlpLossField>(inst.spec, inst.data);

  ode::SolverConfig cfg;
  cfg.method = ode::Method::ForwardEuler;
  cfg.grid_step = 0.05;
  cfg.horizon = 0.5;
  const model::GradientFlow flow{loss};
  const auto result = ode::solve_forward(
      [&](const Eigen::VectorXd& u, Eigen::VectorXd& du) { flow(u, du); }, inst.u, cfg);

  Eigen::VectorXd u = inst.u;
  for (int k = 0; k < 10; ++k) {
    u -= cfg.grid_step * ad::grad(*loss, u);
    CHECK(u == result.grid.states[static_cast<std::size_t>(k + 1)]);
  }
}

TEST_CASE("zero dynamics keeps every grid state at u0") {
  ode::SolverConfig cfg;
  cfg.horizon = 1.0;
  cfg.grid_step = 0.1;
  for (auto method : {ode::Method::RK45, ode::Method::RK4, ode::Method::ForwardEuler}) {
    cfg.method = method;
    const auto result = ode::solve_forward(
        [](const Eigen::VectorXd& u, Eigen::VectorXd& du) { du.setZero(u.size()); }, scalar(2.5),
        cfg);
    for (const auto& state : result.grid.states) CHECK(state[0] == 2.5);
  }
}

TEST_CASE("RK45 reproduces e^{-T} within tolerance") {
  ode::SolverConfig cfg;
  cfg.horizon = 1.0;
  cfg.grid_step = 0.1;
  cfg.rtol = 1e-6;
  cfg.atol = 1e-8;
  const auto result = ode::solve_forward(linear_decay(), scalar(1.0), cfg);
  const double expected = std::exp(-1.0);
  CHECK(std::abs(result.grid.states.back()[0] - expected) <=
        10.0 * std::max(cfg.rtol * expected, cfg.atol));
}

TEST_CASE("RK45 dense output tracks the solution on the whole grid") {
  ode::SolverConfig cfg;
  cfg.horizon = 2.0;
  cfg.grid_step = 0.05;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-11;
  const auto result = ode::solve_forward(linear_decay(), scalar(1.0), cfg);
  for (std::size_t j = 0; j < result.grid.states.size(); ++j) {
    const double expected = std::exp(-result.grid.times[j]);
    CHECK(std::abs(result.grid.states[j][0] - expected) <= 1e-7);
  }
  CHECK(result.grid.intervals() == 40);
}

TEST_CASE("RK4 fixed-step hits the classical accuracy on the linear hook") {
  ode::SolverConfig cfg;
  cfg.method = ode::Method::RK4;
  cfg.horizon = 1.0;
  cfg.grid_step = 0.1;
  const auto result = ode::solve_forward(linear_decay(), scalar(1.0), cfg);
  CHECK(std::abs(result.grid.states.back()[0] - std::exp(-1.0)) <= 1e-7);
}

TEST_CASE("forward solve flags runaway states") {
  ode::SolverConfig cfg;
  cfg.method = ode::Method::ForwardEuler;
  cfg.horizon = 10.0;
  cfg.grid_step = 1.0;
  const ode::VectorField blowup = [](const Eigen::VectorXd& u, Eigen::VectorXd& du) {
    du = u.array().pow(3).matrix();
  };
  CHECK_THROWS_AS(ode::solve_forward(blowup, scalar(3.0), cfg), NumericalError);

  cfg.method = ode::Method::RK45;
  CHECK_THROWS_AS(ode::solve_forward(blowup, scalar(3.0), cfg), NumericalError);
}

TEST_CASE("solve_adjoint: hand-computed single modified-Euler step") {
  // H = -1, lambda(T) = 1, h = 0.5: lambda~ = 0.5, lambda0 = 0.625.
  ode::TrajectoryGrid grid = exact_decay_grid(0.5, 1);
  const ode::HvpMap hvp = [](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                             Eigen::VectorXd& out) { out = -v; };
  ode::AdjointStats stats;
  const Eigen::VectorXd lambda0 = ode::solve_adjoint(hvp, grid, scalar(1.0), &stats);
  CHECK(lambda0[0] == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(stats.hvp_calls == 2);
}

TEST_CASE("solve_adjoint: zero Hessian freezes the adjoint") {
  ode::TrajectoryGrid grid = exact_decay_grid(0.1, 10);
  const ode::HvpMap hvp = [](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                             Eigen::VectorXd& out) { out.setZero(v.size()); };
  const Eigen::VectorXd lambda0 = ode::solve_adjoint(hvp, grid, scalar(0.37));
  CHECK(lambda0[0] == 0.37);
}

TEST_CASE("solve_adjoint converges to the closed-form gradient e^{-2}") {
  const double truth = std::exp(-2.0);
  const ode::HvpMap hvp = [](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                             Eigen::VectorXd& out) { out = -v; };
  double prev = 0.0;
  for (double h : {0.01, 0.005}) {
    const int intervals = static_cast<int>(std::lround(1.0 / h));
    const auto grid = exact_decay_grid(h, intervals);
    const Eigen::VectorXd lambda0 = ode::solve_adjoint(hvp, grid, scalar(std::exp(-1.0)));
    const double err = std::abs(lambda0[0] - truth) / truth;
    CHECK(err <= 1e-3);
    if (prev > 0.0) CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("solve_adjoint is second order: error ratios in [3.5, 4.5]") {
  const double truth = std::exp(-2.0);
  const ode::HvpMap hvp = [](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                             Eigen::VectorXd& out) { out = -v; };
  std::vector<double> errors;
  for (double h : {0.1, 0.05, 0.025}) {
    const int intervals = static_cast<int>(std::lround(1.0 / h));
    const auto grid = exact_decay_grid(h, intervals);
    const Eigen::VectorXd lambda0 = ode::solve_adjoint(hvp, grid, scalar(std::exp(-1.0)));
    errors.push_back(std::abs(lambda0[0] - truth));
  }
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double ratio = errors[i] / errors[i + 1];
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }
}

TEST_CASE("solve_adjoint uses exactly two HVP calls per backward step") {
  for (int intervals : {5, 17, 40}) {
    const auto grid = exact_decay_grid(0.01, intervals);
    long calls = 0;
    const ode::HvpMap hvp = [&calls](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                                     Eigen::VectorXd& out) {
      out = -v;
      ++calls;
    };
    ode::AdjointStats stats;
    ode::solve_adjoint(hvp, grid, scalar(1.0), &stats);
    CHECK(calls == 2 * intervals);
    CHECK(stats.hvp_calls == 2 * intervals);
  }
}

TEST_CASE("solve_adjoint reports the failing backward step on divergence") {
  const auto grid = exact_decay_grid(0.1, 10);
  const ode::HvpMap explode = [](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                                 Eigen::VectorXd& out) { out = 1e308 * v; };
  CHECK_THROWS_WITH_AS(ode::solve_adjoint(explode, grid, scalar(1.0)),
                       doctest::Contains("backward step"), NumericalError);
}

TEST_CASE("solve_adjoint validates dimensions") {
  const auto grid = exact_decay_grid(0.1, 2);
  const ode::HvpMap hvp = [](const Eigen::VectorXd&, const Eigen::VectorXd& v,
                             Eigen::VectorXd& out) { out = -v; };
  CHECK_THROWS_AS(ode::solve_adjoint(hvp, grid, Eigen::VectorXd::Zero(2)), ContractError);

  ode::TrajectoryGrid tiny;
  tiny.times = {0.0};
  tiny.states = {scalar(1.0)};
  CHECK_THROWS_AS(ode::solve_adjoint(hvp, tiny, scalar(1.0)), ContractError);
}

TEST_CASE("trajectory dump writes t,idx,value rows for every component") {
  ode::SolverConfig cfg;
  cfg.method = ode::Method::ForwardEuler;
  cfg.horizon = 0.05;
  cfg.grid_step = 0.01;
  const std::string path = "dump_test.csv";
  cfg.dump_path = path;
  Eigen::VectorXd u0(2);
  u0 << 1.0, -1.0;
  ode::solve_forward(linear_decay(), u0, cfg);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,idx,value");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 6 * 2);  // (J+1) grid points x d components
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("forward workspace accounting matches the method") {
  ode::SolverConfig cfg;
  cfg.horizon = 0.1;
  cfg.grid_step = 0.01;
  Eigen::VectorXd u0 = Eigen::VectorXd::Ones(7);

  cfg.method = ode::Method::RK45;
  CHECK(ode::solve_forward(linear_decay(), u0, cfg).stats.workspace_floats == 10 * 7);
  cfg.method = ode::Method::RK4;
  CHECK(ode::solve_forward(linear_decay(), u0, cfg).stats.workspace_floats == 6 * 7);
  cfg.method = ode::Method::ForwardEuler;
  CHECK(ode::solve_forward(linear_decay(), u0, cfg).stats.workspace_floats == 2 * 7);
}
