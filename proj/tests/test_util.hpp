#pragma once

#include <Eigen/Core>

#include <cmath>
#include <random>

#include "amaml/autodiff.hpp"
#include "amaml/model.hpp"
#include "amaml/tasks.hpp"

namespace testutil {

inline double rel_l2(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

/// Elementwise error scaled by the reference magnitude (its max-norm floored
/// at 1), so near-zero entries do not blow up the ratio.
inline double rel_elementwise(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1.0);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

/// Central-difference gradient oracle (step 1e-5 on unit-scaled inputs).
inline Eigen::VectorXd fd_grad(const amaml::ad::ScalarField& f, const Eigen::VectorXd& u,
                               double step = 1e-5) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double eps = step * (1.0 + std::abs(u[i]));
    Eigen::VectorXd plus = u, minus = u;
    plus[i] += eps;
    minus[i] -= eps;
    g[i] = (amaml::ad::value(f, plus) - amaml::ad::value(f, minus)) / (2.0 * eps);
  }
  return g;
}

/// Finite-difference HVP oracle: (∇f(u+εv) − ∇f(u−εv)) / 2ε.
inline Eigen::VectorXd fd_hvp(const amaml::ad::ScalarField& f, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& v) {
  const double eps = 1e-5 * (1.0 + u.cwiseAbs().maxCoeff());
  return (amaml::ad::grad(f, u + eps * v) - amaml::ad::grad(f, u - eps * v)) / (2.0 * eps);
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

/// Small random MLP regression instance for oracle checks.
struct MlpInstance {
  amaml::model::MlpSpec spec;
  amaml::model::Dataset data;
  Eigen::VectorXd u;
};

inline MlpInstance random_mlp_instance(std::vector<int> layer_sizes, int n_points,
                                       std::uint64_t seed) {
  MlpInstance inst;
  inst.spec.layer_sizes = std::move(layer_sizes);
  inst.spec.seed = seed;
  std::mt19937_64 rng(seed ^ 0xabcdef);
  inst.data.inputs = Eigen::MatrixXd::Zero(n_points, inst.spec.input_dim());
  inst.data.targets = Eigen::MatrixXd::Zero(n_points, inst.spec.output_dim());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < n_points; ++r) {
    for (Eigen::Index c = 0; c < inst.data.inputs.cols(); ++c) inst.data.inputs(r, c) = normal(rng);
    for (Eigen::Index c = 0; c < inst.data.targets.cols(); ++c) {
      inst.data.targets(r, c) = normal(rng);
    }
  }
  inst.u = amaml::model::init_params(inst.spec);
  // jitter biases too so second derivatives are generic
  for (Eigen::Index i = 0; i < inst.u.size(); ++i) inst.u[i] += 0.1 * normal(rng);
  return inst;
}

}  // namespace testutil
