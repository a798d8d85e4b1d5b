#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amaml/autodiff.hpp"

namespace amaml::model {

enum class InitScheme { UniformFanIn };

/// Fully connected network with Tanh hidden activations and a linear output
/// layer. layer_sizes = {input, hidden..., output}, at least one hidden
/// layer. Parameters live in one flat vector, laid out layer by layer as
/// row-major weights [fan_out × fan_in] followed by biases [fan_out].
struct MlpSpec {
  std::vector<int> layer_sizes;
  InitScheme init = InitScheme::UniformFanIn;
  std::uint64_t seed = 0;

  int num_affine_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }

  /// d = Σ (fan_in + 1) · fan_out over affine layers.
  Eigen::Index param_count() const;
  Eigen::Index weight_offset(int layer) const;
  Eigen::Index bias_offset(int layer) const;

  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd inputs;   // n_points × input_dim
  Eigen::MatrixXd targets;  // n_points × output_dim

  Eigen::Index size() const { return inputs.rows(); }
  void validate() const;
};

/// One sampled task: meta-train and meta-validation splits.
struct Task {
  Dataset train;
  Dataset val;
  std::string id;
};

/// Deterministic function of (spec, spec.seed): per-layer uniform
/// (−1/√fan_in, +1/√fan_in) weights, zero biases.
Eigen::VectorXd init_params(const MlpSpec& spec);

Eigen::VectorXd predict(const MlpSpec& spec, const Eigen::VectorXd& u, const Eigen::VectorXd& x);

/// Row-wise predict; returns n_points × output_dim.
Eigen::MatrixXd predict_all(const MlpSpec& spec, const Eigen::VectorXd& u,
                            const Eigen::MatrixXd& inputs);

/// (1/n) Σ_i ‖predict(x_i) − y_i‖².
double mse_loss(const MlpSpec& spec, const Eigen::VectorXd& u, const Dataset& data);

/// The same mean-MSE as a differentiable field over the flat parameters.
class MlpLossField final : public ad::FieldExpr<MlpLossField> {
 public:
  MlpLossField(MlpSpec spec, Dataset data);

  std::size_t dim() const override { return static_cast<std::size_t>(spec_.param_count()); }
  std::size_t node_hint() const override { return node_hint_; }

  template <class S>
  ad::Var<S> build(ad::Tape<S>& tape, std::span<const ad::Var<S>> u) const {
    const Eigen::MatrixXd& xs = data_.inputs;
    const Eigen::MatrixXd& ys = data_.targets;
    const int layers = spec_.num_affine_layers();

    ad::Var<S> total = tape.constant(0.0);
    std::vector<ad::Var<S>> cur, next;
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      next.clear();
      for (int l = 0; l < layers; ++l) {
        const int fan_in = spec_.layer_sizes[l];
        const int fan_out = spec_.layer_sizes[l + 1];
        const Eigen::Index w0 = spec_.weight_offset(l);
        const Eigen::Index b0 = spec_.bias_offset(l);
        next.clear();
        next.reserve(fan_out);
        for (int j = 0; j < fan_out; ++j) {
          ad::Var<S> z = u[static_cast<std::size_t>(b0 + j)];
          const Eigen::Index row = w0 + static_cast<Eigen::Index>(j) * fan_in;
          if (l == 0) {
            for (int i = 0; i < fan_in; ++i) {
              z = z + u[static_cast<std::size_t>(row + i)] * xs(r, i);
            }
          } else {
            for (int i = 0; i < fan_in; ++i) {
              z = z + u[static_cast<std::size_t>(row + i)] * cur[static_cast<std::size_t>(i)];
            }
          }
          next.push_back(l + 1 < layers ? tanh(z) : z);
        }
        cur.swap(next);
      }
      for (int k = 0; k < spec_.output_dim(); ++k) {
        total = total + sqr(cur[static_cast<std::size_t>(k)] - ys(r, k));
      }
    }
    return total * (1.0 / static_cast<double>(xs.rows()));
  }

  const MlpSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }

 private:
  MlpSpec spec_;
  Dataset data_;
  std::size_t node_hint_ = 0;
};

/// Gradient-flow right-hand side f(u) = −(∂L/∂u)ᵀ for a fixed loss field.
class GradientFlow {
 public:
  explicit GradientFlow(std::shared_ptr<const ad::ScalarField> loss) : loss_(std::move(loss)) {}

  std::size_t dim() const { return loss_->dim(); }
  void operator()(const Eigen::VectorXd& u, Eigen::VectorXd& out) const {
    out = -ad::grad(*loss_, u);
  }
  Eigen::VectorXd operator()(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out;
    (*this)(u, out);
    return out;
  }

  const ad::ScalarField& loss() const { return *loss_; }

 private:
  std::shared_ptr<const ad::ScalarField> loss_;
};

/// f(u) for inner training on `data`: the negative mean-MSE gradient.
GradientFlow training_dynamics(const MlpSpec& spec, const Dataset& data);

/// H(u)·v with H(u) = ∂f/∂u = −∂²L/∂u² (the paper's sign convention).
Eigen::VectorXd dynamics_hvp(const MlpSpec& spec, const Dataset& data, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v);

}  // namespace amaml::model
