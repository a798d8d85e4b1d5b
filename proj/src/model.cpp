#include "amaml/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "amaml/errors.hpp"

namespace amaml::model {

Eigen::Index MlpSpec::param_count() const {
  Eigen::Index d = 0;
  for (int l = 0; l < num_affine_layers(); ++l) {
    d += static_cast<Eigen::Index>(layer_sizes[l] + 1) * layer_sizes[l + 1];
  }
  return d;
}

Eigen::Index MlpSpec::weight_offset(int layer) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<Eigen::Index>(layer_sizes[l] + 1) * layer_sizes[l + 1];
  }
  return off;
}

Eigen::Index MlpSpec::bias_offset(int layer) const {
  return weight_offset(layer) +
         static_cast<Eigen::Index>(layer_sizes[layer]) * layer_sizes[layer + 1];
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 3) {
    throw ContractError("MlpSpec: need at least one hidden layer (input, hidden..., output)");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ContractError("MlpSpec: every layer size must be >= 1");
  }
}

void Dataset::validate() const {
  if (inputs.rows() < 1) throw ContractError("Dataset: need at least one point");
  if (inputs.rows() != targets.rows()) {
    throw ContractError("Dataset: inputs and targets row counts differ");
  }
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw ContractError("Dataset: non-finite entry");
  }
}

Eigen::VectorXd init_params(const MlpSpec& spec) {
  spec.validate();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.param_count());
  std::mt19937_64 rng(spec.seed);
  for (int l = 0; l < spec.num_affine_layers(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Eigen::Index w0 = spec.weight_offset(l);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(fan_in) * fan_out; ++i) {
      u[w0 + i] = dist(rng);
    }
    // biases stay zero
  }
  return u;
}

namespace {

void check_params(const MlpSpec& spec, const Eigen::VectorXd& u) {
  if (u.size() != spec.param_count()) {
    std::ostringstream os;
    os << "parameter vector length " << u.size() << " != spec parameter count "
       << spec.param_count();
    throw ContractError(os.str());
  }
}

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Eigen::VectorXd predict(const MlpSpec& spec, const Eigen::VectorXd& u, const Eigen::VectorXd& x) {
  spec.validate();
  check_params(spec, u);
  if (x.size() != spec.input_dim()) {
    throw ContractError("predict: input dimension mismatch");
  }
  Eigen::VectorXd h = x;
  for (int l = 0; l < spec.num_affine_layers(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    RowMajorMap w(u.data() + spec.weight_offset(l), fan_out, fan_in);
    Eigen::Map<const Eigen::VectorXd> b(u.data() + spec.bias_offset(l), fan_out);
    Eigen::VectorXd z = w * h + b;
    h = (l + 1 < spec.num_affine_layers()) ? z.array().tanh().matrix() : z;
  }
  return h;
}

Eigen::MatrixXd predict_all(const MlpSpec& spec, const Eigen::VectorXd& u,
                            const Eigen::MatrixXd& inputs) {
  spec.validate();
  check_params(spec, u);
  if (inputs.cols() != spec.input_dim()) {
    throw ContractError("predict_all: input dimension mismatch");
  }
  Eigen::MatrixXd out(inputs.rows(), spec.output_dim());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    out.row(r) = predict(spec, u, inputs.row(r).transpose()).transpose();
  }
  return out;
}

double mse_loss(const MlpSpec& spec, const Eigen::VectorXd& u, const Dataset& data) {
  data.validate();
  check_params(spec, u);
  if (data.inputs.cols() != spec.input_dim() || data.targets.cols() != spec.output_dim()) {
    throw ContractError("mse_loss: dataset dimensions do not match spec");
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    const Eigen::VectorXd pred = predict(spec, u, data.inputs.row(r).transpose());
    for (Eigen::Index k = 0; k < data.targets.cols(); ++k) {
      const double e = pred[k] - data.targets(r, k);
      total += e * e;
    }
  }
  return total / static_cast<double>(data.size());
}

MlpLossField::MlpLossField(MlpSpec spec, Dataset data)
    : spec_(std::move(spec)), data_(std::move(data)) {
  spec_.validate();
  data_.validate();
  if (data_.inputs.cols() != spec_.input_dim() || data_.targets.cols() != spec_.output_dim()) {
    throw ContractError("MlpLossField: dataset dimensions do not match spec");
  }
  // Tape nodes per point: ~2 per weight plus activation and residual nodes.
  std::size_t per_point = 4;
  for (int l = 0; l < spec_.num_affine_layers(); ++l) {
    per_point += 2 * static_cast<std::size_t>(spec_.layer_sizes[l] + 1) *
                 static_cast<std::size_t>(spec_.layer_sizes[l + 1]);
  }
  per_point += 3 * static_cast<std::size_t>(spec_.output_dim());
  node_hint_ = dim() + per_point * static_cast<std::size_t>(data_.size()) + 8;
}

GradientFlow training_dynamics(const MlpSpec& spec, const Dataset& data) {
  return GradientFlow(std::make_shared<MlpLossField>(spec, data));
}

Eigen::VectorXd dynamics_hvp(const MlpSpec& spec, const Dataset& data, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v) {
  const MlpLossField loss(spec, data);
  return -ad::hvp(loss, u, v);
}

}  // namespace amaml::model
