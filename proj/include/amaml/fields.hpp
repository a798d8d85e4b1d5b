#pragma once

#include <Eigen/Core>

#include <span>
#include <utility>

#include "amaml/autodiff.hpp"

namespace amaml::ad {

// Small closed-form fields. They double as test hooks (the gradient flow of
// QuadraticField is the linear ODE with known solution) and as building
// blocks for the iMAML linear-system checks.

/// scale/2 · ‖u − center‖².
class QuadraticField final : public FieldExpr<QuadraticField> {
 public:
  explicit QuadraticField(Eigen::VectorXd center, double scale = 1.0)
      : center_(std::move(center)), scale_(scale) {}
  static QuadraticField isotropic(std::size_t d, double scale = 1.0) {
    return QuadraticField(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)), scale);
  }

  std::size_t dim() const override { return static_cast<std::size_t>(center_.size()); }
  std::size_t node_hint() const override { return 4 * dim() + 4; }

  template <class S>
  Var<S> build(Tape<S>& tape, std::span<const Var<S>> u) const {
    Var<S> acc = tape.constant(0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      acc = acc + sqr(u[i] - center_[static_cast<Eigen::Index>(i)]);
    }
    return acc * (0.5 * scale_);
  }

 private:
  Eigen::VectorXd center_;
  double scale_;
};

/// gᵀu + b. Zero Hessian everywhere; exercises the H ≡ 0 code paths.
class LinearField final : public FieldExpr<LinearField> {
 public:
  explicit LinearField(Eigen::VectorXd g, double b = 0.0) : g_(std::move(g)), b_(b) {}

  std::size_t dim() const override { return static_cast<std::size_t>(g_.size()); }
  std::size_t node_hint() const override { return 3 * dim() + 4; }

  template <class S>
  Var<S> build(Tape<S>& tape, std::span<const Var<S>> u) const {
    Var<S> acc = tape.constant(b_);
    for (std::size_t i = 0; i < dim(); ++i) {
      acc = acc + u[i] * g_[static_cast<Eigen::Index>(i)];
    }
    return acc;
  }

 private:
  Eigen::VectorXd g_;
  double b_;
};

/// ½ uᵀ A u for a fixed symmetric A; Hessian is exactly A.
class QuadraticFormField final : public FieldExpr<QuadraticFormField> {
 public:
  explicit QuadraticFormField(Eigen::MatrixXd a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw ContractError("QuadraticFormField: matrix must be square");
  }

  std::size_t dim() const override { return static_cast<std::size_t>(a_.rows()); }
  std::size_t node_hint() const override { return 3 * dim() * dim() + 4; }

  template <class S>
  Var<S> build(Tape<S>& tape, std::span<const Var<S>> u) const {
    Var<S> acc = tape.constant(0.0);
    for (Eigen::Index r = 0; r < a_.rows(); ++r) {
      for (Eigen::Index c = 0; c < a_.cols(); ++c) {
        if (a_(r, c) != 0.0) acc = acc + (u[r] * u[c]) * a_(r, c);
      }
    }
    return acc * 0.5;
  }

  const Eigen::MatrixXd& matrix() const { return a_; }

 private:
  Eigen::MatrixXd a_;
};

/// A constant field; gradient and Hessian vanish identically.
class ConstantField final : public FieldExpr<ConstantField> {
 public:
  ConstantField(std::size_t d, double c) : d_(d), c_(c) {}

  std::size_t dim() const override { return d_; }

  template <class S>
  Var<S> build(Tape<S>& tape, std::span<const Var<S>>) const {
    return tape.constant(c_);
  }

 private:
  std::size_t d_;
  double c_;
};

}  // namespace amaml::ad
