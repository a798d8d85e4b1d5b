#pragma once

#include <Eigen/Core>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amaml/errors.hpp"

namespace amaml::ad {

// ---------------------------------------------------------------------------
// Dual numbers
// ---------------------------------------------------------------------------

/// First-order dual number: value plus one directional derivative channel.
/// Recording a tape in Dual arithmetic with inputs seeded as (u_i, v_i) and
/// running the reverse sweep yields exact Hessian-vector products in the dot
/// channel of the input adjoints (forward-over-reverse).
struct Dual {
  double val = 0.0;
  double dot = 0.0;

  Dual() = default;
  Dual(double v) : val(v) {}  // NOLINT: implicit, mirrors double in templates
  Dual(double v, double d) : val(v), dot(d) {}

  Dual& operator+=(const Dual& o) {
    val += o.val;
    dot += o.dot;
    return *this;
  }
};

inline Dual operator+(const Dual& a, const Dual& b) { return {a.val + b.val, a.dot + b.dot}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.val - b.val, a.dot - b.dot}; }
inline Dual operator-(const Dual& a) { return {-a.val, -a.dot}; }
inline Dual operator*(const Dual& a, const Dual& b) {
  return {a.val * b.val, a.dot * b.val + a.val * b.dot};
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double q = a.val / b.val;
  return {q, (a.dot - q * b.dot) / b.val};
}
inline Dual operator*(const Dual& a, double c) { return {a.val * c, a.dot * c}; }
inline Dual operator*(double c, const Dual& a) { return a * c; }
inline Dual operator+(const Dual& a, double c) { return {a.val + c, a.dot}; }
inline Dual operator-(const Dual& a, double c) { return {a.val - c, a.dot}; }

inline Dual tanh(const Dual& a) {
  const double t = std::tanh(a.val);
  return {t, (1.0 - t * t) * a.dot};
}
inline Dual sin(const Dual& a) { return {std::sin(a.val), std::cos(a.val) * a.dot}; }
inline Dual cos(const Dual& a) { return {std::cos(a.val), -std::sin(a.val) * a.dot}; }
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.val);
  return {e, e * a.dot};
}
inline Dual log(const Dual& a) { return {std::log(a.val), a.dot / a.val}; }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.val);
  return {s, 0.5 * a.dot / s};
}
inline Dual abs(const Dual& a) {
  const double sgn = a.val > 0.0 ? 1.0 : (a.val < 0.0 ? -1.0 : 0.0);
  return {std::abs(a.val), sgn * a.dot};
}

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) { return std::isfinite(x.val) && std::isfinite(x.dot); }
inline double primal(double x) { return x; }
inline double primal(const Dual& x) { return x.val; }

// ---------------------------------------------------------------------------
// Wengert-list tape
// ---------------------------------------------------------------------------

enum class Op : std::uint8_t {
  Input,
  Const,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Tanh,
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Abs,
  Sqr,
  AddConst,
  MulConst,
  DivIntoConst,
};

const char* op_name(Op op);

template <class S>
class Tape;

/// Handle to one tape node. Cheap to copy; operator overloads below record
/// new nodes on the owning tape.
template <class S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, std::int32_t index) : tape_(tape), idx_(index) {}

  Tape<S>* tape() const { return tape_; }
  std::int32_t index() const { return idx_; }
  const S& value() const;

 private:
  Tape<S>* tape_ = nullptr;
  std::int32_t idx_ = -1;
};

/// Eager Wengert list: every operation immediately evaluates its value and
/// local partials; the reverse sweep is a single backward pass over the list.
/// One tape is built per differentiation call and discarded afterwards.
template <class S>
class Tape {
 public:
  explicit Tape(std::size_t reserve_nodes = 0) {
    if (reserve_nodes > 0) nodes_.reserve(reserve_nodes);
  }

  Var<S> input(S value) { return push(Op::Input, value, -1, S(0.0), -1, S(0.0)); }
  Var<S> constant(double c) { return push(Op::Const, S(c), -1, S(0.0), -1, S(0.0)); }

  Var<S> unary(Op op, S value, std::int32_t p0, S d0) {
    return push(op, value, p0, d0, -1, S(0.0));
  }
  Var<S> binary(Op op, S value, std::int32_t p0, S d0, std::int32_t p1, S d1) {
    return push(op, value, p0, d0, p1, d1);
  }

  std::size_t size() const { return nodes_.size(); }
  const S& value(Var<S> v) const { return nodes_[v.index()].value; }
  Op op(std::int32_t index) const { return nodes_[index].op; }

  /// Reverse sweep seeding d(root)/d(root) = 1. After it returns, adjoint(v)
  /// is the derivative of the root with respect to node v.
  void backward(Var<S> root) {
    adj_.assign(nodes_.size(), S(0.0));
    adj_[root.index()] = S(1.0);
    for (std::int32_t i = root.index(); i >= 0; --i) {
      const Node& n = nodes_[i];
      const S& a = adj_[i];
      if (n.p0 >= 0) adj_[n.p0] += n.d0 * a;
      if (n.p1 >= 0) adj_[n.p1] += n.d1 * a;
    }
  }

  const S& adjoint(Var<S> v) const { return adj_[v.index()]; }

  /// First node holding a non-finite value, if any; used for error reports.
  std::optional<std::pair<std::size_t, Op>> first_nonfinite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!is_finite(nodes_[i].value)) return std::make_pair(i, nodes_[i].op);
    }
    return std::nullopt;
  }

 private:
  struct Node {
    S value;
    S d0;
    S d1;
    std::int32_t p0;
    std::int32_t p1;
    Op op;
  };

  Var<S> push(Op op, S value, std::int32_t p0, S d0, std::int32_t p1, S d1) {
    nodes_.push_back(Node{value, d0, d1, p0, p1, op});
    return Var<S>(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  std::vector<S> adj_;
};

template <class S>
const S& Var<S>::value() const {
  return tape_->value(*this);
}

// Operator overloads. Binary node partials are evaluated eagerly in S
// arithmetic, which is what carries the Hessian information when S = Dual.

template <class S>
Var<S> operator+(Var<S> a, Var<S> b) {
  assert(a.tape() == b.tape());
  return a.tape()->binary(Op::Add, a.value() + b.value(), a.index(), S(1.0), b.index(), S(1.0));
}

template <class S>
Var<S> operator-(Var<S> a, Var<S> b) {
  assert(a.tape() == b.tape());
  return a.tape()->binary(Op::Sub, a.value() - b.value(), a.index(), S(1.0), b.index(), S(-1.0));
}

template <class S>
Var<S> operator*(Var<S> a, Var<S> b) {
  assert(a.tape() == b.tape());
  return a.tape()->binary(Op::Mul, a.value() * b.value(), a.index(), b.value(), b.index(),
                          a.value());
}

template <class S>
Var<S> operator/(Var<S> a, Var<S> b) {
  assert(a.tape() == b.tape());
  const S inv = S(1.0) / b.value();
  const S q = a.value() * inv;
  return a.tape()->binary(Op::Div, q, a.index(), inv, b.index(), -q * inv);
}

template <class S>
Var<S> operator-(Var<S> a) {
  return a.tape()->unary(Op::Neg, -a.value(), a.index(), S(-1.0));
}

template <class S>
Var<S> operator+(Var<S> a, double c) {
  return a.tape()->unary(Op::AddConst, a.value() + S(c), a.index(), S(1.0));
}
template <class S>
Var<S> operator+(double c, Var<S> a) {
  return a + c;
}
template <class S>
Var<S> operator-(Var<S> a, double c) {
  return a + (-c);
}
template <class S>
Var<S> operator-(double c, Var<S> a) {
  return a.tape()->unary(Op::AddConst, S(c) - a.value(), a.index(), S(-1.0));
}
template <class S>
Var<S> operator*(Var<S> a, double c) {
  return a.tape()->unary(Op::MulConst, a.value() * c, a.index(), S(c));
}
template <class S>
Var<S> operator*(double c, Var<S> a) {
  return a * c;
}
template <class S>
Var<S> operator/(Var<S> a, double c) {
  return a * (1.0 / c);
}
template <class S>
Var<S> operator/(double c, Var<S> a) {
  const S inv = S(1.0) / a.value();
  return a.tape()->unary(Op::DivIntoConst, S(c) * inv, a.index(), S(-c) * inv * inv);
}

template <class S>
Var<S> tanh(Var<S> a) {
  using std::tanh;
  const S t = tanh(a.value());
  return a.tape()->unary(Op::Tanh, t, a.index(), S(1.0) - t * t);
}

template <class S>
Var<S> sin(Var<S> a) {
  using std::cos;
  using std::sin;
  return a.tape()->unary(Op::Sin, sin(a.value()), a.index(), cos(a.value()));
}

template <class S>
Var<S> cos(Var<S> a) {
  using std::cos;
  using std::sin;
  return a.tape()->unary(Op::Cos, cos(a.value()), a.index(), -sin(a.value()));
}

template <class S>
Var<S> exp(Var<S> a) {
  using std::exp;
  const S e = exp(a.value());
  return a.tape()->unary(Op::Exp, e, a.index(), e);
}

template <class S>
Var<S> log(Var<S> a) {
  using std::log;
  return a.tape()->unary(Op::Log, log(a.value()), a.index(), S(1.0) / a.value());
}

template <class S>
Var<S> sqrt(Var<S> a) {
  using std::sqrt;
  const S s = sqrt(a.value());
  return a.tape()->unary(Op::Sqrt, s, a.index(), S(0.5) / s);
}

template <class S>
Var<S> abs(Var<S> a) {
  using std::abs;
  const double sgn = primal(a.value()) > 0.0 ? 1.0 : (primal(a.value()) < 0.0 ? -1.0 : 0.0);
  return a.tape()->unary(Op::Abs, abs(a.value()), a.index(), S(sgn));
}

/// x².  Cheaper than x*x on the tape (one parent).
template <class S>
Var<S> sqr(Var<S> a) {
  return a.tape()->unary(Op::Sqr, a.value() * a.value(), a.index(), S(2.0) * a.value());
}

// ---------------------------------------------------------------------------
// Scalar fields and the differentiation entry points
// ---------------------------------------------------------------------------

/// A differentiable map from a flat parameter vector in R^d to a scalar,
/// closed over whatever fixed data it needs. Implementations describe the
/// computation once, generically over the tape scalar type; see FieldExpr.
///
/// Thread safety: fields are immutable after construction and may be
/// evaluated/differentiated concurrently from any number of threads.
class ScalarField {
 public:
  virtual ~ScalarField() = default;

  virtual std::size_t dim() const = 0;

  virtual Var<double> express(Tape<double>& tape, std::span<const Var<double>> u) const = 0;
  virtual Var<Dual> express(Tape<Dual>& tape, std::span<const Var<Dual>> u) const = 0;

  /// Nodes a full expression of this field is expected to take; tapes use it
  /// to reserve storage. Zero means "unknown".
  virtual std::size_t node_hint() const { return 0; }
};

/// CRTP adapter: derive from FieldExpr<D> and implement
///   template <class S> Var<S> build(Tape<S>&, std::span<const Var<S>>) const;
/// to get both express() overloads.
template <class Derived>
class FieldExpr : public ScalarField {
 public:
  Var<double> express(Tape<double>& tape, std::span<const Var<double>> u) const final {
    return static_cast<const Derived*>(this)->template build<double>(tape, u);
  }
  Var<Dual> express(Tape<Dual>& tape, std::span<const Var<Dual>> u) const final {
    return static_cast<const Derived*>(this)->template build<Dual>(tape, u);
  }
};

struct ValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// f(u).
double value(const ScalarField& f, const Eigen::VectorXd& u);

/// ∇f(u) by one reverse sweep.
Eigen::VectorXd grad(const ScalarField& f, const Eigen::VectorXd& u);

/// f(u) and ∇f(u) from the same tape.
ValueGrad value_and_grad(const ScalarField& f, const Eigen::VectorXd& u);

/// (∂²f/∂u²)·v, exact, via forward-over-reverse; never materializes the
/// Hessian and costs a small constant factor over grad().
Eigen::VectorXd hvp(const ScalarField& f, const Eigen::VectorXd& u, const Eigen::VectorXd& v);

}  // namespace amaml::ad
