#include "amaml/autodiff.hpp"

#include <sstream>

namespace amaml::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Tanh: return "tanh";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Sqr: return "sqr";
    case Op::AddConst: return "add_const";
    case Op::MulConst: return "mul_const";
    case Op::DivIntoConst: return "div_into_const";
  }
  return "?";
}

namespace {

void check_input(const ScalarField& f, const Eigen::VectorXd& u, const char* what) {
  if (static_cast<std::size_t>(u.size()) != f.dim()) {
    std::ostringstream os;
    os << what << ": input length " << u.size() << " does not match field dimension " << f.dim();
    throw ContractError(os.str());
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i])) {
      std::ostringstream os;
      os << what << ": non-finite input entry u[" << i << "] = " << u[i];
      throw ContractError(os.str());
    }
  }
}

template <class S>
[[noreturn]] void throw_overflow(const Tape<S>& tape, const char* what) {
  std::ostringstream os;
  os << what << ": numerical overflow";
  if (auto culprit = tape.first_nonfinite()) {
    os << ", first non-finite intermediate at node " << culprit->first << " (op "
       << op_name(culprit->second) << ")";
  }
  throw NumericalError(os.str());
}

}  // namespace

double value(const ScalarField& f, const Eigen::VectorXd& u) {
  check_input(f, u, "value");
  Tape<double> tape(f.node_hint());
  std::vector<Var<double>> inputs;
  inputs.reserve(f.dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) inputs.push_back(tape.input(u[i]));
  Var<double> root = f.express(tape, inputs);
  const double y = root.value();
  if (!std::isfinite(y)) throw_overflow(tape, "value");
  return y;
}

ValueGrad value_and_grad(const ScalarField& f, const Eigen::VectorXd& u) {
  check_input(f, u, "grad");
  Tape<double> tape(f.node_hint());
  std::vector<Var<double>> inputs;
  inputs.reserve(f.dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) inputs.push_back(tape.input(u[i]));
  Var<double> root = f.express(tape, inputs);
  if (!std::isfinite(root.value())) throw_overflow(tape, "grad");
  tape.backward(root);
  ValueGrad out;
  out.value = root.value();
  out.grad.resize(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double g = tape.adjoint(inputs[i]);
    if (!std::isfinite(g)) {
      std::ostringstream os;
      os << "grad: numerical overflow, non-finite gradient entry g[" << i << "] = " << g;
      throw NumericalError(os.str());
    }
    out.grad[i] = g;
  }
  return out;
}

Eigen::VectorXd grad(const ScalarField& f, const Eigen::VectorXd& u) {
  return value_and_grad(f, u).grad;
}

Eigen::VectorXd hvp(const ScalarField& f, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  check_input(f, u, "hvp");
  check_input(f, v, "hvp (direction)");
  Tape<Dual> tape(f.node_hint());
  std::vector<Var<Dual>> inputs;
  inputs.reserve(f.dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) inputs.push_back(tape.input(Dual(u[i], v[i])));
  Var<Dual> root = f.express(tape, inputs);
  if (!is_finite(root.value())) throw_overflow(tape, "hvp");
  tape.backward(root);
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const Dual a = tape.adjoint(inputs[i]);
    if (!is_finite(a)) {
      std::ostringstream os;
      os << "hvp: numerical overflow, non-finite adjoint at entry " << i << " (value " << a.val
         << ", directional " << a.dot << ")";
      throw NumericalError(os.str());
    }
    out[i] = a.dot;
  }
  return out;
}

}  // namespace amaml::ad
