#pragma once

// Tape-based reverse-mode automatic differentiation over Tensor.
//
// A Tape is an append-only list of nodes; every node's operands precede it,
// so one reverse sweep over the list visits each node exactly once. Leaves are
// created with Tape::variable (tracked) or Tape::constant (untracked). Ops on
// untracked inputs record no backward closure.
//
// Binary elementwise ops broadcast with trailing-dimension alignment: shapes
// are right-aligned, missing leading axes count as 1, and an axis of size 1
// stretches to match the other operand. Anything else is a DimensionError.
//
// The tape is meant to be rebuilt for every training step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "envae/errors.hpp"
#include "envae/tensor.hpp"

namespace envae {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Lazily allocated per-node gradient buffers used during one backward sweep.
class GradAccumulator {
 public:
  GradAccumulator(const Tape& tape, std::vector<std::optional<Tensor>>& grads) : tape_(tape), grads_(grads) {}

  /// Zero-initialized (on first touch) gradient buffer of node `id`, or
  /// nullptr when the node does not need a gradient.
  inline Tensor* slot(std::size_t id);

 private:
  const Tape& tape_;
  std::vector<std::optional<Tensor>>& grads_;
};

/// What a node's backward closure sees.
struct BackwardArgs {
  const Tape& tape;
  std::span<const std::size_t> inputs;
  const Tensor& output;
  const Tensor& grad;
  GradAccumulator& acc;

  inline const Tensor& input(std::size_t k) const;
  Tensor* grad_of(std::size_t k) const { return acc.slot(inputs[k]); }
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value) { return push(std::move(value), {}, {}, true); }
  Var constant(Tensor value) { return push(std::move(value), {}, {}, false); }

  /// Record a custom op. The node is tracked iff any input is tracked; the
  /// closure is dropped otherwise.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    bool tracked = false;
    for (const Var& v : inputs) {
      if (v.tape() != this) throw ContractError("operand recorded on a different tape");
      ids.push_back(v.id());
      tracked = tracked || nodes_[v.id()].tracked;
    }
    if (!tracked) backward = nullptr;
    return push(std::move(value), std::move(ids), std::move(backward), tracked);
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool tracked(std::size_t id) const { return nodes_.at(id).tracked; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Run node `id`'s backward closure with upstream gradient `grad`.
  /// Returns false when the node has none (leaf or untracked).
  bool propagate(std::size_t id, const Tensor& grad, GradAccumulator& acc) const {
    const Node& node = nodes_.at(id);
    if (!node.backward) return false;
    node.backward(BackwardArgs{*this, node.inputs, node.value, grad, acc});
    return true;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool tracked = false;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, bool tracked) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), tracked});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  ///< deque: push_back never moves existing values
};

inline const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

inline const Tensor& BackwardArgs::input(std::size_t k) const { return tape.value(inputs[k]); }

inline Tensor* GradAccumulator::slot(std::size_t id) {
  if (!tape_.tracked(id)) return nullptr;
  auto& g = grads_[id];
  if (!g) g.emplace(tape_.value(id).shape(), 0.0);
  return &*g;
}

/// Gradients of one root with respect to every node of a tape.
class Gradients {
 public:
  Gradients(const Tape& tape, std::vector<std::optional<Tensor>> grads) : tape_(&tape), grads_(std::move(grads)) {}

  /// Gradient with respect to `v`; zeros when `v` does not reach the root.
  Tensor wrt(Var v) const {
    const auto& g = grads_.at(v.id());
    return g ? *g : Tensor(tape_->value(v.id()).shape(), 0.0);
  }

 private:
  const Tape* tape_;
  std::vector<std::optional<Tensor>> grads_;
};

/// Reverse sweep from a scalar root. Does not modify the tape, so repeated
/// calls return identical gradients.
inline Gradients backward(const Tape& tape, Var root) {
  if (root.tape() != &tape) throw ContractError("backward: root is not on this tape");
  if (root.value().size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + to_string(root.shape()));
  }
  std::vector<std::optional<Tensor>> grads(tape.size());
  GradAccumulator acc(tape, grads);
  if (tape.tracked(root.id())) grads[root.id()].emplace(root.shape(), 1.0);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    if (!grads[id]) continue;
    // Operands precede their node, so this slot is final here.
    tape.propagate(id, *grads[id], acc);
  }
  return Gradients(tape, std::move(grads));
}

// ---------------------------------------------------------------------------
// Elementwise ops

namespace detail {

inline Tape& common_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

/// out[i] = f(a[ia(i)], b[ib(i)]) with broadcasting.
template <class F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  Tensor out(out_shape);
  const std::size_t n = out.size();
  const Shape& bs = b.shape();
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  } else if (a.shape() == out_shape && !bs.empty() && bs.size() <= out_shape.size() &&
             std::equal(bs.begin(), bs.end(), out_shape.end() - static_cast<std::ptrdiff_t>(bs.size()))) {
    // Row broadcast, e.g. a bias added to every row.
    const std::size_t inner = b.size();
    for (std::size_t base = 0; base < n; base += inner)
      for (std::size_t k = 0; k < inner; ++k) out[base + k] = f(a[base + k], b[k]);
  } else if (a.shape() == out_shape) {
    const auto ib = broadcast_index(b.shape(), out_shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[ib[i]]);
  } else {
    const auto ia = broadcast_index(a.shape(), out_shape);
    const auto ib = broadcast_index(b.shape(), out_shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[ia[i]], b[ib[i]]);
  }
  return out;
}

inline void accumulate(Tensor* dst, const Tensor& g) {
  if (!dst) return;
  const Tensor r = reduce_to(g, dst->shape());
  for (std::size_t i = 0; i < r.size(); ++i) (*dst)[i] += r[i];
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape()->record(std::move(y), {a}, [df](const BackwardArgs& args) {
    Tensor* gx = args.grad_of(0);
    if (!gx) return;
    const Tensor& x = args.input(0);
    for (std::size_t i = 0; i < x.size(); ++i) (*gx)[i] += args.grad[i] * df(x[i], args.output[i]);
  });
}

inline void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Shape s = broadcast_shape(a.shape(), b.shape());
  Tensor y = detail::broadcast_apply(a.value(), b.value(), s, [](double u, double v) { return u + v; });
  return tape.record(std::move(y), {a, b}, [](const BackwardArgs& args) {
    detail::accumulate(args.grad_of(0), args.grad);
    detail::accumulate(args.grad_of(1), args.grad);
  });
}

inline Var sub(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Shape s = broadcast_shape(a.shape(), b.shape());
  Tensor y = detail::broadcast_apply(a.value(), b.value(), s, [](double u, double v) { return u - v; });
  return tape.record(std::move(y), {a, b}, [](const BackwardArgs& args) {
    detail::accumulate(args.grad_of(0), args.grad);
    if (Tensor* gb = args.grad_of(1)) {
      Tensor neg = args.grad;
      for (double& v : neg.data()) v = -v;
      detail::accumulate(gb, neg);
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Shape s = broadcast_shape(a.shape(), b.shape());
  Tensor y = detail::broadcast_apply(a.value(), b.value(), s, [](double u, double v) { return u * v; });
  return tape.record(std::move(y), {a, b}, [s](const BackwardArgs& args) {
    const Tensor& av = args.input(0);
    const Tensor& bv = args.input(1);
    if (Tensor* ga = args.grad_of(0)) {
      const Tensor bb = bv.shape() == s ? bv : broadcast_to(bv, s);
      Tensor g(s);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = args.grad[i] * bb[i];
      detail::accumulate(ga, g);
    }
    if (Tensor* gb = args.grad_of(1)) {
      const Tensor ab = av.shape() == s ? av : broadcast_to(av, s);
      Tensor g(s);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = args.grad[i] * ab[i];
      detail::accumulate(gb, g);
    }
  });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var exp(Var a) {
  Var y = detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
  detail::require_finite(y.value(), "exp");
  return y;
}

inline Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw NumericError("log of a non-positive value");
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// Vectorized for |x| >= 0.5 as sign(x) (1 - e) / (1 + e), e = exp(-2|x|),
/// where there is no cancellation; std::tanh below that.
inline Var tanh(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Map<const Eigen::ArrayXd> X(x.data().data(), n);
  const Eigen::ArrayXd e = (-2.0 * X.abs()).exp();
  Eigen::Map<Eigen::ArrayXd>(y.data().data(), n) = ((1.0 - e) / (1.0 + e)) * X.sign();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::fabs(x[i]) < 0.5) y[i] = std::tanh(x[i]);
  return a.tape()->record(std::move(y), {a}, [](const BackwardArgs& args) {
    Tensor* gx = args.grad_of(0);
    if (!gx) return;
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += args.grad[i] * (1.0 - args.output[i] * args.output[i]);
  });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

/// |x|; subgradient 0 at 0.
inline Var abs(Var a) {
  return detail::unary(a, [](double x) { return std::fabs(x); },
                       [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Clamp to [lo, hi]; gradient passes only where lo <= x <= hi.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                       [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a}, [](const BackwardArgs& args) {
    if (Tensor* g = args.grad_of(0))
      for (double& v : g->data()) v += args.grad[0];
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

/// Sum over the last axis: [..., d] -> [...] (rank-1 input gives a scalar).
inline Var sum_last(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0) throw DimensionError("sum_last on a scalar");
  const std::size_t d = x.shape().back();
  Shape s(x.shape().begin(), x.shape().end() - 1);
  Tensor y(s);
  for (std::size_t r = 0; r < y.size(); ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += x[r * d + k];
    y[r] = acc;
  }
  return a.tape()->record(std::move(y), {a}, [d](const BackwardArgs& args) {
    Tensor* g = args.grad_of(0);
    if (!g) return;
    for (std::size_t r = 0; r < args.grad.size(); ++r)
      for (std::size_t k = 0; k < d; ++k) (*g)[r * d + k] += args.grad[r];
  });
}

inline Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape()->record(std::move(y), {a}, [](const BackwardArgs& args) {
    Tensor* g = args.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad[i];
  });
}

inline Var broadcast_to(Var a, const Shape& shape) {
  Tensor y = broadcast_to(a.value(), shape);
  return a.tape()->record(std::move(y), {a}, [](const BackwardArgs& args) {
    detail::accumulate(args.grad_of(0), args.grad);
  });
}

/// Rows [begin, end) along the first axis.
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tensor y = a.value().rows(begin, end);
  const std::size_t offset = begin * (a.value().size() / a.value().dim(0));
  return a.tape()->record(std::move(y), {a}, [offset](const BackwardArgs& args) {
    Tensor* g = args.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < args.grad.size(); ++i) (*g)[offset + i] += args.grad[i];
  });
}

/// Concatenate along the first axis; trailing dimensions must agree.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape* tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("concat_rows needs rank >= 1");
  Shape out_shape = first;
  out_shape[0] = 0;
  std::vector<double> data;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      throw DimensionError("concat_rows: trailing shapes differ");
    }
    out_shape[0] += s[0];
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  return tape->record(Tensor(out_shape, std::move(data)), parts, [](const BackwardArgs& args) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < args.inputs.size(); ++k) {
      const std::size_t n = args.input(k).size();
      if (Tensor* g = args.grad_of(k))
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += args.grad[offset + i];
      offset += n;
    }
  });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
}  // namespace detail

/// [p x q] . [q x r] -> [p x r].
inline Var matmul(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  }
  const auto p = static_cast<Eigen::Index>(av.dim(0));
  const auto q = static_cast<Eigen::Index>(av.dim(1));
  const auto r = static_cast<Eigen::Index>(bv.dim(1));
  Tensor y(Shape{av.dim(0), bv.dim(1)});
  detail::MutMap(y.data().data(), p, r).noalias() =
      detail::ConstMap(av.data().data(), p, q) * detail::ConstMap(bv.data().data(), q, r);
  return tape.record(std::move(y), {a, b}, [p, q, r](const BackwardArgs& args) {
    const detail::ConstMap g(args.grad.data().data(), p, r);
    if (Tensor* ga = args.grad_of(0)) {
      detail::MutMap(ga->data().data(), p, q).noalias() +=
          g * detail::ConstMap(args.input(1).data().data(), q, r).transpose();
    }
    if (Tensor* gb = args.grad_of(1)) {
      detail::MutMap(gb->data().data(), q, r).noalias() +=
          detail::ConstMap(args.input(0).data().data(), p, q).transpose() * g;
    }
  });
}

/// Below this Euclidean norm the gradient of ||v||^beta is taken to be zero.
inline constexpr double kNormEpsilon = 1e-12;

namespace detail {
/// ||v||^beta from ||v||^2, with exact shortcuts for beta = 1 and 2.
inline double pow_from_sq(double sq, double beta) {
  if (beta == 2.0) return sq;
  if (beta == 1.0) return std::sqrt(sq);
  return std::pow(sq, 0.5 * beta);
}

/// beta * ||v||^(beta - 2), the factor multiplying v in the gradient.
inline double grad_factor(double norm, double beta) {
  if (beta == 2.0) return 2.0;
  if (beta == 1.0) return 1.0 / norm;
  return beta * std::pow(norm, beta - 2.0);
}
}  // namespace detail

inline void check_beta(double beta) {
  if (!(beta > 0.0 && beta <= 2.0)) throw ConfigError("beta must lie in (0, 2], got " + std::to_string(beta));
}

/// ||v||_2^beta over the last axis: [..., d] -> [...]. A rank-1 input yields
/// a scalar. The gradient beta * ||v||^(beta-2) * v is replaced by zero when
/// ||v|| <= kNormEpsilon.
inline Var pow_norm(Var v, double beta) {
  check_beta(beta);
  const Tensor& x = v.value();
  if (x.rank() == 0) throw DimensionError("pow_norm needs at least one axis");
  const std::size_t d = x.shape().back();
  Shape s(x.shape().begin(), x.shape().end() - 1);
  Tensor y(s);
  for (std::size_t r = 0; r < y.size(); ++r) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += x[r * d + k] * x[r * d + k];
    y[r] = detail::pow_from_sq(sq, beta);
  }
  return v.tape()->record(std::move(y), {v}, [d, beta](const BackwardArgs& args) {
    Tensor* g = args.grad_of(0);
    if (!g) return;
    const Tensor& x = args.input(0);
    for (std::size_t r = 0; r < args.output.size(); ++r) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += x[r * d + k] * x[r * d + k];
      const double norm = std::sqrt(sq);
      if (norm <= kNormEpsilon) continue;
      const double coef = args.grad[r] * detail::grad_factor(norm, beta);
      for (std::size_t k = 0; k < d; ++k) (*g)[r * d + k] += coef * x[r * d + k];
    }
  });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<std::size_t> excluded;  ///< coordinates with a kink inside [x-h, x+h]
};

/// Builds a scalar on `tape` from the leaf `x`.
using ScalarBuilder = std::function<Var(Tape& tape, Var x)>;

/// Compare the reverse-mode gradient of `f` at `x` with central differences.
///
/// Error per coordinate is |analytic - central| / max(1, |analytic|). A
/// coordinate whose forward and backward one-sided slopes disagree by more
/// than 1e-2 * max(1, |central|) straddles a non-differentiable point (for
/// example the origin of ||v||^beta with beta < 2) and is reported as
/// excluded rather than scored. The step is snapped so that x +- h is exact.
inline FiniteDiffReport finite_diff_check(const ScalarBuilder& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: step must be positive");
  auto eval = [&](const Tensor& at) {
    Tape tape;
    const double v = f(tape, tape.constant(at)).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
    return v;
  };
  Tensor analytic;
  double f0 = 0.0;
  {
    Tape tape;
    Var leaf = tape.variable(x);
    Var root = f(tape, leaf);
    f0 = root.item();
    if (!std::isfinite(f0)) throw NumericError("finite_diff_check: non-finite function value");
    analytic = backward(tape, root).wrt(leaf);
  }
  FiniteDiffReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double hi = (xi + h) - xi;
    const double lo = xi - (xi - h);
    probe[i] = xi + hi;
    const double fp = eval(probe);
    probe[i] = xi - lo;
    const double fm = eval(probe);
    probe[i] = xi;
    const double central = (fp - fm) / (hi + lo);
    const double fwd = (fp - f0) / hi;
    const double bwd = (f0 - fm) / lo;
    if (std::fabs(fwd - bwd) > 1e-2 * std::max(1.0, std::fabs(central))) {
      report.excluded.push_back(i);
      continue;
    }
    const double err = std::fabs(analytic[i] - central) / std::max(1.0, std::fabs(analytic[i]));
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.checked;
  }
  return report;
}

}  // namespace envae
