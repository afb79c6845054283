#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cpinn/errors.hpp"

namespace cpinn {

// ---------------------------------------------------------------------------
// Reverse mode: a scalar Wengert tape.
//
// Every arithmetic operation on Var appends one node holding the parent
// indices and the local partial derivatives evaluated at recording time.
// A reverse sweep is then a single pass over the node array; no operation
// dispatch is needed because the partials are already numbers.
// ---------------------------------------------------------------------------

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,     // a + b
  sub,     // a - b
  mul,     // a * b
  div,     // a / b
  add_c,   // a + c          (c in aux)
  rsub_c,  // c - a
  mul_c,   // a * c
  div_c,   // a / c
  rdiv_c,  // c / a
  neg,     // -a
  tanh_op,
  sin_op,
  cos_op,
  log_op,
  sqrt_op,
  pow_c,  // a ^ c
};

class Tape {
public:
  struct Node {
    std::int32_t a = -1;
    std::int32_t b = -1;
    double pa = 0.0;  // d(node)/d(a)
    double pb = 0.0;  // d(node)/d(b), or the folded constant when b < 0
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(std::size_t n) {
    nodes_.reserve(n);
    ops_.reserve(n);
    values_.reserve(n);
  }

  std::size_t size() const { return nodes_.size(); }
  double value(std::int32_t i) const { return values_[static_cast<std::size_t>(i)]; }
  Op op(std::int32_t i) const { return ops_[static_cast<std::size_t>(i)]; }
  const Node& node(std::int32_t i) const { return nodes_[static_cast<std::size_t>(i)]; }

  std::int32_t push_leaf(double v) { return push(Op::leaf, -1, -1, v, 0.0, 0.0); }
  std::int32_t push_constant(double v) { return push(Op::constant, -1, -1, v, 0.0, 0.0); }

  std::int32_t push_unary(Op op, std::int32_t a, double v, double pa, double aux = 0.0) {
    return push(op, a, -1, v, pa, aux);
  }

  std::int32_t push_binary(Op op, std::int32_t a, std::int32_t b, double v, double pa, double pb) {
    return push(op, a, b, v, pa, pb);
  }

  /// Truncate the tape back to `mark` nodes; values above the mark are
  /// discarded. Used to reuse one tape across many short evaluations that
  /// share a common prefix (e.g. the network parameters as leaves).
  void rewind(std::size_t mark) {
    assert(mark <= nodes_.size());
    nodes_.resize(mark);
    ops_.resize(mark);
    values_.resize(mark);
  }

  /// Reverse sweep seeding d(seed)/d(seed) = 1. Returns the adjoint array;
  /// entry i is d(seed)/d(node i). Valid until the next tape mutation.
  std::span<const double> reverse(std::int32_t seed) {
    adjoints_.assign(nodes_.size(), 0.0);
    adjoints_[static_cast<std::size_t>(seed)] = 1.0;
    for (std::int32_t i = seed; i >= 0; --i) {
      const double adj = adjoints_[static_cast<std::size_t>(i)];
      if (adj == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.a >= 0) adjoints_[static_cast<std::size_t>(n.a)] += n.pa * adj;
      if (n.b >= 0) adjoints_[static_cast<std::size_t>(n.b)] += n.pb * adj;
    }
    return adjoints_;
  }

  /// Recompute all forward values from the recorded operations. The result
  /// must reproduce the stored values bit-exactly.
  std::vector<double> replay() const {
    std::vector<double> v(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      const auto va = [&] { return v[static_cast<std::size_t>(n.a)]; };
      const auto vb = [&] { return v[static_cast<std::size_t>(n.b)]; };
      switch (ops_[i]) {
        case Op::leaf:
        case Op::constant: v[i] = values_[i]; break;
        case Op::add: v[i] = va() + vb(); break;
        case Op::sub: v[i] = va() - vb(); break;
        case Op::mul: v[i] = va() * vb(); break;
        case Op::div: v[i] = va() / vb(); break;
        case Op::add_c: v[i] = va() + n.pb; break;
        case Op::rsub_c: v[i] = n.pb - va(); break;
        case Op::mul_c: v[i] = va() * n.pa; break;
        case Op::div_c: v[i] = va() / n.pb; break;
        case Op::rdiv_c: v[i] = n.pb / va(); break;
        case Op::neg: v[i] = -va(); break;
        case Op::tanh_op: v[i] = std::tanh(va()); break;
        case Op::sin_op: v[i] = std::sin(va()); break;
        case Op::cos_op: v[i] = std::cos(va()); break;
        case Op::log_op: v[i] = std::log(va()); break;
        case Op::sqrt_op: v[i] = std::sqrt(va()); break;
        case Op::pow_c: v[i] = std::pow(va(), n.pb); break;
      }
    }
    return v;
  }

private:
  std::int32_t push(Op op, std::int32_t a, std::int32_t b, double v, double pa, double pb) {
    nodes_.push_back(Node{a, b, pa, pb});
    ops_.push_back(op);
    values_.push_back(v);
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<Op> ops_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
};

// ---------------------------------------------------------------------------
// Var: a scalar bound to a tape. Arithmetic records nodes; the cached value
// avoids an indirection on every read.
// ---------------------------------------------------------------------------

class Var {
public:
  Var() = default;
  Var(Tape& tape, std::int32_t index, double value) : tape_(&tape), index_(index), value_(value) {}

  static Var leaf(Tape& tape, double v) { return Var(tape, tape.push_leaf(v), v); }
  static Var constant(Tape& tape, double v) { return Var(tape, tape.push_constant(v), v); }

  double value() const { return value_; }
  std::int32_t index() const { return index_; }
  Tape& tape() const { return *tape_; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator+=(double c) { return *this = *this + c; }
  Var& operator*=(double c) { return *this = *this * c; }

  friend Var operator+(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const double v = a.value_ + b.value_;
    return Var(t, t.push_binary(Op::add, a.index_, b.index_, v, 1.0, 1.0), v);
  }
  friend Var operator-(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const double v = a.value_ - b.value_;
    return Var(t, t.push_binary(Op::sub, a.index_, b.index_, v, 1.0, -1.0), v);
  }
  friend Var operator*(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const double v = a.value_ * b.value_;
    return Var(t, t.push_binary(Op::mul, a.index_, b.index_, v, b.value_, a.value_), v);
  }
  friend Var operator/(const Var& a, const Var& b) {
    if (b.value_ == 0.0) throw DomainError("divide: division by zero");
    Tape& t = a.tape();
    const double v = a.value_ / b.value_;
    return Var(t, t.push_binary(Op::div, a.index_, b.index_, v, 1.0 / b.value_, -v / b.value_), v);
  }

  friend Var operator+(const Var& a, double c) {
    Tape& t = a.tape();
    const double v = a.value_ + c;
    return Var(t, t.push_unary(Op::add_c, a.index_, v, 1.0, c), v);
  }
  friend Var operator+(double c, const Var& a) { return a + c; }
  friend Var operator-(const Var& a, double c) { return a + (-c); }
  friend Var operator-(double c, const Var& a) {
    Tape& t = a.tape();
    const double v = c - a.value_;
    return Var(t, t.push_unary(Op::rsub_c, a.index_, v, -1.0, c), v);
  }
  friend Var operator*(const Var& a, double c) {
    Tape& t = a.tape();
    const double v = a.value_ * c;
    return Var(t, t.push_unary(Op::mul_c, a.index_, v, c), v);
  }
  friend Var operator*(double c, const Var& a) { return a * c; }
  friend Var operator/(const Var& a, double c) {
    if (c == 0.0) throw DomainError("divide: division by zero");
    Tape& t = a.tape();
    const double v = a.value_ / c;
    return Var(t, t.push_unary(Op::div_c, a.index_, v, 1.0 / c, c), v);
  }
  friend Var operator/(double c, const Var& a) {
    if (a.value_ == 0.0) throw DomainError("divide: division by zero");
    Tape& t = a.tape();
    const double v = c / a.value_;
    return Var(t, t.push_unary(Op::rdiv_c, a.index_, v, -v / a.value_, c), v);
  }

  friend Var operator-(const Var& a) {
    Tape& t = a.tape();
    return Var(t, t.push_unary(Op::neg, a.index_, -a.value_, -1.0), -a.value_);
  }

  // Comparisons act on values; used for pivot selection and bound checks.
  friend bool operator<(const Var& a, const Var& b) { return a.value_ < b.value_; }
  friend bool operator>(const Var& a, const Var& b) { return a.value_ > b.value_; }
  friend bool operator<(const Var& a, double c) { return a.value_ < c; }
  friend bool operator>(const Var& a, double c) { return a.value_ > c; }

private:
  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
  double value_ = 0.0;
};

// Plain-double counterparts so unqualified calls in generic kernels resolve
// inside this namespace and share the same domain checks.
inline double tanh(double x) { return std::tanh(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double pow(double x, double c) { return std::pow(x, c); }
inline double log(double x) {
  if (!(x > 0.0)) throw DomainError("log: argument must be positive");
  return std::log(x);
}
inline double sqrt(double x) {
  if (x < 0.0) throw DomainError("sqrt: argument must be non-negative");
  return std::sqrt(x);
}

inline Var tanh(const Var& a) {
  Tape& t = a.tape();
  const double v = std::tanh(a.value());
  return Var(t, t.push_unary(Op::tanh_op, a.index(), v, 1.0 - v * v), v);
}
inline Var sin(const Var& a) {
  Tape& t = a.tape();
  const double v = std::sin(a.value());
  return Var(t, t.push_unary(Op::sin_op, a.index(), v, std::cos(a.value())), v);
}
inline Var cos(const Var& a) {
  Tape& t = a.tape();
  const double v = std::cos(a.value());
  return Var(t, t.push_unary(Op::cos_op, a.index(), v, -std::sin(a.value())), v);
}
inline Var log(const Var& a) {
  if (!(a.value() > 0.0)) throw DomainError("log: argument must be positive");
  Tape& t = a.tape();
  const double v = std::log(a.value());
  return Var(t, t.push_unary(Op::log_op, a.index(), v, 1.0 / a.value()), v);
}
inline Var sqrt(const Var& a) {
  if (a.value() < 0.0) throw DomainError("sqrt: argument must be non-negative");
  Tape& t = a.tape();
  const double v = std::sqrt(a.value());
  return Var(t, t.push_unary(Op::sqrt_op, a.index(), v, 0.5 / v), v);
}
inline Var pow(const Var& a, double c) {
  Tape& t = a.tape();
  const double v = std::pow(a.value(), c);
  return Var(t, t.push_unary(Op::pow_c, a.index(), v, c * std::pow(a.value(), c - 1.0), c), v);
}

// ---------------------------------------------------------------------------
// Forward mode: Dual<T> carries a value and one tangent. T may be double
// (plain directional derivatives) or Var (forward over reverse, which puts
// the tangent arithmetic itself on the tape).
// ---------------------------------------------------------------------------

template <class T>
struct Dual {
  T v;  // value
  T d;  // tangent

  Dual() = default;
  Dual(T value, T tangent) : v(std::move(value)), d(std::move(tangent)) {}
};

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}

// Mixed operations with tangent-free operands.
template <class T>
Dual<T> operator+(const Dual<T>& a, const T& c) {
  return {a.v + c, a.d};
}
template <class T>
Dual<T> operator+(const T& c, const Dual<T>& a) {
  return {c + a.v, a.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const T& c) {
  return {a.v - c, a.d};
}
template <class T>
Dual<T> operator-(const T& c, const Dual<T>& a) {
  return {c - a.v, -a.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const T& c) {
  return {a.v * c, a.d * c};
}
template <class T>
Dual<T> operator*(const T& c, const Dual<T>& a) {
  return {c * a.v, c * a.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const T& c) {
  return {a.v / c, a.d / c};
}
template <class T>
Dual<T> operator/(const T& c, const Dual<T>& a) {
  T q = c / a.v;
  return {q, -q * a.d / a.v};
}

inline Dual<Var> operator+(const Dual<Var>& a, double c) { return {a.v + c, a.d}; }
inline Dual<Var> operator+(double c, const Dual<Var>& a) { return {c + a.v, a.d}; }
inline Dual<Var> operator-(const Dual<Var>& a, double c) { return {a.v - c, a.d}; }
inline Dual<Var> operator-(double c, const Dual<Var>& a) { return {c - a.v, -a.d}; }
inline Dual<Var> operator*(const Dual<Var>& a, double c) { return {a.v * c, a.d * c}; }
inline Dual<Var> operator*(double c, const Dual<Var>& a) { return {c * a.v, c * a.d}; }
inline Dual<Var> operator/(const Dual<Var>& a, double c) { return {a.v / c, a.d / c}; }
inline Dual<Var> operator/(double c, const Dual<Var>& a) {
  Var q = c / a.v;
  return {q, -q * a.d / a.v};
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T t = tanh(a.v);
  return {t, a.d * (1.0 - t * t)};
}
template <class T>
Dual<T> sin(const Dual<T>& a) {
  return {sin(a.v), a.d * cos(a.v)};
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
  return {cos(a.v), -a.d * sin(a.v)};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  return {log(a.v), a.d / a.v};
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  T s = sqrt(a.v);
  return {s, a.d * (0.5 / s)};
}
template <class T>
Dual<T> pow(const Dual<T>& a, double c) {
  return {pow(a.v, c), a.d * (c * pow(a.v, c - 1.0))};
}

// ---------------------------------------------------------------------------
// Scalar helpers shared by all numeric kernels.
// ---------------------------------------------------------------------------

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
}

template <class S>
bool finite_value(const S& x) {
  return std::isfinite(value_of(x));
}

/// Sum of a span, left to right.
template <class S>
S sum(std::span<const S> xs) {
  S acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc;
}

/// Dot product, accumulated left to right.
template <class S>
S dot(std::span<const S> a, std::span<const S> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  S acc = a[0] * b[0];
  for (std::size_t i = 1; i < a.size(); ++i) acc = acc + a[i] * b[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Driver entry points.
// ---------------------------------------------------------------------------

/// Evaluate a scalar program and its full gradient with one reverse sweep.
/// `func` must be callable as func(std::span<const Var>) -> Var.
template <class F>
std::pair<double, std::vector<double>> evaluate_with_gradient(F&& func,
                                                              std::span<const double> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (double x : inputs) vars.push_back(Var::leaf(tape, x));
  Var y = func(std::span<const Var>(vars));
  const auto adjoints = tape.reverse(y.index());
  std::vector<double> grad(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    grad[i] = adjoints[static_cast<std::size_t>(vars[i].index())];
  return {y.value(), std::move(grad)};
}

/// Componentwise d(ansatz)/dt of a vector-valued program of one scalar,
/// via a single forward-mode pass with unit tangent on t.
/// `ansatz` must be callable as ansatz(Dual<double>) -> std::vector<Dual<double>>.
template <class F>
std::vector<double> time_derivative(F&& ansatz, double t) {
  std::vector<Dual<double>> out = ansatz(Dual<double>(t, 1.0));
  std::vector<double> dt(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) dt[i] = out[i].d;
  return dt;
}

/// Max relative discrepancy between the reverse-mode gradient and central
/// finite differences. `func` must accept both Var and double spans.
template <class F>
double finite_difference_check(F&& func, std::span<const double> inputs, double step) {
  if (!(step > 0.0)) throw Error("finite_difference_check: step must be positive");
  const auto [value, grad] = evaluate_with_gradient(func, inputs);
  (void)value;
  std::vector<double> x(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double hi = func(std::span<const double>(x));
    x[i] = saved - step;
    const double lo = func(std::span<const double>(x));
    x[i] = saved;
    const double central = (hi - lo) / (2.0 * step);
    const double err = std::abs(central - grad[i]) / std::max(1.0, std::abs(grad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cpinn
