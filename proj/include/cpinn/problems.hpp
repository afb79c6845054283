#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cpinn/autodiff.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

// ---------------------------------------------------------------------------
// Benchmark dynamical systems. Each problem provides, generically in the
// scalar type S (double, Var, Dual<...>):
//
//   rhs(t, u, f)                 du/dt = f(t, u)
//   invariants(u, I)             the first integrals, fixed order
//   invariant_gradients(u, J)    row-major m x n, row i = grad I^i
//
// plus a seeded initial-condition sampler and default training intervals.
// All five systems are autonomous; t is accepted for interface uniformity.
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
S scalar_like(const S& proto, double v) {
  (void)proto;
  if constexpr (std::is_same_v<S, double>)
    return v;
  else
    return S::constant(proto.tape(), v);
}

inline Var scalar_like(const Var& proto, double v) { return Var::constant(proto.tape(), v); }

/// Gradient of a scalar functor via n forward-mode passes. Works for any
/// scalar S because the tangents are built alongside the values.
template <class S, class F>
std::vector<S> forward_gradient(F&& f, std::span<const S> u) {
  const std::size_t n = u.size();
  std::vector<S> grad;
  grad.reserve(n);
  std::vector<Dual<S>> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs.clear();
    for (std::size_t j = 0; j < n; ++j)
      xs.emplace_back(u[j], scalar_like(u[j], i == j ? 1.0 : 0.0));
    Dual<S> y = f(std::span<const Dual<S>>(xs));
    grad.push_back(y.d);
  }
  return grad;
}

/// Uniform-in-area sample from the annulus r_in <= r <= r_out.
inline std::pair<double, double> sample_annulus(std::mt19937_64& rng, double r_in, double r_out) {
  std::uniform_real_distribution<double> radial(r_in * r_in, r_out * r_out);
  std::uniform_real_distribution<double> angular(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(radial(rng));
  const double phi = angular(rng);
  return {r * std::cos(phi), r * std::sin(phi)};
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Point mass on a spring; u = (q, p), conserved total energy H.
struct HarmonicOscillator {
  double mass = 1.0;
  double spring_k = 1.0;

  static std::string name() { return "harmonic_oscillator"; }
  int dim() const { return 2; }
  int num_integrals() const { return 1; }
  double t_start() const { return 0.0; }
  double t_final() const { return 30.0; }
  double deeponet_dt() const { return 0.5; }

  template <class S>
  void rhs(double, std::span<const S> u, std::span<S> f) const {
    f[0] = u[1] / mass;
    f[1] = -spring_k * u[0];
  }

  template <class S>
  void invariants(std::span<const S> u, std::span<S> out) const {
    out[0] = u[1] * u[1] / (2.0 * mass) + 0.5 * spring_k * (u[0] * u[0]);
  }

  template <class S>
  void invariant_gradients(std::span<const S> u, std::span<S> jac) const {
    jac[0] = spring_k * u[0];
    jac[1] = u[1] / mass;
  }

  std::vector<double> sample_initial_condition(std::mt19937_64&) const { return {1.0, 1.0}; }
};

// ---------------------------------------------------------------------------

/// Euler equations for the free rigid body in angular-momentum form;
/// u = (w1, w2, w3), conserved kinetic energy H and squared momentum L.
struct RigidBody {
  double i1 = 0.1;
  double i2 = 0.2;
  double i3 = 0.3;

  static std::string name() { return "rigid_body"; }
  int dim() const { return 3; }
  int num_integrals() const { return 2; }
  double t_start() const { return 0.0; }
  double t_final() const { return 1.75; }
  double deeponet_dt() const { return 0.25; }

  template <class S>
  void rhs(double, std::span<const S> u, std::span<S> f) const {
    f[0] = ((i2 - i3) / (i2 * i3)) * (u[1] * u[2]);
    f[1] = ((i3 - i1) / (i1 * i3)) * (u[0] * u[2]);
    f[2] = ((i1 - i2) / (i1 * i2)) * (u[0] * u[1]);
  }

  template <class S>
  void invariants(std::span<const S> u, std::span<S> out) const {
    out[0] = 0.5 * (u[0] * u[0] / i1 + u[1] * u[1] / i2 + u[2] * u[2] / i3);
    out[1] = 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
  }

  template <class S>
  void invariant_gradients(std::span<const S> u, std::span<S> jac) const {
    jac[0] = u[0] / i1;
    jac[1] = u[1] / i2;
    jac[2] = u[2] / i3;
    jac[3] = u[0];
    jac[4] = u[1];
    jac[5] = u[2];
  }

  std::vector<double> sample_initial_condition(std::mt19937_64&) const { return {1.0, 1.0, 1.0}; }
};

// ---------------------------------------------------------------------------

/// Planar double pendulum in canonical coordinates u = (q1, q2, p1, p2).
/// The equations of motion are generated from the Hamiltonian by forward-mode
/// differentiation; the invariant gradient is the hand-derived counterpart.
struct DoublePendulum {
  double m1 = 1.0;
  double m2 = 1.0;
  double l1 = 1.0;
  double l2 = 1.0;
  double g = 9.81;

  static std::string name() { return "double_pendulum"; }
  int dim() const { return 4; }
  int num_integrals() const { return 1; }
  double t_start() const { return 0.0; }
  double t_final() const { return 0.5; }
  double deeponet_dt() const { return 0.5; }

  template <class T>
  T hamiltonian(std::span<const T> u) const {
    const T delta = u[0] - u[1];
    const T c = cos(delta);
    const T s = sin(delta);
    const T numer = (m2 * l2 * l2) * (u[2] * u[2]) + ((m1 + m2) * l1 * l1) * (u[3] * u[3]) -
                    (2.0 * m2 * l1 * l2) * (u[2] * u[3] * c);
    const T denom = (2.0 * m2 * l1 * l1 * l2 * l2) * (m1 + m2 * (s * s));
    return numer / denom - ((m1 + m2) * g * l1) * cos(u[0]) - (m2 * g * l2) * cos(u[1]);
  }

  template <class S>
  void rhs(double, std::span<const S> u, std::span<S> f) const {
    auto grad = detail::forward_gradient<S>(
        [this](std::span<const Dual<S>> x) { return hamiltonian(x); }, u);
    f[0] = grad[2];
    f[1] = grad[3];
    f[2] = -grad[0];
    f[3] = -grad[1];
  }

  template <class S>
  void invariants(std::span<const S> u, std::span<S> out) const {
    out[0] = hamiltonian(u);
  }

  template <class S>
  void invariant_gradients(std::span<const S> u, std::span<S> jac) const {
    const double a = m2 * l2 * l2;
    const double b = (m1 + m2) * l1 * l1;
    const double c2 = 2.0 * m2 * l1 * l2;
    const double d0 = 2.0 * m2 * l1 * l1 * l2 * l2;
    const S delta = u[0] - u[1];
    const S c = cos(delta);
    const S s = sin(delta);
    const S numer = a * (u[2] * u[2]) + b * (u[3] * u[3]) - c2 * (u[2] * u[3] * c);
    const S denom = d0 * (m1 + m2 * (s * s));
    const S dn_ddelta = c2 * (u[2] * u[3] * s);
    const S dd_ddelta = (d0 * m2 * 2.0) * (s * c);
    const S kinetic_q = (dn_ddelta * denom - numer * dd_ddelta) / (denom * denom);
    jac[0] = kinetic_q + ((m1 + m2) * g * l1) * sin(u[0]);
    jac[1] = -kinetic_q + (m2 * g * l2) * sin(u[1]);
    jac[2] = (2.0 * a * u[2] - c2 * (u[3] * c)) / denom;
    jac[3] = (2.0 * b * u[3] - c2 * (u[2] * c)) / denom;
  }

  std::vector<double> sample_initial_condition(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> dist(-std::numbers::pi / 6.0, std::numbers::pi / 6.0);
    std::vector<double> u(4);
    for (double& x : u) x = dist(rng);
    return u;
  }
};

// ---------------------------------------------------------------------------

/// Lorenz-1963 with a mode switch: mode = 1 is the classical dissipative
/// model, mode = 0 the conservative one carrying two first integrals.
struct ConservativeLorenz {
  double sigma = 1.0;
  double rho = 0.5;
  double beta = 8.0 / 3.0;  // inert while mode = 0
  int mode = 0;

  static std::string name() { return "lorenz_conservative"; }
  int dim() const { return 3; }
  int num_integrals() const { return 2; }
  double t_start() const { return 0.0; }
  double t_final() const { return 0.25; }
  double deeponet_dt() const { return 0.25; }

  template <class S>
  void rhs(double, std::span<const S> u, std::span<S> f) const {
    const double m = static_cast<double>(mode);
    f[0] = sigma * (u[1] - m * u[0]);
    f[1] = u[0] * (rho - u[2]) - m * u[1];
    f[2] = u[0] * u[1] - (beta * m) * u[2];
  }

  template <class S>
  void invariants(std::span<const S> u, std::span<S> out) const {
    out[0] = u[2] - u[0] * u[0] / (2.0 * sigma);
    out[1] = 0.5 * (u[1] * u[1] + u[2] * u[2]) - rho * u[2];
  }

  template <class S>
  void invariant_gradients(std::span<const S> u, std::span<S> jac) const {
    jac[0] = -u[0] / sigma;
    jac[1] = detail::scalar_like(u[0], 0.0);
    jac[2] = detail::scalar_like(u[0], 1.0);
    jac[3] = detail::scalar_like(u[0], 0.0);
    jac[4] = u[1];
    jac[5] = u[2] - rho;
  }

  std::vector<double> sample_initial_condition(std::mt19937_64& rng) const {
    auto [x, y] = detail::sample_annulus(rng, 0.5, 1.5);
    std::uniform_real_distribution<double> zdist(0.5, 1.5);
    return {x, y, zdist(rng)};
  }
};

// ---------------------------------------------------------------------------

/// n point vortices in the plane; u = (x1, y1, ..., xn, yn).
/// Four first integrals: energy H, angular momentum L, linear momenta Px, Py.
struct PointVortex {
  int n_vortices = 3;
  std::vector<double> strengths{1.0, 1.0, 1.0};

  static std::string name() { return "point_vortex3"; }
  int dim() const { return 2 * n_vortices; }
  int num_integrals() const { return 4; }
  double t_start() const { return 0.0; }
  double t_final() const { return 0.5; }
  double deeponet_dt() const { return 0.5; }

  template <class S>
  S pair_distance_sq(std::span<const S> u, int i, int j) const {
    const S dx = u[2 * i] - u[2 * j];
    const S dy = u[2 * i + 1] - u[2 * j + 1];
    const S r2 = dx * dx + dy * dy;
    if (value_of(r2) == 0.0)
      throw SingularityError("point vortex: vortices " + std::to_string(i) + " and " +
                             std::to_string(j) + " coincide");
    return r2;
  }

  template <class S>
  void rhs(double, std::span<const S> u, std::span<S> f) const {
    const double coeff = 1.0 / (2.0 * std::numbers::pi);
    for (int i = 0; i < n_vortices; ++i) {
      S fx = detail::scalar_like(u[0], 0.0);
      S fy = detail::scalar_like(u[0], 0.0);
      for (int j = 0; j < n_vortices; ++j) {
        if (j == i) continue;
        const S r2 = pair_distance_sq(u, i, j);
        fx = fx - strengths[static_cast<std::size_t>(j)] * ((u[2 * i + 1] - u[2 * j + 1]) / r2);
        fy = fy + strengths[static_cast<std::size_t>(j)] * ((u[2 * i] - u[2 * j]) / r2);
      }
      f[2 * i] = coeff * fx;
      f[2 * i + 1] = coeff * fy;
    }
  }

  template <class S>
  void invariants(std::span<const S> u, std::span<S> out) const {
    // H via ln r_ij = log(r_ij^2) / 2, avoiding the square root.
    S h = detail::scalar_like(u[0], 0.0);
    for (int i = 0; i < n_vortices; ++i)
      for (int j = i + 1; j < n_vortices; ++j) {
        const double gg = strengths[static_cast<std::size_t>(i)] * strengths[static_cast<std::size_t>(j)];
        h = h + gg * log(pair_distance_sq(u, i, j));
      }
    out[0] = (-1.0 / (8.0 * std::numbers::pi)) * h;
    S l = detail::scalar_like(u[0], 0.0);
    S px = detail::scalar_like(u[0], 0.0);
    S py = detail::scalar_like(u[0], 0.0);
    for (int i = 0; i < n_vortices; ++i) {
      const double gi = strengths[static_cast<std::size_t>(i)];
      l = l + gi * (u[2 * i] * u[2 * i] + u[2 * i + 1] * u[2 * i + 1]);
      px = px + gi * u[2 * i];
      py = py + gi * u[2 * i + 1];
    }
    out[1] = l;
    out[2] = px;
    out[3] = py;
  }

  template <class S>
  void invariant_gradients(std::span<const S> u, std::span<S> jac) const {
    const int n = dim();
    const double coeff = -1.0 / (4.0 * std::numbers::pi);
    for (int i = 0; i < n_vortices; ++i) {
      S hx = detail::scalar_like(u[0], 0.0);
      S hy = detail::scalar_like(u[0], 0.0);
      const double gi = strengths[static_cast<std::size_t>(i)];
      for (int j = 0; j < n_vortices; ++j) {
        if (j == i) continue;
        const double gg = gi * strengths[static_cast<std::size_t>(j)];
        const S r2 = pair_distance_sq(u, i, j);
        hx = hx + gg * ((u[2 * i] - u[2 * j]) / r2);
        hy = hy + gg * ((u[2 * i + 1] - u[2 * j + 1]) / r2);
      }
      jac[2 * i] = coeff * hx;
      jac[2 * i + 1] = coeff * hy;
      jac[n + 2 * i] = (2.0 * gi) * u[2 * i];
      jac[n + 2 * i + 1] = (2.0 * gi) * u[2 * i + 1];
      jac[2 * n + 2 * i] = detail::scalar_like(u[0], gi);
      jac[2 * n + 2 * i + 1] = detail::scalar_like(u[0], 0.0);
      jac[3 * n + 2 * i] = detail::scalar_like(u[0], 0.0);
      jac[3 * n + 2 * i + 1] = detail::scalar_like(u[0], gi);
    }
  }

  std::vector<double> sample_initial_condition(std::mt19937_64& rng) const {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<double> u(static_cast<std::size_t>(dim()));
      for (int i = 0; i < n_vortices; ++i) {
        auto [x, y] = detail::sample_annulus(rng, 0.5, 1.5);
        u[static_cast<std::size_t>(2 * i)] = x;
        u[static_cast<std::size_t>(2 * i + 1)] = y;
      }
      double min_dist_sq = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n_vortices; ++i)
        for (int j = i + 1; j < n_vortices; ++j) {
          const double dx = u[static_cast<std::size_t>(2 * i)] - u[static_cast<std::size_t>(2 * j)];
          const double dy =
              u[static_cast<std::size_t>(2 * i + 1)] - u[static_cast<std::size_t>(2 * j + 1)];
          min_dist_sq = std::min(min_dist_sq, dx * dx + dy * dy);
        }
      if (min_dist_sq >= 1e-3 * 1e-3) return u;
    }
    throw SamplerError("point vortex: could not sample a well-separated configuration");
  }
};

// ---------------------------------------------------------------------------
// Registry.
// ---------------------------------------------------------------------------

using ProblemVariant =
    std::variant<HarmonicOscillator, RigidBody, DoublePendulum, ConservativeLorenz, PointVortex>;

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{
      HarmonicOscillator::name(), RigidBody::name(), DoublePendulum::name(),
      ConservativeLorenz::name(), PointVortex::name()};
  return names;
}

inline ProblemVariant problem_by_name(const std::string& name) {
  if (name == HarmonicOscillator::name()) return HarmonicOscillator{};
  if (name == RigidBody::name()) return RigidBody{};
  if (name == DoublePendulum::name()) return DoublePendulum{};
  if (name == ConservativeLorenz::name()) return ConservativeLorenz{};
  if (name == PointVortex::name()) return PointVortex{};
  std::string valid;
  for (const auto& n : problem_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw UsageError("unknown problem '" + name + "'; valid: " + valid);
}

/// Seeded convenience wrapper around the per-problem samplers.
template <class P>
std::vector<double> sample_initial_condition(const P& problem, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return problem.sample_initial_condition(rng);
}

}  // namespace cpinn
