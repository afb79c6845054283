#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "cpinn/autodiff.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

struct ProjectionConfig {
  int max_iterations = 0;            // p
  double singular_tolerance = 1e-12;  // pivot threshold for the Gram solve
};

/// The invariant manifold M = { u : I(u) = I(u0) }, anchored at a specific
/// initial condition. The integral and gradient evaluators come from the
/// problem definition; only the reference values are stored here.
template <class P>
struct InvariantManifold {
  P problem;
  std::vector<double> ref_values;  // I(u0), length m

  int dim() const { return problem.dim(); }
  int integrals_count() const { return problem.num_integrals(); }
};

template <class P>
InvariantManifold<P> anchor_manifold(P problem, std::span<const double> u0) {
  if (static_cast<int>(u0.size()) != problem.dim())
    throw ShapeError("anchor_manifold: state length mismatch");
  std::vector<double> refs(static_cast<std::size_t>(problem.num_integrals()));
  problem.invariants(u0, std::span<double>(refs));
  return InvariantManifold<P>{std::move(problem), std::move(refs)};
}

/// g(u) = I(u) - I0.
template <class P, class S>
std::vector<S> constraint_residual(const InvariantManifold<P>& man, std::span<const S> u) {
  if (static_cast<int>(u.size()) != man.dim())
    throw ShapeError("constraint_residual: state length mismatch");
  std::vector<S> g(static_cast<std::size_t>(man.integrals_count()), u[0]);
  man.problem.invariants(u, std::span<S>(g));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] - man.ref_values[i];
  return g;
}

/// Row i is the gradient of the i-th first integral at u (m x n, row major).
template <class P, class S>
std::vector<S> constraint_jacobian(const InvariantManifold<P>& man, std::span<const S> u) {
  if (static_cast<int>(u.size()) != man.dim())
    throw ShapeError("constraint_jacobian: state length mismatch");
  std::vector<S> jac(static_cast<std::size_t>(man.integrals_count() * man.dim()), u[0]);
  man.problem.invariant_gradients(u, std::span<S>(jac));
  return jac;
}

namespace detail {

// Dense LU with partial pivoting for the m x m Gram matrix, m <= 4 in all
// benchmark systems. Generic in the scalar so the factorization itself is
// differentiable when recorded on a tape.
template <class S>
void lu_factor(std::vector<S>& a, int m, std::array<int, 8>& perm, double tol) {
  for (int col = 0; col < m; ++col) {
    int piv = col;
    double best = std::abs(value_of(a[static_cast<std::size_t>(col) * m + col]));
    for (int r = col + 1; r < m; ++r) {
      const double mag = std::abs(value_of(a[static_cast<std::size_t>(r) * m + col]));
      if (mag > best) {
        best = mag;
        piv = r;
      }
    }
    if (!(best > tol)) throw SingularConstraintError("projection: singular constraint Gram matrix");
    perm[static_cast<std::size_t>(col)] = piv;
    if (piv != col)
      for (int c = 0; c < m; ++c)
        std::swap(a[static_cast<std::size_t>(col) * m + c], a[static_cast<std::size_t>(piv) * m + c]);
    for (int r = col + 1; r < m; ++r) {
      S f = a[static_cast<std::size_t>(r) * m + col] / a[static_cast<std::size_t>(col) * m + col];
      a[static_cast<std::size_t>(r) * m + col] = f;
      for (int c = col + 1; c < m; ++c)
        a[static_cast<std::size_t>(r) * m + c] =
            a[static_cast<std::size_t>(r) * m + c] - f * a[static_cast<std::size_t>(col) * m + c];
    }
  }
}

template <class S>
std::vector<S> lu_solve(const std::vector<S>& a, int m, const std::array<int, 8>& perm,
                        std::vector<S> rhs) {
  for (int col = 0; col < m; ++col)
    if (perm[static_cast<std::size_t>(col)] != col)
      std::swap(rhs[static_cast<std::size_t>(col)], rhs[static_cast<std::size_t>(perm[static_cast<std::size_t>(col)])]);
  for (int r = 1; r < m; ++r)
    for (int c = 0; c < r; ++c)
      rhs[static_cast<std::size_t>(r)] =
          rhs[static_cast<std::size_t>(r)] - a[static_cast<std::size_t>(r) * m + c] * rhs[static_cast<std::size_t>(c)];
  for (int r = m - 1; r >= 0; --r) {
    for (int c = r + 1; c < m; ++c)
      rhs[static_cast<std::size_t>(r)] =
          rhs[static_cast<std::size_t>(r)] - a[static_cast<std::size_t>(r) * m + c] * rhs[static_cast<std::size_t>(c)];
    rhs[static_cast<std::size_t>(r)] = rhs[static_cast<std::size_t>(r)] / a[static_cast<std::size_t>(r) * m + r];
  }
  return rhs;
}

/// Simplified Newton on the Lagrange multipliers with the constraint
/// Jacobian frozen at the candidate point:
///
///   lambda_0 = 0,  lambda_{k+1} = lambda_k - (G G^T)^{-1} g(u + G^T lambda_k)
///
/// Returns (u + G^T lambda_{p-1}, u + G^T lambda_p). All arithmetic happens
/// in the scalar S, so with S = Var the whole iteration lands on the tape.
template <class P, class S>
std::pair<std::vector<S>, std::vector<S>> project_iterations(const P& problem,
                                                             std::span<const double> refs,
                                                             std::span<const S> u, int p,
                                                             const ProjectionConfig& cfg) {
  const int n = problem.dim();
  const int m = problem.num_integrals();
  if (static_cast<int>(u.size()) != n) throw ShapeError("project: state length mismatch");

  std::vector<S> prev(u.begin(), u.end());
  std::vector<S> cur(u.begin(), u.end());
  if (p <= 0) return {std::move(prev), std::move(cur)};

  std::vector<S> jac(static_cast<std::size_t>(m) * n, u[0]);
  problem.invariant_gradients(u, std::span<S>(jac));

  std::vector<S> gram(static_cast<std::size_t>(m) * m, u[0]);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < m; ++k) {
      S acc = jac[static_cast<std::size_t>(i) * n] * jac[static_cast<std::size_t>(k) * n];
      for (int j = 1; j < n; ++j)
        acc = acc + jac[static_cast<std::size_t>(i) * n + j] * jac[static_cast<std::size_t>(k) * n + j];
      gram[static_cast<std::size_t>(i) * m + k] = acc;
    }
  std::array<int, 8> perm{};
  lu_factor(gram, m, perm, cfg.singular_tolerance);

  std::vector<S> lambda;  // empty encodes lambda = 0
  std::vector<S> g(static_cast<std::size_t>(m), u[0]);
  for (int k = 0; k < p; ++k) {
    problem.invariants(std::span<const S>(cur), std::span<S>(g));
    for (int i = 0; i < m; ++i) {
      g[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] - refs[static_cast<std::size_t>(i)];
      if (!finite_value(g[static_cast<std::size_t>(i)]))
        throw ProjectionDivergenceError("projection: non-finite constraint residual");
    }
    std::vector<S> delta = lu_solve(gram, m, perm, g);
    if (lambda.empty()) {
      lambda.reserve(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) lambda.push_back(-delta[static_cast<std::size_t>(i)]);
    } else {
      for (int i = 0; i < m; ++i)
        lambda[static_cast<std::size_t>(i)] = lambda[static_cast<std::size_t>(i)] - delta[static_cast<std::size_t>(i)];
    }
    prev = std::move(cur);
    cur.assign(u.begin(), u.end());
    for (int j = 0; j < n; ++j) {
      S corr = jac[static_cast<std::size_t>(j)] * lambda[0];
      for (int i = 1; i < m; ++i)
        corr = corr + jac[static_cast<std::size_t>(i) * n + j] * lambda[static_cast<std::size_t>(i)];
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j)] + corr;
    }
  }
  return {std::move(prev), std::move(cur)};
}

}  // namespace detail

/// Project a candidate onto M with p simplified-Newton iterations.
/// p = 0 returns the candidate unchanged, bitwise.
template <class P, class S>
std::vector<S> project(const InvariantManifold<P>& man, std::span<const S> u_tilde, int p,
                       const ProjectionConfig& cfg = {}) {
  return detail::project_iterations(man.problem, std::span<const double>(man.ref_values), u_tilde,
                                    p, cfg)
      .second;
}

/// As `project`, but also returns the (p-1)-iteration point, sharing the
/// frozen Jacobian and factorization. Used by the soft update.
template <class P, class S>
std::pair<std::vector<S>, std::vector<S>> project_pair(const InvariantManifold<P>& man,
                                                       std::span<const S> u_tilde, int p,
                                                       const ProjectionConfig& cfg = {}) {
  return detail::project_iterations(man.problem, std::span<const double>(man.ref_values), u_tilde,
                                    p, cfg);
}

// Plain-double conveniences (the templates cannot deduce S from a vector).
template <class P>
std::vector<double> constraint_residual(const InvariantManifold<P>& man,
                                        const std::vector<double>& u) {
  return constraint_residual<P, double>(man, std::span<const double>(u));
}
template <class P>
std::vector<double> constraint_jacobian(const InvariantManifold<P>& man,
                                        const std::vector<double>& u) {
  return constraint_jacobian<P, double>(man, std::span<const double>(u));
}
template <class P>
std::vector<double> project(const InvariantManifold<P>& man, const std::vector<double>& u_tilde,
                            int p, const ProjectionConfig& cfg = {}) {
  return project<P, double>(man, std::span<const double>(u_tilde), p, cfg);
}

/// p(e) = min(P, floor(e (P+1) / E)); ramps 0 -> P over training.
inline int projection_schedule(long long epoch, long long total_epochs, int projection_cap) {
  if (total_epochs < 1) throw Error("projection_schedule: total epochs must be >= 1");
  if (epoch < 0 || epoch > total_epochs) throw Error("projection_schedule: epoch out of range");
  if (projection_cap < 0) throw Error("projection_schedule: projection cap must be >= 0");
  const long long raw = epoch * (projection_cap + 1) / total_epochs;
  return static_cast<int>(std::min<long long>(projection_cap, raw));
}

/// (1 - s) u_prev + s u_curr, componentwise.
template <class S>
std::vector<S> soft_update(std::span<const S> u_prev, std::span<const S> u_curr, double s) {
  if (u_prev.size() != u_curr.size()) throw ShapeError("soft_update: length mismatch");
  if (!(s >= 0.0 && s <= 1.0)) throw Error("soft_update: weight must lie in [0, 1]");
  std::vector<S> out;
  out.reserve(u_prev.size());
  for (std::size_t i = 0; i < u_prev.size(); ++i)
    out.push_back((1.0 - s) * u_prev[i] + s * u_curr[i]);
  return out;
}

}  // namespace cpinn
