#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cpinn/problems.hpp"
#include "cpinn/projection.hpp"
#include "test_support.hpp"

using cpinn::ConservativeLorenz;
using cpinn::DoublePendulum;
using cpinn::HarmonicOscillator;
using cpinn::InvariantManifold;
using cpinn::PointVortex;
using cpinn::ProjectionConfig;
using cpinn::RigidBody;
using cpinn::Var;
using cpinn::anchor_manifold;
using cpinn::constraint_jacobian;
using cpinn::constraint_residual;
using cpinn::finite_difference_check;
using cpinn::project;
using cpinn::projection_schedule;
using cpinn::soft_update;

namespace {

template <class P>
double residual_norm(const InvariantManifold<P>& man, const std::vector<double>& u) {
  const auto g = constraint_residual(man, std::span<const double>(u));
  double worst = 0.0;
  for (double v : g) worst = std::max(worst, std::abs(v));
  return worst;
}

/// Independent oracle for the projection: solves the same Lagrange system
///   g(u_tilde + G(u_tilde)^T lambda) = 0
/// by full Newton with a freshly assembled Jacobian G(u(lambda)) G(u_tilde)^T
/// at every step, instead of the frozen-Gram simplified iteration.
template <class P>
std::vector<double> lagrange_solve_oracle(const InvariantManifold<P>& man,
                                          const std::vector<double>& u_tilde) {
  const int n = man.dim();
  const int m = man.integrals_count();
  const auto jac0 = constraint_jacobian(man, std::span<const double>(u_tilde));
  std::vector<double> lambda(static_cast<std::size_t>(m), 0.0);
  std::vector<double> u(u_tilde);
  for (int it = 0; it < 200; ++it) {
    auto g = constraint_residual(man, std::span<const double>(u));
    double norm = 0.0;
    for (double v : g) norm = std::max(norm, std::abs(v));
    if (norm < 1e-14) break;
    const auto jac_u = constraint_jacobian(man, std::span<const double>(u));
    // J[i][k] = grad I^i(u) . grad I^k(u_tilde)
    std::vector<double> J(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k)
        for (int j = 0; j < n; ++j)
          J[static_cast<std::size_t>(i) * m + k] += jac_u[static_cast<std::size_t>(i) * n + j] *
                                                    jac0[static_cast<std::size_t>(k) * n + j];
    // Dense Gaussian elimination with partial pivoting on [J | g].
    std::vector<double> step(g.begin(), g.end());
    for (int col = 0; col < m; ++col) {
      int piv = col;
      for (int r = col + 1; r < m; ++r)
        if (std::abs(J[static_cast<std::size_t>(r) * m + col]) >
            std::abs(J[static_cast<std::size_t>(piv) * m + col]))
          piv = r;
      for (int c = 0; c < m; ++c)
        std::swap(J[static_cast<std::size_t>(col) * m + c], J[static_cast<std::size_t>(piv) * m + c]);
      std::swap(step[static_cast<std::size_t>(col)], step[static_cast<std::size_t>(piv)]);
      for (int r = col + 1; r < m; ++r) {
        const double f = J[static_cast<std::size_t>(r) * m + col] / J[static_cast<std::size_t>(col) * m + col];
        for (int c = col; c < m; ++c)
          J[static_cast<std::size_t>(r) * m + c] -= f * J[static_cast<std::size_t>(col) * m + c];
        step[static_cast<std::size_t>(r)] -= f * step[static_cast<std::size_t>(col)];
      }
    }
    for (int r = m - 1; r >= 0; --r) {
      for (int c = r + 1; c < m; ++c)
        step[static_cast<std::size_t>(r)] -= J[static_cast<std::size_t>(r) * m + c] * step[static_cast<std::size_t>(c)];
      step[static_cast<std::size_t>(r)] /= J[static_cast<std::size_t>(r) * m + r];
    }
    for (int i = 0; i < m; ++i) lambda[static_cast<std::size_t>(i)] -= step[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      double corr = 0.0;
      for (int i = 0; i < m; ++i)
        corr += jac0[static_cast<std::size_t>(i) * n + j] * lambda[static_cast<std::size_t>(i)];
      u[static_cast<std::size_t>(j)] = u_tilde[static_cast<std::size_t>(j)] + corr;
    }
  }
  return u;
}

}  // namespace

TEST_CASE("constraint residual and jacobian") {
  SECTION("harmonic oscillator anchored at (1,1)") {
    const auto man = anchor_manifold(HarmonicOscillator{}, std::vector<double>{1.0, 1.0});
    const auto at_anchor = constraint_residual(man, std::vector<double>{1.0, 1.0});
    REQUIRE(at_anchor[0] == 0.0);
    const auto off = constraint_residual(man, std::vector<double>{2.0, 0.0});
    REQUIRE(off[0] == 1.0);
    const auto jac = constraint_jacobian(man, std::vector<double>{1.0, 1.0});
    REQUIRE(jac == std::vector<double>{1.0, 1.0});
  }

  SECTION("rigid body anchored at (1,1,1)") {
    const auto man = anchor_manifold(RigidBody{}, std::vector<double>{1.0, 1.0, 1.0});
    const auto g = constraint_residual(man, std::vector<double>{1.0, 1.0, 1.0});
    REQUIRE(g[0] == 0.0);
    REQUIRE(g[1] == 0.0);
  }

  SECTION("Lorenz H row at (1,1,1)") {
    const auto man = anchor_manifold(ConservativeLorenz{}, std::vector<double>{1.0, 1.0, 1.0});
    const auto jac = constraint_jacobian(man, std::vector<double>{1.0, 1.0, 1.0});
    REQUIRE(jac[0] == -1.0);
    REQUIRE(jac[1] == 0.0);
    REQUIRE(jac[2] == 1.0);
  }

  SECTION("vortex linear momentum rows") {
    PointVortex p;
    auto gen = test_support::rng(3);
    const auto u0 = p.sample_initial_condition(gen);
    const auto man = anchor_manifold(p, u0);
    const auto jac = constraint_jacobian(man, u0);
    const int n = man.dim();
    REQUIRE(std::vector<double>(jac.begin() + 2 * n, jac.begin() + 3 * n) ==
            std::vector<double>{1.0, 0.0, 1.0, 0.0, 1.0, 0.0});
  }
}

TEST_CASE("project") {
  const ProjectionConfig cfg;

  SECTION("points on the manifold stay put") {
    const auto man = anchor_manifold(HarmonicOscillator{}, std::vector<double>{1.0, 1.0});
    const double r = std::sqrt(2.0);
    for (double theta : {0.0, 0.5, 2.0, 4.0}) {
      const std::vector<double> u{r * std::cos(theta), r * std::sin(theta)};
      for (int p : {1, 3, 10}) {
        const auto proj = project(man, std::span<const double>(u), p, cfg);
        REQUIRE(std::abs(proj[0] - u[0]) <= 1e-14);
        REQUIRE(std::abs(proj[1] - u[1]) <= 1e-14);
      }
    }
  }

  SECTION("p = 0 is the identity, bitwise") {
    const auto man = anchor_manifold(RigidBody{}, std::vector<double>{1.0, 1.0, 1.0});
    const std::vector<double> u{1.3, -0.2, 0.9};
    const auto proj = project(man, std::span<const double>(u), 0, cfg);
    REQUIRE(proj == u);
  }

  SECTION("circle candidate projects radially onto (1,1)") {
    const auto man = anchor_manifold(HarmonicOscillator{}, std::vector<double>{1.0, 1.0});
    const std::vector<double> u{1.1, 1.1};
    const auto proj = project(man, std::span<const double>(u), 10, cfg);
    REQUIRE_THAT(proj[0], Catch::Matchers::WithinAbs(1.0, 1e-10));
    REQUIRE_THAT(proj[1], Catch::Matchers::WithinAbs(1.0, 1e-10));
  }

  SECTION("rigid body candidate lands on both iso-surfaces and matches the oracle") {
    const auto man = anchor_manifold(RigidBody{}, std::vector<double>{1.0, 1.0, 1.0});
    const std::vector<double> u{1.01, 1.0, 1.0};
    const auto proj = project(man, std::span<const double>(u), 10, cfg);
    const auto g = constraint_residual(man, std::span<const double>(proj));
    REQUIRE(std::abs(g[0]) <= 1e-12);
    REQUIRE(std::abs(g[1]) <= 1e-12);
    const auto oracle = lagrange_solve_oracle(man, u);
    for (int j = 0; j < 3; ++j)
      REQUIRE_THAT(proj[static_cast<std::size_t>(j)],
                   Catch::Matchers::WithinAbs(oracle[static_cast<std::size_t>(j)], 1e-8));
  }

  SECTION("singular constraint gram matrix is reported") {
    // grad H vanishes at the origin, so the Gram matrix is singular there.
    const auto man = anchor_manifold(HarmonicOscillator{}, std::vector<double>{1.0, 1.0});
    const std::vector<double> u{0.0, 0.0};
    REQUIRE_THROWS_AS(project(man, std::span<const double>(u), 3, cfg),
                      cpinn::SingularConstraintError);
  }
}

TEST_CASE("projection schedule") {
  REQUIRE(projection_schedule(0, 5000, 10) == 0);
  REQUIRE(projection_schedule(0, 1, 7) == 0);
  REQUIRE(projection_schedule(2500, 5000, 4) == 2);
  REQUIRE(projection_schedule(5000, 5000, 4) == 4);  // clamped from the raw value 5

  SECTION("non-decreasing, starts at 0, ends at P") {
    const long long E = 777;
    const int P = 6;
    int prev = 0;
    for (long long e = 0; e <= E; ++e) {
      const int p = projection_schedule(e, E, P);
      REQUIRE(p >= prev);
      REQUIRE(p <= P);
      prev = p;
    }
    REQUIRE(projection_schedule(E, E, P) == P);
  }
}

TEST_CASE("soft update") {
  const std::vector<double> a{1.0, 0.0};
  const std::vector<double> b{0.0, 1.0};
  REQUIRE(soft_update(std::span<const double>(a), std::span<const double>(b), 0.0) == a);
  REQUIRE(soft_update(std::span<const double>(a), std::span<const double>(b), 1.0) == b);
  REQUIRE(soft_update(std::span<const double>(a), std::span<const double>(b), 0.5) ==
          std::vector<double>{0.5, 0.5});
  const std::vector<double> short_vec{1.0};
  REQUIRE_THROWS_AS(soft_update(std::span<const double>(a), std::span<const double>(short_vec), 0.5),
                    cpinn::ShapeError);
}

namespace {

template <class P>
void check_idempotence_and_monotonicity(P problem, double perturb) {
  auto gen = test_support::rng(41);
  const ProjectionConfig cfg;
  std::uniform_real_distribution<double> delta(-perturb, perturb);
  for (int rep = 0; rep < 100; ++rep) {
    const auto anchor = problem.sample_initial_condition(gen);
    const auto man = anchor_manifold(problem, anchor);
    std::vector<double> u = anchor;
    for (double& x : u) x += delta(gen);
    REQUIRE(residual_norm(man, u) <= 0.1);

    // Residual decreases monotonically in the iteration count until it
    // reaches the rounding floor.
    double prev_norm = residual_norm(man, u);
    for (int p = 1; p <= 10; ++p) {
      const auto proj = project(man, std::span<const double>(u), p, cfg);
      const double norm = residual_norm(man, proj);
      REQUIRE((norm <= prev_norm || norm <= 1e-13));
      prev_norm = norm;
    }

    // Idempotence in the limit.
    const auto once = project(man, std::span<const double>(u), 10, cfg);
    const auto twice = project(man, std::span<const double>(once), 10, cfg);
    REQUIRE(residual_norm(man, twice) <= 1e-13);
  }
}

}  // namespace

TEST_CASE("projection converges on all five benchmark manifolds") {
  check_idempotence_and_monotonicity(HarmonicOscillator{}, 0.02);
  check_idempotence_and_monotonicity(RigidBody{}, 0.005);
  check_idempotence_and_monotonicity(DoublePendulum{}, 0.002);
  check_idempotence_and_monotonicity(ConservativeLorenz{}, 0.02);
  check_idempotence_and_monotonicity(PointVortex{}, 0.002);
}

TEST_CASE("linear integrals project exactly in one iteration") {
  PointVortex problem;
  auto gen = test_support::rng(43);
  std::uniform_real_distribution<double> delta(-0.05, 0.05);
  for (int rep = 0; rep < 50; ++rep) {
    const auto anchor = problem.sample_initial_condition(gen);
    const auto man = anchor_manifold(problem, anchor);
    std::vector<double> u = anchor;
    for (double& x : u) x += delta(gen);
    const auto proj = project(man, std::span<const double>(u), 1, ProjectionConfig{});
    const auto g = constraint_residual(man, std::span<const double>(proj));
    REQUIRE(std::abs(g[2]) <= 1e-13);  // Px
    REQUIRE(std::abs(g[3]) <= 1e-13);  // Py
  }
}

TEST_CASE("projection is differentiable in the candidate") {
  auto gen = test_support::rng(47);
  const ProjectionConfig cfg;

  const auto check = [&](auto problem, std::vector<double> anchor, double perturb) {
    const auto man = anchor_manifold(problem, anchor);
    std::uniform_real_distribution<double> delta(-perturb, perturb);
    std::vector<double> u = anchor;
    for (double& x : u) x += delta(gen);
    for (int p : {1, 2, 5}) {
      for (int comp = 0; comp < man.dim(); ++comp) {
        const auto f = [&](auto xs) {
          using S = std::remove_cvref_t<decltype(xs[0])>;
          const auto out = project(man, std::span<const S>(xs), p, cfg);
          return out[static_cast<std::size_t>(comp)];
        };
        REQUIRE(finite_difference_check(f, u, 1e-6) <= 1e-5);
      }
    }
  };

  check(HarmonicOscillator{}, {1.0, 1.0}, 0.05);
  check(RigidBody{}, {1.0, 1.0, 1.0}, 0.01);
  check(ConservativeLorenz{}, {1.0, 1.0, 1.0}, 0.05);
}
