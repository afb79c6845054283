#pragma once

#include <span>
#include <string>
#include <vector>

#include "cpinn/errors.hpp"
#include "cpinn/networks.hpp"
#include "cpinn/projection.hpp"

namespace cpinn {

enum class TrajectorySource {
  rk4,
  pinn_standard,
  pinn_conservative,
  deeponet_standard,
  deeponet_conservative,
};

inline std::string to_string(TrajectorySource s) {
  switch (s) {
    case TrajectorySource::rk4: return "rk4";
    case TrajectorySource::pinn_standard: return "pinn_standard";
    case TrajectorySource::pinn_conservative: return "pinn_conservative";
    case TrajectorySource::deeponet_standard: return "deeponet_standard";
    case TrajectorySource::deeponet_conservative: return "deeponet_conservative";
  }
  return "unknown";
}

struct Trajectory {
  std::vector<double> times;                        // strictly increasing
  std::vector<std::vector<double>> states;          // one state per time
  std::vector<std::vector<double>> invariant_values;  // I(u(t)) per time
  TrajectorySource source = TrajectorySource::rk4;
};

namespace detail {

template <class Problem>
std::vector<double> invariants_at(const Problem& problem, const std::vector<double>& u) {
  std::vector<double> inv(static_cast<std::size_t>(problem.num_integrals()));
  problem.invariants(std::span<const double>(u), std::span<double>(inv));
  return inv;
}

}  // namespace detail

/// One classical four-stage Runge-Kutta step.
template <class Problem>
std::vector<double> rk4_step(const Problem& problem, double t, std::span<const double> u,
                             double h) {
  if (!(h > 0.0)) throw Error("rk4_step: step size must be positive");
  const std::size_t n = u.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), stage(n), out(n);
  problem.rhs(t, u, std::span<double>(k1));
  for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.5 * h * k1[i];
  problem.rhs(t + 0.5 * h, std::span<const double>(stage), std::span<double>(k2));
  for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.5 * h * k2[i];
  problem.rhs(t + 0.5 * h, std::span<const double>(stage), std::span<double>(k3));
  for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + h * k3[i];
  problem.rhs(t + h, std::span<const double>(stage), std::span<double>(k4));
  for (std::size_t i = 0; i < n; ++i)
    out[i] = u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

/// Uniform-step rollout over [t0, tf], recording states and invariant values
/// at every step (steps + 1 samples including the endpoints).
template <class Problem>
Trajectory rk4_integrate(const Problem& problem, std::span<const double> u0, double t0, double tf,
                         int steps) {
  if (steps < 1) throw Error("rk4_integrate: need at least one step");
  if (!(tf > t0)) throw Error("rk4_integrate: tf must exceed t0");
  Trajectory traj;
  traj.source = TrajectorySource::rk4;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  const double h = (tf - t0) / steps;
  std::vector<double> u(u0.begin(), u0.end());
  traj.times.push_back(t0);
  traj.states.push_back(u);
  traj.invariant_values.push_back(detail::invariants_at(problem, u));
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + (tf - t0) * (static_cast<double>(k) / steps);
    u = rk4_step(problem, t, std::span<const double>(u), h);
    traj.times.push_back(t0 + (tf - t0) * (static_cast<double>(k + 1) / steps));
    traj.states.push_back(u);
    traj.invariant_values.push_back(detail::invariants_at(problem, u));
  }
  return traj;
}

struct RolloutOptions {
  bool conservative = false;
  int projection_steps = 10;
  int samples_per_step = 10;
  ProjectionConfig projection{};
};

/// Long-horizon rollout of a trained DeepONet: iterate u <- G(u)(t0 + dt).
/// The conservative variant anchors the manifold at the rollout's original
/// initial condition and applies the full projection to every emitted state,
/// so the first integrals hold across the entire horizon.
template <class Problem>
Trajectory deeponet_timestep(const DeepONetParams& params, const Problem& problem,
                             std::span<const double> u0, int n_steps,
                             const RolloutOptions& opts = {}) {
  if (n_steps < 1) throw Error("deeponet_timestep: need at least one step");
  if (opts.samples_per_step < 1) throw Error("deeponet_timestep: need at least one sample per step");
  if (static_cast<int>(u0.size()) != params.state_dim())
    throw ShapeError("deeponet_timestep: state length mismatch");

  const double dt = params.dt;
  const double t0 = params.t0;
  std::vector<double> anchors(static_cast<std::size_t>(problem.num_integrals()));
  problem.invariants(u0, std::span<double>(anchors));

  Trajectory traj;
  traj.source = opts.conservative ? TrajectorySource::deeponet_conservative
                                  : TrajectorySource::deeponet_standard;
  std::vector<double> u(u0.begin(), u0.end());
  traj.times.push_back(t0);
  traj.states.push_back(u);
  traj.invariant_values.push_back(detail::invariants_at(problem, u));

  for (int k = 0; k < n_steps; ++k) {
    std::vector<double> step_end;
    for (int j = 1; j <= opts.samples_per_step; ++j) {
      const double local = dt * (static_cast<double>(j) / opts.samples_per_step);
      std::vector<double> v = deeponet_ansatz_forward(params, u, t0 + local);
      if (opts.conservative && opts.projection_steps > 0) {
        try {
          v = detail::project_iterations(problem, std::span<const double>(anchors),
                                         std::span<const double>(v), opts.projection_steps,
                                         opts.projection)
                  .second;
        } catch (const Error& err) {
          throw ProjectionDivergenceError("deeponet_timestep: projection failed at step " +
                                          std::to_string(k) + ": " + err.what());
        }
      }
      traj.times.push_back(t0 + dt * (k + static_cast<double>(j) / opts.samples_per_step));
      traj.states.push_back(v);
      traj.invariant_values.push_back(detail::invariants_at(problem, v));
      if (j == opts.samples_per_step) step_end = std::move(v);
    }
    u = std::move(step_end);
  }
  return traj;
}

}  // namespace cpinn
