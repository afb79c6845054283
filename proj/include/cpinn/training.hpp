#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cpinn/autodiff.hpp"
#include "cpinn/errors.hpp"
#include "cpinn/networks.hpp"
#include "cpinn/projection.hpp"

namespace cpinn {

struct TrainConfig {
  int epochs = 5000;
  double learning_rate = 1e-3;
  int projection_cap = 10;
  int collocation = 0;  // 0 -> mode default: 2000 (pinn), 5000 (deeponet)
  std::uint64_t seed = 0;
  bool conservative = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::vector<int> hidden_layers{40, 40, 40, 40};
  int latent_width = 40;
  ProjectionConfig projection{};
};

inline void validate_train_config(const TrainConfig& cfg, int effective_collocation) {
  if (cfg.epochs < 1) throw Error("train config: epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw Error("train config: learning rate must be positive");
  if (effective_collocation < 2) throw Error("train config: collocation count must be >= 2");
  if (cfg.projection_cap < 0) throw Error("train config: projection cap must be >= 0");
  if (cfg.hidden_layers.empty()) throw Error("train config: need at least one hidden layer");
  for (int h : cfg.hidden_layers)
    if (h <= 0) throw Error("train config: hidden layer sizes must be positive");
  if (cfg.latent_width <= 0) throw Error("train config: latent width must be positive");
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long long step = 0;

  explicit AdamState(std::size_t n) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One Adam update with bias correction, in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adam_step: size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw TrainingError("adam_step: non-finite gradient");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = beta1 * state.first_moment[i] + (1.0 - beta1) * g;
    state.second_moment[i] = beta2 * state.second_moment[i] + (1.0 - beta2) * g * g;
    const double mhat = state.first_moment[i] / bc1;
    const double vhat = state.second_moment[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// ---------------------------------------------------------------------------
// Collocation sets.
// ---------------------------------------------------------------------------

struct PinnCollocation {
  std::vector<double> times;  // N+1 equispaced, t_0 = t0 < ... < t_N = tf
};

struct OperatorPoint {
  std::vector<double> u0;
  double t = 0.0;
  std::vector<double> anchors;  // I(u0): per-sample manifold reference values
};

struct OperatorCollocation {
  std::vector<OperatorPoint> points;
};

template <class Problem>
PinnCollocation sample_pinn_collocation(const Problem& problem, int n) {
  PinnCollocation col;
  col.times.reserve(static_cast<std::size_t>(n) + 1);
  const double t0 = problem.t_start();
  const double tf = problem.t_final();
  for (int i = 0; i <= n; ++i)
    col.times.push_back(t0 + (tf - t0) * (static_cast<double>(i) / n));
  return col;
}

template <class Problem>
OperatorCollocation sample_operator_collocation(const Problem& problem, int n,
                                                std::uint64_t seed) {
  OperatorCollocation col;
  col.points.reserve(static_cast<std::size_t>(n));
  std::mt19937_64 rng(seed);
  const double t0 = problem.t_start();
  std::uniform_real_distribution<double> tdist(t0, t0 + problem.deeponet_dt());
  for (int i = 0; i < n; ++i) {
    OperatorPoint pt;
    pt.u0 = problem.sample_initial_condition(rng);
    pt.t = tdist(rng);
    pt.anchors.resize(static_cast<std::size_t>(problem.num_integrals()));
    problem.invariants(std::span<const double>(pt.u0), std::span<double>(pt.anchors));
    col.points.push_back(std::move(pt));
  }
  return col;
}

// ---------------------------------------------------------------------------
// Physics-informed loss.
//
// Per collocation point the residual is du/dt - f(t, u), evaluated on the
// conservative composition (projection + soft update) when p > 0. The time
// derivative rides along in forward mode while the scalar S carries the
// parameter dependence (double for plain evaluation, Var during training).
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
struct ScalarFactory {
  S make(double v) const { return v; }
};
template <>
struct ScalarFactory<Var> {
  Tape* tape = nullptr;
  Var make(double v) const { return Var::constant(*tape, v); }
};

/// Hard-constraint PINN ansatz over externally supplied parameter scalars.
template <class S>
struct PinnEval {
  std::span<const int> sizes;
  std::span<const S> params;
  std::span<const double> u0;
  double t0 = 0.0;
  double tf = 1.0;

  std::vector<Dual<S>> operator()(const Dual<S>& t) const {
    return pinn_ansatz_eval(sizes, params, t, u0, t0, tf);
  }
};

/// DeepONet ansatz over externally supplied parameter scalars; the branch
/// input u0 is plain data, so only the trunk sees the time tangent.
template <class S>
struct DeepONetEval {
  const DeepONetParams* arch = nullptr;
  std::span<const S> branch_params;
  std::span<const S> trunk_params;
  std::span<const double> u0;

  std::vector<Dual<S>> operator()(const Dual<S>& t) const {
    return deeponet_ansatz_eval(*arch, branch_params, trunk_params, u0, t);
  }
};

/// Squared residual norm of one collocation point. `anchors` are the
/// manifold reference values for this point; `p` and `s` realize the
/// projected-and-blended composition. A diverging projection falls back to
/// the unprojected output (p = 0 for this point) and bumps `divergences`.
template <class S, class Problem, class Model>
S point_squared_residual(const Model& model, const Problem& problem,
                         std::span<const double> anchors, double t, int p, double s,
                         const ProjectionConfig& cfg, const ScalarFactory<S>& mk,
                         double* point_max_g, int* divergences) {
  Dual<S> td{mk.make(t), mk.make(1.0)};
  std::vector<Dual<S>> u = model(td);
  if (p > 0) {
    try {
      auto pair = project_iterations(problem, anchors, std::span<const Dual<S>>(u), p, cfg);
      u = soft_update(std::span<const Dual<S>>(pair.first), std::span<const Dual<S>>(pair.second),
                      s);
    } catch (const ProjectionDivergenceError&) {
      if (divergences) ++(*divergences);
    } catch (const SingularConstraintError&) {
      // A rank-deficient Gram matrix at this candidate is the same failure
      // mode as divergence: the projection is unusable for this point.
      if (divergences) ++(*divergences);
    }
  }
  const int n = problem.dim();
  std::vector<S> values;
  values.reserve(static_cast<std::size_t>(n));
  for (const auto& ui : u) values.push_back(ui.v);
  std::vector<S> f(static_cast<std::size_t>(n), values[0]);
  problem.rhs(t, std::span<const S>(values), std::span<S>(f));
  S acc = (u[0].d - f[0]) * (u[0].d - f[0]);
  for (int i = 1; i < n; ++i) {
    S r = u[static_cast<std::size_t>(i)].d - f[static_cast<std::size_t>(i)];
    acc = acc + r * r;
  }
  if (point_max_g) {
    std::vector<double> uv(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) uv[i] = value_of(values[i]);
    std::vector<double> inv(anchors.size());
    problem.invariants(std::span<const double>(uv), std::span<double>(inv));
    double worst = 0.0;
    for (std::size_t i = 0; i < inv.size(); ++i)
      worst = std::max(worst, std::abs(inv[i] - anchors[i]));
    *point_max_g = worst;
  }
  return acc;
}

}  // namespace detail

/// Mean squared residual norm over the PINN collocation times. `model` must
/// be callable as model(Dual<double>) -> vector of Dual<double>.
template <class Problem, class Model>
double physics_loss(const Model& model, const Problem& problem, const PinnCollocation& col,
                    std::span<const double> anchors = {}, int p = 0, double s = 1.0,
                    const ProjectionConfig& cfg = {}) {
  double total = 0.0;
  const detail::ScalarFactory<double> mk;
  for (double t : col.times)
    total +=
        detail::point_squared_residual<double>(model, problem, anchors, t, p, s, cfg, mk,
                                               nullptr, nullptr);
  return total / static_cast<double>(col.times.size());
}

/// Operator-mode loss: mean over (u0, t) pairs, each pair anchored at its
/// own initial condition.
template <class Problem>
double physics_loss(const DeepONetParams& params, const Problem& problem,
                    const OperatorCollocation& col, int p = 0, double s = 1.0,
                    const ProjectionConfig& cfg = {}) {
  double total = 0.0;
  const detail::ScalarFactory<double> mk;
  for (const auto& pt : col.points) {
    detail::DeepONetEval<double> model{&params, std::span<const double>(params.branch.values),
                                       std::span<const double>(params.trunk.values),
                                       std::span<const double>(pt.u0)};
    total += detail::point_squared_residual<double>(model, problem, pt.anchors, pt.t, p, s, cfg,
                                                    mk, nullptr, nullptr);
  }
  return total / static_cast<double>(col.points.size());
}

inline double physics_loss_of_ansatz(const PinnAnsatz& ansatz, const auto& problem,
                                     const PinnCollocation& col,
                                     std::span<const double> anchors = {}, int p = 0,
                                     double s = 1.0, const ProjectionConfig& cfg = {}) {
  detail::PinnEval<double> model{std::span<const int>(ansatz.net.layer_sizes),
                                 std::span<const double>(ansatz.net.values),
                                 std::span<const double>(ansatz.u0), ansatz.t0, ansatz.tf};
  return physics_loss(model, problem, col, anchors, p, s, cfg);
}

// ---------------------------------------------------------------------------
// Training loops (Algorithm: schedule + projection + soft update + Adam).
// ---------------------------------------------------------------------------

struct TrainReport {
  std::vector<double> loss;                      // one entry per epoch
  std::vector<double> max_constraint_violation;  // one entry per epoch
  double wall_time_seconds = 0.0;
  double final_max_constraint = 0.0;  // with the full projection cap applied
  std::vector<double> final_parameters;
  int projection_divergences = 0;
};

struct PinnTrainResult {
  TrainReport report;
  PinnAnsatz model;
};

struct DeepONetTrainResult {
  TrainReport report;
  DeepONetParams model;
};

namespace detail {

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
  double max_g = 0.0;
  int divergences = 0;
};

/// Shared epoch body: distributes leaves for theta, then per collocation
/// point rewinds the tape to the leaf mark, records the residual and runs
/// one reverse sweep, accumulating leaf adjoints. The mean over points is
/// taken at the end; the reduction order is the collocation order.
template <class Problem, class PointFn>
LossGrad epoch_loss_and_gradient(Tape& tape, std::span<const double> theta,
                                 const Problem& problem, std::size_t n_points,
                                 PointFn&& point_fn) {
  (void)problem;
  tape.rewind(0);
  std::vector<Var> vars;
  vars.reserve(theta.size());
  for (double th : theta) vars.push_back(Var::leaf(tape, th));
  const std::size_t mark = tape.size();

  LossGrad out;
  out.grad.assign(theta.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) {
    tape.rewind(mark);
    double point_g = 0.0;
    Var sq = point_fn(std::span<const Var>(vars), i, &point_g, &out.divergences);
    const auto adjoints = tape.reverse(sq.index());
    for (std::size_t j = 0; j < theta.size(); ++j) out.grad[j] += adjoints[j];
    total += sq.value();
    out.max_g = std::max(out.max_g, point_g);
  }
  const double inv_n = 1.0 / static_cast<double>(n_points);
  out.loss = total * inv_n;
  for (double& g : out.grad) g *= inv_n;
  return out;
}

inline void warn_divergences(int count, int epoch) {
  if (count > 0)
    std::cerr << "[cpinn] warning: projection diverged at " << count
              << " collocation point(s) in epoch " << epoch
              << "; unprojected output used there\n";
}

}  // namespace detail

/// Train a (conservative) PINN on one problem instance per the projection
/// schedule: at epoch e the output is blended between p(e)-1 and p(e)
/// projection iterations with weight s(e) = e/E; conservative = false pins
/// p = 0 throughout, which is the standard PINN.
template <class Problem>
PinnTrainResult train_pinn(const Problem& problem, const TrainConfig& cfg) {
  const int n_col = cfg.collocation > 0 ? cfg.collocation : 2000;
  validate_train_config(cfg, n_col);
  if (cfg.conservative && problem.num_integrals() < 1)
    throw Error("train_pinn: conservative training needs at least one first integral");

  std::vector<int> sizes;
  sizes.push_back(1);
  for (int h : cfg.hidden_layers) sizes.push_back(h);
  sizes.push_back(problem.dim());
  MlpParams net = init_mlp(sizes, cfg.seed);

  std::mt19937_64 ic_rng(cfg.seed + 1);
  const std::vector<double> u0 = problem.sample_initial_condition(ic_rng);
  std::vector<double> anchors(static_cast<std::size_t>(problem.num_integrals()));
  problem.invariants(std::span<const double>(u0), std::span<double>(anchors));

  const PinnCollocation col = sample_pinn_collocation(problem, n_col);
  const double t0 = problem.t_start();
  const double tf = problem.t_final();

  std::vector<double> theta = net.values;
  AdamState adam(theta.size());
  Tape tape;

  TrainReport report;
  report.loss.reserve(static_cast<std::size_t>(cfg.epochs));
  report.max_constraint_violation.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto t_begin = std::chrono::steady_clock::now();

  for (int e = 0; e < cfg.epochs; ++e) {
    const double s = static_cast<double>(e) / cfg.epochs;
    const int p = cfg.conservative ? projection_schedule(e, cfg.epochs, cfg.projection_cap) : 0;
    auto lg = detail::epoch_loss_and_gradient(
        tape, theta, problem, col.times.size(),
        [&](std::span<const Var> vars, std::size_t i, double* point_g, int* div) {
          detail::PinnEval<Var> model{std::span<const int>(sizes), vars,
                                      std::span<const double>(u0), t0, tf};
          const detail::ScalarFactory<Var> mk{&tape};
          return detail::point_squared_residual<Var>(model, problem,
                                                     std::span<const double>(anchors),
                                                     col.times[i], p, s, cfg.projection, mk,
                                                     point_g, div);
        });
    if (!std::isfinite(lg.loss))
      throw TrainingError("train_pinn: non-finite loss at epoch " + std::to_string(e));
    detail::warn_divergences(lg.divergences, e);
    report.projection_divergences += lg.divergences;
    try {
      adam_step(theta, lg.grad, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    } catch (const TrainingError& err) {
      throw TrainingError(std::string(err.what()) + " at epoch " + std::to_string(e));
    }
    report.loss.push_back(lg.loss);
    report.max_constraint_violation.push_back(lg.max_g);
  }

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  net.values = theta;
  PinnAnsatz model = make_pinn_ansatz(std::move(net), t0, tf, u0);

  // Conservation of the final model, measured as at inference time: the full
  // projection cap applied to the raw output.
  const int p_final = cfg.conservative ? cfg.projection_cap : 0;
  const auto man = anchor_manifold(problem, u0);
  double worst = 0.0;
  for (double t : col.times) {
    auto u = pinn_ansatz_forward(model, t);
    if (p_final > 0) u = project(man, u, p_final, cfg.projection);
    std::vector<double> inv(anchors.size());
    problem.invariants(std::span<const double>(u), std::span<double>(inv));
    for (std::size_t i = 0; i < inv.size(); ++i)
      worst = std::max(worst, std::abs(inv[i] - anchors[i]));
  }
  report.final_max_constraint = worst;
  report.final_parameters = theta;
  return {std::move(report), std::move(model)};
}

/// Operator-learning variant: collocation pairs (u0, t), each with its own
/// manifold anchored at I(u0).
template <class Problem>
DeepONetTrainResult train_deeponet(const Problem& problem, const TrainConfig& cfg) {
  const int n_col = cfg.collocation > 0 ? cfg.collocation : 5000;
  validate_train_config(cfg, n_col);
  if (cfg.conservative && problem.num_integrals() < 1)
    throw Error("train_deeponet: conservative training needs at least one first integral");

  const int n = problem.dim();
  const int width = n * cfg.latent_width;
  std::vector<int> branch_sizes{n};
  std::vector<int> trunk_sizes{1};
  for (int h : cfg.hidden_layers) {
    branch_sizes.push_back(h);
    trunk_sizes.push_back(h);
  }
  branch_sizes.push_back(width);
  trunk_sizes.push_back(width);

  DeepONetParams arch =
      make_deeponet(init_mlp(branch_sizes, cfg.seed), init_mlp(trunk_sizes, cfg.seed + 1),
                    cfg.latent_width, problem.t_start(), problem.deeponet_dt());

  const OperatorCollocation col = sample_operator_collocation(problem, n_col, cfg.seed + 2);

  const std::size_t nb = arch.branch.values.size();
  std::vector<double> theta = arch.branch.values;
  theta.insert(theta.end(), arch.trunk.values.begin(), arch.trunk.values.end());
  AdamState adam(theta.size());
  Tape tape;

  TrainReport report;
  report.loss.reserve(static_cast<std::size_t>(cfg.epochs));
  report.max_constraint_violation.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto t_begin = std::chrono::steady_clock::now();

  for (int e = 0; e < cfg.epochs; ++e) {
    const double s = static_cast<double>(e) / cfg.epochs;
    const int p = cfg.conservative ? projection_schedule(e, cfg.epochs, cfg.projection_cap) : 0;
    auto lg = detail::epoch_loss_and_gradient(
        tape, theta, problem, col.points.size(),
        [&](std::span<const Var> vars, std::size_t i, double* point_g, int* div) {
          const auto& pt = col.points[i];
          detail::DeepONetEval<Var> model{&arch, vars.subspan(0, nb), vars.subspan(nb),
                                          std::span<const double>(pt.u0)};
          const detail::ScalarFactory<Var> mk{&tape};
          return detail::point_squared_residual<Var>(model, problem,
                                                     std::span<const double>(pt.anchors), pt.t, p,
                                                     s, cfg.projection, mk, point_g, div);
        });
    if (!std::isfinite(lg.loss))
      throw TrainingError("train_deeponet: non-finite loss at epoch " + std::to_string(e));
    detail::warn_divergences(lg.divergences, e);
    report.projection_divergences += lg.divergences;
    try {
      adam_step(theta, lg.grad, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    } catch (const TrainingError& err) {
      throw TrainingError(std::string(err.what()) + " at epoch " + std::to_string(e));
    }
    report.loss.push_back(lg.loss);
    report.max_constraint_violation.push_back(lg.max_g);
  }

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(nb),
            arch.branch.values.begin());
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(nb), theta.end(),
            arch.trunk.values.begin());

  const int p_final = cfg.conservative ? cfg.projection_cap : 0;
  double worst = 0.0;
  for (const auto& pt : col.points) {
    auto u = deeponet_ansatz_forward(arch, pt.u0, pt.t);
    if (p_final > 0)
      u = detail::project_iterations(problem, std::span<const double>(pt.anchors),
                                     std::span<const double>(u), p_final, cfg.projection)
              .second;
    std::vector<double> inv(pt.anchors.size());
    problem.invariants(std::span<const double>(u), std::span<double>(inv));
    for (std::size_t i = 0; i < inv.size(); ++i)
      worst = std::max(worst, std::abs(inv[i] - pt.anchors[i]));
  }
  report.final_max_constraint = worst;
  report.final_parameters = theta;
  return {std::move(report), std::move(arch)};
}

}  // namespace cpinn
