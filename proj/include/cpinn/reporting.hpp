#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpinn/errors.hpp"
#include "cpinn/reference.hpp"
#include "cpinn/training.hpp"

namespace cpinn {

namespace detail {

/// Shortest text form that round-trips a double exactly (17 significant
/// digits).
inline void append_g17(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

/// Header `t,u0,u1,...,I0,I1,...`, one row per sample, full precision.
inline void emit_trajectory_csv(const Trajectory& traj, const std::string& path) {
  if (traj.times.empty()) throw Error("emit_trajectory_csv: empty trajectory");
  if (traj.states.size() != traj.times.size() ||
      traj.invariant_values.size() != traj.times.size())
    throw ShapeError("emit_trajectory_csv: inconsistent trajectory");
  std::string out = "t";
  for (std::size_t i = 0; i < traj.states.front().size(); ++i)
    out += ",u" + std::to_string(i);
  for (std::size_t i = 0; i < traj.invariant_values.front().size(); ++i)
    out += ",I" + std::to_string(i);
  out += '\n';
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    detail::append_g17(out, traj.times[k]);
    for (double v : traj.states[k]) {
      out += ',';
      detail::append_g17(out, v);
    }
    for (double v : traj.invariant_values[k]) {
      out += ',';
      detail::append_g17(out, v);
    }
    out += '\n';
  }
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << out)) throw IoError("emit_trajectory_csv: cannot write " + path);
}

/// Inverse of emit_trajectory_csv (the source tag is not stored in the file).
inline Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_trajectory_csv: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw IoError("read_trajectory_csv: missing header");
  std::size_t n_state = 0, n_inv = 0;
  {
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.starts_with("u")) ++n_state;
      if (col.starts_with("I")) ++n_inv;
    }
  }
  Trajectory traj;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 1 + n_state + n_inv)
      throw IoError("read_trajectory_csv: malformed row in " + path);
    traj.times.push_back(row[0]);
    traj.states.emplace_back(row.begin() + 1, row.begin() + 1 + static_cast<std::ptrdiff_t>(n_state));
    traj.invariant_values.emplace_back(row.begin() + 1 + static_cast<std::ptrdiff_t>(n_state),
                                       row.end());
  }
  return traj;
}

/// Per-sample conservation errors against the anchored reference values:
/// columns t, then per integral the absolute error and the relative error
/// |I - I0| / max(1, |I0|).
inline void emit_conservation_csv(const Trajectory& traj, std::span<const double> refs,
                                  const std::string& path) {
  if (traj.times.empty()) throw Error("emit_conservation_csv: empty trajectory");
  std::string out = "t";
  for (std::size_t i = 0; i < refs.size(); ++i) {
    out += ",abs_err_I" + std::to_string(i);
    out += ",rel_err_I" + std::to_string(i);
  }
  out += '\n';
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    detail::append_g17(out, traj.times[k]);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const double abs_err = std::abs(traj.invariant_values[k][i] - refs[i]);
      out += ',';
      detail::append_g17(out, abs_err);
      out += ',';
      detail::append_g17(out, abs_err / std::max(1.0, std::abs(refs[i])));
    }
    out += '\n';
  }
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << out)) throw IoError("emit_conservation_csv: cannot write " + path);
}

/// Training report as JSON: per-epoch arrays, wall time, the configuration
/// echo, and where the checkpoint landed.
inline void emit_metrics_json(const TrainReport& report, const nlohmann::json& config_echo,
                              const std::string& checkpoint_path, const std::string& path) {
  nlohmann::json j;
  j["loss"] = report.loss;
  j["max_constraint_violation"] = report.max_constraint_violation;
  j["wall_time_seconds"] = report.wall_time_seconds;
  j["config"] = config_echo;
  j["checkpoint_path"] = checkpoint_path;
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << j.dump(2) << '\n')) throw IoError("emit_metrics_json: cannot write " + path);
}

}  // namespace cpinn
