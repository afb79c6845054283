#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cpinn/autodiff.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

// ---------------------------------------------------------------------------
// Multilayer perceptrons with tanh hidden activations and an affine output
// layer. Parameters are stored flat, layer by layer: row-major weights
// [out x in], then biases [out].
// ---------------------------------------------------------------------------

struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<double> values;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
};

inline std::size_t mlp_param_count(std::span<const int> layer_sizes) {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k)
    n += static_cast<std::size_t>(layer_sizes[k]) * layer_sizes[k + 1] + layer_sizes[k + 1];
  return n;
}

/// Glorot-uniform weights, zero biases; deterministic for a given seed.
inline MlpParams init_mlp(std::vector<int> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw Error("init_mlp: need at least input and output layers");
  for (int s : layer_sizes)
    if (s <= 0) throw Error("init_mlp: layer sizes must be positive");
  MlpParams p;
  p.layer_sizes = std::move(layer_sizes);
  p.values.resize(mlp_param_count(p.layer_sizes));
  std::mt19937_64 rng(seed);
  std::size_t off = 0;
  for (std::size_t k = 0; k + 1 < p.layer_sizes.size(); ++k) {
    const int fan_in = p.layer_sizes[k];
    const int fan_out = p.layer_sizes[k + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (int i = 0; i < fan_in * fan_out; ++i) p.values[off++] = dist(rng);
    off += static_cast<std::size_t>(fan_out);  // biases stay zero
  }
  return p;
}

namespace detail {

/// One dense layer: out = act(W in + b). Advances `off` past the layer's
/// parameters. The result scalar type is the product promotion of the
/// parameter and input types (double, Var, Dual<...>).
template <class P, class Y>
auto dense_layer(std::span<const P> params, std::size_t& off, std::span<const Y> in, int out_size,
                 bool apply_tanh) {
  using R = decltype(std::declval<const P&>() * std::declval<const Y&>());
  const int in_size = static_cast<int>(in.size());
  const std::size_t w = off;
  const std::size_t b = off + static_cast<std::size_t>(in_size) * out_size;
  std::vector<R> out;
  out.reserve(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    R z = params[w + static_cast<std::size_t>(i) * in_size] * in[0];
    for (int j = 1; j < in_size; ++j)
      z = z + params[w + static_cast<std::size_t>(i) * in_size + j] * in[j];
    z = params[b + static_cast<std::size_t>(i)] + z;
    out.push_back(apply_tanh ? tanh(z) : z);
  }
  off = b + static_cast<std::size_t>(out_size);
  return out;
}

}  // namespace detail

/// Forward pass through the affine-tanh stack; the final layer is affine.
/// Generic in the parameter scalar P and the input scalar X.
template <class P, class X>
auto mlp_eval(std::span<const int> sizes, std::span<const P> params, std::span<const X> x) {
  if (static_cast<int>(x.size()) != sizes.front()) throw ShapeError("mlp: input length mismatch");
  if (params.size() != mlp_param_count(sizes)) throw ShapeError("mlp: parameter count mismatch");
  const std::size_t last = sizes.size() - 1;
  std::size_t off = 0;
  auto cur = detail::dense_layer(params, off, x, sizes[1], last > 1);
  for (std::size_t k = 2; k <= last; ++k) {
    auto next = detail::dense_layer(params, off,
                                    std::span<const typename decltype(cur)::value_type>(cur),
                                    sizes[k], k != last);
    cur = std::move(next);
  }
  return cur;
}

inline std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x) {
  return mlp_eval(std::span<const int>(p.layer_sizes), std::span<const double>(p.values), x);
}

// ---------------------------------------------------------------------------
// Hard-constraint PINN ansatz: u(t) = u0 + (t - t0)/(tf - t0) * N(t).
// The initial condition holds exactly, before any training.
// ---------------------------------------------------------------------------

struct PinnAnsatz {
  MlpParams net;  // input dim 1, output dim n
  double t0 = 0.0;
  double tf = 1.0;
  std::vector<double> u0;
};

inline PinnAnsatz make_pinn_ansatz(MlpParams net, double t0, double tf,
                                   std::vector<double> u0) {
  if (!(tf > t0)) throw Error("pinn ansatz: tf must exceed t0");
  if (net.input_dim() != 1) throw ShapeError("pinn ansatz: network input dim must be 1");
  if (net.output_dim() != static_cast<int>(u0.size()))
    throw ShapeError("pinn ansatz: network output dim must match state dim");
  return PinnAnsatz{std::move(net), t0, tf, std::move(u0)};
}

/// Core evaluation, generic in the parameter scalar P and the time scalar TT.
template <class P, class TT>
auto pinn_ansatz_eval(std::span<const int> sizes, std::span<const P> params, const TT& t,
                      std::span<const double> u0, double t0, double tf) {
  const TT scale = (t - t0) / (tf - t0);
  std::array<TT, 1> input{t};
  auto net_out = mlp_eval(sizes, params, std::span<const TT>(input));
  using R = typename decltype(net_out)::value_type;
  std::vector<R> out;
  out.reserve(u0.size());
  for (std::size_t i = 0; i < u0.size(); ++i) out.push_back(u0[i] + scale * net_out[i]);
  return out;
}

inline std::vector<double> pinn_ansatz_forward(const PinnAnsatz& a, double t) {
  return pinn_ansatz_eval(std::span<const int>(a.net.layer_sizes),
                          std::span<const double>(a.net.values), t,
                          std::span<const double>(a.u0), a.t0, a.tf);
}

// ---------------------------------------------------------------------------
// DeepONet: branch net consumes the initial condition, trunk net consumes
// time; outputs (both of length n*r) combine by a per-component dot product
// over the latent width r.
// ---------------------------------------------------------------------------

struct DeepONetParams {
  MlpParams branch;  // input dim n, output dim n*r
  MlpParams trunk;   // input dim 1, output dim n*r
  int latent_width = 0;
  double t0 = 0.0;
  double dt = 1.0;  // training interval [t0, t0 + dt]

  int state_dim() const { return branch.input_dim(); }
};

inline DeepONetParams make_deeponet(MlpParams branch, MlpParams trunk, int latent_width,
                                    double t0, double dt) {
  if (!(dt > 0.0)) throw Error("deeponet: dt must be positive");
  const int n = branch.input_dim();
  if (latent_width <= 0) throw ShapeError("deeponet: latent width must be positive");
  if (branch.output_dim() != n * latent_width)
    throw ShapeError("deeponet: branch output dim must be n*r");
  if (trunk.input_dim() != 1) throw ShapeError("deeponet: trunk input dim must be 1");
  if (trunk.output_dim() != branch.output_dim())
    throw ShapeError("deeponet: branch and trunk output dims must match");
  return DeepONetParams{std::move(branch), std::move(trunk), latent_width, t0, dt};
}

/// Per-component latent dot product of precomputed branch and trunk outputs.
template <class B, class T>
auto deeponet_combine(std::span<const B> branch_out, std::span<const T> trunk_out, int n, int r) {
  if (branch_out.size() != trunk_out.size() ||
      static_cast<int>(branch_out.size()) != n * r)
    throw ShapeError("deeponet: branch/trunk output length mismatch");
  using R = decltype(std::declval<const B&>() * std::declval<const T&>());
  std::vector<R> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    R acc = branch_out[static_cast<std::size_t>(i) * r] * trunk_out[static_cast<std::size_t>(i) * r];
    for (int j = 1; j < r; ++j)
      acc = acc + branch_out[static_cast<std::size_t>(i) * r + j] *
                      trunk_out[static_cast<std::size_t>(i) * r + j];
    out.push_back(acc);
  }
  return out;
}

/// Raw operator output G(u0)(t), generic in the parameter scalar P, the
/// initial-condition scalar U and the time scalar TT.
template <class P, class U, class TT>
auto deeponet_eval(const DeepONetParams& d, std::span<const P> branch_params,
                   std::span<const P> trunk_params, std::span<const U> u0, const TT& t) {
  if (static_cast<int>(u0.size()) != d.state_dim())
    throw ShapeError("deeponet: initial-condition length mismatch");
  auto branch_out = mlp_eval(std::span<const int>(d.branch.layer_sizes), branch_params, u0);
  std::array<TT, 1> time_input{t};
  auto trunk_out = mlp_eval(std::span<const int>(d.trunk.layer_sizes), trunk_params,
                            std::span<const TT>(time_input));
  using B = typename decltype(branch_out)::value_type;
  using T = typename decltype(trunk_out)::value_type;
  return deeponet_combine(std::span<const B>(branch_out), std::span<const T>(trunk_out),
                          d.state_dim(), d.latent_width);
}

inline std::vector<double> deeponet_forward(const DeepONetParams& d, std::span<const double> u0,
                                            double t) {
  return deeponet_eval(d, std::span<const double>(d.branch.values),
                       std::span<const double>(d.trunk.values), u0, t);
}

/// Hard-constraint operator ansatz: u0 + (t - t0)/dt * G(u0)(t).
template <class P, class TT>
auto deeponet_ansatz_eval(const DeepONetParams& d, std::span<const P> branch_params,
                          std::span<const P> trunk_params, std::span<const double> u0,
                          const TT& t) {
  auto raw = deeponet_eval(d, branch_params, trunk_params, u0, t);
  const TT scale = (t - d.t0) / d.dt;
  using R = typename decltype(raw)::value_type;
  std::vector<R> out;
  out.reserve(u0.size());
  for (std::size_t i = 0; i < u0.size(); ++i) out.push_back(u0[i] + scale * raw[i]);
  return out;
}

inline std::vector<double> deeponet_ansatz_forward(const DeepONetParams& d,
                                                   std::span<const double> u0, double t) {
  return deeponet_ansatz_eval(d, std::span<const double>(d.branch.values),
                              std::span<const double>(d.trunk.values), u0, t);
}

// ---------------------------------------------------------------------------
// Checkpoints: per network one text header line `mlp <d0> <d1> ... <dk>`
// followed by the flat parameter array as little-endian binary doubles.
// ---------------------------------------------------------------------------

inline void save_mlp(std::ostream& os, const MlpParams& p) {
  os << "mlp";
  for (int s : p.layer_sizes) os << ' ' << s;
  os << '\n';
  for (double v : p.values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(bytes, 8);
  }
  if (!os) throw IoError("save_mlp: write failed");
}

inline MlpParams load_mlp(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("load_mlp: missing header line");
  std::istringstream header(line);
  std::string tag;
  header >> tag;
  if (tag != "mlp") throw IoError("load_mlp: bad header tag '" + tag + "'");
  std::vector<int> sizes;
  for (int s; header >> s;) sizes.push_back(s);
  if (sizes.size() < 2) throw IoError("load_mlp: header must list at least two layer sizes");
  MlpParams p;
  p.layer_sizes = std::move(sizes);
  p.values.resize(mlp_param_count(p.layer_sizes));
  for (double& v : p.values) {
    char bytes[8];
    if (!is.read(bytes, 8)) throw IoError("load_mlp: truncated parameter block");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) throw IoError("load_mlp: non-finite parameter");
  }
  return p;
}

inline void save_mlp(const std::string& path, const MlpParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_mlp: cannot open " + path);
  save_mlp(os, p);
}

inline MlpParams load_mlp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_mlp: cannot open " + path);
  return load_mlp(is);
}

/// DeepONet checkpoints are two consecutive records: branch then trunk.
inline void save_deeponet(const std::string& path, const DeepONetParams& d) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_deeponet: cannot open " + path);
  save_mlp(os, d.branch);
  save_mlp(os, d.trunk);
}

inline DeepONetParams load_deeponet(const std::string& path, int latent_width, double t0,
                                    double dt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_deeponet: cannot open " + path);
  MlpParams branch = load_mlp(is);
  MlpParams trunk = load_mlp(is);
  return make_deeponet(std::move(branch), std::move(trunk), latent_width, t0, dt);
}

}  // namespace cpinn
