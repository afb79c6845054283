#pragma once

#include <random>
#include <span>
#include <vector>

namespace test_support {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline std::vector<double> uniform_vector(std::mt19937_64& gen, std::size_t n, double lo,
                                          double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Central finite difference of a scalar function of a double vector.
template <class F>
std::vector<double> central_difference(F&& f, std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double hi = f(std::span<const double>(x));
    x[i] = saved - h;
    const double lo = f(std::span<const double>(x));
    x[i] = saved;
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

}  // namespace test_support
