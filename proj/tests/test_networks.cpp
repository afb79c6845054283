#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cpinn/networks.hpp"
#include "test_support.hpp"

using cpinn::Dual;
using cpinn::IoError;
using cpinn::MlpParams;
using cpinn::Var;
using cpinn::deeponet_ansatz_forward;
using cpinn::deeponet_forward;
using cpinn::finite_difference_check;
using cpinn::init_mlp;
using cpinn::load_mlp;
using cpinn::make_deeponet;
using cpinn::make_pinn_ansatz;
using cpinn::mlp_eval;
using cpinn::mlp_forward;
using cpinn::mlp_param_count;
using cpinn::pinn_ansatz_forward;
using cpinn::save_mlp;

namespace {

MlpParams zero_mlp(std::vector<int> sizes) {
  MlpParams p;
  p.values.assign(mlp_param_count(sizes), 0.0);
  p.layer_sizes = std::move(sizes);
  return p;
}

/// Zero weights everywhere, bias `c` on the output layer: the network is
/// identically the constant vector c.
MlpParams constant_mlp(std::vector<int> sizes, const std::vector<double>& c) {
  MlpParams p = zero_mlp(std::move(sizes));
  const std::size_t out = static_cast<std::size_t>(p.layer_sizes.back());
  for (std::size_t i = 0; i < out; ++i) p.values[p.values.size() - out + i] = c[i];
  return p;
}

}  // namespace

TEST_CASE("init_mlp") {
  SECTION("first-layer weights stay inside the Glorot bound") {
    const auto p = init_mlp({1, 40, 40, 40, 40, 2}, 42);
    const double limit = std::sqrt(6.0 / 41.0);
    for (int i = 0; i < 40; ++i) {
      REQUIRE(p.values[static_cast<std::size_t>(i)] <= limit);
      REQUIRE(p.values[static_cast<std::size_t>(i)] >= -limit);
    }
  }

  SECTION("deterministic for equal seeds") {
    const auto a = init_mlp({3, 10, 10, 2}, 99);
    const auto b = init_mlp({3, 10, 10, 2}, 99);
    REQUIRE(a.values == b.values);
    const auto c = init_mlp({3, 10, 10, 2}, 100);
    REQUIRE(a.values != c.values);
  }

  SECTION("biases are zero") {
    const std::vector<int> sizes{2, 5, 3};
    const auto p = init_mlp(sizes, 1);
    std::size_t off = 0;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      off += static_cast<std::size_t>(sizes[k]) * static_cast<std::size_t>(sizes[k + 1]);
      for (int i = 0; i < sizes[k + 1]; ++i) REQUIRE(p.values[off++] == 0.0);
    }
  }

  SECTION("invalid layer lists are rejected") {
    REQUIRE_THROWS_AS(init_mlp({4}, 0), cpinn::Error);
    REQUIRE_THROWS_AS(init_mlp({4, 0, 2}, 0), cpinn::Error);
  }
}

TEST_CASE("mlp_forward") {
  SECTION("zero parameters map everything to zero") {
    const auto p = zero_mlp({3, 8, 8, 2});
    const std::vector<double> x{0.7, -1.3, 2.0};
    for (double v : mlp_forward(p, x)) REQUIRE(v == 0.0);
  }

  SECTION("1x1 chain with unit weight reproduces tanh") {
    MlpParams p = zero_mlp({1, 1, 1});
    p.values[0] = 1.0;  // hidden weight
    p.values[2] = 1.0;  // output weight
    const std::vector<double> x{0.5};
    const auto y = mlp_forward(p, x);
    REQUIRE_THAT(y[0], Catch::Matchers::WithinULP(std::tanh(0.5), 0));
    REQUIRE_THAT(y[0], Catch::Matchers::WithinAbs(0.46211715726000974, 1e-15));
  }

  SECTION("output stays finite for any finite input") {
    const auto p = init_mlp({1, 16, 16, 3}, 5);
    for (double x : {0.0, 1.0, -1e6, 1e12, -1e300}) {
      for (double v : mlp_forward(p, std::vector<double>{x})) REQUIRE(std::isfinite(v));
    }
  }

  SECTION("dimension mismatch raises a shape error") {
    const auto p = init_mlp({2, 4, 1}, 0);
    REQUIRE_THROWS_AS(mlp_forward(p, std::vector<double>{1.0}), cpinn::ShapeError);
  }
}

TEST_CASE("pinn ansatz hard constraint") {
  auto gen = test_support::rng(7);
  const std::vector<double> u0{1.25, -0.5};

  SECTION("returns u0 bitwise at t0 for 100 random parameter draws") {
    for (int rep = 0; rep < 100; ++rep) {
      const auto a = make_pinn_ansatz(init_mlp({1, 8, 8, 2}, gen()), 0.0, 30.0, u0);
      const auto y = pinn_ansatz_forward(a, 0.0);
      REQUIRE(y[0] == u0[0]);
      REQUIRE(y[1] == u0[1]);
    }
  }

  SECTION("zero network is the constant initial condition") {
    const auto a = make_pinn_ansatz(zero_mlp({1, 4, 2}), 0.0, 10.0, u0);
    for (double t : {0.0, 2.5, 10.0}) {
      const auto y = pinn_ansatz_forward(a, t);
      REQUIRE(y[0] == u0[0]);
      REQUIRE(y[1] == u0[1]);
    }
  }

  SECTION("constant network contributes exactly c at t = tf") {
    const std::vector<double> c{0.75, -2.0};
    const auto a = make_pinn_ansatz(constant_mlp({1, 4, 2}, c), 1.0, 3.0, u0);
    const auto y = pinn_ansatz_forward(a, 3.0);
    REQUIRE_THAT(y[0], Catch::Matchers::WithinULP(u0[0] + c[0], 0));
    REQUIRE_THAT(y[1], Catch::Matchers::WithinULP(u0[1] + c[1], 0));
  }
}

TEST_CASE("deeponet forward") {
  SECTION("zero branch net gives zero output") {
    const auto d = make_deeponet(zero_mlp({2, 4, 8}), init_mlp({1, 4, 8}, 3), 4, 0.0, 0.5);
    const auto y = deeponet_forward(d, std::vector<double>{0.3, -0.8}, 0.2);
    REQUIRE(y[0] == 0.0);
    REQUIRE(y[1] == 0.0);
  }

  SECTION("r = 1 hand dot product") {
    // Constant nets: branch output (2, 3), trunk output (5, 7), n = 2.
    const auto d = make_deeponet(constant_mlp({2, 2, 2}, {2.0, 3.0}),
                                 constant_mlp({1, 2, 2}, {5.0, 7.0}), 1, 0.0, 1.0);
    const auto y = deeponet_forward(d, std::vector<double>{0.4, 0.6}, 0.33);
    REQUIRE(y[0] == 10.0);
    REQUIRE(y[1] == 21.0);
  }

  SECTION("output factors through branch(u0) and trunk(t)") {
    const auto d = make_deeponet(init_mlp({3, 10, 12}, 1), init_mlp({1, 10, 12}, 2), 4, 0.0, 0.5);
    const std::vector<double> u0{0.9, -0.1, 0.4};
    const double t = 0.37;
    const auto branch_out = mlp_forward(d.branch, u0);
    const auto trunk_out = mlp_forward(d.trunk, std::vector<double>{t});
    const auto combined = cpinn::deeponet_combine(std::span<const double>(branch_out),
                                                  std::span<const double>(trunk_out), 3, 4);
    const auto y = deeponet_forward(d, u0, t);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(y[i] == combined[i]);
  }

  SECTION("mismatched branch/trunk output dims are rejected") {
    REQUIRE_THROWS_AS(make_deeponet(init_mlp({2, 4, 8}, 0), init_mlp({1, 4, 6}, 0), 4, 0.0, 0.5),
                      cpinn::ShapeError);
  }
}

TEST_CASE("deeponet ansatz hard constraint") {
  auto gen = test_support::rng(13);

  SECTION("returns u0 bitwise at t0 for 100 random draws") {
    for (int rep = 0; rep < 100; ++rep) {
      const auto d =
          make_deeponet(init_mlp({3, 6, 6}, gen()), init_mlp({1, 6, 6}, gen()), 2, 0.25, 0.5);
      const auto u0 = test_support::uniform_vector(gen, 3, -2.0, 2.0);
      const auto y = deeponet_ansatz_forward(d, u0, 0.25);
      for (std::size_t i = 0; i < 3; ++i) REQUIRE(y[i] == u0[i]);
    }
  }

  SECTION("zero branch keeps the state at u0 for all t") {
    const auto d = make_deeponet(zero_mlp({2, 4, 4}), init_mlp({1, 4, 4}, 3), 2, 0.0, 0.5);
    const std::vector<double> u0{1.0, -1.0};
    for (double t : {0.0, 0.2, 0.5}) {
      const auto y = deeponet_ansatz_forward(d, u0, t);
      REQUIRE(y[0] == u0[0]);
      REQUIRE(y[1] == u0[1]);
    }
  }

  SECTION("r = 1 hand evaluation at t = t0 + dt") {
    const auto d = make_deeponet(constant_mlp({2, 2, 2}, {2.0, 3.0}),
                                 constant_mlp({1, 2, 2}, {5.0, 7.0}), 1, 0.0, 0.5);
    const std::vector<double> u0{1.0, 2.0};
    const auto y = deeponet_ansatz_forward(d, u0, 0.5);
    REQUIRE_THAT(y[0], Catch::Matchers::WithinULP(1.0 + 10.0, 0));
    REQUIRE_THAT(y[1], Catch::Matchers::WithinULP(2.0 + 21.0, 0));
  }
}

TEST_CASE("mlp is Lipschitz under the product of layer norm bounds") {
  // tanh is 1-Lipschitz, so the product of the layers' Frobenius norms (an
  // upper bound on their spectral norms) bounds the network's constant.
  const auto p = init_mlp({2, 10, 10, 2}, 21);
  double bound = 1.0;
  std::size_t off = 0;
  for (std::size_t k = 0; k + 1 < p.layer_sizes.size(); ++k) {
    const std::size_t nw =
        static_cast<std::size_t>(p.layer_sizes[k]) * static_cast<std::size_t>(p.layer_sizes[k + 1]);
    double fro = 0.0;
    for (std::size_t i = 0; i < nw; ++i) fro += p.values[off + i] * p.values[off + i];
    bound *= std::sqrt(fro);
    off += nw + static_cast<std::size_t>(p.layer_sizes[k + 1]);
  }
  auto gen = test_support::rng(22);
  for (int rep = 0; rep < 200; ++rep) {
    const auto x = test_support::uniform_vector(gen, 2, -3.0, 3.0);
    const auto y = test_support::uniform_vector(gen, 2, -3.0, 3.0);
    const auto fx = mlp_forward(p, x);
    const auto fy = mlp_forward(p, y);
    double dxy = 0.0, dfxy = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      dxy += (x[i] - y[i]) * (x[i] - y[i]);
      dfxy += (fx[i] - fy[i]) * (fx[i] - fy[i]);
    }
    REQUIRE(std::sqrt(dfxy) <= bound * std::sqrt(dxy) + 1e-12);
  }
}

TEST_CASE("network gradients pass the finite-difference check") {
  auto gen = test_support::rng(29);

  SECTION("mlp output w.r.t. parameters") {
    const auto p = init_mlp({2, 8, 8, 1}, 31);
    const std::vector<double> x{0.4, -0.9};
    const auto f = [&](auto params) {
      using S = std::remove_cvref_t<decltype(params[0])>;
      auto out = mlp_eval(std::span<const int>(p.layer_sizes), std::span<const S>(params),
                          std::span<const double>(x));
      return out[0];
    };
    REQUIRE(finite_difference_check(f, p.values, 1e-6) <= 1e-6);
  }

  SECTION("pinn ansatz w.r.t. parameters") {
    const auto a = make_pinn_ansatz(init_mlp({1, 8, 8, 2}, 33), 0.0, 10.0, {1.0, 1.0});
    const double t = 4.2;
    const auto f = [&](auto params) {
      using S = std::remove_cvref_t<decltype(params[0])>;
      auto out = cpinn::pinn_ansatz_eval(std::span<const int>(a.net.layer_sizes),
                                         std::span<const S>(params), t,
                                         std::span<const double>(a.u0), a.t0, a.tf);
      return out[0] + out[1];
    };
    REQUIRE(finite_difference_check(f, a.net.values, 1e-6) <= 1e-6);
  }

  SECTION("deeponet w.r.t. initial condition") {
    const auto d = make_deeponet(init_mlp({3, 8, 6}, 35), init_mlp({1, 8, 6}, 36), 2, 0.0, 0.5);
    const auto u0 = test_support::uniform_vector(gen, 3, -1.0, 1.0);
    const double t = 0.3;
    const auto f = [&](auto u) {
      using S = std::remove_cvref_t<decltype(u[0])>;
      auto out = cpinn::deeponet_eval(d, std::span<const double>(d.branch.values),
                                      std::span<const double>(d.trunk.values),
                                      std::span<const S>(u), t);
      return out[0] + out[1] + out[2];
    };
    REQUIRE(finite_difference_check(f, u0, 1e-6) <= 1e-6);
  }
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "cpinn_ckpt_test.bin").string();
  const auto p = init_mlp({1, 40, 40, 40, 40, 2}, 77);
  save_mlp(path, p);

  SECTION("header line lists layer sizes") {
    std::ifstream is(path, std::ios::binary);
    std::string line;
    std::getline(is, line);
    REQUIRE(line == "mlp 1 40 40 40 40 2");
  }

  SECTION("values load back bitwise") {
    const auto q = load_mlp(path);
    REQUIRE(q.layer_sizes == p.layer_sizes);
    REQUIRE(q.values == p.values);
  }

  SECTION("bad header is rejected") {
    const auto bad = (fs::temp_directory_path() / "cpinn_ckpt_bad.bin").string();
    std::ofstream os(bad, std::ios::binary);
    os << "mpl 1 2\n";
    os.close();
    REQUIRE_THROWS_AS(load_mlp(bad), IoError);
    fs::remove(bad);
  }
  fs::remove(path);
}
