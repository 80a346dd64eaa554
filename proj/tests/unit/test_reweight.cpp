// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "mtgrpo/reweight.hpp"
#include "mtgrpo/rng.hpp"

using namespace mtgrpo;

namespace {

ReweightConfig plain(double beta, ReweightMode mode = ReweightMode::strict) {
  ReweightConfig c;
  c.beta = beta;
  c.mode = mode;
  c.optimizer = LogitOptimizer::plain;
  c.weight_decay = 0.0;
  return c;
}

// Central differences of sum_k softmax(xi)_k s_k.
std::vector<double> fd_gradient(std::vector<double> xi, const std::vector<double>& s) {
  const double h = 1e-6;
  std::vector<double> g(xi.size());
  auto f = [&](const std::vector<double>& x) {
    const auto z = softmax(x);
    double v = 0;
    for (std::size_t k = 0; k < z.size(); ++k) v += z[k] * s[k];
    return v;
  };
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const double keep = xi[k];
    xi[k] = keep + h;
    const double up = f(xi);
    xi[k] = keep - h;
    const double dn = f(xi);
    xi[k] = keep;
    g[k] = (up - dn) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("softmax weight gradient examples") {
  const auto g0 = softmax_weight_gradient(std::vector<double>{0.2, 0.3, 0.5}, std::vector<double>{0.7, 0.7, 0.7});
  for (double v : g0) CHECK(std::abs(v) < 1e-15);

  const auto g1 = softmax_weight_gradient(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  const auto f1 = fd_gradient({0.0, 0.0}, {1.0, 0.0});
  CHECK(g1[0] == doctest::Approx(0.25));
  CHECK(g1[1] == doctest::Approx(-0.25));
  CHECK(g1[0] == doctest::Approx(f1[0]).epsilon(1e-8));

  const double third = 1.0 / 3.0;
  const auto g2 = softmax_weight_gradient(std::vector<double>{third, third, third}, std::vector<double>{1.0, 0.0, 0.0});
  const auto f2 = fd_gradient({0.0, 0.0, 0.0}, {1.0, 0.0, 0.0});
  CHECK(g2[0] == doctest::Approx(2.0 / 9.0));
  CHECK(g2[1] == doctest::Approx(-1.0 / 9.0));
  for (int k = 0; k < 3; ++k) CHECK(g2[static_cast<std::size_t>(k)] == doctest::Approx(f2[static_cast<std::size_t>(k)]).epsilon(1e-8));
}

TEST_CASE("weight gradient matches finite differences at random logits") {
  Stream r(12);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> xi(5), s(5);
    for (auto& x : xi) x = 4.0 * (r.uniform() - 0.5);
    for (auto& x : s) x = r.uniform();
    const auto g = softmax_weight_gradient(softmax(xi), s);
    const auto f = fd_gradient(xi, s);
    double sum = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(g[k] == doctest::Approx(f[k]).epsilon(1e-7).scale(1.0));
      sum += g[k];
    }
    CHECK(std::abs(sum) < 1e-15);
  }
}

TEST_CASE("weight gradient is invariant to shifting the signal") {
  const std::vector<double> z{0.1, 0.6, 0.3};
  const auto a = softmax_weight_gradient(z, std::vector<double>{0.2, 0.5, 0.9});
  const auto b = softmax_weight_gradient(z, std::vector<double>{3.2, 3.5, 3.9});
  for (int k = 0; k < 3; ++k) CHECK(a[static_cast<std::size_t>(k)] == doctest::Approx(b[static_cast<std::size_t>(k)]).epsilon(1e-12));
}

TEST_CASE("strict update examples") {
  TaskWeights w(2, plain(1.0));
  strict_update(w, std::vector<double>{1.0, 0.0}, plain(1.0));
  CHECK(w.logits()[0] == doctest::Approx(-0.25));
  CHECK(w.logits()[1] == doctest::Approx(0.25));
  const double e = std::exp(-0.5);
  CHECK(w.z()[0] == doctest::Approx(e / (1 + e)).epsilon(1e-12));
  CHECK(w.z()[0] == doctest::Approx(0.3775).epsilon(1e-4));

  ReweightConfig adam;
  adam.mode = ReweightMode::strict;
  TaskWeights u(3, adam);
  for (int i = 0; i < 10; ++i) strict_update(u, std::vector<double>{0.4, 0.4, 0.4}, adam);
  for (double z : u.z()) CHECK(z == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("strict update collapses onto the worse tasks") {
  ReweightConfig c;
  c.mode = ReweightMode::strict;
  TaskWeights w(3, c);
  int steps = 0;
  while (w.z()[0] >= 0.05 && steps < 1000) {
    strict_update(w, std::vector<double>{1.0, 0.0, 0.0}, c);
    ++steps;
  }
  CHECK(w.z()[0] < 0.05);
  CHECK(steps < 1000);
}

TEST_CASE("a plain step never takes mass from the lowest-signal task") {
  Stream r(2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> xi(4), j(4);
    for (auto& x : xi) x = 2.0 * (r.uniform() - 0.5);
    for (auto& x : j) x = r.uniform();
    TaskWeights w(4, plain(0.01));
    w.set_logits(xi);
    const std::size_t lo = static_cast<std::size_t>(std::min_element(j.begin(), j.end()) - j.begin());
    const double before = w.z()[lo];
    strict_update(w, j, plain(0.01));
    CHECK(w.z()[lo] >= before);
  }
}

TEST_CASE("iwu examples") {
  SUBCASE("zero improvement matches a lambda-scaled strict step") {
    ReweightConfig iwu = plain(1.0, ReweightMode::iwu);
    iwu.lambda = 0.3;
    TaskWeights a(3, iwu), b(3, plain(0.3));
    const std::vector<double> j{0.9, 0.2, 0.5};
    iwu_update(a, j, std::vector<double>{0.0, 0.0, 0.0}, iwu);
    strict_update(b, j, plain(0.3));
    for (int k = 0; k < 3; ++k) CHECK(a.logits()[static_cast<std::size_t>(k)] == doctest::Approx(b.logits()[static_cast<std::size_t>(k)]).epsilon(1e-14));
  }
  SUBCASE("lambda zero moves weight toward the stagnating task") {
    ReweightConfig c = plain(1.0, ReweightMode::iwu);
    c.lambda = 0.0;
    const auto g = softmax_weight_gradient(std::vector<double>{0.5, 0.5}, std::vector<double>{0.1, -0.1});
    CHECK(g[0] == doctest::Approx(0.05));
    CHECK(g[1] == doctest::Approx(-0.05));
    TaskWeights w(2, c);
    iwu_update(w, std::vector<double>{0.3, 0.3}, std::vector<double>{0.1, -0.1}, c);
    CHECK(w.z()[1] > 0.5);
  }
  SUBCASE("mixed signal") {
    ReweightConfig c = plain(1.0, ReweightMode::iwu);
    c.lambda = 0.25;
    TaskWeights w(2, c);
    iwu_update(w, std::vector<double>{0.9, 0.2}, std::vector<double>{0.0, 0.1}, c);
    const auto f = fd_gradient({0.0, 0.0}, {0.225, 0.15});
    CHECK(-w.logits()[0] == doctest::Approx(0.01875));
    CHECK(-w.logits()[1] == doctest::Approx(-0.01875));
    CHECK(-w.logits()[0] == doctest::Approx(f[0]).epsilon(1e-7));
  }
}

TEST_CASE("regularized update examples") {
  ReweightConfig c = plain(1.0, ReweightMode::regularized);
  c.eta = 0.1;
  TaskWeights w(2, c);
  w.set_logits(std::vector<double>{1.0, 0.0});
  regularized_update(w, std::vector<double>{0.5, 0.5}, c);
  CHECK(w.logits()[0] == doctest::Approx(0.9));
  CHECK(w.logits()[1] == 0.0);

  ReweightConfig c0 = plain(0.5, ReweightMode::regularized);
  TaskWeights a(3, c0), b(3, plain(0.5));
  regularized_update(a, std::vector<double>{0.1, 0.8, 0.4}, c0);
  strict_update(b, std::vector<double>{0.1, 0.8, 0.4}, plain(0.5));
  for (int k = 0; k < 3; ++k) CHECK(a.logits()[static_cast<std::size_t>(k)] == b.logits()[static_cast<std::size_t>(k)]);
}

TEST_CASE("strong shrinkage pulls weights toward uniform") {
  ReweightConfig c = plain(0.1, ReweightMode::regularized);
  c.eta = 5.0;
  TaskWeights w(3, c);
  w.set_logits(std::vector<double>{2.0, -1.0, 0.0});
  auto dev = [&] {
    double d = 0;
    for (double z : w.z()) d += std::abs(z - 1.0 / 3.0);
    return d;
  };
  double prev = dev();
  for (int i = 0; i < 30; ++i) {
    regularized_update(w, std::vector<double>{0.2, 0.9, 0.5}, c);
    const double now = dev();
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("fixed-uniform mode never moves") {
  ReweightConfig c;
  c.mode = ReweightMode::fixed_uniform;
  TaskWeights w(4, c);
  for (int i = 0; i < 5; ++i) reweight_step(w, std::vector<double>{0.1, 0.2, 0.3, 0.4}, std::vector<double>{0.1, 0, 0, 0}, c);
  for (double z : w.z()) CHECK(z == 0.25);
}

TEST_CASE("parsing and validation") {
  CHECK(parse_reweight_mode("iwu") == ReweightMode::iwu);
  CHECK(parse_reweight_mode(to_string(ReweightMode::fixed_uniform)) == ReweightMode::fixed_uniform);
  CHECK(parse_logit_optimizer("plain") == LogitOptimizer::plain);
  CHECK_THROWS(parse_reweight_mode("bogus"));
  ReweightConfig bad;
  bad.beta = -1;
  CHECK_THROWS(bad.validate());
}
