#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "critprop/quadrature.hpp"
#include "oracles.hpp"

using namespace critprop;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("two-point rule is {-1, +1} with equal weights", "[quadrature]") {
  const QuadratureRule r = build_rule(2);
  REQUIRE(r.order == 2);
  CHECK_THAT(r.nodes[0], WithinAbs(-1.0, 1e-14));
  CHECK_THAT(r.nodes[1], WithinAbs(1.0, 1e-14));
  CHECK_THAT(r.weights[0], WithinAbs(0.5, 1e-14));
  CHECK_THAT(r.weights[1], WithinAbs(0.5, 1e-14));
}

TEST_CASE("rules are normalized, sorted and symmetric", "[quadrature]") {
  for (int order : {2, 3, 5, 8, 17, 32, 64, 65, 100, 128, 257}) {
    const QuadratureRule r = build_rule(order);
    double total = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      total += w;
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    for (std::size_t i = 1; i < r.nodes.size(); ++i) CHECK(r.nodes[i] > r.nodes[i - 1]);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      CHECK_THAT(r.nodes[i] + r.nodes[r.nodes.size() - 1 - i], WithinAbs(0.0, 1e-12));
    }
  }
}

TEST_CASE("rule construction is deterministic", "[quadrature]") {
  const QuadratureRule a = build_rule(64);
  const QuadratureRule b = build_rule(64);
  CHECK(a.nodes == b.nodes);
  CHECK(a.weights == b.weights);
}

TEST_CASE("order below two is rejected", "[quadrature]") {
  CHECK_THROWS_AS(build_rule(1), InvalidArgument);
  CHECK_THROWS_AS(build_rule(0), InvalidArgument);
  CHECK_THROWS_AS(build_rule(-3), InvalidArgument);
}

TEST_CASE("Gaussian moments are exact", "[quadrature]") {
  const QuadratureRule& r = cached_rule(64);
  CHECK_THAT(expect_1d(r, [](double) { return 1.0; }), WithinAbs(1.0, 1e-12));
  CHECK_THAT(expect_1d(r, [](double z) { return z * z; }), WithinAbs(1.0, 1e-12));
  CHECK_THAT(expect_1d(r, [](double z) { return z * z * z * z; }), WithinAbs(3.0, 1e-11));
  CHECK_THAT(expect_1d(r, [](double z) { return std::pow(z, 6); }), WithinAbs(15.0, 1e-10));
  CHECK_THAT(expect_1d(r, [](double z) { return z; }), WithinAbs(0.0, 1e-14));
  CHECK_THAT(expect_1d(build_rule(2), [](double z) { return z * z; }), WithinAbs(1.0, 1e-12));
}

TEST_CASE("expect_1d of tanh^2 agrees with Monte Carlo", "[quadrature][oracle]") {
  auto f = [](double z) { return std::tanh(z) * std::tanh(z); };
  const double quad = expect_1d(cached_rule(64), f);
  const auto mc = oracle::monte_carlo_1d(f, 10'000'000, 11);
  CHECK(std::fabs(quad - mc.mean) < 3.0 * mc.standard_error);
}

TEST_CASE("expect_2d basics", "[quadrature]") {
  const QuadratureRule& r = cached_rule(64);
  CHECK_THAT(expect_2d(r, [](double a, double b) { return a * b; }), WithinAbs(0.0, 1e-12));
  CHECK_THAT(expect_2d(r, [](double a, double b) { return a * a * b * b; }), WithinAbs(1.0, 1e-12));
}

TEST_CASE("expect_2d of correlated tanh product agrees with Monte Carlo", "[quadrature][oracle]") {
  auto g = [](double a, double b) { return std::tanh(a) * std::tanh(0.5 * a + std::sqrt(0.75) * b); };
  const double quad = expect_2d(cached_rule(64), g);
  const auto mc = oracle::monte_carlo_2d(g, 10'000'000, 12);
  CHECK(std::fabs(quad - mc.mean) < 3.0 * mc.standard_error);
}

TEST_CASE("separable integrands factorize", "[quadrature]") {
  const QuadratureRule& r = cached_rule(64);
  auto f1 = [](double z) { return std::cos(z) + z * z; };
  auto f2 = [](double z) { return std::tanh(z + 0.3); };
  const double joint = expect_2d(r, [&](double a, double b) { return f1(a) * f2(b); });
  CHECK_THAT(joint, WithinAbs(expect_1d(r, f1) * expect_1d(r, f2), 1e-12));
}

TEST_CASE("order doubling above 64 changes smooth bounded integrands by < 1e-10", "[quadrature]") {
  auto f = [](double z) { return std::tanh(z) * std::tanh(z); };
  auto g = [](double z) { return std::erf(z) * std::cos(z); };
  for (int order : {128, 256, 512}) {
    CHECK(std::fabs(expect_1d(build_rule(order), f) - expect_1d(build_rule(2 * order), f)) < 1e-10);
    CHECK(std::fabs(expect_1d(build_rule(order), g) - expect_1d(build_rule(2 * order), g)) < 1e-10);
  }
  auto h = [](double a, double b) { return std::tanh(a) * std::tanh(0.5 * a + std::sqrt(0.75) * b); };
  CHECK(std::fabs(expect_2d(build_rule(128), h) - expect_2d(build_rule(256), h)) < 1e-10);
}

TEST_CASE("pruning drops only negligible tail nodes", "[quadrature]") {
  const QuadratureRule full = build_rule(1024);
  const QuadratureRule small = pruned(full);
  CHECK(small.order < full.order);
  auto f = [](double z) { return std::tanh(3.0 * z) * std::tanh(3.0 * z); };
  CHECK_THAT(expect_1d(small, f), WithinAbs(expect_1d(full, f), 1e-14));
  CHECK_THAT(expect_1d(small, [](double z) { return z * z; }), WithinAbs(1.0, 1e-12));
}

TEST_CASE("variance-adapted order grows with q", "[quadrature]") {
  CHECK(order_for_variance(0.0) == kDefaultOrder);
  CHECK(order_for_variance(1.0) == kDefaultOrder);
  CHECK(order_for_variance(1.5) == 128);
  CHECK(order_for_variance(40.0) == 4096);
  CHECK(order_for_variance(1e9) == kMaxOrder);
  // tanh(sqrt(q) z)^2 at large q is resolved by the adapted rule.
  const double q = 40.0;
  auto f = [&](double z) { return std::pow(std::tanh(std::sqrt(q) * z), 2); };
  const double adapted = expect_1d(rule_for_variance(q), f);
  const double reference = expect_1d(cached_rule(kMaxOrder), f);
  CHECK_THAT(adapted, WithinAbs(reference, 1e-9));
  CHECK(std::fabs(expect_1d(cached_rule(64), f) - reference) > 1e-6);
}

TEST_CASE("non-finite integrands name the node", "[quadrature]") {
  const QuadratureRule& r = cached_rule(64);
  auto bad = [](double z) { return z > 2.0 ? std::numeric_limits<double>::infinity() : 0.0; };
  CHECK_THROWS_AS(expect_1d(r, bad), NumericDomainError);
  CHECK_THROWS_WITH(expect_1d(r, bad), ContainsSubstring("node z="));
  auto bad2 = [](double, double b) { return b < -3.0 ? std::nan("") : 1.0; };
  CHECK_THROWS_AS(expect_2d(r, bad2), NumericDomainError);
}
