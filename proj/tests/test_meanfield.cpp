#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "critprop/meanfield.hpp"
#include "oracles.hpp"

using namespace critprop;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Independent q* oracle: bisection on q - q_map(q) over [sigma_b^2, sigma_w^2 + sigma_b^2].
double q_star_by_bisection(const HyperParams& hp) {
  const QuadratureRule& r = cached_rule(256);
  auto g = [&](double q) { return q - q_map_step(q, hp, Tanh{}, r); };
  return oracle::bisect(g, hp.sigma_b * hp.sigma_b, hp.sigma_w * hp.sigma_w + hp.sigma_b * hp.sigma_b, 1e-12);
}

// Finds the critical sigma_w by scanning chi1 on a uniform grid and returns
// the midpoint of the first cell where chi1 - 1 changes sign.
double critical_by_grid_scan(double sigma_b, double lo, double hi, double step) {
  const QuadratureRule& r = default_rule(HyperParams{hi, sigma_b}, Tanh{});
  double prev = chi1(HyperParams{lo, sigma_b}, Tanh{}, r) - 1.0;
  for (double sw = lo + step; sw <= hi + 1e-15; sw += step) {
    const double cur = chi1(HyperParams{sw, sigma_b}, Tanh{}, r) - 1.0;
    if ((prev < 0.0) != (cur < 0.0)) return sw - 0.5 * step;
    prev = cur;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TEST_CASE("activation derivatives match finite differences", "[meanfield][activation]") {
  const Activation acts[] = {Tanh{}, Linear{}};
  for (const auto& a : acts) {
    const double h = 1e-5;
    for (int k = 0; k < 100; ++k) {
      const double x = -4.0 + 8.0 * k / 99.0;
      const double d1 = (a.phi(x + h) - a.phi(x - h)) / (2 * h);
      const double d2 = (a.dphi(x + h) - a.dphi(x - h)) / (2 * h);
      CHECK_THAT(a.dphi(x), WithinAbs(d1, 1e-6));
      CHECK_THAT(a.d2phi(x), WithinAbs(d2, 1e-6));
    }
  }
  Tanh t;
  for (double x : {0.1, 0.7, 2.0, 5.0, 30.0}) {
    CHECK(t.phi(-x) == -t.phi(x));
    CHECK(std::fabs(t.phi(x)) <= 1.0);
  }
  CHECK(activation_from_name("tanh").name() == "tanh");
  CHECK(activation_from_name("linear").name() == "linear");
  CHECK_FALSE(activation_from_name("linear").is_bounded());
  CHECK_THROWS_AS(activation_from_name("relu"), InvalidArgument);
}

TEST_CASE("hyperparameters are validated", "[meanfield]") {
  CHECK_THROWS_AS((HyperParams{0.0, 0.3}.validate()), InvalidArgument);
  CHECK_THROWS_AS((HyperParams{-1.0, 0.3}.validate()), InvalidArgument);
  CHECK_THROWS_AS((HyperParams{1.0, -0.1}.validate()), InvalidArgument);
  CHECK_NOTHROW((HyperParams{1.0, 0.0}.validate()));
}

TEST_CASE("q_map_step closed forms and errors", "[meanfield]") {
  const QuadratureRule& r = cached_rule(64);
  CHECK_THAT(q_map_step(1.0, {0.5, 0.3}, Linear{}, r), WithinAbs(0.34, 1e-12));
  CHECK(q_map_step(0.0, {1.2, 0.0}, Tanh{}, r) == 0.0);
  CHECK_THROWS_AS(q_map_step(-0.1, {1.0, 0.3}, Tanh{}, r), InvalidArgument);
  const HyperParams hp{1.1, 0.4};
  for (double q : {0.0, 0.5, 3.0}) CHECK(q_map_step(q, hp, Tanh{}, r) >= hp.sigma_b * hp.sigma_b);
}

TEST_CASE("q_map_step agrees with Monte Carlo", "[meanfield][oracle]") {
  const HyperParams hp{1.39, 0.3};
  const double quad = q_map_step(1.0, hp, Tanh{}, cached_rule(64));
  auto f = [&](double z) {
    const double v = std::tanh(z);
    return hp.sigma_w * hp.sigma_w * v * v + hp.sigma_b * hp.sigma_b;
  };
  const auto mc = oracle::monte_carlo_1d(f, 10'000'000, 21);
  CHECK(std::fabs(quad - mc.mean) < 3.0 * mc.standard_error);
}

TEST_CASE("q_fixed_point closed forms", "[meanfield]") {
  const auto lin = q_fixed_point({0.5, 0.3}, Linear{});
  CHECK(lin.converged);
  CHECK(lin.stable);
  CHECK_THAT(lin.value, WithinAbs(0.12, 1e-9));
  CHECK(lin.residual <= kFixedPointTol);

  const auto zero = q_fixed_point({0.5, 0.0}, Tanh{});
  CHECK(zero.converged);
  CHECK_THAT(zero.value, WithinAbs(0.0, 1e-9));

  const auto capped = q_fixed_point({1.39, 0.3}, Tanh{}, 1.0, 1e-10, 1);
  CHECK_FALSE(capped.converged);
  CHECK(capped.iterations == 1);

  CHECK_THROWS_AS(q_fixed_point({1.0, 0.3}, Tanh{}, 1.0, 0.0, 10), InvalidArgument);
  CHECK_THROWS_AS(q_fixed_point({1.0, 0.3}, Tanh{}, 1.0, 1e-10, 0), InvalidArgument);
}

TEST_CASE("q_fixed_point matches a bisection oracle", "[meanfield][oracle]") {
  for (HyperParams hp : {HyperParams{1.39, 0.3}, HyperParams{2.0, 0.5}, HyperParams{0.9, 1.0}}) {
    const auto r = q_fixed_point(hp, Tanh{});
    REQUIRE(r.converged);
    CHECK(r.stable);
    CHECK_THAT(r.value, WithinAbs(q_star_by_bisection(hp), 1e-9));
    CHECK_THAT(q_star(hp, Tanh{}), WithinAbs(q_star_by_bisection(hp), 1e-10));
    CHECK(r.value >= hp.sigma_b * hp.sigma_b);
  }
}

TEST_CASE("q* does not depend on the starting variance", "[meanfield]") {
  const HyperParams hp{1.39, 0.3};
  const double ref = q_fixed_point(hp, Tanh{}, 1.0).value;
  for (double q0 : {0.1, 10.0}) {
    const auto r = q_fixed_point(hp, Tanh{}, q0);
    CHECK(r.converged);
    CHECK(std::fabs(r.value - ref) <= 10 * kFixedPointTol);
  }
}

TEST_CASE("c_map_step fixes c = 1 and is the identity for a linear unbiased map", "[meanfield]") {
  const QuadratureRule& r = cached_rule(64);
  for (double c : {-0.9, -0.2, 0.0, 0.3, 0.77, 1.0}) {
    CHECK_THAT(c_map_step(c, 0.7, {1.3, 0.0}, Linear{}, r), WithinAbs(c, 1e-12));
  }
  // diagonal consistency over a 5 x 5 grid
  for (double sw : {0.6, 1.0, 1.4, 1.8, 2.4}) {
    for (double sb : {0.0, 0.1, 0.3, 0.8, 1.5}) {
      const HyperParams hp{sw, sb};
      const QuadratureRule& rule = default_rule(hp, Tanh{});
      const double q = std::max(q_star(hp, Tanh{}, rule), 1e-8);
      CHECK_THAT(c_map_step(1.0, q, hp, Tanh{}, rule), WithinAbs(1.0, 1e-10));
    }
  }
  CHECK_THROWS_AS(c_map_step(1.01, 1.0, {1.0, 0.3}, Tanh{}, r), InvalidArgument);
  CHECK_THROWS_AS(c_map_step(0.5, 0.0, {1.0, 0.3}, Tanh{}, r), InvalidArgument);
  CHECK_THROWS_AS(c_map_step(0.5, -1.0, {1.0, 0.3}, Tanh{}, r), InvalidArgument);
}

TEST_CASE("c_map_step agrees with correlated-Gaussian Monte Carlo", "[meanfield][oracle]") {
  const HyperParams hp{1.8, 0.3};
  const QuadratureRule& rule = default_rule(hp, Tanh{});
  const double q = q_star(hp, Tanh{}, rule);
  const double c = 0.5;
  const double quad = c_map_step(c, q, hp, Tanh{}, rule);
  const double sq = std::sqrt(q);
  const double denom = q_map_step(q, hp, Tanh{}, rule);
  auto g = [&](double za, double zb) {
    const double ua = sq * za;
    const double ub = sq * (c * za + std::sqrt(1 - c * c) * zb);
    return (hp.sigma_w * hp.sigma_w * std::tanh(ua) * std::tanh(ub) + hp.sigma_b * hp.sigma_b) / denom;
  };
  const auto mc = oracle::monte_carlo_2d(g, 10'000'000, 22);
  CHECK(std::fabs(quad - mc.mean) < 3.0 * mc.standard_error);
}

TEST_CASE("correlation fixed points in the two phases", "[meanfield]") {
  const auto ordered = c_fixed_points({1.0, 0.3}, Tanh{});
  REQUIRE(ordered.points.size() == 1);
  CHECK(ordered.points[0].value == 1.0);
  CHECK(ordered.points[0].stable);
  CHECK_FALSE(ordered.degenerate);

  const auto chaotic = c_fixed_points({1.8, 0.3}, Tanh{});
  REQUIRE(chaotic.points.size() == 2);
  CHECK(chaotic.points[0].value > 0.0);
  CHECK(chaotic.points[0].value < 1.0);
  CHECK(chaotic.points[0].stable);
  CHECK(chaotic.points[1].value == 1.0);
  CHECK_FALSE(chaotic.points[1].stable);
  const QuadratureRule& r = default_rule(HyperParams{1.8, 0.3}, Tanh{});
  const double c = chaotic.points[0].value;
  CHECK_THAT(c_map_step(c, chaotic.q_star, {1.8, 0.3}, Tanh{}, r), WithinAbs(c, 1e-10));

  const auto identity = c_fixed_points({0.7, 0.0}, Linear{});
  CHECK(identity.degenerate);
  CHECK_THROWS_AS(c_fixed_points({1.0, 0.3}, Tanh{}, 0.0), InvalidArgument);
}

TEST_CASE("chi1 closed forms and the critical value", "[meanfield]") {
  CHECK_THAT(chi1({1.0, 0.0}, Tanh{}), WithinAbs(1.0, 1e-8));
  for (double sb : {0.0, 0.3, 1.0}) CHECK_THAT(chi1({0.8, sb}, Linear{}), WithinAbs(0.64, 1e-12));
  CHECK_THAT(chi1({1.39, 0.3}, Tanh{}), WithinAbs(1.0, 2e-2));
}

TEST_CASE("chi1 is the slope of the correlation map at c = 1", "[meanfield]") {
  for (HyperParams hp : {HyperParams{1.0, 0.3}, HyperParams{1.39, 0.3}, HyperParams{2.0, 1.0}}) {
    const QuadratureRule& r = default_rule(hp, Tanh{});
    const double q = q_star(hp, Tanh{}, r);
    const double h = 1e-4;
    // second-order one-sided difference (c cannot exceed 1)
    const double slope = (3 * c_map_step(1.0, q, hp, Tanh{}, r) - 4 * c_map_step(1.0 - h, q, hp, Tanh{}, r) +
                          c_map_step(1.0 - 2 * h, q, hp, Tanh{}, r)) / (2 * h);
    CHECK_THAT(slope, WithinAbs(chi1(hp, Tanh{}, r), 1e-5));
  }
}

TEST_CASE("c = 1 is stable exactly below the critical line", "[meanfield]") {
  const double crit = critical_sigma_w(0.3, Tanh{});
  for (int k = 0; k < 20; ++k) {
    const double sw = 0.8 + 1.4 * k / 19.0;
    const auto fps = c_fixed_points({sw, 0.3}, Tanh{});
    CHECK(fps.points.back().value == 1.0);
    CHECK(fps.points.back().stable == (sw < crit));
  }
}

TEST_CASE("critical sigma_w", "[meanfield]") {
  CHECK_THAT(critical_sigma_w(0.0, Tanh{}), WithinAbs(1.0, 1e-6));
  CHECK_THAT(critical_sigma_w(0.3, Tanh{}), WithinAbs(1.39, 0.02));
  const double sw2 = critical_sigma_w(2.0, Tanh{});
  CHECK_THAT(sw2, WithinAbs(critical_by_grid_scan(2.0, 2.25, 2.40, 1e-4), 1e-4));
}

TEST_CASE("critical_sigma_w reports a failed bracket", "[meanfield]") {
  try {
    critical_sigma_w(0.3, Tanh{}, {0.5, 0.9});
    FAIL("expected a bracketing error");
  } catch (const BracketingError& e) {
    CHECK(e.low == 0.5);
    CHECK(e.high == 0.9);
    CHECK(e.f_low < 0.0);
    CHECK(e.f_high < 0.0);
  }
  CHECK_THROWS_AS(critical_sigma_w(0.3, Tanh{}, {2.0, 1.0}), InvalidArgument);
}

TEST_CASE("critical line", "[meanfield]") {
  const auto zero = critical_line({0.0}, Tanh{});
  REQUIRE(zero.points.size() == 1);
  CHECK_THAT(zero.points[0].sigma_w, WithinAbs(1.0, 1e-6));

  const auto paper = critical_line({0.3}, Tanh{});
  CHECK_THAT(paper.points[0].sigma_w, WithinAbs(1.39, 0.02));

  const std::vector<double> sbs{2, 3, 4, 5, 6};
  const auto line = critical_line(sbs, Tanh{});
  REQUIRE(line.points.size() == 5);
  CHECK(line.monotone);
  for (const auto& p : line.points) {
    REQUIRE_FALSE(p.error.has_value());
    CHECK(std::fabs(p.chi1_residual) < 1e-9);
    const double scan = critical_by_grid_scan(p.sigma_b, p.sigma_w - 0.01, p.sigma_w + 0.01, 1e-4);
    CHECK_THAT(p.sigma_w, WithinAbs(scan, 1e-4));
  }

  const auto partial = critical_line({0.3, 6.0}, Tanh{}, {0.5, 3.0});
  CHECK_FALSE(partial.points[0].error.has_value());
  CHECK(partial.points[1].error.has_value());
  CHECK_THROWS_AS(critical_line({}, Tanh{}), InvalidArgument);
}

TEST_CASE("depth scales closed forms", "[meanfield]") {
  const auto half = depth_scales({std::sqrt(0.5), 0.0}, Linear{});
  CHECK_THAT(half.chi1, WithinAbs(0.5, 1e-12));
  CHECK_THAT(half.zeta_c, WithinAbs(1.0 / std::log(2.0), 1e-9));
  CHECK_THAT(half.zeta_c, WithinAbs(1.442695, 1e-6));

  const auto lin = depth_scales({0.5, 0.3}, Linear{});
  CHECK_THAT(lin.zeta_q, WithinAbs(-1.0 / std::log(0.25), 1e-10));

  const double crit = critical_sigma_w(0.3, Tanh{});
  const auto at_crit = depth_scales({crit, 0.3}, Tanh{}, default_rule(HyperParams{6.0, 0.3}, Tanh{}));
  CHECK(std::isinf(at_crit.zeta_c));
}

TEST_CASE("zeta_c log chi1 = -1 in the ordered phase", "[meanfield]") {
  for (double sw : {0.3, 0.5, 0.7, 0.8, 0.9}) {
    for (double sb : {0.05, 0.2, 0.3, 0.5, 1.0}) {
      const auto d = depth_scales({sw, sb}, Tanh{});
      REQUIRE(d.chi1 < 1.0);
      CHECK(d.zeta_c > 0.0);
      CHECK(d.zeta_q > 0.0);
      CHECK_THAT(d.zeta_c * std::log(d.chi1), WithinAbs(-1.0, 1e-10));
    }
  }
}

TEST_CASE("depth scale in the chaotic phase uses the interior fixed point", "[meanfield]") {
  const auto d = depth_scales({1.8, 0.3}, Tanh{});
  CHECK(d.chi1 > 1.0);
  CHECK(d.c_star < 1.0);
  CHECK(std::isfinite(d.zeta_c));
  CHECK(d.zeta_c > 0.0);
}

TEST_CASE("depth scales reject a non-positive log argument", "[meanfield]") {
  const Activation cosine("cos", true, [](double x) { return std::cos(x); },
                          [](double x) { return -std::sin(x); }, [](double x) { return -std::cos(x); });
  CHECK_THROWS_AS(depth_scales({1.0, 0.3}, cosine), NumericDomainError);
}
