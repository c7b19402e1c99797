#pragma once

// Mean-field signal propagation through wide random tanh-like networks:
// the length map for the pre-activation variance q, the correlation map for
// the normalized correlation c between two inputs, their fixed points, the
// stability exponent chi1 and the depth scales over which q and c settle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "critprop/activation.hpp"
#include "critprop/errors.hpp"
#include "critprop/quadrature.hpp"

namespace critprop {

/// Random-initialization point: W ~ N(0, sigma_w^2 / fan_in), b ~ N(0, sigma_b^2).
struct HyperParams {
  double sigma_w = 1.0;
  double sigma_b = 0.0;

  void validate() const {
    if (!(sigma_w > 0.0) || !std::isfinite(sigma_w)) {
      throw InvalidArgument("sigma_w must be a positive finite number, got " + std::to_string(sigma_w));
    }
    if (!(sigma_b >= 0.0) || !std::isfinite(sigma_b)) {
      throw InvalidArgument("sigma_b must be a non-negative finite number, got " + std::to_string(sigma_b));
    }
  }
};

struct FixedPointResult {
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool stable = false;
};

struct DepthScales {
  double zeta_q = 0.0;  // +inf when the q map is marginal
  double zeta_c = 0.0;  // +inf at criticality
  double chi1 = 0.0;
  double q_star = 0.0;
  double c_star = 1.0;  // fixed point at which zeta_c was evaluated
};

inline constexpr double kFixedPointTol = 1e-10;
inline constexpr int kFixedPointMaxIter = 10000;
inline constexpr double kStabilityStep = 1e-5;
inline constexpr double kCriticalCutoff = 1e-9;  // |chi1 - 1| below this is critical

/// Rule able to resolve the integrands at this initialization point.
template <ActivationLike A>
const QuadratureRule& default_rule(const HyperParams& hp, const A& act) {
  if (!is_bounded(act)) return cached_rule(kDefaultOrder);
  return rule_for_variance(hp.sigma_w * hp.sigma_w + hp.sigma_b * hp.sigma_b);
}

/// One step of the length map: sigma_w^2 E[phi(sqrt(q) z)^2] + sigma_b^2.
template <ActivationLike A>
double q_map_step(double q_prev, const HyperParams& hp, const A& act, const QuadratureRule& rule) {
  if (!(q_prev >= 0.0)) {
    throw InvalidArgument("q_map_step: q must be non-negative, got " + std::to_string(q_prev));
  }
  const double sq = std::sqrt(q_prev);
  const double second_moment = expect_1d(rule, [&](double z) {
    const double v = act.phi(sq * z);
    return v * v;
  });
  return hp.sigma_w * hp.sigma_w * second_moment + hp.sigma_b * hp.sigma_b;
}

/// Picard iteration of the length map from q0.
template <ActivationLike A>
FixedPointResult q_fixed_point(const HyperParams& hp, const A& act, double q0, double tol,
                               int max_iter, const QuadratureRule& rule) {
  hp.validate();
  if (!(tol > 0.0)) throw InvalidArgument("q_fixed_point: tol must be positive");
  if (max_iter < 1) throw InvalidArgument("q_fixed_point: max_iter must be >= 1");
  if (!(q0 >= 0.0)) throw InvalidArgument("q_fixed_point: q0 must be non-negative");

  FixedPointResult out;
  double q = q0;
  for (int it = 1; it <= max_iter; ++it) {
    const double next = q_map_step(q, hp, act, rule);
    out.iterations = it;
    out.residual = std::fabs(next - q);
    q = next;
    if (!std::isfinite(q)) break;
    if (out.residual <= tol) {
      out.converged = true;
      break;
    }
  }
  out.value = q;
  if (out.converged) {
    double slope;
    if (q > kStabilityStep) {
      slope = (q_map_step(q + kStabilityStep, hp, act, rule) -
               q_map_step(q - kStabilityStep, hp, act, rule)) / (2.0 * kStabilityStep);
    } else {
      slope = (q_map_step(q + kStabilityStep, hp, act, rule) - q_map_step(q, hp, act, rule)) /
              kStabilityStep;
    }
    out.stable = std::fabs(slope) < 1.0;
  }
  return out;
}

template <ActivationLike A>
FixedPointResult q_fixed_point(const HyperParams& hp, const A& act, double q0 = 1.0,
                               double tol = kFixedPointTol, int max_iter = kFixedPointMaxIter) {
  return q_fixed_point(hp, act, q0, tol, max_iter, default_rule(hp, act));
}

/// Stable fixed point q* of the length map to full double precision.
///
/// A short Picard run locates the basin; the root of q - q_map(q) is then
/// bracketed around the Picard iterate and bisected. The bracket's lower end
/// never drops below sigma_b^2, where q_map(q) - q >= 0 always holds.
template <ActivationLike A>
double q_star(const HyperParams& hp, const A& act, const QuadratureRule& rule) {
  constexpr int kWarmStart = 200;
  const FixedPointResult warm = q_fixed_point(hp, act, 1.0, kFixedPointTol, kWarmStart, rule);
  const double qp = warm.value;
  if (!std::isfinite(qp) || qp > 1e12) {
    std::ostringstream os;
    os << "length map does not settle for sigma_w=" << hp.sigma_w << ", sigma_b=" << hp.sigma_b
       << " (q after " << warm.iterations << " steps: " << qp << ")";
    throw NonConvergence(os.str());
  }
  auto gap = [&](double q) { return q_map_step(q, hp, act, rule) - q; };
  const double floor_q = hp.sigma_b * hp.sigma_b;

  double lo = qp, hi = qp;
  double delta = std::max(1e-6 * qp, 1e-14);
  for (int k = 0; gap(lo) < 0.0; ++k) {
    lo = std::max(floor_q, qp - delta);
    delta *= 2.0;
    if (lo == floor_q) break;
    if (k > 200) throw NonConvergence("q_star: could not bracket the fixed point from below");
  }
  delta = std::max(1e-6 * qp, 1e-14);
  for (int k = 0; gap(hi) > 0.0; ++k) {
    hi = qp + delta;
    delta *= 2.0;
    if (k > 200) throw NonConvergence("q_star: could not bracket the fixed point from above");
  }
  for (int k = 0; k < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (gap(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

template <ActivationLike A>
double q_star(const HyperParams& hp, const A& act) {
  return q_star(hp, act, default_rule(hp, act));
}

/// One step of the correlation map at fixed variance q*.
///
/// With u_a = sqrt(q*) za and u_b = sqrt(q*) (c za + sqrt(1 - c^2) zb), returns
/// [sigma_w^2 E phi(u_a) phi(u_b) + sigma_b^2] / q_map(q*). The denominator is
/// q* itself at the fixed point and makes c = 1 map to exactly 1.
template <ActivationLike A>
double c_map_step(double c_prev, double q_star_value, const HyperParams& hp, const A& act,
                  const QuadratureRule& rule) {
  if (!(std::fabs(c_prev) <= 1.0 + 1e-12)) {
    throw InvalidArgument("c_map_step: |c| must be <= 1, got " + std::to_string(c_prev));
  }
  if (!(q_star_value > 0.0)) {
    throw InvalidArgument("c_map_step: q* must be positive, got " + std::to_string(q_star_value));
  }
  const double c = std::clamp(c_prev, -1.0, 1.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double sq = std::sqrt(q_star_value);
  const std::size_t n = rule.nodes.size();
  const auto& z = rule.nodes;
  const auto& w = rule.weights;

  double cross = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double phi_a = act.phi(sq * z[i]);
    const double mean_b = sq * c * z[i];
    const double spread_b = sq * s;
    double inner = 0.0;
    for (std::size_t j = 0; j < n; ++j) inner += w[j] * act.phi(mean_b + spread_b * z[j]);
    cross += w[i] * phi_a * inner;
    diag += w[i] * phi_a * phi_a;
  }
  const double sw2 = hp.sigma_w * hp.sigma_w;
  const double sb2 = hp.sigma_b * hp.sigma_b;
  const double result = (sw2 * cross + sb2) / (sw2 * diag + sb2);
  if (!std::isfinite(result)) {
    throw NumericDomainError("c_map_step produced a non-finite value at c=" + std::to_string(c));
  }
  return result;
}

/// Stability exponent: sigma_w^2 E[phi'(sqrt(q*) z)^2], the slope of the
/// correlation map at c = 1.
template <ActivationLike A>
double chi1(const HyperParams& hp, const A& act, const QuadratureRule& rule) {
  hp.validate();
  const double sq = std::sqrt(q_star(hp, act, rule));
  const double m = expect_1d(rule, [&](double z) {
    const double d = act.dphi(sq * z);
    return d * d;
  });
  return hp.sigma_w * hp.sigma_w * m;
}

template <ActivationLike A>
double chi1(const HyperParams& hp, const A& act) {
  return chi1(hp, act, default_rule(hp, act));
}

struct CorrelationFixedPoints {
  std::vector<FixedPointResult> points;  // ascending; always contains c = 1
  bool degenerate = false;               // the map is the identity (every c is fixed)
  double q_star = 0.0;
  double chi1 = 0.0;
};

/// All fixed points of the correlation map in [0, 1].
///
/// c - c_map(c) is scanned on `grid` points for sign changes, each bracketed
/// root is bisected to `tol`, and stability is read off a central-difference
/// slope. c = 1 is always a fixed point; it is stable iff chi1 < 1.
template <ActivationLike A>
CorrelationFixedPoints c_fixed_points(const HyperParams& hp, const A& act, double tol,
                                      const QuadratureRule& rule, int grid = 400) {
  hp.validate();
  if (!(tol > 0.0)) throw InvalidArgument("c_fixed_points: tol must be positive");
  if (grid < 200) throw InvalidArgument("c_fixed_points: grid must have at least 200 points");

  CorrelationFixedPoints out;
  out.q_star = q_star(hp, act, rule);
  out.chi1 = chi1(hp, act, rule);
  // q* = 0 (zero bias in the ordered phase) is the small-q limit of the map.
  const double q = std::max(out.q_star, 1e-8);
  auto gap = [&](double c) { return c - c_map_step(c, q, hp, act, rule); };

  constexpr double kTopGap = 1e-6;
  std::vector<double> cs(static_cast<std::size_t>(grid));
  std::vector<double> gs(cs.size());
  double largest = 0.0;
  for (int k = 0; k < grid; ++k) {
    cs[k] = (k + 1 == grid) ? 1.0 - kTopGap : static_cast<double>(k) / (grid - 1);
    gs[k] = gap(cs[k]);
    largest = std::max(largest, std::fabs(gs[k]));
  }

  FixedPointResult one;
  one.value = 1.0;
  one.converged = true;
  one.residual = std::fabs(gap(1.0));
  one.stable = out.chi1 < 1.0;

  if (largest <= 1e-12) {
    out.degenerate = true;
    out.points.push_back(one);
    return out;
  }

  for (int k = 0; k + 1 < grid; ++k) {
    double a = cs[k], b = cs[k + 1];
    double ga = gs[k], gb = gs[k + 1];
    if (ga == 0.0 && k > 0) continue;  // counted as the right end of the previous cell
    if (ga * gb > 0.0) continue;
    if (gb == 0.0 && ga != 0.0) {
      a = b;
    }
    FixedPointResult fp;
    int it = 0;
    if (ga != 0.0 && gb != 0.0) {
      for (; it < 200 && b - a > tol; ++it) {
        const double m = 0.5 * (a + b);
        const double gm = gap(m);
        if ((gm < 0.0) == (ga < 0.0)) {
          a = m;
          ga = gm;
        } else {
          b = m;
        }
      }
    }
    fp.value = 0.5 * (a + b);
    if (ga == 0.0) fp.value = a;
    fp.iterations = it;
    fp.residual = std::fabs(gap(fp.value));
    fp.converged = true;
    const double lo = std::max(-1.0, fp.value - kStabilityStep);
    const double hi = std::min(1.0, fp.value + kStabilityStep);
    const double slope =
        (c_map_step(hi, q, hp, act, rule) - c_map_step(lo, q, hp, act, rule)) / (hi - lo);
    fp.stable = std::fabs(slope) < 1.0;
    out.points.push_back(fp);
  }
  out.points.push_back(one);
  return out;
}

template <ActivationLike A>
CorrelationFixedPoints c_fixed_points(const HyperParams& hp, const A& act, double tol = 1e-12) {
  return c_fixed_points(hp, act, tol, default_rule(hp, act));
}

/// The attracting correlation: 1 in the ordered phase and at criticality,
/// otherwise the largest stable interior fixed point.
template <ActivationLike A>
double stable_c_star(const HyperParams& hp, const A& act, const QuadratureRule& rule) {
  const double x = chi1(hp, act, rule);
  if (x < 1.0 + kCriticalCutoff) return 1.0;
  const auto fps = c_fixed_points(hp, act, 1e-13, rule);
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const auto& fp : fps.points) {
    if (fp.stable && fp.value < 1.0) best = fp.value;
  }
  if (std::isnan(best)) {
    throw NonConvergence("no stable correlation fixed point below 1 although chi1 > 1");
  }
  return best;
}

/// Bracket used by critical-point searches when the caller gives none.
inline constexpr std::pair<double, double> kDefaultSigmaWBracket{0.5, 6.0};

/// sigma_w on the critical line for this sigma_b: the bisection root of
/// chi1(sigma_w) = 1 inside `bracket`, to `tol` in sigma_w.
template <ActivationLike A>
double critical_sigma_w(double sigma_b, const A& act,
                        std::pair<double, double> bracket = kDefaultSigmaWBracket,
                        double tol = 1e-12) {
  auto [lo, hi] = bracket;
  if (!(lo > 0.0) || !(hi > lo)) {
    throw InvalidArgument("critical_sigma_w: bracket must satisfy 0 < low < high");
  }
  if (!(tol > 0.0)) throw InvalidArgument("critical_sigma_w: tol must be positive");
  if (!(sigma_b >= 0.0) || !std::isfinite(sigma_b)) {
    throw InvalidArgument("critical_sigma_w: sigma_b must be non-negative");
  }
  // One rule for the whole search so chi1 is a continuous function of sigma_w.
  const QuadratureRule& rule = default_rule(HyperParams{hi, sigma_b}, act);
  auto excess = [&](double sw) { return chi1(HyperParams{sw, sigma_b}, act, rule) - 1.0; };
  const double f_lo = excess(lo);
  const double f_hi = excess(hi);
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if ((f_lo < 0.0) == (f_hi < 0.0)) {
    std::ostringstream os;
    os << "chi1 - 1 does not change sign on [" << lo << ", " << hi << "] for sigma_b=" << sigma_b
       << " (values " << f_lo << ", " << f_hi << ")";
    throw BracketingError(os.str(), lo, hi, f_lo, f_hi);
  }
  const bool rising = f_lo < 0.0;
  for (int k = 0; k < 200 && hi - lo > tol; ++k) {
    const double mid = 0.5 * (lo + hi);
    if ((excess(mid) < 0.0) == rising) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct CriticalPoint {
  double sigma_b = 0.0;
  double sigma_w = std::numeric_limits<double>::quiet_NaN();
  double chi1_residual = std::numeric_limits<double>::quiet_NaN();  // chi1 - 1 at the root
  std::optional<std::string> error;
};

struct CriticalLine {
  std::vector<CriticalPoint> points;  // in input order
  bool monotone = true;               // sigma_w non-decreasing in sigma_b over solved points
};

template <ActivationLike A>
CriticalLine critical_line(const std::vector<double>& sigma_b_values, const A& act,
                           std::pair<double, double> bracket = kDefaultSigmaWBracket,
                           double tol = 1e-12) {
  if (sigma_b_values.empty()) throw InvalidArgument("critical_line: empty sigma_b list");
  CriticalLine line;
  for (double sb : sigma_b_values) {
    CriticalPoint p;
    p.sigma_b = sb;
    try {
      p.sigma_w = critical_sigma_w(sb, act, bracket, tol);
      const HyperParams hp{p.sigma_w, sb};
      p.chi1_residual = chi1(hp, act, default_rule(HyperParams{bracket.second, sb}, act)) - 1.0;
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    line.points.push_back(std::move(p));
  }
  std::vector<std::pair<double, double>> solved;
  for (const auto& p : line.points) {
    if (!p.error) solved.emplace_back(p.sigma_b, p.sigma_w);
  }
  std::sort(solved.begin(), solved.end());
  for (std::size_t i = 1; i < solved.size(); ++i) {
    if (solved[i].second < solved[i - 1].second) line.monotone = false;
  }
  return line;
}

namespace detail {
inline double depth_from(double log_argument, const char* which) {
  if (!(log_argument > 0.0)) {
    std::ostringstream os;
    os << "depth scale " << which << ": log argument " << log_argument << " is not positive";
    throw NumericDomainError(os.str());
  }
  if (std::fabs(log_argument - 1.0) < kCriticalCutoff) return std::numeric_limits<double>::infinity();
  return -1.0 / std::log(log_argument);
}
}  // namespace detail

/// Depth scales of the length and correlation maps.
///
/// zeta_q^-1 = -log[chi1 + sigma_w^2 E phi''(sqrt(q*) z) phi(sqrt(q*) z)],
/// zeta_c^-1 = -log[sigma_w^2 E phi'(u_a) phi'(u_b)] at the attracting c*,
/// which reduces to -log chi1 when c* = 1.
template <ActivationLike A>
DepthScales depth_scales(const HyperParams& hp, const A& act, const QuadratureRule& rule) {
  hp.validate();
  DepthScales out;
  out.q_star = q_star(hp, act, rule);
  out.chi1 = chi1(hp, act, rule);
  const double sq = std::sqrt(out.q_star);
  const double sw2 = hp.sigma_w * hp.sigma_w;

  const double curvature = expect_1d(rule, [&](double z) { return act.d2phi(sq * z) * act.phi(sq * z); });
  out.zeta_q = detail::depth_from(out.chi1 + sw2 * curvature, "zeta_q");

  if (std::fabs(out.chi1 - 1.0) < kCriticalCutoff) {
    out.c_star = 1.0;
    out.zeta_c = std::numeric_limits<double>::infinity();
    return out;
  }
  out.c_star = stable_c_star(hp, act, rule);
  const double c = out.c_star;
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double slope = expect_2d(rule, [&](double za, double zb) {
    return act.dphi(sq * za) * act.dphi(sq * (c * za + s * zb));
  });
  out.zeta_c = detail::depth_from(sw2 * slope, "zeta_c");
  return out;
}

template <ActivationLike A>
DepthScales depth_scales(const HyperParams& hp, const A& act) {
  return depth_scales(hp, act, default_rule(hp, act));
}

}  // namespace critprop
