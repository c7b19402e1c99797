#pragma once

// Correlation trajectories |c^l - c*| and their critical exponents: at the
// critical line the approach to c* = 1 is a power law c / l^alpha + b rather
// than an exponential.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "critprop/activation.hpp"
#include "critprop/errors.hpp"
#include "critprop/meanfield.hpp"
#include "critprop/quadrature.hpp"

namespace critprop {

struct Trajectory {
  std::vector<int> layers;  // 1, 2, ..., num_layers
  std::vector<double> deviations;
  HyperParams params;
  double c0 = 0.0;
  double c_star = 1.0;
};

struct PowerLawFit {
  double c = 0.0;
  double alpha = 0.0;
  double b = 0.0;
  double rss = std::numeric_limits<double>::infinity();
  bool converged = false;
  int points = 0;
  int iterations = 0;
};

/// A * exp(-l / zeta); the off-critical comparator.
struct ExponentialFit {
  double amplitude = 0.0;
  double zeta = 0.0;
  double rss = std::numeric_limits<double>::infinity();
  bool converged = false;
};

/// Iterates the correlation map from c0 and records |c^l - c*| for l = 1..num_layers.
template <ActivationLike A>
Trajectory trajectory(const HyperParams& hp, const A& act, double c0, int num_layers,
                      const QuadratureRule& rule) {
  hp.validate();
  if (!(std::fabs(c0) <= 1.0)) throw InvalidArgument("trajectory: |c0| must be <= 1");
  if (num_layers < 10) throw InvalidArgument("trajectory: num_layers must be >= 10");
  Trajectory t;
  t.params = hp;
  t.c0 = c0;
  t.c_star = stable_c_star(hp, act, rule);
  const double q = std::max(q_star(hp, act, rule), 1e-8);
  double c = c0;
  t.layers.reserve(num_layers);
  t.deviations.reserve(num_layers);
  for (int l = 1; l <= num_layers; ++l) {
    c = std::clamp(c_map_step(c, q, hp, act, rule), -1.0, 1.0);
    t.layers.push_back(l);
    t.deviations.push_back(std::fabs(c - t.c_star));
  }
  return t;
}

template <ActivationLike A>
Trajectory trajectory(const HyperParams& hp, const A& act, double c0, int num_layers) {
  return trajectory(hp, act, c0, num_layers, default_rule(hp, act));
}

namespace detail {

template <int P>
struct LmResult {
  Eigen::Matrix<double, P, 1> params;
  double rss = std::numeric_limits<double>::infinity();
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool finite = false;
};

// Levenberg-Marquardt with Marquardt's diagonal scaling. `model(p, r, J)`
// fills residuals r and the Jacobian J at p and returns false if p is outside
// the model's domain.
template <int P, typename Model>
LmResult<P> levenberg_marquardt(Eigen::Matrix<double, P, 1> p, Eigen::Index n, Model&& model,
                                int max_iter = 1000) {
  using Vec = Eigen::Matrix<double, P, 1>;
  using Mat = Eigen::Matrix<double, P, P>;
  Eigen::VectorXd r(n), r_try(n);
  Eigen::Matrix<double, Eigen::Dynamic, P> J(n, P), J_try(n, P);

  LmResult<P> out;
  out.params = p;
  if (!model(p, r, J) || !r.allFinite()) return out;
  double rss = r.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Mat jtj = J.transpose() * J;
    const Vec grad = J.transpose() * r;
    if (grad.norm() == 0.0 || rss == 0.0) break;
    Mat damped = jtj;
    for (int k = 0; k < P; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-300);
    const Vec step = damped.ldlt().solve(-grad);
    if (!step.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e20) break;
      continue;
    }
    const Vec trial = p + step;
    if (model(trial, r_try, J_try) && r_try.allFinite() && r_try.squaredNorm() < rss) {
      const double rss_try = r_try.squaredNorm();
      const bool tiny_step = step.norm() <= 1e-15 * (p.norm() + 1e-15);
      const bool flat = rss - rss_try <= 1e-15 * rss;
      p = trial;
      r.swap(r_try);
      J.swap(J_try);
      rss = rss_try;
      lambda = std::max(lambda / 3.0, 1e-15);
      if (tiny_step || flat) break;
    } else {
      lambda *= 2.0;
      if (lambda > 1e20) break;
    }
  }
  out.params = p;
  out.rss = rss;
  out.gradient_norm = 2.0 * (J.transpose() * r).norm();
  out.iterations = it;
  out.finite = p.allFinite() && std::isfinite(rss);
  return out;
}

inline void fit_points(const Trajectory& traj, int l_min, std::vector<double>& l,
                       std::vector<double>& d) {
  if (traj.layers.size() != traj.deviations.size()) {
    throw InvalidArgument("trajectory layers and deviations differ in length");
  }
  for (std::size_t i = 0; i < traj.layers.size(); ++i) {
    // Roundoff floor: tiny deviations would pin the offset to noise.
    if (traj.layers[i] >= l_min && traj.deviations[i] > 1e-14) {
      l.push_back(traj.layers[i]);
      d.push_back(traj.deviations[i]);
    }
  }
  if (l.size() < 10) {
    throw InvalidArgument("fit needs at least 10 points with l >= l_min and deviation > 1e-14, got " +
                          std::to_string(l.size()));
  }
}

}  // namespace detail

inline constexpr std::array<double, 5> kAlphaStarts{0.1, 0.3, 0.5, 0.7, 1.0};

/// Least-squares fit of c / l^alpha + b over points with l >= l_min.
inline PowerLawFit fit_power_law(const Trajectory& traj, int l_min) {
  std::vector<double> l, d;
  detail::fit_points(traj, l_min, l, d);
  const auto n = static_cast<Eigen::Index>(l.size());
  using Vec3 = Eigen::Matrix<double, 3, 1>;

  auto model = [&](const Vec3& p, Eigen::VectorXd& r, auto& J) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lg = std::log(l[i]);
      const double pw = std::exp(-p[1] * lg);
      r[i] = p[0] * pw + p[2] - d[i];
      J(i, 0) = pw;
      J(i, 1) = -p[0] * lg * pw;
      J(i, 2) = 1.0;
    }
    return true;
  };

  PowerLawFit best;
  for (double a0 : kAlphaStarts) {
    const Vec3 start{d[0] * std::pow(l[0], a0), a0, 0.0};
    const auto res = detail::levenberg_marquardt<3>(start, n, model);
    if (!res.finite) continue;
    if (res.rss < best.rss || !std::isfinite(best.rss)) {
      best.c = res.params[0];
      best.alpha = res.params[1];
      best.b = res.params[2];
      best.rss = res.rss;
      best.iterations = res.iterations;
      const double scale = std::max(1.0, res.params.norm());
      best.converged = res.gradient_norm < 1e-6 * scale;
    }
  }
  best.points = static_cast<int>(n);
  return best;
}

inline constexpr std::array<double, 5> kZetaStarts{1.0, 3.0, 10.0, 30.0, 100.0};

/// Least-squares fit of A exp(-l / zeta) over points with l >= l_min.
inline ExponentialFit fit_exponential(const Trajectory& traj, int l_min) {
  std::vector<double> l, d;
  detail::fit_points(traj, l_min, l, d);
  const auto n = static_cast<Eigen::Index>(l.size());
  using Vec2 = Eigen::Matrix<double, 2, 1>;

  // Parameterized by the decay rate k = 1/zeta so the model is smooth at k = 0.
  auto model = [&](const Vec2& p, Eigen::VectorXd& r, auto& J) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = std::exp(-p[1] * l[i]);
      r[i] = p[0] * e - d[i];
      J(i, 0) = e;
      J(i, 1) = -p[0] * l[i] * e;
    }
    return true;
  };

  ExponentialFit best;
  for (double z0 : kZetaStarts) {
    const Vec2 start{d[0] * std::exp(l[0] / z0), 1.0 / z0};
    const auto res = detail::levenberg_marquardt<2>(start, n, model);
    if (!res.finite) continue;
    if (res.rss < best.rss || !std::isfinite(best.rss)) {
      best.amplitude = res.params[0];
      best.zeta = 1.0 / res.params[1];
      best.rss = res.rss;
      best.converged = res.gradient_norm < 1e-6 * std::max(1.0, res.params.norm());
    }
  }
  return best;
}

struct ExponentProtocol {
  double c0_offset = 0.02;  // c0 = c* - offset
  int num_layers = 150;
  int l_min = 4;
  double sigma_w_scale = 1.0;  // < 1 probes the ordered side of the line
};

struct ExponentEntry {
  double sigma_b = 0.0;
  double sigma_w_critical = std::numeric_limits<double>::quiet_NaN();
  double sigma_w = std::numeric_limits<double>::quiet_NaN();  // where the trajectory was run
  PowerLawFit fit;
  ExponentialFit exponential;
  double rss_ratio = std::numeric_limits<double>::quiet_NaN();  // exponential rss / power-law rss
  bool power_law_regime = false;                               // rss_ratio >= 10
  std::optional<std::string> error;
};

inline constexpr double kPowerLawMargin = 10.0;

template <ActivationLike A>
ExponentEntry exponent_entry(double sigma_b, const A& act, const ExponentProtocol& protocol = {},
                             std::pair<double, double> bracket = kDefaultSigmaWBracket) {
  ExponentEntry e;
  e.sigma_b = sigma_b;
  try {
    e.sigma_w_critical = critical_sigma_w(sigma_b, act, bracket);
    e.sigma_w = e.sigma_w_critical * protocol.sigma_w_scale;
    const HyperParams hp{e.sigma_w, sigma_b};
    const QuadratureRule& rule = default_rule(HyperParams{bracket.second, sigma_b}, act);
    const double c_star = stable_c_star(hp, act, rule);
    const double c0 = std::clamp(c_star - protocol.c0_offset, -1.0, 1.0);
    const Trajectory traj = trajectory(hp, act, c0, protocol.num_layers, rule);
    e.fit = fit_power_law(traj, protocol.l_min);
    e.exponential = fit_exponential(traj, protocol.l_min);
    e.rss_ratio = e.fit.rss > 0.0 ? e.exponential.rss / e.fit.rss
                                  : std::numeric_limits<double>::infinity();
    e.power_law_regime = e.rss_ratio >= kPowerLawMargin;
  } catch (const std::exception& ex) {
    e.error = ex.what();
  }
  return e;
}

/// Critical exponent per sigma_b; failures are reported in the entry.
template <ActivationLike A>
std::vector<ExponentEntry> exponent_table(const std::vector<double>& sigma_b_values, const A& act,
                                          const ExponentProtocol& protocol = {}) {
  if (sigma_b_values.empty()) throw InvalidArgument("exponent_table: empty sigma_b list");
  std::vector<ExponentEntry> out;
  out.reserve(sigma_b_values.size());
  for (double sb : sigma_b_values) out.push_back(exponent_entry(sb, act, protocol));
  return out;
}

}  // namespace critprop
