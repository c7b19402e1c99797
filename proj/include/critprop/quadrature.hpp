#pragma once

// Gauss-Hermite quadrature under the standard normal weight.
//
// Rules integrate against Dz = dz exp(-z^2/2) / sqrt(2 pi), so an
// expectation E[f(z)], z ~ N(0,1), is written directly as sum_i w_i f(z_i).

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "critprop/errors.hpp"

namespace critprop {

struct QuadratureRule {
  std::vector<double> nodes;    // strictly increasing, symmetric about 0
  std::vector<double> weights;  // positive, sum to 1
  int order = 0;                // number of nodes
};

namespace detail {

// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
// `diag` becomes the eigenvalues; `first_row` tracks the first component of
// each eigenvector, which is all Golub-Welsch needs. O(n^2).
inline void tridiagonal_ql(std::vector<double>& diag, std::vector<double>& offdiag,
                           std::vector<double>& first_row) {
  const int n = static_cast<int>(diag.size());
  const double eps = std::numeric_limits<double>::epsilon();
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::fabs(diag[m]) + std::fabs(diag[m + 1]);
        if (std::fabs(offdiag[m]) <= eps * dd) break;
      }
      if (m == l) break;
      if (++iter > 100) throw NonConvergence("tridiagonal QL did not converge");
      double g = (diag[l + 1] - diag[l]) / (2.0 * offdiag[l]);
      double r = std::hypot(g, 1.0);
      g = diag[m] - diag[l] + offdiag[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, p = 0.0;
      int i;
      bool deflated = false;
      for (i = m - 1; i >= l; --i) {
        const double f = s * offdiag[i];
        const double b = c * offdiag[i];
        r = std::sqrt(f * f + g * g);  // entries stay O(sqrt(n)), no overflow risk
        offdiag[i + 1] = r;
        if (r == 0.0) {
          diag[i + 1] -= p;
          offdiag[m] = 0.0;
          deflated = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = diag[i + 1] - p;
        r = (diag[i] - g) * s + 2.0 * c * b;
        p = s * r;
        diag[i + 1] = g + p;
        g = c * r - b;
        const double z = first_row[i + 1];
        first_row[i + 1] = s * first_row[i] + c * z;
        first_row[i] = c * first_row[i] - s * z;
      }
      if (deflated) continue;
      diag[l] -= p;
      offdiag[l] = g;
      offdiag[m] = 0.0;
    } while (m != l);
  }
}

inline void normalize_weights(std::vector<double>& weights) {
  long double total = 0.0L;
  for (double w : weights) total += w;
  for (double& w : weights) w = static_cast<double>(w / total);
}

}  // namespace detail

/// Builds the `order`-point Gauss-Hermite rule for the standard normal
/// measure with the Golub-Welsch eigenvalue method. The probabilists'
/// Hermite recurrence gives a Jacobi matrix with zero diagonal and
/// off-diagonal sqrt(k); nodes are its eigenvalues and weights the squared
/// first eigenvector components. Nodes and weights are symmetrized exactly.
inline QuadratureRule build_rule(int order) {
  if (order < 2) {
    throw InvalidArgument("quadrature order must be >= 2, got " + std::to_string(order));
  }
  const auto n = static_cast<std::size_t>(order);
  std::vector<double> diag(n, 0.0), offdiag(n, 0.0), first(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) offdiag[k] = std::sqrt(static_cast<double>(k + 1));
  first[0] = 1.0;
  detail::tridiagonal_ql(diag, offdiag, first);

  std::vector<std::pair<double, double>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {diag[i], first[i] * first[i]};
  std::sort(pairs.begin(), pairs.end());

  QuadratureRule rule;
  rule.order = order;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t i = 0; i < n / 2; ++i) {
    const std::size_t j = n - 1 - i;
    const double x = 0.5 * (pairs[j].first - pairs[i].first);
    const double w = 0.5 * (pairs[j].second + pairs[i].second);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = w;
    rule.weights[j] = w;
  }
  if (n % 2 == 1) {
    rule.nodes[n / 2] = 0.0;
    rule.weights[n / 2] = pairs[n / 2].second;
  }
  detail::normalize_weights(rule.weights);
  return rule;
}

/// Drops nodes whose weight is below `relative_cutoff` times the largest
/// weight and renormalizes. High-order rules put most nodes far in the tails
/// where their weights underflow; pruning them leaves the integral unchanged
/// to double precision and shrinks the 2-D tensor grid considerably.
inline QuadratureRule pruned(const QuadratureRule& rule, double relative_cutoff = 1e-18) {
  const double wmax = *std::max_element(rule.weights.begin(), rule.weights.end());
  QuadratureRule out;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    if (rule.weights[i] >= relative_cutoff * wmax) {
      out.nodes.push_back(rule.nodes[i]);
      out.weights.push_back(rule.weights[i]);
    }
  }
  out.order = static_cast<int>(out.nodes.size());
  detail::normalize_weights(out.weights);
  return out;
}

/// Process-wide cache of pruned rules keyed by the unpruned order.
inline const QuadratureRule& cached_rule(int order) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<QuadratureRule>(pruned(build_rule(order)));
  return *slot;
}

inline constexpr int kDefaultOrder = 64;
inline constexpr int kMaxOrder = 16384;

/// Order needed to resolve phi(sqrt(q) z) when q can be as large as
/// `variance_bound`: the node spacing near the origin shrinks like
/// pi/sqrt(order) and must stay well below the 1/sqrt(q) feature width.
inline int order_for_variance(double variance_bound) {
  const double wanted = std::ceil(64.0 * std::max(variance_bound, 0.0));
  if (!(wanted > kDefaultOrder)) return kDefaultOrder;
  if (wanted >= kMaxOrder) return kMaxOrder;
  return static_cast<int>(std::bit_ceil(static_cast<unsigned>(wanted)));
}

inline const QuadratureRule& rule_for_variance(double variance_bound) {
  return cached_rule(order_for_variance(variance_bound));
}

namespace detail {
[[noreturn]] inline void non_finite_at(double za, double value) {
  std::ostringstream os;
  os << "integrand is not finite (" << value << ") at node z=" << za;
  throw NumericDomainError(os.str());
}
[[noreturn]] inline void non_finite_at(double za, double zb, double value) {
  std::ostringstream os;
  os << "integrand is not finite (" << value << ") at node (" << za << ", " << zb << ")";
  throw NumericDomainError(os.str());
}
}  // namespace detail

/// E[f(z)] for z ~ N(0,1).
template <typename F>
double expect_1d(const QuadratureRule& rule, F&& f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double v = f(rule.nodes[i]);
    if (!std::isfinite(v)) detail::non_finite_at(rule.nodes[i], v);
    sum += rule.weights[i] * v;
  }
  return sum;
}

/// E[g(za, zb)] for independent za, zb ~ N(0,1) on the tensor-product grid.
template <typename G>
double expect_2d(const QuadratureRule& rule, G&& g) {
  double sum = 0.0;
  const std::size_t n = rule.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double za = rule.nodes[i];
    double inner = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = g(za, rule.nodes[j]);
      if (!std::isfinite(v)) detail::non_finite_at(za, rule.nodes[j], v);
      inner += rule.weights[j] * v;
    }
    sum += rule.weights[i] * inner;
  }
  return sum;
}

}  // namespace critprop
