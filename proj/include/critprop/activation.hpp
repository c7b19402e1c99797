#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <string_view>
#include <utility>

#include "critprop/errors.hpp"

namespace critprop {

/// A scalar nonlinearity together with its first two derivatives.
template <typename A>
concept ActivationLike = requires(const A& a, double x) {
  { a.phi(x) } -> std::convertible_to<double>;
  { a.dphi(x) } -> std::convertible_to<double>;
  { a.d2phi(x) } -> std::convertible_to<double>;
  { a.name() } -> std::convertible_to<std::string_view>;
};

struct Tanh {
  static constexpr bool bounded = true;
  std::string_view name() const { return "tanh"; }
  double phi(double x) const { return std::tanh(x); }
  double dphi(double x) const {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  double d2phi(double x) const {
    const double t = std::tanh(x);
    return -2.0 * t * (1.0 - t * t);
  }
};

struct Linear {
  static constexpr bool bounded = false;
  std::string_view name() const { return "linear"; }
  double phi(double x) const { return x; }
  double dphi(double) const { return 1.0; }
  double d2phi(double) const { return 0.0; }
};

/// Type-erased activation for runtime selection (CLI, networks).
class Activation {
 public:
  template <ActivationLike A>
  Activation(A a)  // NOLINT(google-explicit-constructor)
      : name_(a.name()),
        bounded_(A::bounded),
        phi_([a](double x) { return a.phi(x); }),
        dphi_([a](double x) { return a.dphi(x); }),
        d2phi_([a](double x) { return a.d2phi(x); }) {}

  Activation(std::string name, bool bounded, std::function<double(double)> phi,
             std::function<double(double)> dphi, std::function<double(double)> d2phi)
      : name_(std::move(name)),
        bounded_(bounded),
        phi_(std::move(phi)),
        dphi_(std::move(dphi)),
        d2phi_(std::move(d2phi)) {}

  std::string_view name() const { return name_; }
  // |phi| <= 1 everywhere; lets q* be bracketed by sigma_w^2 + sigma_b^2.
  bool is_bounded() const { return bounded_; }
  double phi(double x) const { return phi_(x); }
  double dphi(double x) const { return dphi_(x); }
  double d2phi(double x) const { return d2phi_(x); }

 private:
  std::string name_;
  bool bounded_;
  std::function<double(double)> phi_, dphi_, d2phi_;
};

template <ActivationLike A>
constexpr bool is_bounded(const A&) {
  return A::bounded;
}
inline bool is_bounded(const Activation& a) { return a.is_bounded(); }

inline Activation activation_from_name(std::string_view name) {
  if (name == "tanh") return Tanh{};
  if (name == "linear") return Linear{};
  throw InvalidArgument("unknown activation '" + std::string(name) + "' (expected tanh or linear)");
}

}  // namespace critprop
