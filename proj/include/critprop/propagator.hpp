#pragma once

// Finite random networks: sampling, forward passes, the input-output
// Jacobian and layer correlation matrices, plus the correlation experiments
// on real data.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "critprop/activation.hpp"
#include "critprop/data.hpp"
#include "critprop/errors.hpp"
#include "critprop/meanfield.hpp"
#include "critprop/random.hpp"

namespace critprop {

struct NetworkArchitecture {
  std::vector<int> layer_widths;  // N_0 ... N_L
  Activation activation = Tanh{};

  int depth() const { return static_cast<int>(layer_widths.size()) - 1; }

  void validate() const {
    if (layer_widths.size() < 2) throw InvalidArgument("architecture needs at least two widths");
    for (std::size_t k = 0; k < layer_widths.size(); ++k) {
      if (layer_widths[k] < 1) {
        throw InvalidArgument("layer " + std::to_string(k) + " width must be >= 1");
      }
    }
  }
};

/// N_0 inputs, `layers` hidden layers of `width`, optional extra head.
inline NetworkArchitecture uniform_architecture(int input_width, int layers, int width,
                                                Activation act = Tanh{}, int head = 0) {
  NetworkArchitecture arch;
  arch.layer_widths.push_back(input_width);
  for (int k = 0; k < layers; ++k) arch.layer_widths.push_back(width);
  if (head > 0) arch.layer_widths.push_back(head);
  arch.activation = std::move(act);
  arch.validate();
  return arch;
}

struct RandomNetwork {
  std::vector<Eigen::MatrixXd> weights;  // weights[l-1] is W^l, N_l x N_{l-1}
  std::vector<Eigen::VectorXd> biases;   // biases[l-1] is b^l
  HyperParams hp;
  std::uint64_t seed = 0;
  Activation activation = Tanh{};

  int depth() const { return static_cast<int>(weights.size()); }
  int input_width() const { return static_cast<int>(weights.front().cols()); }
  int output_width() const { return static_cast<int>(weights.back().rows()); }
};

/// W^l_ij ~ N(0, sigma_w^2 / N_{l-1}), b^l_i ~ N(0, sigma_b^2). Draws come
/// from one generator in layer order; within a layer W row by row, then b.
inline RandomNetwork init_network(const NetworkArchitecture& arch, const HyperParams& hp,
                                  std::uint64_t seed) {
  arch.validate();
  hp.validate();
  RandomNetwork net;
  net.hp = hp;
  net.seed = seed;
  net.activation = arch.activation;
  Rng rng(seed);
  for (int l = 1; l <= arch.depth(); ++l) {
    const int rows = arch.layer_widths[l];
    const int cols = arch.layer_widths[l - 1];
    const double w_sd = hp.sigma_w / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = w_sd * rng.normal();
    }
    Eigen::VectorXd b(rows);
    for (int i = 0; i < rows; ++i) b[i] = hp.sigma_b * rng.normal();
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

struct ForwardPass {
  std::vector<Eigen::MatrixXd> pre;   // pre[l-1] = h^l, one row per input
  std::vector<Eigen::MatrixXd> post;  // post[l] = x^l, post[0] = inputs
};

/// h^l = W^l x^{l-1} + b^l, x^l = phi(h^l) for every layer; inputs are rows.
inline ForwardPass forward(const RandomNetwork& net, const Eigen::MatrixXd& inputs) {
  if (net.weights.empty()) throw ShapeError("forward: network has no layers");
  if (inputs.cols() != net.input_width()) {
    throw ShapeError("forward: layer 0 expects width " + std::to_string(net.input_width()) +
                     ", got " + std::to_string(inputs.cols()));
  }
  ForwardPass fp;
  fp.post.push_back(inputs);
  for (int l = 0; l < net.depth(); ++l) {
    Eigen::MatrixXd h = fp.post.back() * net.weights[l].transpose();
    h.rowwise() += net.biases[l].transpose();
    fp.post.push_back(h.unaryExpr([&](double v) { return net.activation.phi(v); }));
    fp.pre.push_back(std::move(h));
  }
  return fp;
}

/// Pre-activations of init_network(arch, hp, seed) applied to `inputs`,
/// drawing each weight row on the fly instead of storing the network.
/// Memory is O(width) per input, which makes width 10^4 affordable.
inline std::vector<Eigen::MatrixXd> forward_streaming(const NetworkArchitecture& arch, const HyperParams& hp,
                                                      std::uint64_t seed, const Eigen::MatrixXd& inputs) {
  arch.validate();
  hp.validate();
  if (inputs.cols() != arch.layer_widths.front()) {
    throw ShapeError("forward_streaming: layer 0 expects width " + std::to_string(arch.layer_widths.front()) +
                     ", got " + std::to_string(inputs.cols()));
  }
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> pre;
  Eigen::MatrixXd x = inputs;
  Eigen::VectorXd row;
  for (int l = 1; l <= arch.depth(); ++l) {
    const int rows = arch.layer_widths[l];
    const int cols = arch.layer_widths[l - 1];
    const double w_sd = hp.sigma_w / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd h(inputs.rows(), rows);
    row.resize(cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) row[j] = w_sd * rng.normal();
      h.col(i) = x * row;
    }
    for (int i = 0; i < rows; ++i) h.col(i).array() += hp.sigma_b * rng.normal();
    x = h.unaryExpr([&](double v) { return arch.activation.phi(v); });
    pre.push_back(std::move(h));
  }
  return pre;
}

/// d x^L / d x^0 = prod_l D^l W^l with D^l = diag(phi'(h^l)); N_L x N_0.
inline Eigen::MatrixXd jacobian(const RandomNetwork& net, const Eigen::VectorXd& input) {
  if (input.size() != net.input_width()) {
    throw ShapeError("jacobian: layer 0 expects width " + std::to_string(net.input_width()) +
                     ", got " + std::to_string(input.size()));
  }
  Eigen::VectorXd x = input;
  Eigen::MatrixXd j = Eigen::MatrixXd::Identity(input.size(), input.size());
  for (int l = 0; l < net.depth(); ++l) {
    const Eigen::VectorXd h = net.weights[l] * x + net.biases[l];
    const Eigen::VectorXd d = h.unaryExpr([&](double v) { return net.activation.dphi(v); });
    j = d.asDiagonal() * (net.weights[l] * j);
    x = h.unaryExpr([&](double v) { return net.activation.phi(v); });
  }
  return j;
}

struct CorrelationMatrix {
  Eigen::MatrixXd entries;  // c_ab
  double mean_correlation = 0.0;
  // Standard error of the pair mean treating pairs as independent draws.
  double pair_standard_error = 0.0;
};

/// c_ab = q_ab / sqrt(q_aa q_bb) with q_ab = (1/N) sum_i h_i(a) h_i(b) over
/// the N units of one layer; <c> is the average over the M(M-1)/2 pairs.
inline CorrelationMatrix correlation_matrix(const Eigen::MatrixXd& h) {
  if (h.rows() < 2) throw InvalidArgument("correlation_matrix needs at least two inputs");
  if (h.cols() < 1) throw InvalidArgument("correlation_matrix needs at least one unit");
  const Eigen::Index m = h.rows();
  const Eigen::MatrixXd q = (h * h.transpose()) / static_cast<double>(h.cols());
  Eigen::VectorXd inv(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    if (!(q(a, a) > 0.0)) {
      throw DegenerateInput("input " + std::to_string(a) + " has zero variance", static_cast<std::size_t>(a));
    }
    inv[a] = 1.0 / std::sqrt(q(a, a));
  }
  CorrelationMatrix out;
  out.entries = inv.asDiagonal() * q * inv.asDiagonal();
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    out.entries(a, a) = 1.0;
    for (Eigen::Index b = 0; b < a; ++b) {
      const double c = std::clamp(out.entries(a, b), -1.0, 1.0);
      out.entries(a, b) = c;
      out.entries(b, a) = c;
      sum += c;
      sum_sq += c * c;
    }
  }
  const double pairs = 0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
  out.mean_correlation = sum / pairs;
  if (pairs > 1.0) {
    const double var = std::max(0.0, (sum_sq - pairs * out.mean_correlation * out.mean_correlation) / (pairs - 1.0));
    out.pair_standard_error = std::sqrt(var / pairs);
  }
  return out;
}

struct PhaseCorrelation {
  HyperParams hp;
  CorrelationMatrix input;
  CorrelationMatrix output;  // pre-activations of the last layer
};

/// Propagates the data once through a fresh network per phase. Every phase
/// uses the same seed, so the networks differ only through (sigma_w, sigma_b).
inline std::vector<PhaseCorrelation> propagate_experiment(const Eigen::MatrixXd& data,
                                                          const NetworkArchitecture& arch,
                                                          const std::vector<HyperParams>& phases,
                                                          std::uint64_t seed) {
  if (data.rows() < 2) throw InvalidArgument("propagate_experiment: dataset needs >= 2 rows");
  if (phases.empty()) throw InvalidArgument("propagate_experiment: no phases given");
  const CorrelationMatrix input = correlation_matrix(data);
  std::vector<PhaseCorrelation> out;
  for (const auto& hp : phases) {
    const RandomNetwork net = init_network(arch, hp, seed);
    const ForwardPass fp = forward(net, data);
    out.push_back({hp, input, correlation_matrix(fp.pre.back())});
  }
  return out;
}

struct ResizeReport {
  Eigen::Index full_size = 0;
  Eigen::Index subset_size = 0;
  double input_full = 0.0;
  double input_subset = 0.0;
  double output_full = 0.0;
  double output_subset = 0.0;
};

/// Mean correlations of the full data and of a uniform random subset, at the
/// input and after a network drawn once with `seed`.
inline ResizeReport resize_experiment(const Dataset& data, double fraction,
                                      const NetworkArchitecture& arch, const HyperParams& hp,
                                      std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("resize_experiment: fraction must be in (0, 1]");
  }
  const auto n = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(data.size())));
  if (n < 2) throw InvalidArgument("resize_experiment: subset would have fewer than 2 rows");
  const Dataset sub = subsample(data, n, seed);
  const RandomNetwork net = init_network(arch, hp, seed);
  ResizeReport r;
  r.full_size = data.size();
  r.subset_size = n;
  r.input_full = correlation_matrix(data.inputs).mean_correlation;
  r.input_subset = correlation_matrix(sub.inputs).mean_correlation;
  r.output_full = correlation_matrix(forward(net, data.inputs).pre.back()).mean_correlation;
  r.output_subset = correlation_matrix(forward(net, sub.inputs).pre.back()).mean_correlation;
  return r;
}

}  // namespace critprop
