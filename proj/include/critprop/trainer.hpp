#pragma once

// A plain multilayer perceptron trained by mini-batch SGD. Hidden layers use
// the architecture's activation; the last layer is a linear head feeding
// either softmax cross-entropy or a sum-of-squares cost.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "critprop/data.hpp"
#include "critprop/errors.hpp"
#include "critprop/meanfield.hpp"
#include "critprop/propagator.hpp"
#include "critprop/random.hpp"

namespace critprop {

enum class Loss { CrossEntropy, SumOfSquares };

inline std::string_view loss_name(Loss l) {
  return l == Loss::CrossEntropy ? "cross-entropy" : "sum-of-squares";
}

inline Loss loss_from_name(std::string_view name) {
  if (name == "cross-entropy") return Loss::CrossEntropy;
  if (name == "sum-of-squares") return Loss::SumOfSquares;
  throw InvalidArgument("unknown loss '" + std::string(name) + "' (expected cross-entropy or sum-of-squares)");
}

struct TrainConfig {
  NetworkArchitecture arch = uniform_architecture(784, 6, 50, Tanh{}, 10);
  HyperParams hp{1.0, 0.3};
  Loss loss = Loss::CrossEntropy;
  double learning_rate = 0.1;
  int batch_size = 32;
  int epochs = 20;
  int train_size = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    arch.validate();
    hp.validate();
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("learning_rate must be a non-negative finite number");
    }
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (train_size < 1) throw InvalidArgument("train_size must be >= 1");
    if (batch_size > train_size) throw InvalidArgument("batch_size must not exceed train_size");
  }
};

struct AccuracyCurve {
  std::vector<double> accuracy;    // validation accuracy after each epoch
  std::vector<double> train_loss;  // mean mini-batch loss over each epoch
  std::vector<double> wall_time;   // seconds spent in each epoch
  double initial_accuracy = 0.0;   // before the first update
  TrainConfig config;

  double final_accuracy() const { return accuracy.empty() ? 0.0 : accuracy.back(); }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;
};

inline constexpr std::uint64_t kOrderStream = 1;

namespace detail {

inline Eigen::MatrixXd one_hot(const std::vector<int>& labels, int classes) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                            " is outside 0.." + std::to_string(classes - 1));
    }
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// Row-wise log-sum-exp softmax.
inline Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits, Eigen::VectorXd& log_norm) {
  const Eigen::VectorXd top = logits.rowwise().maxCoeff();
  Eigen::MatrixXd e = (logits.colwise() - top).array().exp().matrix();
  const Eigen::VectorXd s = e.rowwise().sum();
  log_norm = top.array() + s.array().log();
  return s.cwiseInverse().asDiagonal() * e;
}

}  // namespace detail

/// Forward pass through hidden layers and the linear head; returns logits.
inline Eigen::MatrixXd logits(const RandomNetwork& net, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != net.input_width()) {
    throw ShapeError("network expects " + std::to_string(net.input_width()) + " inputs, got " +
                     std::to_string(inputs.cols()));
  }
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < net.depth(); ++l) {
    Eigen::MatrixXd h = a * net.weights[l].transpose();
    h.rowwise() += net.biases[l].transpose();
    a = (l + 1 < net.depth()) ? h.unaryExpr([&](double v) { return net.activation.phi(v); }) : h;
  }
  return a;
}

/// Mean loss per example against targets (one-hot for cross-entropy).
/// Sum-of-squares is (1/2) |output - target|^2 per example.
inline double batch_loss(const RandomNetwork& net, Loss loss, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets) {
  const Eigen::MatrixXd z = logits(net, inputs);
  if (targets.rows() != z.rows() || targets.cols() != z.cols()) {
    throw ShapeError("targets must be " + std::to_string(z.rows()) + " x " + std::to_string(z.cols()));
  }
  const double m = static_cast<double>(z.rows());
  if (loss == Loss::SumOfSquares) return 0.5 * (z - targets).squaredNorm() / m;
  Eigen::VectorXd log_norm;
  detail::softmax(z, log_norm);
  return (log_norm.sum() - (targets.cwiseProduct(z)).sum()) / m;
}

/// Backpropagated gradient of the mean batch loss with respect to every
/// weight and bias.
inline Gradients gradient(const RandomNetwork& net, Loss loss, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& targets) {
  if (inputs.cols() != net.input_width()) {
    throw ShapeError("network expects " + std::to_string(net.input_width()) + " inputs, got " +
                     std::to_string(inputs.cols()));
  }
  const int depth = net.depth();
  std::vector<Eigen::MatrixXd> acts;  // acts[l] = input to layer l+1
  std::vector<Eigen::MatrixXd> pres;
  acts.push_back(inputs);
  for (int l = 0; l < depth; ++l) {
    Eigen::MatrixXd h = acts.back() * net.weights[l].transpose();
    h.rowwise() += net.biases[l].transpose();
    if (l + 1 < depth) acts.push_back(h.unaryExpr([&](double v) { return net.activation.phi(v); }));
    pres.push_back(std::move(h));
  }
  const Eigen::MatrixXd& z = pres.back();
  if (targets.rows() != z.rows() || targets.cols() != z.cols()) {
    throw ShapeError("targets must be " + std::to_string(z.rows()) + " x " + std::to_string(z.cols()));
  }
  const double m = static_cast<double>(z.rows());

  Gradients g;
  g.weights.resize(depth);
  g.biases.resize(depth);
  Eigen::MatrixXd delta;
  if (loss == Loss::SumOfSquares) {
    delta = (z - targets) / m;
    g.loss = 0.5 * (z - targets).squaredNorm() / m;
  } else {
    Eigen::VectorXd log_norm;
    delta = (detail::softmax(z, log_norm) - targets) / m;
    g.loss = (log_norm.sum() - targets.cwiseProduct(z).sum()) / m;
  }
  for (int l = depth - 1; l >= 0; --l) {
    g.weights[l] = delta.transpose() * acts[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      const Eigen::MatrixXd back = delta * net.weights[l];
      delta = back.cwiseProduct(pres[l - 1].unaryExpr([&](double v) { return net.activation.dphi(v); }));
    }
  }
  return g;
}

inline Gradients gradient(const RandomNetwork& net, Loss loss, const Eigen::MatrixXd& inputs,
                          const std::vector<int>& labels) {
  return gradient(net, loss, inputs, detail::one_hot(labels, net.output_width()));
}

inline void apply_gradient(RandomNetwork& net, const Gradients& g, double learning_rate) {
  for (int l = 0; l < net.depth(); ++l) {
    net.weights[l] -= learning_rate * g.weights[l];
    net.biases[l] -= learning_rate * g.biases[l];
  }
}

/// Class predictions; ties go to the lowest class index.
inline std::vector<int> predict(const RandomNetwork& net, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd z = logits(net, inputs);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.cols(); ++k) {
      if (z(i, k) > z(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

inline double accuracy(const RandomNetwork& net, const Dataset& ds) {
  if (ds.size() == 0) throw InvalidArgument("accuracy of an empty dataset");
  const auto pred = predict(net, ds.inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace detail {
inline void check_dataset(const Dataset& ds, const NetworkArchitecture& arch, const char* which) {
  if (ds.dim() != arch.layer_widths.front()) {
    throw ShapeError(std::string(which) + " data has dimension " + std::to_string(ds.dim()) +
                     ", architecture expects " + std::to_string(arch.layer_widths.front()));
  }
  if (static_cast<std::size_t>(ds.size()) != ds.labels.size()) {
    throw ShapeError(std::string(which) + " data has mismatched row and label counts");
  }
  const int classes = arch.layer_widths.back();
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= classes) {
      throw InvalidArgument(std::string(which) + " label " + std::to_string(ds.labels[i]) +
                            " at index " + std::to_string(i) + " is outside 0.." + std::to_string(classes - 1));
    }
  }
}
}  // namespace detail

/// Mini-batch SGD on the first train_size rows of `train_data`. The network
/// is drawn with the config seed; the per-epoch shuffles use a separate
/// stream of that seed, so runs differing in (sigma_w, sigma_b) see the same
/// batches.
inline AccuracyCurve train(const TrainConfig& config, const Dataset& train_data,
                           const Dataset& validation_data, RandomNetwork* trained = nullptr) {
  config.validate();
  detail::check_dataset(train_data, config.arch, "training");
  detail::check_dataset(validation_data, config.arch, "validation");
  if (train_data.size() < config.train_size) {
    throw InvalidArgument("train_size " + std::to_string(config.train_size) + " exceeds the " +
                          std::to_string(train_data.size()) + " available training rows");
  }
  if (validation_data.size() == 0) throw InvalidArgument("validation data is empty");

  RandomNetwork net = init_network(config.arch, config.hp, config.seed);
  Rng order_rng(config.seed, kOrderStream);
  const int n = config.train_size;
  const Eigen::MatrixXd targets =
      detail::one_hot(std::vector<int>(train_data.labels.begin(), train_data.labels.begin() + n),
                      config.arch.layer_widths.back());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));

  AccuracyCurve curve;
  curve.config = config;
  curve.initial_accuracy = accuracy(net, validation_data);
  Eigen::MatrixXd xb, yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    order_rng.shuffle(std::span<Eigen::Index>(order));
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int count = std::min(config.batch_size, n - start);
      xb.resize(count, train_data.dim());
      yb.resize(count, targets.cols());
      for (int k = 0; k < count; ++k) {
        xb.row(k) = train_data.inputs.row(order[start + k]);
        yb.row(k) = targets.row(order[start + k]);
      }
      const Gradients g = gradient(net, config.loss, xb, yb);
      if (!std::isfinite(g.loss)) {
        throw DivergenceError("loss diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batches + 1),
                              epoch + 1, batches + 1);
      }
      apply_gradient(net, g, config.learning_rate);
      loss_sum += g.loss;
      ++batches;
    }
    curve.train_loss.push_back(loss_sum / batches);
    curve.accuracy.push_back(accuracy(net, validation_data));
    curve.wall_time.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  if (trained) *trained = std::move(net);
  return curve;
}

struct PhaseRun {
  HyperParams hp;
  std::optional<AccuracyCurve> curve;
  std::optional<std::string> error;  // divergence or other failure
};

/// One model per phase from the same seed (same data order).
inline std::vector<PhaseRun> phase_comparison(const TrainConfig& base,
                                              const std::vector<HyperParams>& phases,
                                              const Dataset& train_data,
                                              const Dataset& validation_data) {
  if (phases.empty()) throw InvalidArgument("phase_comparison: no phases given");
  std::vector<PhaseRun> out;
  for (const auto& hp : phases) {
    TrainConfig cfg = base;
    cfg.hp = hp;
    PhaseRun run{hp, std::nullopt, std::nullopt};
    try {
      run.curve = train(cfg, train_data, validation_data);
    } catch (const DivergenceError& e) {
      run.error = e.what();
    }
    out.push_back(std::move(run));
  }
  return out;
}

enum class Variant { Baseline, HalfData, HalfWidth, HalfBatch };

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::HalfData: return "half-data";
    case Variant::HalfWidth: return "half-width";
    case Variant::HalfBatch: return "half-batch";
  }
  return "baseline";
}

inline Variant variant_from_name(std::string_view name) {
  for (Variant v : {Variant::Baseline, Variant::HalfData, Variant::HalfWidth, Variant::HalfBatch}) {
    if (variant_name(v) == name) return v;
  }
  throw InvalidArgument("unknown variant '" + std::string(name) +
                        "' (expected baseline, half-data, half-width or half-batch)");
}

/// The halved counterpart of `base`. Half-data keeps a uniform random half of
/// the training rows (drawn with the config seed), half-width halves every
/// hidden layer, half-batch halves the mini-batch.
inline TrainConfig apply_variant(const TrainConfig& base, Variant v) {
  TrainConfig cfg = base;
  switch (v) {
    case Variant::Baseline:
      break;
    case Variant::HalfData:
      if (base.train_size < 2 * base.batch_size) {
        throw InvalidArgument("half-data needs train_size >= 2 * batch_size");
      }
      cfg.train_size = base.train_size / 2;
      break;
    case Variant::HalfWidth:
      for (std::size_t k = 1; k + 1 < cfg.arch.layer_widths.size(); ++k) {
        if (cfg.arch.layer_widths[k] < 2) throw InvalidArgument("half-width needs hidden widths >= 2");
        cfg.arch.layer_widths[k] /= 2;
      }
      break;
    case Variant::HalfBatch:
      if (base.batch_size < 2) throw InvalidArgument("half-batch needs batch_size >= 2");
      cfg.batch_size = base.batch_size / 2;
      break;
  }
  return cfg;
}

/// Training rows for a config under a variant: the half-data variant trains
/// on a seeded random half of the base training rows.
inline Dataset variant_training_rows(const TrainConfig& base, Variant v, const Dataset& train_data) {
  const Dataset rows = slice(train_data, 0, base.train_size);
  if (v != Variant::HalfData) return rows;
  return subsample(rows, base.train_size / 2, base.seed);
}

struct ResizeComparison {
  HyperParams hp;
  PhaseRun baseline;
  PhaseRun variant;
  double degradation = 0.0;  // baseline final accuracy minus variant final accuracy
};

inline std::vector<ResizeComparison> resize_training_experiment(
    const TrainConfig& base, Variant v, const std::vector<HyperParams>& phases,
    const Dataset& train_data, const Dataset& validation_data) {
  if (phases.empty()) throw InvalidArgument("resize_training_experiment: no phases given");
  const TrainConfig halved = apply_variant(base, v);
  const Dataset base_rows = variant_training_rows(base, Variant::Baseline, train_data);
  const Dataset variant_rows = variant_training_rows(base, v, train_data);
  const auto base_runs = phase_comparison(base, phases, base_rows, validation_data);
  const auto variant_runs = phase_comparison(halved, phases, variant_rows, validation_data);
  std::vector<ResizeComparison> out;
  for (std::size_t k = 0; k < phases.size(); ++k) {
    ResizeComparison r{phases[k], base_runs[k], variant_runs[k], 0.0};
    if (r.baseline.curve && r.variant.curve) {
      r.degradation = r.baseline.curve->final_accuracy() - r.variant.curve->final_accuracy();
    } else {
      r.degradation = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace critprop
