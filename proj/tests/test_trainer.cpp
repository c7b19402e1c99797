#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "critprop/data.hpp"
#include "critprop/trainer.hpp"

using namespace critprop;
using Catch::Matchers::WithinAbs;

namespace {

// Central differences of the batch loss with respect to every parameter.
Gradients finite_difference(RandomNetwork net, Loss loss, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double h = 1e-6;
  Gradients g;
  for (int l = 0; l < net.depth(); ++l) {
    Eigen::MatrixXd gw(net.weights[l].rows(), net.weights[l].cols());
    for (Eigen::Index i = 0; i < gw.rows(); ++i) {
      for (Eigen::Index j = 0; j < gw.cols(); ++j) {
        const double keep = net.weights[l](i, j);
        net.weights[l](i, j) = keep + h;
        const double up = batch_loss(net, loss, x, y);
        net.weights[l](i, j) = keep - h;
        const double down = batch_loss(net, loss, x, y);
        net.weights[l](i, j) = keep;
        gw(i, j) = (up - down) / (2 * h);
      }
    }
    Eigen::VectorXd gb(net.biases[l].size());
    for (Eigen::Index i = 0; i < gb.size(); ++i) {
      const double keep = net.biases[l][i];
      net.biases[l][i] = keep + h;
      const double up = batch_loss(net, loss, x, y);
      net.biases[l][i] = keep - h;
      const double down = batch_loss(net, loss, x, y);
      net.biases[l][i] = keep;
      gb[i] = (up - down) / (2 * h);
    }
    g.weights.push_back(gw);
    g.biases.push_back(gb);
  }
  return g;
}

double relative_error(const Gradients& a, const Gradients& b) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    diff += (a.weights[l] - b.weights[l]).squaredNorm() + (a.biases[l] - b.biases[l]).squaredNorm();
    norm += b.weights[l].squaredNorm() + b.biases[l].squaredNorm();
  }
  return std::sqrt(diff / norm);
}

TrainConfig small_config(int inputs, int train_size) {
  TrainConfig cfg;
  cfg.arch = uniform_architecture(inputs, 3, 12, Tanh{}, 10);
  cfg.hp = {1.39, 0.3};
  cfg.batch_size = std::min(8, train_size);
  cfg.epochs = 5;
  cfg.train_size = train_size;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("backprop matches finite differences", "[trainer][oracle]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (Loss loss : {Loss::CrossEntropy, Loss::SumOfSquares}) {
      const RandomNetwork net = init_network(uniform_architecture(5, 2, 6, Tanh{}, 4), {1.4, 0.3}, seed);
      Rng rng(seed + 50);
      Eigen::MatrixXd x(7, 5);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
      std::vector<int> labels;
      for (int i = 0; i < 7; ++i) labels.push_back(static_cast<int>(rng.index(4)));
      const Eigen::MatrixXd y = detail::one_hot(labels, 4);
      const Gradients g = gradient(net, loss, x, y);
      CHECK(relative_error(g, finite_difference(net, loss, x, y)) < 1e-5);
      CHECK_THAT(g.loss, WithinAbs(batch_loss(net, loss, x, y), 1e-14));
    }
  }
}

TEST_CASE("zero inputs and biases give zero hidden features", "[trainer]") {
  RandomNetwork net = init_network(uniform_architecture(4, 2, 5, Tanh{}, 3), {1.2, 0.0}, 9);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 4);
  const std::vector<int> labels{0, 2};
  const Gradients g = gradient(net, Loss::CrossEntropy, x, labels);
  for (const auto& w : g.weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  // logits are zero, so the head bias gradient is mean(softmax(0) - y)
  CHECK_THAT(g.biases.back()[0], WithinAbs(1.0 / 3 - 0.5, 1e-15));
  CHECK_THAT(g.biases.back()[1], WithinAbs(1.0 / 3, 1e-15));
  CHECK_THAT(g.biases.back()[2], WithinAbs(1.0 / 3 - 0.5, 1e-15));
}

TEST_CASE("sum-of-squares gradient of a one-weight linear net", "[trainer]") {
  RandomNetwork net;
  net.weights = {Eigen::MatrixXd::Constant(1, 1, 0.7)};
  net.biases = {Eigen::VectorXd::Zero(1)};
  net.activation = Linear{};
  const double x = 2.0, y = 0.5;
  const Gradients g = gradient(net, Loss::SumOfSquares, Eigen::MatrixXd::Constant(1, 1, x),
                               Eigen::MatrixXd::Constant(1, 1, y));
  // cost (1/2)(wx - y)^2
  CHECK_THAT(g.weights[0](0, 0), WithinAbs((0.7 * x - y) * x, 1e-15));
  CHECK_THAT(g.biases[0][0], WithinAbs(0.7 * x - y, 1e-15));
  CHECK_THAT(g.loss, WithinAbs(0.5 * std::pow(0.7 * x - y, 2), 1e-15));
}

TEST_CASE("a single example is memorized", "[trainer]") {
  const Dataset one = slice(synthetic_gaussian(10, 16, 0.0, 1), 3, 1);
  TrainConfig cfg = small_config(16, 1);
  cfg.epochs = 60;
  RandomNetwork trained;
  const AccuracyCurve c = train(cfg, one, one, &trained);
  CHECK(c.final_accuracy() == 1.0);
  CHECK(accuracy(trained, one) == 1.0);
}

TEST_CASE("zero learning rate leaves accuracy at its initial value", "[trainer]") {
  const Dataset d = synthetic_gaussian(80, 16, 0.2, 2);
  TrainConfig cfg = small_config(16, 60);
  cfg.learning_rate = 0.0;
  const AccuracyCurve c = train(cfg, slice(d, 0, 60), slice(d, 60, 20));
  REQUIRE(c.accuracy.size() == 5);
  for (double a : c.accuracy) CHECK(a == c.initial_accuracy);
}

TEST_CASE("training is deterministic for a fixed seed", "[trainer]") {
  const Dataset d = synthetic_gaussian(120, 16, 0.1, 3);
  const TrainConfig cfg = small_config(16, 100);
  const AccuracyCurve a = train(cfg, slice(d, 0, 100), slice(d, 100, 20));
  const AccuracyCurve b = train(cfg, slice(d, 0, 100), slice(d, 100, 20));
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.train_loss == b.train_loss);
  for (double v : a.accuracy) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("small-step full-batch descent does not increase the loss", "[trainer]") {
  const Dataset d = synthetic_gaussian(100, 20, 0.3, 6);
  RandomNetwork net = init_network(uniform_architecture(20, 3, 15, Tanh{}, 10), {1.39, 0.3}, 4);
  const Eigen::MatrixXd y = detail::one_hot(d.labels, 10);
  double prev = batch_loss(net, Loss::CrossEntropy, d.inputs, y);
  for (int step = 0; step < 50; ++step) {
    apply_gradient(net, gradient(net, Loss::CrossEntropy, d.inputs, y), 1e-3);
    const double now = batch_loss(net, Loss::CrossEntropy, d.inputs, y);
    CHECK(now <= prev);
    prev = now;
  }
}

TEST_CASE("diverging training reports epoch and batch", "[trainer]") {
  const Dataset d = synthetic_gaussian(40, 16, 0.0, 7);
  TrainConfig cfg = small_config(16, 32);
  cfg.loss = Loss::SumOfSquares;
  cfg.learning_rate = 1e200;
  try {
    train(cfg, slice(d, 0, 32), slice(d, 32, 8));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch >= 1);
    CHECK(e.batch >= 1);
  }
}

TEST_CASE("training inputs are validated", "[trainer]") {
  const Dataset d = synthetic_gaussian(40, 16, 0.0, 8);
  TrainConfig cfg = small_config(16, 32);
  CHECK_THROWS_AS(train(cfg, slice(d, 0, 20), slice(d, 32, 8)), InvalidArgument);
  Dataset bad = slice(d, 0, 32);
  bad.labels[5] = 12;
  CHECK_THROWS_AS(train(cfg, bad, slice(d, 32, 8)), InvalidArgument);
  TrainConfig wide = small_config(17, 32);
  CHECK_THROWS_AS(train(wide, slice(d, 0, 32), slice(d, 32, 8)), ShapeError);
  cfg.batch_size = 64;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_config(16, 32);
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("predictions break ties toward the lowest class", "[trainer]") {
  RandomNetwork net;
  net.weights = {Eigen::MatrixXd::Zero(3, 2)};
  net.biases = {Eigen::VectorXd::Zero(3)};
  net.activation = Tanh{};
  const auto p = predict(net, Eigen::MatrixXd::Random(4, 2));
  for (int v : p) CHECK(v == 0);
}

TEST_CASE("variants halve the intended quantity", "[trainer]") {
  TrainConfig base;
  CHECK(apply_variant(base, Variant::HalfData).train_size == 5000);
  CHECK(apply_variant(base, Variant::HalfBatch).batch_size == 16);
  const auto hw = apply_variant(base, Variant::HalfWidth).arch.layer_widths;
  CHECK(hw.front() == 784);
  CHECK(hw.back() == 10);
  for (std::size_t k = 1; k + 1 < hw.size(); ++k) CHECK(hw[k] == 25);
  CHECK(variant_from_name("half-width") == Variant::HalfWidth);
  CHECK_THROWS_AS(variant_from_name("double"), InvalidArgument);
  base.train_size = 40;
  CHECK_THROWS_AS(apply_variant(base, Variant::HalfData), InvalidArgument);
}

TEST_CASE("phase comparison and resize experiment on a toy problem", "[trainer]") {
  const Dataset d = synthetic_gaussian(140, 16, 0.1, 10);
  TrainConfig cfg = small_config(16, 120);
  cfg.epochs = 3;
  const std::vector<HyperParams> phases{{1.0, 0.3}, {1.39, 0.3}};
  const auto single = phase_comparison(cfg, {phases[1]}, slice(d, 0, 120), slice(d, 120, 20));
  REQUIRE(single.size() == 1);
  TrainConfig crit = cfg;
  crit.hp = phases[1];
  CHECK(single[0].curve->accuracy == train(crit, slice(d, 0, 120), slice(d, 120, 20)).accuracy);

  const auto cmp = resize_training_experiment(cfg, Variant::HalfData, phases, slice(d, 0, 120), slice(d, 120, 20));
  REQUIRE(cmp.size() == 2);
  for (const auto& r : cmp) {
    REQUIRE(r.baseline.curve);
    REQUIRE(r.variant.curve);
    CHECK(r.variant.curve->config.train_size == 60);
    CHECK_THAT(r.degradation, WithinAbs(r.baseline.curve->final_accuracy() - r.variant.curve->final_accuracy(), 0));
  }
}
