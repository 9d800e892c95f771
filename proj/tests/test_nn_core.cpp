// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "opseqids/nn_core.hpp"

using namespace opseqids;

namespace {
Vec vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v[i++] = x;
  return v;
}
}  // namespace

TEST_CASE("activation center and saturation values") {
  CHECK(apply_activation(Activation::Sigmoid, vec({0.0}))[0] == doctest::Approx(0.5));
  CHECK(apply_activation(Activation::Tanh, vec({0.0}))[0] == doctest::Approx(0.0));
  CHECK(apply_activation(Activation::HardSigmoid, vec({0.0}))[0] == doctest::Approx(0.5));
  CHECK(apply_activation(Activation::HardSigmoid, vec({3.0}))[0] == 1.0);
  CHECK(apply_activation(Activation::HardSigmoid, vec({-3.0}))[0] == 0.0);
  Vec c = vec({-1.5, 0.25, 7.0});
  CHECK(apply_activation(Activation::Identity, c) == c);
  CHECK(apply_activation(Activation::Relu, vec({-2.0, 2.0}))[0] == 0.0);
}

TEST_CASE("activation derivatives match central differences away from kinks") {
  Rng rng(11);
  const double delta = 1e-6;
  for (Activation kind : {Activation::Sigmoid, Activation::Tanh,
                          Activation::HardSigmoid, Activation::Identity,
                          Activation::Relu}) {
    for (int trial = 0; trial < 200; ++trial) {
      double x = rng.uniform(-4.0, 4.0);
      // skip kink neighborhoods for the piecewise kinds
      if (kind == Activation::HardSigmoid &&
          (std::abs(std::abs(x) - 2.5) < 1e-3)) continue;
      if (kind == Activation::Relu && std::abs(x) < 1e-3) continue;
      double analytic = activation_derivative(kind, vec({x}))[0];
      double numeric = (apply_activation(kind, vec({x + delta}))[0] -
                        apply_activation(kind, vec({x - delta}))[0]) /
                       (2.0 * delta);
      CHECK(std::abs(analytic - numeric) < 1e-7);
    }
  }
}

TEST_CASE("hard-sigmoid derivative is 0.2 inside, 0 outside") {
  CHECK(activation_derivative(Activation::HardSigmoid, vec({0.0}))[0] == 0.2);
  CHECK(activation_derivative(Activation::HardSigmoid, vec({2.6}))[0] == 0.0);
  CHECK(activation_derivative(Activation::HardSigmoid, vec({-2.6}))[0] == 0.0);
}

TEST_CASE("non-finite activation input is an error") {
  CHECK_THROWS(apply_activation(Activation::Tanh,
                                vec({std::numeric_limits<double>::infinity()})));
}

TEST_CASE("affine") {
  Mat Z = Mat::Zero(2, 2);
  Vec z = Vec::Zero(2);
  CHECK(affine(Z, z, Z, z, vec({1.0, 2.0})) == vec({1.0, 2.0}));
  CHECK(affine(Mat::Identity(2, 2), vec({3.0, 4.0}), Z, z, z) == vec({3.0, 4.0}));
  Mat W(2, 2);
  W << 1, 2, 3, 4;
  CHECK(affine(W, vec({1.0, 1.0}), Z, z, z) == vec({3.0, 7.0}));
  CHECK_THROWS_WITH_AS(affine(W, vec({1.0}), Z, z, z),
                       doctest::Contains("W/x"), std::invalid_argument);
}

TEST_CASE("hadamard") {
  CHECK(hadamard(vec({1.0, 2.0}), vec({3.0, 4.0})) == vec({3.0, 8.0}));
  Vec a = vec({-2.0, 0.5, 7.0});
  CHECK(hadamard(a, Vec::Ones(3)) == a);
  CHECK(hadamard(a, Vec::Zero(3)) == Vec::Zero(3));
  Vec b = vec({1.5, -3.0, 0.25});
  CHECK(hadamard(a, b) == hadamard(b, a));
  CHECK_THROWS(hadamard(a, Vec::Ones(2)));
}

TEST_CASE("bce loss") {
  CHECK(bce_loss(1.0, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.0, 1) > 0.0);  // finite thanks to the clamp
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK_THROWS(bce_loss(0.5, 2));
  Rng rng(3);
  for (int i = 0; i < 100; ++i) CHECK(bce_loss(rng.uniform(), i % 2) >= 0.0);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Vec theta = vec({1.0, -2.0, 3.0});
  Vec g = Vec::Zero(3);
  std::vector<ParamView> params = {{"theta", theta.data(), 3}};
  std::vector<ParamView> grads = {{"g", g.data(), 3}};
  AdamOptimizer adam(params);
  for (int i = 0; i < 5; ++i) adam.step(params, grads);
  CHECK(theta == vec({1.0, -2.0, 3.0}));
  CHECK(adam.step_count() == 5);
}

TEST_CASE("adam: first step of a scalar parameter") {
  double theta = 0.0, g = 1.0;
  std::vector<ParamView> params = {{"theta", &theta, 1}};
  std::vector<ParamView> grads = {{"g", &g, 1}};
  AdamOptimizer adam(params);
  adam.step(params, grads);
  // bias-corrected first step: -lr * 1 / (1 + eps_hat)
  CHECK(theta == doctest::Approx(-0.000999999).epsilon(1e-5));
}

TEST_CASE("adam: determinism and error paths") {
  auto run = [] {
    Vec theta = vec({0.5, 0.5});
    Vec g = vec({0.1, -0.2});
    std::vector<ParamView> params = {{"theta", theta.data(), 2}};
    std::vector<ParamView> grads = {{"g", g.data(), 2}};
    AdamOptimizer adam(params);
    for (int i = 0; i < 10; ++i) adam.step(params, grads);
    return theta;
  };
  CHECK(run() == run());

  Vec theta = vec({0.0});
  Vec bad = vec({std::numeric_limits<double>::quiet_NaN()});
  std::vector<ParamView> params = {{"w", theta.data(), 1}};
  std::vector<ParamView> grads = {{"w", bad.data(), 1}};
  AdamOptimizer adam(params);
  CHECK_THROWS_WITH_AS(adam.step(params, grads), doctest::Contains("w"),
                       std::runtime_error);
}

TEST_CASE("dropout mask") {
  Rng rng(7);
  CHECK(dropout_mask(16, 0.0, rng) == Vec::Ones(16));
  CHECK_THROWS(dropout_mask(4, 1.0, rng));

  const int n = 10000;
  Vec mask = dropout_mask(n, 0.5, rng);
  double zero_fraction = (mask.array() == 0.0).count() / static_cast<double>(n);
  CHECK(zero_fraction == doctest::Approx(0.5).epsilon(0.04));
  // inverted dropout is unbiased
  CHECK(mask.mean() == doctest::Approx(1.0).epsilon(0.05));
  for (int i = 0; i < n; ++i) CHECK((mask[i] == 0.0 || mask[i] == 2.0));
}

TEST_CASE("grad_check on closed-form losses") {
  double theta = 3.0;
  double analytic = theta;  // d/dtheta 0.5 theta^2
  std::vector<ParamView> params = {{"theta", &theta, 1}};
  std::vector<ParamView> grads = {{"g", &analytic, 1}};
  auto quadratic = [&] { return 0.5 * theta * theta; };
  CHECK(grad_check(quadratic, params, grads) < 1e-9);

  double slope = 2.0;
  grads[0].data = &slope;
  auto linear = [&] { return 2.0 * theta; };
  CHECK(grad_check(linear, params, grads) < 1e-9);
}

TEST_CASE("global norm clipping") {
  Vec g = vec({3.0, 4.0});
  std::vector<ParamView> views = {{"g", g.data(), 2}};
  double norm = clip_by_global_norm(views, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(1.0));

  Vec small = vec({0.3, 0.4});
  std::vector<ParamView> sv = {{"g", small.data(), 2}};
  clip_by_global_norm(sv, 5.0);
  CHECK(small == vec({0.3, 0.4}));
}
