// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "opseqids/rng.hpp"

namespace opseqids {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { Sigmoid, Tanh, HardSigmoid, Identity, Relu };

Activation activation_from_string(const std::string& name);
std::string activation_name(Activation kind);

// Element-wise activation; throws on non-finite input.
Vec apply_activation(Activation kind, const Vec& x);
// Derivative evaluated at pre-activation x (subgradient 0 at kinks).
Vec activation_derivative(Activation kind, const Vec& x);
// Derivative expressed through the activation value a = act(x); valid for
// Sigmoid, Tanh, HardSigmoid, Identity.
Vec activation_derivative_from_value(Activation kind, const Vec& a);

// W x + U h + b with shape checks naming the offending operand.
Vec affine(const Mat& W, const Vec& x, const Mat& U, const Vec& h, const Vec& b);

Vec hadamard(const Vec& a, const Vec& b);

// -[y ln p + (1-y) ln(1-p)] with p clamped to [eps, 1-eps].
double bce_loss(double p, int y);
// d loss / d p at the clamped probability.
double bce_loss_grad(double p, int y);

// --- flat parameter views ---------------------------------------------------

// Named view into one parameter tensor's storage; networks expose their
// parameters and gradients as parallel lists of these.
struct ParamView {
  std::string name;
  double* data = nullptr;
  Eigen::Index size = 0;
};

Eigen::Index total_size(const std::vector<ParamView>& views);

// Global-norm gradient clipping, applied in place. Returns the pre-clip norm.
double clip_by_global_norm(const std::vector<ParamView>& grads, double max_norm);

// --- Adam -------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
public:
  explicit AdamOptimizer(const std::vector<ParamView>& params, AdamConfig cfg = {});

  // Standard bias-corrected update. Throws on shape mismatch or non-finite
  // gradients, naming the parameter.
  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads);

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
  std::vector<Eigen::Index> sizes_;
};

// --- dropout ----------------------------------------------------------------

// Inverted dropout: 0 with probability rate, else 1/(1-rate).
Vec dropout_mask(Eigen::Index size, double rate, Rng& rng);

// --- gradient checking ------------------------------------------------------

// Central-difference check of analytic gradients. loss() must be a
// deterministic function of the parameters behind `params`.
// Returns max over coordinates of |a - n| / max(|a|, |n|, 1e-6); the floor
// switches near-zero gradients to an absolute-error comparison, where
// central-difference round-off would otherwise dominate.
double grad_check(const std::function<double()>& loss,
                  const std::vector<ParamView>& params,
                  const std::vector<ParamView>& analytic_grads,
                  double delta = 1e-5);

}  // namespace opseqids
