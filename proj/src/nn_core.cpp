// SPDX-License-Identifier: Apache-2.0
#include "opseqids/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace opseqids {

Activation activation_from_string(const std::string& name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "hard_sigmoid") return Activation::HardSigmoid;
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_name(Activation kind) {
  switch (kind) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::HardSigmoid: return "hard_sigmoid";
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
  }
  return "?";
}

Vec apply_activation(Activation kind, const Vec& x) {
  if (!x.allFinite()) throw std::runtime_error("non-finite activation input");
  switch (kind) {
    case Activation::Sigmoid:
      return (1.0 / (1.0 + (-x.array()).exp())).matrix();
    case Activation::Tanh:
      return x.array().tanh().matrix();
    case Activation::HardSigmoid:
      return (0.2 * x.array() + 0.5).cwiseMax(0.0).cwiseMin(1.0).matrix();
    case Activation::Identity:
      return x;
    case Activation::Relu:
      return x.cwiseMax(0.0);
  }
  throw std::logic_error("unreachable");
}

Vec activation_derivative(Activation kind, const Vec& x) {
  switch (kind) {
    case Activation::Sigmoid: {
      Vec s = apply_activation(Activation::Sigmoid, x);
      return (s.array() * (1.0 - s.array())).matrix();
    }
    case Activation::Tanh: {
      Vec t = x.array().tanh().matrix();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::HardSigmoid:
      return (x.array() > -2.5 && x.array() < 2.5).select(0.2, Vec::Zero(x.size()));
    case Activation::Identity:
      return Vec::Ones(x.size());
    case Activation::Relu:
      return (x.array() > 0.0).select(1.0, Vec::Zero(x.size()));
  }
  throw std::logic_error("unreachable");
}

Vec activation_derivative_from_value(Activation kind, const Vec& a) {
  switch (kind) {
    case Activation::Sigmoid:
      return (a.array() * (1.0 - a.array())).matrix();
    case Activation::Tanh:
      return (1.0 - a.array().square()).matrix();
    case Activation::HardSigmoid:
      return (a.array() > 0.0 && a.array() < 1.0).select(0.2, Vec::Zero(a.size()));
    case Activation::Identity:
      return Vec::Ones(a.size());
    case Activation::Relu:
      throw std::invalid_argument("relu derivative needs the pre-activation");
  }
  throw std::logic_error("unreachable");
}

Vec affine(const Mat& W, const Vec& x, const Mat& U, const Vec& h, const Vec& b) {
  if (W.cols() != x.size())
    throw std::invalid_argument("affine: W/x dimension mismatch");
  if (U.cols() != h.size())
    throw std::invalid_argument("affine: U/h dimension mismatch");
  if (W.rows() != U.rows() || W.rows() != b.size())
    throw std::invalid_argument("affine: output dimension mismatch (W/U/b)");
  return W * x + U * h + b;
}

Vec hadamard(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hadamard: length mismatch");
  return a.cwiseProduct(b);
}

namespace {
constexpr double kProbEps = 1e-12;
double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }
}  // namespace

double bce_loss(double p, int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
  double q = clamp_prob(p);
  return -(y * std::log(q) + (1 - y) * std::log(1.0 - q));
}

double bce_loss_grad(double p, int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
  double q = clamp_prob(p);
  return (q - y) / (q * (1.0 - q));
}

Eigen::Index total_size(const std::vector<ParamView>& views) {
  Eigen::Index n = 0;
  for (const auto& v : views) n += v.size;
  return n;
}

double clip_by_global_norm(const std::vector<ParamView>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    sq += Eigen::Map<const Vec>(g.data, g.size).squaredNorm();
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (const auto& g : grads) Eigen::Map<Vec>(g.data, g.size) *= scale;
  }
  return norm;
}

AdamOptimizer::AdamOptimizer(const std::vector<ParamView>& params, AdamConfig cfg)
    : cfg_(cfg) {
  for (const auto& p : params) {
    m_.push_back(Vec::Zero(p.size));
    v_.push_back(Vec::Zero(p.size));
    sizes_.push_back(p.size);
  }
}

void AdamOptimizer::step(const std::vector<ParamView>& params,
                         const std::vector<ParamView>& grads) {
  if (params.size() != sizes_.size() || grads.size() != sizes_.size())
    throw std::invalid_argument("adam: parameter list shape changed");
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (params[i].size != sizes_[i] || grads[i].size != sizes_[i])
      throw std::invalid_argument("adam: shape mismatch for " + params[i].name);
    Eigen::Map<const Vec> g(grads[i].data, grads[i].size);
    if (!g.allFinite())
      throw std::runtime_error("adam: non-finite gradient for " + params[i].name);
    Eigen::Map<Vec> p(params[i].data, params[i].size);
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i].array().matrix() +
            (1.0 - cfg_.beta2) * g.array().square().matrix();
    Vec m_hat = m_[i] / bc1;
    Vec v_hat = v_[i] / bc2;
    p.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
  }
}

Vec dropout_mask(Eigen::Index size, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1)");
  Vec mask(size);
  double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < size; ++i)
    mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return mask;
}

double grad_check(const std::function<double()>& loss,
                  const std::vector<ParamView>& params,
                  const std::vector<ParamView>& analytic_grads, double delta) {
  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size; ++j) {
      double saved = params[i].data[j];
      params[i].data[j] = saved + delta;
      double fp = loss();
      params[i].data[j] = saved - delta;
      double fm = loss();
      params[i].data[j] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite loss at " + params[i].name);
      double numeric = (fp - fm) / (2.0 * delta);
      double analytic = analytic_grads[i].data[j];
      double rel = std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace opseqids
