// SPDX-License-Identifier: Apache-2.0
#include "opseqids/mlp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "opseqids/corpus.hpp"

namespace opseqids {

Vec frequency_vector(const std::vector<int>& codes, int vocab_size) {
  if (codes.empty()) throw std::invalid_argument("frequency_vector of empty codes");
  Vec v = Vec::Zero(vocab_size + 1);  // indices 1..vocab_size plus UNK
  for (int c : codes) {
    if (c < 1 || c > vocab_size + 1)
      throw std::out_of_range("code outside vocabulary range (PAD not allowed)");
    v[c - 1] += 1.0;
  }
  return v / static_cast<double>(codes.size());
}

std::vector<ParamView> MlpParams::param_views() {
  std::vector<ParamView> out;
  for (std::size_t i = 0; i < W.size(); ++i) {
    out.push_back({"W" + std::to_string(i), W[i].data(), W[i].size()});
    out.push_back({"b" + std::to_string(i), b[i].data(), b[i].size()});
  }
  return out;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& net) {
  MlpGrads g;
  for (const auto& w : net.W) g.W.push_back(Mat::Zero(w.rows(), w.cols()));
  for (const auto& bb : net.b) g.b.push_back(Vec::Zero(bb.size()));
  return g;
}

void MlpGrads::set_zero() {
  for (auto& w : W) w.setZero();
  for (auto& bb : b) bb.setZero();
}

std::vector<ParamView> MlpGrads::param_views() {
  std::vector<ParamView> out;
  for (std::size_t i = 0; i < W.size(); ++i) {
    out.push_back({"W" + std::to_string(i), W[i].data(), W[i].size()});
    out.push_back({"b" + std::to_string(i), b[i].data(), b[i].size()});
  }
  return out;
}

MlpParams mlp_init(const MlpConfig& config, std::uint64_t seed) {
  if (config.input_size < 1) throw std::invalid_argument("invalid MLP input size");
  Rng rng(seed);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-s, s);
    return m;
  };
  MlpParams net;
  net.config = config;
  int prev = config.input_size;
  for (int width : config.hidden) {
    net.W.push_back(glorot(width, prev));
    net.b.push_back(Vec::Zero(width));
    prev = width;
  }
  net.W.push_back(glorot(1, prev));
  net.b.push_back(Vec::Zero(1));
  return net;
}

double mlp_forward(const MlpParams& net, const Vec& x, MlpCache* cache) {
  if (x.size() != net.config.input_size)
    throw std::invalid_argument("MLP input size mismatch");
  MlpCache local;
  local.input = x;
  Vec a = x;
  for (std::size_t l = 0; l + 1 < net.W.size(); ++l) {
    Vec pre = net.W[l] * a + net.b[l];
    a = pre.cwiseMax(0.0);
    local.pre.push_back(std::move(pre));
    local.post.push_back(a);
  }
  local.logit = (net.W.back() * a)(0) + net.b.back()(0);
  local.p = 1.0 / (1.0 + std::exp(-local.logit));
  double p = local.p;
  if (cache) *cache = std::move(local);
  return p;
}

void mlp_backward(const MlpParams& net, const MlpCache& cache, int y, MlpGrads& grads) {
  double dlogit = cache.p - static_cast<double>(y);
  std::size_t last = net.W.size() - 1;
  const Vec& top = cache.post.empty() ? cache.input : cache.post.back();
  grads.W[last] += dlogit * top.transpose();
  grads.b[last](0) += dlogit;
  Vec da = dlogit * net.W[last].row(0).transpose();
  for (std::size_t l = last; l-- > 0;) {
    // ReLU subgradient from the cached pre-activation
    Vec dpre = (cache.pre[l].array() > 0.0).select(da, Vec::Zero(da.size()));
    const Vec& below = l == 0 ? cache.input : cache.post[l - 1];
    grads.W[l] += dpre * below.transpose();
    grads.b[l] += dpre;
    if (l > 0) da = net.W[l].transpose() * dpre;
  }
}

double mlp_train_step(MlpParams& net, const std::vector<Vec>& batch_x,
                      const std::vector<int>& batch_y, MlpGrads& grads,
                      AdamOptimizer& adam) {
  if (batch_x.empty() || batch_x.size() != batch_y.size())
    throw std::invalid_argument("bad batch");
  grads.set_zero();
  double loss = 0.0;
  for (std::size_t i = 0; i < batch_x.size(); ++i) {
    MlpCache cache;
    mlp_forward(net, batch_x[i], &cache);
    loss += bce_loss(cache.p, batch_y[i]);
    mlp_backward(net, cache, batch_y[i], grads);
  }
  double inv = 1.0 / static_cast<double>(batch_x.size());
  auto gv = grads.param_views();
  for (auto& g : gv) Eigen::Map<Vec>(g.data, g.size) *= inv;
  clip_by_global_norm(gv, 5.0);
  adam.step(net.param_views(), gv);
  return loss * inv;
}

namespace {
constexpr const char* kMlpHeader = "OPSEQIDS-MLP v1";
}

void mlp_save_checkpoint(const MlpParams& net, const std::filesystem::path& path) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << kMlpHeader << "\n";
  os << "input_size " << net.config.input_size << "\n";
  os << "hidden";
  for (int w : net.config.hidden) os << " " << w;
  os << "\n";
  for (const auto& v : const_cast<MlpParams&>(net).param_views()) {
    os << v.name << " " << v.size << "\n";
    for (Eigen::Index i = 0; i < v.size; ++i) {
      if (i) os << ' ';
      os << v.data[i];
    }
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

MlpParams mlp_load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string header;
  std::getline(in, header);
  if (header != kMlpHeader)
    throw std::runtime_error("checkpoint version mismatch: expected \"" +
                             std::string(kMlpHeader) + "\", got \"" + header + "\"");
  MlpConfig cfg;
  std::string key;
  in >> key >> cfg.input_size;
  if (key != "input_size") throw std::runtime_error("corrupt MLP checkpoint");
  in >> key;
  if (key != "hidden") throw std::runtime_error("corrupt MLP checkpoint");
  cfg.hidden.clear();
  std::string rest;
  std::getline(in, rest);
  std::istringstream hs(rest);
  int w;
  while (hs >> w) cfg.hidden.push_back(w);
  MlpParams net = mlp_init(cfg, 0);
  for (auto& v : net.param_views()) {
    std::string name;
    Eigen::Index size;
    if (!(in >> name >> size) || name != v.name || size != v.size)
      throw std::runtime_error("corrupt MLP checkpoint: array " + v.name);
    for (Eigen::Index i = 0; i < size; ++i)
      if (!(in >> v.data[i]))
        throw std::runtime_error("corrupt MLP checkpoint: truncated " + v.name);
  }
  return net;
}

}  // namespace opseqids
