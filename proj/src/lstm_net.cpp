// SPDX-License-Identifier: Apache-2.0
#include "opseqids/lstm_net.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "opseqids/corpus.hpp"

namespace opseqids {

LstmLayerParams LstmLayerParams::zeros(int input, int hidden) {
  LstmLayerParams p;
  p.W_f = p.W_i = p.W_o = p.W_c = Mat::Zero(hidden, input);
  p.U_f = p.U_i = p.U_o = p.U_c = Mat::Zero(hidden, hidden);
  p.b_f = p.b_i = p.b_o = p.b_c = Vec::Zero(hidden);
  return p;
}

namespace {

void layer_views(LstmLayerParams& l, int idx, std::vector<ParamView>& out) {
  std::string prefix = "layer" + std::to_string(idx) + ".";
  auto add = [&](const char* name, Mat& m) {
    out.push_back({prefix + name, m.data(), m.size()});
  };
  auto addv = [&](const char* name, Vec& v) {
    out.push_back({prefix + name, v.data(), v.size()});
  };
  add("W_f", l.W_f); add("W_i", l.W_i); add("W_o", l.W_o); add("W_c", l.W_c);
  add("U_f", l.U_f); add("U_i", l.U_i); add("U_o", l.U_o); add("U_c", l.U_c);
  addv("b_f", l.b_f); addv("b_i", l.b_i); addv("b_o", l.b_o); addv("b_c", l.b_c);
}

}  // namespace

std::vector<ParamView> NetworkParams::param_views() {
  std::vector<ParamView> out;
  out.push_back({"embedding", embedding.data(), embedding.size()});
  for (std::size_t i = 0; i < layers.size(); ++i)
    layer_views(layers[i], static_cast<int>(i), out);
  out.push_back({"dense_W", dense_W.data(), dense_W.size()});
  out.push_back({"dense_b", dense_b.data(), dense_b.size()});
  out.push_back({"out_w", out_w.data(), out_w.size()});
  out.push_back({"out_b", &out_b, 1});
  return out;
}

long NetworkParams::parameter_count() const {
  long n = embedding.size();
  for (const auto& l : layers)
    n += 4 * (l.W_f.size() + l.U_f.size() + l.b_f.size());
  n += dense_W.size() + dense_b.size() + out_w.size() + 1;
  return n;
}

NetworkGrads NetworkGrads::zeros_like(const NetworkParams& net) {
  NetworkGrads g;
  g.embedding = Mat::Zero(net.embedding.rows(), net.embedding.cols());
  for (const auto& l : net.layers)
    g.layers.push_back(LstmLayerParams::zeros(l.input_size(), l.hidden_size()));
  g.dense_W = Mat::Zero(net.dense_W.rows(), net.dense_W.cols());
  g.dense_b = Vec::Zero(net.dense_b.size());
  g.out_w = Vec::Zero(net.out_w.size());
  g.out_b = 0.0;
  return g;
}

void NetworkGrads::set_zero() {
  embedding.setZero();
  for (auto& l : layers) {
    l.W_f.setZero(); l.W_i.setZero(); l.W_o.setZero(); l.W_c.setZero();
    l.U_f.setZero(); l.U_i.setZero(); l.U_o.setZero(); l.U_c.setZero();
    l.b_f.setZero(); l.b_i.setZero(); l.b_o.setZero(); l.b_c.setZero();
  }
  dense_W.setZero();
  dense_b.setZero();
  out_w.setZero();
  out_b = 0.0;
}

std::vector<ParamView> NetworkGrads::param_views() {
  std::vector<ParamView> out;
  out.push_back({"embedding", embedding.data(), embedding.size()});
  for (std::size_t i = 0; i < layers.size(); ++i)
    layer_views(layers[i], static_cast<int>(i), out);
  out.push_back({"dense_W", dense_W.data(), dense_W.size()});
  out.push_back({"dense_b", dense_b.data(), dense_b.size()});
  out.push_back({"out_w", out_w.data(), out_w.size()});
  out.push_back({"out_b", &out_b, 1});
  return out;
}

void NetworkGrads::accumulate(const NetworkGrads& other, double scale) {
  auto mine = param_views();
  auto theirs = const_cast<NetworkGrads&>(other).param_views();
  for (std::size_t i = 0; i < mine.size(); ++i)
    Eigen::Map<Vec>(mine[i].data, mine[i].size) +=
        scale * Eigen::Map<const Vec>(theirs[i].data, theirs[i].size);
}

LstmStepState lstm_cell_forward(const LstmLayerParams& params, const Vec& x_t,
                                const Vec& h_prev, const Vec& c_prev,
                                Activation cell_act) {
  LstmStepState s;
  s.x = x_t;
  s.f = apply_activation(Activation::HardSigmoid,
                         affine(params.W_f, x_t, params.U_f, h_prev, params.b_f));
  s.i = apply_activation(Activation::HardSigmoid,
                         affine(params.W_i, x_t, params.U_i, h_prev, params.b_i));
  s.o = apply_activation(Activation::HardSigmoid,
                         affine(params.W_o, x_t, params.U_o, h_prev, params.b_o));
  s.g = apply_activation(cell_act,
                         affine(params.W_c, x_t, params.U_c, h_prev, params.b_c));
  s.c = hadamard(s.f, c_prev) + hadamard(s.i, s.g);
  s.h = hadamard(s.o, s.c);  // sigma_h(x) = x
  if (!s.c.allFinite() || !s.h.allFinite())
    throw std::runtime_error("non-finite LSTM state");
  return s;
}

std::vector<LstmStepState> lstm_layer_forward(const LstmLayerParams& params,
                                              const std::vector<Vec>& inputs,
                                              Activation cell_act) {
  if (inputs.empty()) throw std::invalid_argument("empty input sequence");
  std::vector<LstmStepState> steps;
  steps.reserve(inputs.size());
  Vec h = Vec::Zero(params.hidden_size());
  Vec c = Vec::Zero(params.hidden_size());
  for (const auto& x : inputs) {
    steps.push_back(lstm_cell_forward(params, x, h, c, cell_act));
    h = steps.back().h;
    c = steps.back().c;
  }
  return steps;
}

double network_forward(const NetworkParams& net, const std::vector<int>& codes,
                       bool train_mode, Rng* rng, ForwardCache* cache) {
  if (codes.empty()) throw std::invalid_argument("empty code sequence");
  const int max_index = net.config.vocab_size + 1;
  std::vector<Vec> inputs;
  inputs.reserve(codes.size());
  for (int c : codes) {
    if (c < 0 || c > max_index)
      throw std::out_of_range("code " + std::to_string(c) + " outside embedding");
    inputs.push_back(net.embedding.row(c).transpose());
  }

  ForwardCache local;
  local.codes = codes;
  const std::size_t T = codes.size();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto steps = lstm_layer_forward(net.layers[l], inputs, net.config.cell_act);
    std::vector<Vec> masks;
    masks.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Vec mask = (train_mode && net.config.dropout_rate > 0.0 && rng)
                     ? dropout_mask(steps[t].h.size(), net.config.dropout_rate, *rng)
                     : Vec::Ones(steps[t].h.size());
      inputs[t] = hadamard(steps[t].h, mask);
      masks.push_back(std::move(mask));
    }
    local.steps.push_back(std::move(steps));
    local.dropout_masks.push_back(std::move(masks));
  }

  const Vec& h_final = inputs.back();  // dropped h_T of the top layer
  local.dense_pre = net.dense_W * h_final + net.dense_b;
  local.dense_out = local.dense_pre.array().tanh().matrix();
  local.logit = net.out_w.dot(local.dense_out) + net.out_b;
  local.p = 1.0 / (1.0 + std::exp(-local.logit));
  if (!std::isfinite(local.p)) throw std::runtime_error("non-finite output");
  if (cache) *cache = std::move(local);
  return cache ? cache->p : local.p;
}

namespace {

// Backward through one layer. upstream[t] is dL/dh_t arriving from above
// (already mask-adjusted). Returns dL/dx_t per step.
std::vector<Vec> layer_backward(const LstmLayerParams& params,
                                const std::vector<LstmStepState>& steps,
                                const std::vector<Vec>& upstream,
                                Activation cell_act, LstmLayerParams& grads) {
  const int T = static_cast<int>(steps.size());
  const int h = params.hidden_size();
  std::vector<Vec> dx(steps.size());
  Vec dh_next = Vec::Zero(h);
  Vec dc_next = Vec::Zero(h);
  for (int t = T - 1; t >= 0; --t) {
    const LstmStepState& s = steps[t];
    const Vec c_prev = t > 0 ? steps[t - 1].c : Vec::Zero(h);
    const Vec h_prev = t > 0 ? steps[t - 1].h : Vec::Zero(h);

    Vec dh = upstream[t] + dh_next;
    Vec dc = dc_next + hadamard(dh, s.o);
    Vec do_ = hadamard(dh, s.c);
    Vec dg = hadamard(dc, s.i);
    Vec di = hadamard(dc, s.g);
    Vec df = hadamard(dc, c_prev);
    dc_next = hadamard(dc, s.f);

    Vec da_f = hadamard(df, activation_derivative_from_value(Activation::HardSigmoid, s.f));
    Vec da_i = hadamard(di, activation_derivative_from_value(Activation::HardSigmoid, s.i));
    Vec da_o = hadamard(do_, activation_derivative_from_value(Activation::HardSigmoid, s.o));
    Vec da_g = hadamard(dg, activation_derivative_from_value(cell_act, s.g));

    grads.W_f += da_f * s.x.transpose();
    grads.W_i += da_i * s.x.transpose();
    grads.W_o += da_o * s.x.transpose();
    grads.W_c += da_g * s.x.transpose();
    grads.U_f += da_f * h_prev.transpose();
    grads.U_i += da_i * h_prev.transpose();
    grads.U_o += da_o * h_prev.transpose();
    grads.U_c += da_g * h_prev.transpose();
    grads.b_f += da_f;
    grads.b_i += da_i;
    grads.b_o += da_o;
    grads.b_c += da_g;

    dh_next = params.U_f.transpose() * da_f + params.U_i.transpose() * da_i +
              params.U_o.transpose() * da_o + params.U_c.transpose() * da_g;
    dx[t] = params.W_f.transpose() * da_f + params.W_i.transpose() * da_i +
            params.W_o.transpose() * da_o + params.W_c.transpose() * da_g;
  }
  return dx;
}

}  // namespace

void network_backward(const NetworkParams& net, const ForwardCache& cache, int y,
                      NetworkGrads& grads) {
  if (cache.steps.size() != net.layers.size())
    throw std::invalid_argument("forward cache does not match network");
  const std::size_t T = cache.codes.size();
  const std::size_t L = net.layers.size();

  // BCE composed with the sigmoid output collapses to p - y at the logit.
  double dlogit = cache.p - static_cast<double>(y);

  const auto& top = cache.steps[L - 1];
  Vec h_final_dropped = hadamard(top[T - 1].h, cache.dropout_masks[L - 1][T - 1]);
  grads.out_w += dlogit * cache.dense_out;
  grads.out_b += dlogit;
  Vec dz = dlogit * net.out_w;
  Vec da = hadamard(dz, (1.0 - cache.dense_out.array().square()).matrix());
  grads.dense_W += da * h_final_dropped.transpose();
  grads.dense_b += da;
  Vec dh_dropped = net.dense_W.transpose() * da;

  // Upstream gradient into the top layer: only the final step feeds the head.
  std::vector<Vec> upstream(T, Vec::Zero(net.layers[L - 1].hidden_size()));
  upstream[T - 1] = hadamard(dh_dropped, cache.dropout_masks[L - 1][T - 1]);

  for (std::size_t li = L; li-- > 0;) {
    std::vector<Vec> dx =
        layer_backward(net.layers[li], cache.steps[li], upstream,
                       net.config.cell_act, grads.layers[li]);
    if (li == 0) {
      for (std::size_t t = 0; t < T; ++t)
        if (cache.codes[t] != 0)  // PAD row stays zero
          grads.embedding.row(cache.codes[t]) += dx[t].transpose();
    } else {
      upstream.assign(T, Vec());
      for (std::size_t t = 0; t < T; ++t)
        upstream[t] = hadamard(dx[t], cache.dropout_masks[li - 1][t]);
    }
  }
}

NetworkParams init_params(const LstmNetConfig& config, std::uint64_t seed) {
  if (config.vocab_size < 1 || config.embedding_size < 1 || config.num_layers < 1 ||
      config.hidden_size < 1 || config.out_dim < 1)
    throw std::invalid_argument("invalid network config");
  Rng rng(seed);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-s, s);
    return m;
  };

  NetworkParams net;
  net.config = config;
  net.embedding = Mat(config.vocab_size + 2, config.embedding_size);
  for (Eigen::Index j = 0; j < net.embedding.cols(); ++j)
    for (Eigen::Index i = 0; i < net.embedding.rows(); ++i)
      net.embedding(i, j) = rng.uniform(-0.05, 0.05);
  net.embedding.row(0).setZero();  // PAD

  int h = config.hidden_size;
  for (int l = 0; l < config.num_layers; ++l) {
    int d = l == 0 ? config.embedding_size : h;
    LstmLayerParams p;
    p.W_f = glorot(h, d); p.W_i = glorot(h, d);
    p.W_o = glorot(h, d); p.W_c = glorot(h, d);
    p.U_f = glorot(h, h); p.U_i = glorot(h, h);
    p.U_o = glorot(h, h); p.U_c = glorot(h, h);
    p.b_f = Vec::Ones(h);  // forget bias 1
    p.b_i = Vec::Zero(h);
    p.b_o = Vec::Zero(h);
    p.b_c = Vec::Zero(h);
    net.layers.push_back(std::move(p));
  }
  net.dense_W = glorot(config.out_dim, h);
  net.dense_b = Vec::Zero(config.out_dim);
  net.out_w = glorot(config.out_dim, 1).col(0);
  net.out_b = 0.0;
  return net;
}

// --- checkpoint -------------------------------------------------------------

namespace {
constexpr const char* kCkptHeader = "OPSEQIDS-CKPT v1";
}

void save_checkpoint(const NetworkParams& net, const std::filesystem::path& path) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << kCkptHeader << "\n";
  os << "vocab_size " << net.config.vocab_size << "\n"
     << "embedding_size " << net.config.embedding_size << "\n"
     << "num_layers " << net.config.num_layers << "\n"
     << "hidden_size " << net.config.hidden_size << "\n"
     << "out_dim " << net.config.out_dim << "\n"
     << "cell_act " << activation_name(net.config.cell_act) << "\n"
     << "dropout_rate " << net.config.dropout_rate << "\n";
  auto views = const_cast<NetworkParams&>(net).param_views();
  for (const auto& v : views) {
    os << v.name << " " << v.size << "\n";
    for (Eigen::Index i = 0; i < v.size; ++i) {
      if (i) os << ' ';
      os << v.data[i];
    }
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string header;
  std::getline(in, header);
  if (header != kCkptHeader)
    throw std::runtime_error("checkpoint version mismatch: expected \"" +
                             std::string(kCkptHeader) + "\", got \"" + header + "\"");
  LstmNetConfig cfg;
  std::string key;
  for (int i = 0; i < 7; ++i) {
    in >> key;
    if (key == "vocab_size") in >> cfg.vocab_size;
    else if (key == "embedding_size") in >> cfg.embedding_size;
    else if (key == "num_layers") in >> cfg.num_layers;
    else if (key == "hidden_size") in >> cfg.hidden_size;
    else if (key == "out_dim") in >> cfg.out_dim;
    else if (key == "cell_act") {
      std::string name;
      in >> name;
      cfg.cell_act = activation_from_string(name);
    } else if (key == "dropout_rate") in >> cfg.dropout_rate;
    else throw std::runtime_error("corrupt checkpoint: unexpected key " + key);
  }
  NetworkParams net = init_params(cfg, 0);
  for (auto& v : net.param_views()) {
    std::string name;
    Eigen::Index size;
    if (!(in >> name >> size) || name != v.name || size != v.size)
      throw std::runtime_error("corrupt checkpoint: bad array header for " + v.name);
    for (Eigen::Index i = 0; i < size; ++i)
      if (!(in >> v.data[i]))
        throw std::runtime_error("corrupt checkpoint: truncated array " + v.name);
  }
  return net;
}

}  // namespace opseqids
