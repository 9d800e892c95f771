// SPDX-License-Identifier: Apache-2.0
#include "opseqids/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace opseqids {

namespace fs = std::filesystem;

void SweepConfig::validate() const {
  if (id.empty()) throw std::invalid_argument("config without id");
  if (embedding_size < 1 || num_layers < 1 || batch_size < 1)
    throw std::invalid_argument(id + ": sizes must be positive");
  if (dropout != 0.0 && dropout != 0.3 && dropout != 0.5)
    throw std::invalid_argument(id + ": dropout must be one of {0.0, 0.3, 0.5}");
  if (act_fn != Activation::Sigmoid && act_fn != Activation::Tanh)
    throw std::invalid_argument(id + ": activation must be sigmoid or tanh");
  if (min_epochs < 1 || max_epochs < min_epochs)
    throw std::invalid_argument(id + ": bad epoch bounds");
  if (lr < 0.0) throw std::invalid_argument(id + ": negative learning rate");
}

Evaluation evaluate(const NetworkParams& net,
                    const std::vector<OpcodeSequence>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("empty evaluation set");
  double loss = 0.0;
  long correct = 0;
  for (const auto& s : dataset) {
    double p = network_forward(net, s.codes, /*train_mode=*/false, nullptr);
    loss += bce_loss(p, s.label);
    if ((p >= 0.5 ? 1 : 0) == s.label) ++correct;
  }
  double n = static_cast<double>(dataset.size());
  return {loss / n, 100.0 * static_cast<double>(correct) / n};
}

SweepResult train_model(const SweepConfig& config, const SplitDataset& data,
                        int vocab_size, NetworkParams* best_net) {
  config.validate();
  if (data.train.empty() || data.test.empty())
    throw std::runtime_error(config.id + ": empty train or test partition");

  auto start = std::chrono::steady_clock::now();

  std::vector<long> lengths;
  for (const auto& s : data.train) lengths.push_back(static_cast<long>(s.codes.size()));
  for (const auto& s : data.test) lengths.push_back(static_cast<long>(s.codes.size()));
  int L = resolve_sequence_length(lengths, config.seq_len);
  int out_dim = resolve_sequence_length(lengths, config.out_dim);
  if (L < 1 || out_dim < 1)
    throw std::runtime_error(config.id + ": resolved non-positive dimension");

  auto fix_length = [&](const std::vector<OpcodeSequence>& in) {
    std::vector<OpcodeSequence> out = in;
    for (auto& s : out) s.codes = trim_pad(s.codes, L);
    return out;
  };
  std::vector<OpcodeSequence> train = fix_length(data.train);
  std::vector<OpcodeSequence> test = fix_length(data.test);

  LstmNetConfig net_cfg;
  net_cfg.vocab_size = vocab_size;
  net_cfg.embedding_size = config.embedding_size;
  net_cfg.hidden_size = config.embedding_size;
  net_cfg.num_layers = config.num_layers;
  net_cfg.out_dim = out_dim;
  net_cfg.cell_act = config.act_fn;
  net_cfg.dropout_rate = config.dropout;

  NetworkParams net = init_params(net_cfg, config.seed);
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamOptimizer adam(net.param_views(), adam_cfg);
  NetworkGrads grads = NetworkGrads::zeros_like(net);
  Rng shuffle_rng = Rng(config.seed).fork(1);
  Rng dropout_rng = Rng(config.seed).fork(2);

  SweepResult result;
  result.config_id = config.id;
  result.sequence_length = L;
  result.out_dim = out_dim;

  NetworkParams best = net;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double train_loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::size_t end = std::min(order.size(), b + config.batch_size);
      grads.set_zero();
      double inv = 1.0 / static_cast<double>(end - b);
      for (std::size_t k = b; k < end; ++k) {
        const auto& s = train[order[k]];
        ForwardCache cache;
        network_forward(net, s.codes, /*train_mode=*/true, &dropout_rng, &cache);
        double loss = bce_loss(cache.p, s.label);
        if (!std::isfinite(loss))
          throw std::runtime_error(config.id + ": divergence at epoch " +
                                   std::to_string(epoch));
        train_loss_sum += loss;
        network_backward(net, cache, s.label, grads);
      }
      auto gv = grads.param_views();
      for (auto& g : gv) Eigen::Map<Vec>(g.data, g.size) *= inv;
      clip_by_global_norm(gv, 5.0);
      adam.step(net.param_views(), gv);
    }

    Evaluation val = evaluate(net, test);
    result.history.push_back({epoch, train_loss_sum / static_cast<double>(train.size()),
                              val.loss, val.accuracy});
    if (val.loss < best_loss - 1e-4) {
      stale_epochs = 0;
    } else {
      ++stale_epochs;
    }
    if (val.loss < best_loss) {
      best_loss = val.loss;
      best = net;
      result.best_epoch = epoch;
      result.val_loss = val.loss;
      result.val_accuracy = val.accuracy;
    }
    if (epoch >= config.min_epochs && stale_epochs >= 2) break;
  }

  if (best_net) *best_net = std::move(best);
  result.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

GridOutcome run_grid(const std::vector<SweepConfig>& configs, const SplitDataset& data,
                     int vocab_size, const fs::path* checkpoint_dir) {
  GridOutcome out;
  for (const auto& cfg : configs) {
    try {
      NetworkParams best;
      SweepResult r = train_model(cfg, data, vocab_size, &best);
      if (checkpoint_dir) {
        fs::create_directories(*checkpoint_dir);
        save_checkpoint(best, *checkpoint_dir / (cfg.id + ".ckpt"));
      }
      out.results.push_back(std::move(r));
      out.configs.push_back(cfg);
    } catch (const std::exception& e) {
      out.failures[cfg.id] = e.what();
    }
  }
  std::vector<std::size_t> idx(out.results.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return out.results[a].config_id < out.results[b].config_id;
  });
  GridOutcome sorted;
  sorted.failures = out.failures;
  for (std::size_t i : idx) {
    sorted.results.push_back(std::move(out.results[i]));
    sorted.configs.push_back(std::move(out.configs[i]));
  }
  return sorted;
}

// --- importance ranking -----------------------------------------------------

namespace {

std::string format_dropout(double d) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << d;
  return os.str();
}

std::map<std::string, std::string> config_levels(const SweepConfig& c) {
  return {
      {"SqLn", c.seq_len.to_string()},
      {"EmSz", std::to_string(c.embedding_size)},
      {"Lyrs", std::to_string(c.num_layers)},
      {"OutDim", c.out_dim.to_string()},
      {"ActFun", activation_name(c.act_fn)},
      {"DropOut", format_dropout(c.dropout)},
      {"BchSz", std::to_string(c.batch_size)},
  };
}

}  // namespace

std::vector<ImportanceEntry> rank_importance(const std::vector<SweepConfig>& configs,
                                             const std::vector<SweepResult>& results) {
  if (configs.size() != results.size())
    throw std::invalid_argument("configs/results size mismatch");
  if (configs.empty()) throw std::invalid_argument("no results to rank");

  // hyperparameter -> level -> accuracies
  std::map<std::string, std::map<std::string, std::vector<double>>> groups;
  std::map<std::string, double> acc_by_id;
  for (const auto& r : results) acc_by_id[r.config_id] = r.val_accuracy;
  bool any_varied = false;
  for (const auto& c : configs) {
    auto it = acc_by_id.find(c.id);
    if (it == acc_by_id.end())
      throw std::invalid_argument("no result for config " + c.id);
    for (const auto& [param, level] : config_levels(c))
      groups[param][level].push_back(it->second);
  }
  for (const auto& [param, levels] : groups)
    if (levels.size() > 1) any_varied = true;
  if (!any_varied) throw std::runtime_error("all configurations identical");

  std::vector<ImportanceEntry> out;
  for (const auto& [param, levels] : groups) {
    ImportanceEntry e;
    e.hyperparameter = param;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& [level, accs] : levels) {
      double mean = std::accumulate(accs.begin(), accs.end(), 0.0) /
                    static_cast<double>(accs.size());
      e.levels.push_back({level, mean, static_cast<int>(accs.size())});
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
    }
    e.score = levels.size() > 1 ? hi - lo : 0.0;
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.hyperparameter < b.hyperparameter;
  });
  return out;
}

std::vector<std::pair<std::string, std::string>> confounded_pairs(
    const std::vector<SweepConfig>& configs) {
  std::vector<std::map<std::string, std::string>> levels;
  for (const auto& c : configs) levels.push_back(config_levels(c));
  if (levels.empty()) return {};
  std::vector<std::string> params;
  for (const auto& [k, v] : levels.front()) params.push_back(k);

  auto distinct = [&](const std::string& p) {
    std::set<std::string> s;
    for (const auto& l : levels) s.insert(l.at(p));
    return s.size();
  };
  auto functional = [&](const std::string& a, const std::string& b) {
    std::map<std::string, std::string> seen;
    for (const auto& l : levels) {
      auto [it, inserted] = seen.emplace(l.at(a), l.at(b));
      if (!inserted && it->second != l.at(b)) return false;
    }
    return true;
  };

  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = i + 1; j < params.size(); ++j) {
      const auto& a = params[i];
      const auto& b = params[j];
      if (distinct(a) > 1 && distinct(b) > 1 && functional(a, b) && functional(b, a))
        out.emplace_back(a, b);
    }
  return out;
}

// --- reports ----------------------------------------------------------------

void emit_report(const GridOutcome& outcome,
                 const std::vector<ImportanceEntry>& ranking, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ostringstream os;
    os << "SN,SqLn,EmSz,Lyrs,OutDim,ActFun,DropOut,BchSz,Loss,Acc%,"
          "BestEpoch,SeqLen,OutDimResolved\n";
    for (std::size_t i = 0; i < outcome.results.size(); ++i) {
      const auto& c = outcome.configs[i];
      const auto& r = outcome.results[i];
      os << c.id << ',' << c.seq_len.to_string() << ',' << c.embedding_size << ','
         << c.num_layers << ',' << c.out_dim.to_string() << ','
         << activation_name(c.act_fn) << ',' << format_dropout(c.dropout) << ','
         << c.batch_size << ',' << std::fixed << std::setprecision(4) << r.val_loss
         << ',' << std::setprecision(2) << r.val_accuracy
         << std::defaultfloat << ',' << r.best_epoch << ',' << r.sequence_length
         << ',' << r.out_dim << "\n";
    }
    atomic_write_text(dir / "results.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "Hyperparameter,Score\n" << std::fixed << std::setprecision(4);
    for (const auto& e : ranking) os << e.hyperparameter << ',' << e.score << "\n";
    atomic_write_text(dir / "ranking.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "Hyperparameter,Level,MeanAcc,Count\n" << std::fixed << std::setprecision(4);
    for (const auto& e : ranking)
      for (const auto& l : e.levels)
        os << e.hyperparameter << ',' << l.level << ',' << l.mean_accuracy << ','
           << l.count << "\n";
    atomic_write_text(dir / "level_means.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "Config,Epoch,TrainLoss,ValLoss,ValAcc\n"
       << std::fixed << std::setprecision(6);
    for (const auto& r : outcome.results)
      for (const auto& h : r.history)
        os << r.config_id << ',' << h.epoch << ',' << h.train_loss << ','
           << h.val_loss << ',' << h.val_accuracy << "\n";
    atomic_write_text(dir / "history.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "ParamA,ParamB\n";
    for (const auto& [a, b] : confounded_pairs(outcome.configs))
      os << a << ',' << b << "\n";
    atomic_write_text(dir / "confounds.csv", os.str());
  }
  {
    // kept out of results.csv so result files are run-to-run identical
    std::ostringstream os;
    os << "SN,WallTimeSec\n" << std::fixed << std::setprecision(3);
    for (const auto& r : outcome.results)
      os << r.config_id << ',' << r.wall_time_sec << "\n";
    atomic_write_text(dir / "timing.csv", os.str());
  }
  if (!outcome.failures.empty()) {
    std::ostringstream os;
    os << "SN,Error\n";
    for (const auto& [id, msg] : outcome.failures) os << id << ',' << msg << "\n";
    atomic_write_text(dir / "errors.csv", os.str());
  }
}

// --- grid file --------------------------------------------------------------

namespace {

std::string trim_copy(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void apply_field(SweepConfig& c, const std::string& key, const std::string& value,
                 std::size_t lineno) {
  try {
    if (key == "seq_len") c.seq_len = LengthSpec::parse(value);
    else if (key == "embedding") c.embedding_size = std::stoi(value);
    else if (key == "layers") c.num_layers = std::stoi(value);
    else if (key == "out_dim") c.out_dim = LengthSpec::parse(value);
    else if (key == "activation") c.act_fn = activation_from_string(value);
    else if (key == "dropout") c.dropout = std::stod(value);
    else if (key == "batch") c.batch_size = std::stoi(value);
    else if (key == "lr") c.lr = std::stod(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "max_epochs") c.max_epochs = std::stoi(value);
    else if (key == "min_epochs") c.min_epochs = std::stoi(value);
    else
      throw std::invalid_argument("unknown key " + key);
  } catch (const std::exception& e) {
    throw std::runtime_error("grid file line " + std::to_string(lineno) + ": " +
                             e.what());
  }
}

}  // namespace

std::vector<SweepConfig> load_grid_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file: " + path.string());
  std::vector<SweepConfig> configs;
  std::optional<SweepConfig> current;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (current) {
      current->validate();
      configs.push_back(std::move(*current));
      current.reset();
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim_copy(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      flush();
      current = SweepConfig{};
      current->id = trim_copy(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (!current || eq == std::string::npos)
      throw std::runtime_error("grid file line " + std::to_string(lineno) +
                               ": expected [section] or key = value");
    apply_field(*current, trim_copy(t.substr(0, eq)), trim_copy(t.substr(eq + 1)),
                lineno);
  }
  flush();
  if (configs.empty()) throw std::runtime_error("grid file has no configurations");
  return configs;
}

void save_grid_file(const std::vector<SweepConfig>& configs, const fs::path& path) {
  std::ostringstream os;
  for (const auto& c : configs) {
    os << "[" << c.id << "]\n"
       << "seq_len = " << c.seq_len.to_string() << "\n"
       << "embedding = " << c.embedding_size << "\n"
       << "layers = " << c.num_layers << "\n"
       << "out_dim = " << c.out_dim.to_string() << "\n"
       << "activation = " << activation_name(c.act_fn) << "\n"
       << "dropout = " << format_dropout(c.dropout) << "\n"
       << "batch = " << c.batch_size << "\n"
       << "lr = " << c.lr << "\n"
       << "seed = " << c.seed << "\n"
       << "max_epochs = " << c.max_epochs << "\n"
       << "min_epochs = " << c.min_epochs << "\n\n";
  }
  atomic_write_text(path, os.str());
}

std::vector<SweepConfig> default_grid() {
  auto q = [](double p) { return LengthSpec{LengthSpec::Kind::Quantile, p, 0}; };
  auto lit = [](int v) { return LengthSpec{LengthSpec::Kind::Literal, 0.0, v}; };
  std::vector<SweepConfig> g(9);
  const Activation sig = Activation::Sigmoid, tanh_ = Activation::Tanh;
  auto set = [&](int i, LengthSpec sq, int em, int ly, LengthSpec od, Activation act,
                 double dr, int bs) {
    g[i].id = "C-" + std::to_string(i + 1);
    g[i].seq_len = sq;
    g[i].embedding_size = em;
    g[i].num_layers = ly;
    g[i].out_dim = od;
    g[i].act_fn = act;
    g[i].dropout = dr;
    g[i].batch_size = bs;
  };
  set(0, q(0.75), 128, 2, lit(256), sig, 0.5, 128);
  set(1, q(0.75), 128, 1, lit(256), sig, 0.5, 128);
  set(2, q(0.75), 256, 1, lit(256), sig, 0.5, 128);
  set(3, q(0.50), 128, 1, lit(256), sig, 0.5, 128);
  set(4, q(0.50), 256, 1, lit(256), sig, 0.5, 128);
  set(5, q(1.0), 64, 2, q(1.0), tanh_, 0.3, 32);
  set(6, q(0.75), 256, 2, q(0.75), tanh_, 0.3, 32);
  set(7, q(0.75), 128, 2, q(0.75), tanh_, 0.3, 128);
  set(8, q(0.75), 128, 4, q(0.75), tanh_, 0.3, 64);
  return g;
}

}  // namespace opseqids
