// SPDX-License-Identifier: Apache-2.0
//
// opseqids: op-code sequence classification experiment harness.
//
//   ingest   parse objdump disassembly into a labeled corpus directory
//   stats    length percentiles and log10-length histogram per class
//   prep     outlier removal, balancing, split (and optional trim-pad)
//   synth    planted-motif synthetic corpus generator
//   train    train one configuration (LSTM, or the frequency-vector MLP)
//   sweep    run a configuration grid, rank importance, emit reports
//   report   re-emit ranking reports from a stored results directory

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <fstream>
#include <iostream>
#include <sstream>

#include "opseqids/corpus.hpp"
#include "opseqids/mlp.hpp"
#include "opseqids/prep.hpp"
#include "opseqids/sweep.hpp"

namespace fs = std::filesystem;
using namespace opseqids;

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("OPSEQIDS_SEED")) return std::stoull(env);
  return 0;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_ingest(const fs::path& input_dir, const fs::path& out_dir) {
  std::vector<std::pair<fs::path, int>> files;
  for (auto [sub, label] : {std::pair{"benign", 0}, std::pair{"malicious", 1}}) {
    fs::path d = input_dir / sub;
    if (!fs::is_directory(d))
      throw std::runtime_error("expected subdirectory " + d.string());
    for (const auto& entry : fs::directory_iterator(d))
      if (entry.is_regular_file()) files.emplace_back(entry.path(), label);
  }
  if (files.empty()) throw std::runtime_error("no input files found");
  std::sort(files.begin(), files.end());

  fs::create_directories(out_dir / "ops");
  CorpusManifest manifest;
  std::vector<std::vector<std::string>> all_mnemonics;
  ParseStats totals;
  for (const auto& [path, label] : files) {
    ParseStats ps;
    auto mnemonics = parse_disassembly(read_file(path), &ps);
    totals.instruction_lines += ps.instruction_lines;
    totals.skipped_lines += ps.skipped_lines;
    totals.unparsed_lines += ps.unparsed_lines;
    std::string file_id = path.stem().string();
    std::string rel = "ops/" + file_id + ".txt";
    save_opcode_file(out_dir / rel, mnemonics);
    manifest.records.push_back({file_id, rel, label});
    all_mnemonics.push_back(std::move(mnemonics));
  }
  Vocabulary vocab = Vocabulary::build(all_mnemonics);
  vocab.save(out_dir / "vocab.tsv");
  manifest.save(out_dir / "manifest.tsv");
  std::cout << "ingested " << files.size() << " files, vocabulary size "
            << vocab.size() << "\n"
            << "instruction lines: " << totals.instruction_lines
            << ", skipped: " << totals.skipped_lines
            << ", unparsed: " << totals.unparsed_lines << "\n";
  return 0;
}

int run_stats(const fs::path& corpus_dir, const fs::path& out_dir) {
  Vocabulary vocab = Vocabulary::load(corpus_dir / "vocab.tsv");
  auto sequences = load_corpus_sequences(corpus_dir / "manifest.tsv", vocab);
  fs::create_directories(out_dir);

  std::ostringstream stats_os;
  std::ostringstream hist_os;
  hist_os << "class,bin_low,bin_high,frequency\n";
  for (int cls : {0, 1}) {
    auto lens = lengths_of(sequences, cls);
    std::erase(lens, 0L);
    if (lens.empty()) continue;
    LengthStats s = LengthStats::compute(lens);
    const char* name = cls == 0 ? "benign" : "malicious";
    for (const auto& [p, v] : s.percentiles)
      stats_os << name << "\t" << static_cast<int>(p * 100 + 0.5) << "\t" << v << "\n";
    stats_os << name << "\tmean\t" << s.mean << "\n";
    stats_os << name << "\tmax_threshold\t" << s.max_threshold << "\n";
    for (const auto& bin : log10_length_histogram(lens, cls))
      hist_os << bin.cls << ',' << bin.low << ',' << bin.high << ','
              << bin.frequency << "\n";
  }
  atomic_write_text(out_dir / "stats.tsv", stats_os.str());
  atomic_write_text(out_dir / "histogram.csv", hist_os.str());
  std::cout << stats_os.str();
  return 0;
}

int run_prep(const fs::path& corpus_dir, const fs::path& out_dir, PrepPlan plan,
             const std::string& seq_len_spec) {
  Vocabulary vocab = Vocabulary::load(corpus_dir / "vocab.tsv");
  auto sequences = load_corpus_sequences(corpus_dir / "manifest.tsv", vocab);

  OutlierReport report;
  sequences = remove_outliers(std::move(sequences), plan, &report);
  if (plan.balance) sequences = balance_classes(std::move(sequences), plan.seed);
  SplitDataset split =
      split_dataset(std::move(sequences), plan.split_fraction, plan.seed ^ 1);

  PrepBundle bundle;
  bundle.vocab_size = vocab.size();
  bundle.seed = plan.seed;
  if (!seq_len_spec.empty()) {
    std::vector<long> lens;
    for (const auto& s : split.train) lens.push_back(static_cast<long>(s.codes.size()));
    for (const auto& s : split.test) lens.push_back(static_cast<long>(s.codes.size()));
    bundle.sequence_length =
        resolve_sequence_length(lens, LengthSpec::parse(seq_len_spec));
    for (auto* part : {&split.train, &split.test})
      for (auto& s : *part) s.codes = trim_pad(s.codes, bundle.sequence_length);
  }
  bundle.split = std::move(split);
  save_prep_bundle(bundle, out_dir, &report);
  std::cout << "prep: " << bundle.split.train.size() << " train / "
            << bundle.split.test.size() << " test sequences, removed "
            << report.removed.size() << " (" << report.iterations
            << " threshold iterations)";
  if (bundle.sequence_length > 0)
    std::cout << ", L_sequence = " << bundle.sequence_length;
  std::cout << "\n";
  return 0;
}

int run_synth(const SyntheticSpec& spec, const fs::path& out_dir) {
  SyntheticCorpus corpus = generate_synthetic_corpus(spec);
  write_corpus_dir(corpus, out_dir);
  std::cout << "synth: wrote " << corpus.sequences.size() << " sequences to "
            << out_dir.string() << "\n";
  return 0;
}

int run_train(const fs::path& bundle_dir, const fs::path& config_path,
              const std::string& config_id, const fs::path& out_dir, bool use_mlp,
              std::uint64_t seed_override, bool seed_given) {
  PrepBundle bundle = load_prep_bundle(bundle_dir);
  fs::create_directories(out_dir);

  if (use_mlp) {
    MlpConfig cfg;
    cfg.input_size = bundle.vocab_size + 1;
    MlpParams net = mlp_init(cfg, seed_given ? seed_override : bundle.seed);
    MlpGrads grads = MlpGrads::zeros_like(net);
    AdamOptimizer adam(net.param_views());
    auto to_xy = [&](const std::vector<OpcodeSequence>& part) {
      std::pair<std::vector<Vec>, std::vector<int>> xy;
      for (const auto& s : part) {
        std::vector<int> unpadded;
        for (int c : s.codes)
          if (c != 0) unpadded.push_back(c);
        xy.first.push_back(frequency_vector(unpadded, bundle.vocab_size));
        xy.second.push_back(s.label);
      }
      return xy;
    };
    auto [train_x, train_y] = to_xy(bundle.split.train);
    auto [test_x, test_y] = to_xy(bundle.split.test);
    Rng rng(seed_given ? seed_override : bundle.seed);
    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= 10; ++epoch) {
      rng.shuffle(order);
      double loss = 0.0;
      const std::size_t B = 32;
      std::size_t batches = 0;
      for (std::size_t b = 0; b < order.size(); b += B) {
        std::vector<Vec> bx;
        std::vector<int> by;
        for (std::size_t k = b; k < std::min(order.size(), b + B); ++k) {
          bx.push_back(train_x[order[k]]);
          by.push_back(train_y[order[k]]);
        }
        loss += mlp_train_step(net, bx, by, grads, adam);
        ++batches;
      }
      long correct = 0;
      double val_loss = 0.0;
      for (std::size_t i = 0; i < test_x.size(); ++i) {
        double p = mlp_forward(net, test_x[i]);
        val_loss += bce_loss(p, test_y[i]);
        if ((p >= 0.5 ? 1 : 0) == test_y[i]) ++correct;
      }
      std::cout << "epoch " << epoch << " train_loss "
                << loss / static_cast<double>(batches) << " val_loss "
                << val_loss / static_cast<double>(test_x.size()) << " val_acc "
                << 100.0 * static_cast<double>(correct) /
                       static_cast<double>(test_x.size())
                << "%\n";
    }
    mlp_save_checkpoint(net, out_dir / "mlp.ckpt");
    return 0;
  }

  auto configs = load_grid_file(config_path);
  SweepConfig config = configs.front();
  if (!config_id.empty()) {
    auto it = std::find_if(configs.begin(), configs.end(),
                           [&](const auto& c) { return c.id == config_id; });
    if (it == configs.end())
      throw std::runtime_error("no config named " + config_id + " in " +
                               config_path.string());
    config = *it;
  }
  if (seed_given) config.seed = seed_override;

  NetworkParams best;
  SweepResult result = train_model(config, bundle.split, bundle.vocab_size, &best);
  save_checkpoint(best, out_dir / (config.id + ".ckpt"));
  GridOutcome outcome;
  outcome.results.push_back(result);
  outcome.configs.push_back(config);
  // a single configuration has no between-level variation to rank
  emit_report(outcome, {}, out_dir);
  std::cout << config.id << ": best epoch " << result.best_epoch << ", val_loss "
            << result.val_loss << ", val_acc " << result.val_accuracy << "%\n";
  return 0;
}

int run_sweep(const fs::path& bundle_dir, const fs::path& grid_path,
              const fs::path& out_dir) {
  PrepBundle bundle = load_prep_bundle(bundle_dir);
  auto configs = load_grid_file(grid_path);
  fs::path ckpt_dir = out_dir / "checkpoints";
  GridOutcome outcome = run_grid(configs, bundle.split, bundle.vocab_size, &ckpt_dir);
  if (outcome.results.empty())
    throw std::runtime_error("every configuration failed");
  auto ranking = rank_importance(outcome.configs, outcome.results);
  emit_report(outcome, ranking, out_dir);
  for (const auto& r : outcome.results)
    std::cout << r.config_id << ": val_loss " << r.val_loss << ", val_acc "
              << r.val_accuracy << "% (epoch " << r.best_epoch << ")\n";
  for (const auto& [id, err] : outcome.failures)
    std::cout << id << ": FAILED (" << err << ")\n";
  std::cout << "importance ranking:\n";
  for (const auto& e : ranking)
    std::cout << "  " << e.hyperparameter << " " << e.score << "\n";
  return 0;
}

// Rebuild ranking reports from a stored results.csv + the grid that produced it.
int run_report(const fs::path& results_dir, const fs::path& grid_path) {
  auto configs = load_grid_file(grid_path);
  std::ifstream in(results_dir / "results.csv");
  if (!in)
    throw std::runtime_error("cannot open " + (results_dir / "results.csv").string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<SweepResult> results;
  std::vector<SweepConfig> used;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (cols.size() < 10) throw std::runtime_error("malformed results row: " + line);
    SweepResult r;
    r.config_id = cols[0];
    r.val_loss = std::stod(cols[8]);
    r.val_accuracy = std::stod(cols[9]);
    if (cols.size() > 10) r.best_epoch = std::stoi(cols[10]);
    auto it = std::find_if(configs.begin(), configs.end(),
                           [&](const auto& c) { return c.id == r.config_id; });
    if (it == configs.end())
      throw std::runtime_error("results row for unknown config " + r.config_id);
    used.push_back(*it);
    results.push_back(std::move(r));
  }
  GridOutcome outcome;
  outcome.results = std::move(results);
  outcome.configs = std::move(used);
  emit_report(outcome, rank_importance(outcome.configs, outcome.results), results_dir);
  std::cout << "report: re-emitted ranking for " << outcome.results.size()
            << " configurations\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"op-code sequence classification experiment harness"};
  app.require_subcommand(1);

  std::string in_dir, out_dir = "out", corpus_dir, bundle_dir, grid_path;
  std::string config_path, config_id, seq_len_spec, results_dir_opt;
  std::uint64_t seed = default_seed();
  bool seed_given = false;

  auto* ingest = app.add_subcommand("ingest", "parse disassembly into a corpus");
  ingest->add_option("dir", in_dir, "directory with benign/ and malicious/ listings")
      ->required();
  ingest->add_option("--out", out_dir, "corpus output directory")->required();

  auto* stats = app.add_subcommand("stats", "length percentiles and histogram");
  stats->add_option("--corpus", corpus_dir)->required();
  stats->add_option("--out", out_dir);

  PrepPlan plan;
  plan.seed = seed;
  auto* prep = app.add_subcommand("prep", "clean, balance and split a corpus");
  prep->add_option("--corpus", corpus_dir)->required();
  prep->add_option("--out", out_dir)->required();
  prep->add_option("--seed", plan.seed);
  prep->add_option("--split", plan.split_fraction, "test share (default 0.25)");
  prep->add_option("--min-malicious", plan.min_keep_malicious,
                   "minimum op-code count for malicious files (default 100)");
  prep->add_option("--percentile-floor", plan.percentile_floor);
  prep->add_flag("!--no-balance", plan.balance, "skip class undersampling");
  prep->add_option("--seq-len", seq_len_spec,
                   "trim-pad now: Q(p), MEAN or integer (default: store untrimmed)");

  SyntheticSpec synth_spec;
  synth_spec.seed = seed;
  std::vector<int> motif = {1, 2, 3, 4};
  auto* synth = app.add_subcommand("synth", "generate a planted-motif corpus");
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--benign", synth_spec.n_benign)->required();
  synth->add_option("--malicious", synth_spec.n_malicious)->required();
  synth->add_option("--vocab", synth_spec.vocab_size)->default_val(50);
  synth->add_option("--min-len", synth_spec.min_length)->default_val(50);
  synth->add_option("--max-len", synth_spec.max_length)->default_val(200);
  synth->add_option("--motif", motif, "motif indices");
  synth->add_option("--motif-rate", synth_spec.motif_rate)->default_val(1.0);
  synth->add_option("--seed", synth_spec.seed);

  bool use_mlp = false;
  auto* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--bundle", bundle_dir)->required();
  train->add_option("--config", config_path, "grid file holding the configuration");
  train->add_option("--id", config_id, "configuration id within the file");
  train->add_option("--out", out_dir)->required();
  train->add_flag("--mlp", use_mlp, "train the frequency-vector MLP baseline");
  train->add_option("--seed", seed)->each([&](const std::string&) { seed_given = true; });

  auto* sweep = app.add_subcommand("sweep", "run a configuration grid");
  sweep->add_option("--bundle", bundle_dir)->required();
  sweep->add_option("--grid", grid_path)->required();
  sweep->add_option("--out", out_dir)->required();

  auto* report = app.add_subcommand("report", "re-emit reports from stored results");
  report->add_option("--results", results_dir_opt)->required();
  report->add_option("--grid", grid_path)->required();

  try {
    app.parse(argc, argv);
    if (*ingest) return run_ingest(in_dir, out_dir);
    if (*stats) return run_stats(corpus_dir, out_dir);
    if (*prep) return run_prep(corpus_dir, out_dir, plan, seq_len_spec);
    if (*synth) {
      synth_spec.motif = motif;
      return run_synth(synth_spec, out_dir);
    }
    if (*train) {
      if (!use_mlp && config_path.empty())
        throw CLI::ValidationError("--config", "required unless --mlp is given");
      return run_train(bundle_dir, config_path, config_id, out_dir, use_mlp, seed,
                       seed_given);
    }
    if (*sweep) return run_sweep(bundle_dir, grid_path, out_dir);
    if (*report) return run_report(results_dir_opt, grid_path);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);  // prints the help text
    return 0;
  } catch (const CLI::Error& e) {
    app.exit(e);  // prints the usage message
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
