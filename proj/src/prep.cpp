// SPDX-License-Identifier: Apache-2.0
#include "opseqids/prep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace opseqids {

namespace fs = std::filesystem;

LengthSpec LengthSpec::parse(const std::string& text) {
  LengthSpec spec;
  if (text == "MEAN" || text == "mean") {
    spec.kind = Kind::Mean;
    return spec;
  }
  if (text.starts_with("Q(") && text.ends_with(")")) {
    spec.kind = Kind::Quantile;
    spec.quantile = std::stod(text.substr(2, text.size() - 3));
    if (spec.quantile < 0.0 || spec.quantile > 1.0)
      throw std::invalid_argument("quantile outside [0,1]: " + text);
    return spec;
  }
  try {
    std::size_t pos = 0;
    int v = std::stoi(text, &pos);
    if (pos == text.size() && v > 0) {
      spec.kind = Kind::Literal;
      spec.literal = v;
      return spec;
    }
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("unknown length spec: " + text);
}

std::string LengthSpec::to_string() const {
  switch (kind) {
    case Kind::Mean:
      return "MEAN";
    case Kind::Literal:
      return std::to_string(literal);
    case Kind::Quantile: {
      // two decimals, except a trailing "00" collapses: Q(0.50), Q(1.0)
      std::ostringstream os;
      os << std::fixed << std::setprecision(2) << quantile;
      std::string s = os.str();
      if (s.ends_with("00")) s.pop_back();
      return "Q(" + s + ")";
    }
  }
  return "?";
}

double quantile(const std::vector<long>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty series");
  if (sorted.size() == 1) return static_cast<double>(sorted[0]);
  double h = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return static_cast<double>(sorted.back());
  double frac = h - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) +
         frac * static_cast<double>(sorted[lo + 1] - sorted[lo]);
}

LengthStats LengthStats::compute(std::vector<long> counts) {
  if (counts.empty()) throw std::runtime_error("length stats of empty class");
  LengthStats s;
  s.counts = counts;
  std::sort(counts.begin(), counts.end());
  s.mean = std::accumulate(counts.begin(), counts.end(), 0.0) /
           static_cast<double>(counts.size());
  s.q1 = quantile(counts, 0.25);
  s.q3 = quantile(counts, 0.75);
  for (double p : {0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99, 1.0})
    s.percentiles[p] = quantile(counts, p);
  s.max_threshold = s.mean + (s.q3 - s.q1);
  return s;
}

std::vector<HistogramBin> log10_length_histogram(const std::vector<long>& counts,
                                                 int cls, double bin_width) {
  std::map<long, long> bins;
  for (long c : counts) {
    if (c < 1) throw std::runtime_error("zero-length file in histogram input");
    double v = std::log10(static_cast<double>(c));
    bins[static_cast<long>(std::floor(v / bin_width + 1e-9))]++;
  }
  std::vector<HistogramBin> out;
  for (auto [idx, freq] : bins)
    out.push_back({cls, static_cast<double>(idx) * bin_width,
                   static_cast<double>(idx + 1) * bin_width, freq});
  return out;
}

std::vector<long> lengths_of(const std::vector<OpcodeSequence>& sequences,
                             int label_filter) {
  std::vector<long> out;
  for (const auto& s : sequences)
    if (label_filter < 0 || s.label == label_filter)
      out.push_back(static_cast<long>(s.codes.size()));
  return out;
}

std::vector<OpcodeSequence> remove_outliers(std::vector<OpcodeSequence> sequences,
                                            const PrepPlan& plan,
                                            OutlierReport* report) {
  OutlierReport local;
  bool had_class[2] = {!lengths_of(sequences, 0).empty(),
                       !lengths_of(sequences, 1).empty()};
  auto drop_if = [&](auto pred, const char* reason) {
    std::vector<OpcodeSequence> kept;
    kept.reserve(sequences.size());
    for (auto& s : sequences) {
      if (pred(s))
        local.removed.push_back(
            {s.file_id, reason, static_cast<long>(s.codes.size())});
      else
        kept.push_back(std::move(s));
    }
    sequences = std::move(kept);
  };

  drop_if([](const OpcodeSequence& s) { return s.codes.empty(); }, "null");

  // per-class percentile floor over non-null lengths
  for (int cls : {0, 1}) {
    auto lens = lengths_of(sequences, cls);
    if (lens.empty()) continue;
    std::sort(lens.begin(), lens.end());
    double floor_len = quantile(lens, plan.percentile_floor);
    drop_if(
        [&](const OpcodeSequence& s) {
          return s.label == cls &&
                 static_cast<double>(s.codes.size()) < floor_len;
        },
        "below_percentile_floor");
  }

  drop_if(
      [&](const OpcodeSequence& s) {
        return s.label == 1 &&
               static_cast<long>(s.codes.size()) < plan.min_keep_malicious;
      },
      "below_malicious_clip");

  // iterated IQR threshold, per class, until a fixed point
  bool changed = true;
  while (changed) {
    changed = false;
    ++local.iterations;
    for (int cls : {0, 1}) {
      auto lens = lengths_of(sequences, cls);
      if (lens.empty()) continue;
      double threshold = LengthStats::compute(lens).max_threshold;
      local.thresholds.push_back(threshold);
      std::size_t before = sequences.size();
      drop_if(
          [&](const OpcodeSequence& s) {
            return s.label == cls &&
                   static_cast<double>(s.codes.size()) > threshold;
          },
          "above_iqr_threshold");
      if (sequences.size() != before) changed = true;
    }
  }

  for (int cls : {0, 1})
    if (had_class[cls] && lengths_of(sequences, cls).empty())
      throw std::runtime_error("class eliminated by outlier removal: " +
                               std::string(cls == 0 ? "benign" : "malicious"));
  if (report) *report = std::move(local);
  return sequences;
}

int resolve_sequence_length(const std::vector<long>& combined_counts,
                            const LengthSpec& spec) {
  if (spec.kind == LengthSpec::Kind::Literal) return spec.literal;
  if (combined_counts.empty())
    throw std::runtime_error("cannot resolve sequence length of empty corpus");
  auto sorted = combined_counts;
  std::sort(sorted.begin(), sorted.end());
  double v = spec.kind == LengthSpec::Kind::Mean
                 ? std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                       static_cast<double>(sorted.size())
                 : quantile(sorted, spec.quantile);
  return static_cast<int>(std::ceil(v));
}

std::vector<int> trim_pad(const std::vector<int>& codes, int target_length) {
  if (target_length < 1) throw std::invalid_argument("target length must be >= 1");
  auto L = static_cast<std::size_t>(target_length);
  if (codes.size() >= L) return {codes.begin(), codes.begin() + target_length};
  std::vector<int> out(L - codes.size(), 0);
  out.insert(out.end(), codes.begin(), codes.end());
  return out;
}

std::vector<OpcodeSequence> balance_classes(std::vector<OpcodeSequence> dataset,
                                            std::uint64_t seed) {
  std::vector<std::size_t> idx0, idx1;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    (dataset[i].label == 0 ? idx0 : idx1).push_back(i);
  if (idx0.empty() || idx1.empty())
    throw std::runtime_error("balance_classes requires both classes present");
  auto& majority = idx0.size() > idx1.size() ? idx0 : idx1;
  std::size_t target = std::min(idx0.size(), idx1.size());
  Rng rng(seed);
  rng.shuffle(majority);
  majority.resize(target);
  std::vector<std::size_t> keep;
  keep.insert(keep.end(), idx0.begin(), idx0.end());
  keep.insert(keep.end(), idx1.begin(), idx1.end());
  std::sort(keep.begin(), keep.end());  // preserve original order
  std::vector<OpcodeSequence> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(dataset[i]));
  return out;
}

SplitDataset split_dataset(std::vector<OpcodeSequence> dataset, double split_fraction,
                           std::uint64_t seed) {
  if (split_fraction <= 0.0 || split_fraction >= 1.0)
    throw std::invalid_argument("split fraction must be in (0,1)");
  if (dataset.empty()) throw std::runtime_error("cannot split empty dataset");
  SplitDataset out;
  Rng rng(seed);
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset[i].label == cls) idx.push_back(i);
    rng.shuffle(idx);
    auto n_test = static_cast<std::size_t>(
        std::lround(split_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < n_test ? out.test : out.train).push_back(std::move(dataset[idx[k]]));
  }
  return out;
}

// --- bundle I/O -------------------------------------------------------------

namespace {

void write_sequences(const fs::path& path, const std::vector<OpcodeSequence>& seqs) {
  std::ostringstream os;
  for (const auto& s : seqs) {
    os << s.file_id << "\t" << s.label << "\t";
    for (std::size_t i = 0; i < s.codes.size(); ++i) {
      if (i) os << ' ';
      os << s.codes[i];
    }
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

std::vector<OpcodeSequence> read_sequences(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sequence file: " + path.string());
  std::vector<OpcodeSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error("malformed sequence line " + std::to_string(lineno));
    OpcodeSequence s;
    s.file_id = line.substr(0, t1);
    s.label = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    std::istringstream codes(line.substr(t2 + 1));
    int c;
    while (codes >> c) s.codes.push_back(c);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_prep_bundle(const PrepBundle& bundle, const fs::path& dir,
                      const OutlierReport* report) {
  fs::create_directories(dir);
  write_sequences(dir / "train.tsv", bundle.split.train);
  write_sequences(dir / "test.tsv", bundle.split.test);
  {
    std::ostringstream os;
    os << "vocab_size " << bundle.vocab_size << "\n"
       << "sequence_length " << bundle.sequence_length << "\n"
       << "seed " << bundle.seed << "\n";
    atomic_write_text(dir / "meta.txt", os.str());
  }
  if (report) {
    std::ostringstream os;
    for (const auto& r : report->removed)
      os << r.file_id << "\t" << r.reason << "\t" << r.length << "\n";
    atomic_write_text(dir / "removal_report.tsv", os.str());
  }
}

PrepBundle load_prep_bundle(const fs::path& dir) {
  PrepBundle b;
  b.split.train = read_sequences(dir / "train.tsv");
  b.split.test = read_sequences(dir / "test.tsv");
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("cannot open bundle meta: " + dir.string());
  std::string key;
  while (meta >> key) {
    if (key == "vocab_size")
      meta >> b.vocab_size;
    else if (key == "sequence_length")
      meta >> b.sequence_length;
    else if (key == "seed")
      meta >> b.seed;
    else {
      std::string skip;
      meta >> skip;
    }
  }
  return b;
}

}  // namespace opseqids
