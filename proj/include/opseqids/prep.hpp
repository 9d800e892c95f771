// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "opseqids/corpus.hpp"

namespace opseqids {

// Sequence-length cut-off selector: a length-distribution quantile or the mean.
struct LengthSpec {
  enum class Kind { Quantile, Mean, Literal };
  Kind kind = Kind::Quantile;
  double quantile = 0.75;  // for Kind::Quantile
  int literal = 0;         // for Kind::Literal

  static LengthSpec parse(const std::string& text);  // "Q(0.75)" | "MEAN" | "64"
  std::string to_string() const;
  // only the fields selected by `kind` participate in equality
  bool operator==(const LengthSpec& o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::Quantile) return quantile == o.quantile;
    if (kind == Kind::Literal) return literal == o.literal;
    return true;
  }
};

struct LengthStats {
  std::vector<long> counts;  // per-file op-code totals
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::map<double, double> percentiles;  // fraction -> value
  double max_threshold = 0.0;            // mean + 1.0 * (q3 - q1)

  static LengthStats compute(std::vector<long> counts);
};

// Linear interpolation between closest ranks ("type 7") on sorted data.
double quantile(const std::vector<long>& sorted_counts, double p);

struct HistogramBin {
  int cls;  // 0 benign, 1 malicious
  double low, high;
  long frequency;
};

// Fixed-width bins over log10(length). All counts must be >= 1.
std::vector<HistogramBin> log10_length_histogram(const std::vector<long>& counts,
                                                 int cls, double bin_width = 0.1);

struct RemovalRecord {
  std::string file_id;
  std::string reason;
  long length;
};

struct PrepPlan {
  LengthSpec sequence_length{LengthSpec::Kind::Quantile, 0.75, 0};
  int min_keep_malicious = 100;      // hard length floor for malicious files
  double percentile_floor = 0.01;    // drop below this percentile of non-null lengths
  std::uint64_t seed = 0;
  bool balance = true;
  double split_fraction = 0.25;      // test share, stratified
};

struct OutlierReport {
  std::vector<RemovalRecord> removed;
  int iterations = 0;
  std::vector<double> thresholds;  // per iteration per class, interleaved benign/malicious
};

// Null-drop, percentile floor, malicious min-length clip, then iterated
// interquartile-range threshold per class until a fixed point.
std::vector<OpcodeSequence> remove_outliers(std::vector<OpcodeSequence> sequences,
                                            const PrepPlan& plan,
                                            OutlierReport* report = nullptr);

// Quantile (or mean) of the combined length distribution, rounded up.
int resolve_sequence_length(const std::vector<long>& combined_counts,
                            const LengthSpec& spec);

// Head truncation / PAD(0) prefixing to exactly target_length.
std::vector<int> trim_pad(const std::vector<int>& codes, int target_length);

// Random undersampling of the majority class to the minority count.
std::vector<OpcodeSequence> balance_classes(std::vector<OpcodeSequence> dataset,
                                            std::uint64_t seed);

struct SplitDataset {
  std::vector<OpcodeSequence> train;
  std::vector<OpcodeSequence> test;
};

// Stratified by label; deterministic under seed.
SplitDataset split_dataset(std::vector<OpcodeSequence> dataset, double split_fraction,
                           std::uint64_t seed);

std::vector<long> lengths_of(const std::vector<OpcodeSequence>& sequences,
                             int label_filter = -1);

// --- prepared dataset bundle (directory) -----------------------------------

struct PrepBundle {
  SplitDataset split;
  int vocab_size = 0;
  int sequence_length = 0;  // 0 = sequences stored untrimmed
  std::uint64_t seed = 0;
};

void save_prep_bundle(const PrepBundle& bundle, const std::filesystem::path& dir,
                      const OutlierReport* report = nullptr);
PrepBundle load_prep_bundle(const std::filesystem::path& dir);

}  // namespace opseqids
