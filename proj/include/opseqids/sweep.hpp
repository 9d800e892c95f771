// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opseqids/lstm_net.hpp"
#include "opseqids/prep.hpp"

namespace opseqids {

// One grid row: the seven swept fields plus run bookkeeping.
struct SweepConfig {
  std::string id;           // e.g. "C-9"
  LengthSpec seq_len;       // SqLn
  int embedding_size = 0;   // EmSz
  int num_layers = 0;       // Lyrs
  LengthSpec out_dim;       // OutDim: literal or quantile of the length distribution
  Activation act_fn = Activation::Tanh;  // ActFun (sigma_c)
  double dropout = 0.0;     // DropOut
  int batch_size = 0;       // BchSz
  int max_epochs = 10;
  int min_epochs = 5;
  double lr = 0.001;  // 0 gives the untrained control
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // percent
};

struct SweepResult {
  std::string config_id;
  int best_epoch = 0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // percent
  std::vector<EpochRecord> history;
  double wall_time_sec = 0.0;
  int sequence_length = 0;  // resolved L
  int out_dim = 0;          // resolved dense width
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;  // percent, threshold 0.5
};

Evaluation evaluate(const NetworkParams& net,
                    const std::vector<OpcodeSequence>& dataset);

// Train one configuration on a (cleaned, balanced, split, untrimmed) dataset.
// Resolves L and OutDim from the combined length distribution, trims/pads,
// trains with Adam and early stopping, and restores the best epoch's weights.
SweepResult train_model(const SweepConfig& config, const SplitDataset& data,
                        int vocab_size, NetworkParams* best_net = nullptr);

struct GridOutcome {
  std::vector<SweepResult> results;
  std::map<std::string, std::string> failures;  // config id -> error message
  std::vector<SweepConfig> configs;             // succeeded configs, result order
};

GridOutcome run_grid(const std::vector<SweepConfig>& configs, const SplitDataset& data,
                     int vocab_size,
                     const std::filesystem::path* checkpoint_dir = nullptr);

// --- importance ranking -----------------------------------------------------

struct LevelMean {
  std::string level;
  double mean_accuracy = 0.0;
  int count = 0;
};

struct ImportanceEntry {
  std::string hyperparameter;  // SqLn, EmSz, Lyrs, OutDim, ActFun, DropOut, BchSz
  double score = 0.0;          // max level mean - min level mean
  std::vector<LevelMean> levels;
};

// Range-of-level-means ranking, descending, ties broken alphabetically.
std::vector<ImportanceEntry> rank_importance(const std::vector<SweepConfig>& configs,
                                             const std::vector<SweepResult>& results);

// Pairs of hyperparameters whose observed levels determine each other
// (the grid is not orthogonal; scores are associations, not causes).
std::vector<std::pair<std::string, std::string>> confounded_pairs(
    const std::vector<SweepConfig>& configs);

// --- reports ----------------------------------------------------------------

// results.csv (Table-style columns + BestEpoch + SeqLen + OutDimResolved),
// ranking.csv, level_means.csv, history.csv, confounds.csv, timing.csv.
void emit_report(const GridOutcome& outcome,
                 const std::vector<ImportanceEntry>& ranking,
                 const std::filesystem::path& dir);

// --- grid file --------------------------------------------------------------

std::vector<SweepConfig> load_grid_file(const std::filesystem::path& path);
void save_grid_file(const std::vector<SweepConfig>& configs,
                    const std::filesystem::path& path);

// The nine stock configurations swept by default (data/table2.grid ships them).
std::vector<SweepConfig> default_grid();

}  // namespace opseqids
