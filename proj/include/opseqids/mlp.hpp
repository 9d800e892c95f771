// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "opseqids/nn_core.hpp"

namespace opseqids {

// Relative op-code frequencies over indices 1..vocab_size+1 (UNK bucket
// included, PAD excluded). Sums to 1 for non-empty input.
Vec frequency_vector(const std::vector<int>& codes, int vocab_size);

struct MlpConfig {
  int input_size = 0;
  std::vector<int> hidden = {64, 64};  // ReLU layers
};

struct MlpParams {
  MlpConfig config;
  std::vector<Mat> W;  // per layer, plus the output row as W.back() (1 x last)
  std::vector<Vec> b;

  std::vector<ParamView> param_views();
};

struct MlpGrads {
  std::vector<Mat> W;
  std::vector<Vec> b;

  static MlpGrads zeros_like(const MlpParams& net);
  void set_zero();
  std::vector<ParamView> param_views();
};

struct MlpCache {
  Vec input;
  std::vector<Vec> pre;   // affine outputs per layer
  std::vector<Vec> post;  // activations per hidden layer
  double logit = 0.0;
  double p = 0.0;
};

MlpParams mlp_init(const MlpConfig& config, std::uint64_t seed);

double mlp_forward(const MlpParams& net, const Vec& x, MlpCache* cache = nullptr);

// BCE gradients for one example, added into `grads`.
void mlp_backward(const MlpParams& net, const MlpCache& cache, int y, MlpGrads& grads);

// One Adam update over a mini-batch; returns mean batch loss.
double mlp_train_step(MlpParams& net, const std::vector<Vec>& batch_x,
                      const std::vector<int>& batch_y, MlpGrads& grads,
                      AdamOptimizer& adam);

void mlp_save_checkpoint(const MlpParams& net, const std::filesystem::path& path);
MlpParams mlp_load_checkpoint(const std::filesystem::path& path);

}  // namespace opseqids
