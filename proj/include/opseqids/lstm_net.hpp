// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "opseqids/nn_core.hpp"

namespace opseqids {

// One LSTM layer's weights: gate order is forget, input, output, candidate.
struct LstmLayerParams {
  Mat W_f, W_i, W_o, W_c;  // h x d
  Mat U_f, U_i, U_o, U_c;  // h x h
  Vec b_f, b_i, b_o, b_c;  // h

  int input_size() const { return static_cast<int>(W_f.cols()); }
  int hidden_size() const { return static_cast<int>(W_f.rows()); }

  static LstmLayerParams zeros(int input, int hidden);
};

struct LstmStepState {
  Vec x;           // layer input at this step
  Vec f, i, o;     // gate activations, each in [0,1]
  Vec g;           // candidate activation sigma_c(...)
  Vec c, h;
};

struct LstmNetConfig {
  int vocab_size = 0;       // real mnemonics; embedding has vocab_size + 2 rows
  int embedding_size = 0;
  int num_layers = 1;
  int hidden_size = 0;      // = embedding_size in the swept configurations
  int out_dim = 0;          // dense layer width
  Activation cell_act = Activation::Tanh;  // sigma_c
  double dropout_rate = 0.0;
};

struct NetworkParams {
  LstmNetConfig config;
  Mat embedding;            // (vocab_size + 2) x E; row 0 is PAD, last row UNK
  std::vector<LstmLayerParams> layers;
  Mat dense_W;              // out_dim x h
  Vec dense_b;
  Vec out_w;                // out_dim
  double out_b = 0.0;

  std::vector<ParamView> param_views();
  long parameter_count() const;
};

// Same shapes as NetworkParams, used for gradient accumulation.
struct NetworkGrads {
  Mat embedding;
  std::vector<LstmLayerParams> layers;
  Mat dense_W;
  Vec dense_b;
  Vec out_w;
  double out_b = 0.0;

  static NetworkGrads zeros_like(const NetworkParams& net);
  void set_zero();
  std::vector<ParamView> param_views();
  void accumulate(const NetworkGrads& other, double scale = 1.0);
};

// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
  std::vector<int> codes;
  // steps[layer][t]
  std::vector<std::vector<LstmStepState>> steps;
  // dropout_masks[layer][t]; all-ones in evaluation mode
  std::vector<std::vector<Vec>> dropout_masks;
  Vec dense_pre;   // dense affine output before tanh
  Vec dense_out;   // tanh(dense_pre)
  double logit = 0.0;
  double p = 0.0;
};

// Single LSTM step. Gates use hard-sigmoid, candidate uses cell_act,
// h_t = o_t . c_t (identity output activation).
LstmStepState lstm_cell_forward(const LstmLayerParams& params, const Vec& x_t,
                                const Vec& h_prev, const Vec& c_prev,
                                Activation cell_act);

// Runs the cell across the whole input sequence with zero initial state.
std::vector<LstmStepState> lstm_layer_forward(const LstmLayerParams& params,
                                              const std::vector<Vec>& inputs,
                                              Activation cell_act);

// Embedding lookup, stacked LSTM, dense tanh layer, sigmoid output.
double network_forward(const NetworkParams& net, const std::vector<int>& codes,
                       bool train_mode, Rng* rng, ForwardCache* cache = nullptr);

// BPTT gradients of the BCE loss for one example. Adds into `grads`.
void network_backward(const NetworkParams& net, const ForwardCache& cache, int y,
                      NetworkGrads& grads);

// Glorot-uniform weights, forget bias 1, other biases 0, PAD row zero.
NetworkParams init_params(const LstmNetConfig& config, std::uint64_t seed);

void save_checkpoint(const NetworkParams& net, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace opseqids
