#pragma once

#include <cstddef>
#include <vector>

#include "gpc/prompt_cell.hpp"
#include "gpc/rng.hpp"
#include "gpc/tensor.hpp"

namespace gpc {

struct BackboneConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t ffn_dim = 0;
  std::size_t max_seq_len = 0;
  double layer_norm_eps = 1e-5;
  ActivationKind mlp_activation = ActivationKind::kTanh;

  void validate() const;  // throws ConfigError
  std::size_t head_dim() const { return hidden_dim / num_heads; }
};

struct EncoderLayer {
  TensorPtr w_q, w_k, w_v, w_o;  // d x d attention projections, no biases
  TensorPtr w_1, b_1, w_2, b_2;  // d x f / f x d MLP with biases
  TensorPtr ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  std::vector<TensorPtr> params() const;
};

struct Backbone {
  BackboneConfig config;
  TensorPtr token_table;     // V x d
  TensorPtr position_table;  // max_seq_len x d
  std::size_t cls_id = 0;
  std::vector<EncoderLayer> layers;

  std::vector<TensorPtr> params() const;
};

// The sequence as it moves through the stack, kept as two blocks so the token
// block can be carried between layers without being rewritten by the rule.
// Row layout of the concatenated sequence: [P_1..P_m, CLS, x_1..x_n].
struct ModelInput {
  TensorPtr prompt;  // m x d
  TensorPtr tokens;  // (n+1) x d, CLS first
};

// Per-layer snapshot for diagnostics: the blocks entering and leaving layer t.
struct LayerTrace {
  TensorPtr p_prev, t_prev;  // entering
  TensorPtr p_star, t_star;  // leaving
};

Backbone init_backbone(const BackboneConfig& config, Rng& rng);

// token_ids is the text only; the CLS row is prepended internally. Prompt rows
// take positions 0..m-1, CLS position m.
ModelInput embed(Tape& tape, const Backbone& backbone, const std::vector<std::size_t>& token_ids,
                 const TensorPtr& prompt);

ModelInput encoder_layer_forward(Tape& tape, const EncoderLayer& layer,
                                 const BackboneConfig& config, const ModelInput& input);

// Runs embed + L layers, applying the update rule at the L-1 sites between
// adjacent layers (never after the last). Tokens pass through untouched.
ModelInput backbone_forward(Tape& tape, const Backbone& backbone, const PromptCellParams& rule,
                            const TensorPtr& prompt, const std::vector<std::size_t>& token_ids,
                            std::vector<LayerTrace>* trace = nullptr);

void freeze_all(Backbone& backbone);
std::size_t count_trainable_params(const Backbone& backbone);

}  // namespace gpc
