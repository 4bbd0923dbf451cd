#include "gpc/backbone.hpp"

#include <cmath>
#include <string>

#include "gpc/errors.hpp"

namespace gpc {
namespace {

TensorPtr uniform_tensor(const Shape& shape, double scale, Rng& rng) {
  auto t = Tensor::zeros(shape);
  for (auto& v : t->values) v = rng.uniform(-scale, scale);
  t->requires_grad = true;
  return t;
}

TensorPtr trainable_full(const Shape& shape, double value) {
  auto t = Tensor::full(shape, value);
  t->requires_grad = true;
  return t;
}

}  // namespace

void BackboneConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2 (CLS plus at least one token)");
  if (hidden_dim == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0 || max_seq_len == 0)
    throw ConfigError("backbone dimensions must all be >= 1");
  if (hidden_dim % num_heads != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  if (layer_norm_eps <= 0.0) throw ConfigError("layer_norm_eps must be positive");
}

std::vector<TensorPtr> EncoderLayer::params() const {
  return {w_q, w_k, w_v, w_o, w_1, b_1, w_2, b_2, ln1_gain, ln1_bias, ln2_gain, ln2_bias};
}

std::vector<TensorPtr> Backbone::params() const {
  std::vector<TensorPtr> out = {token_table, position_table};
  for (const auto& layer : layers)
    for (const auto& p : layer.params()) out.push_back(p);
  return out;
}

Backbone init_backbone(const BackboneConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.hidden_dim;
  const std::size_t f = config.ffn_dim;
  const double embed_scale = 0.5 / std::sqrt(static_cast<double>(d));
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double ffn_out_scale = 1.0 / std::sqrt(static_cast<double>(f));

  Backbone b;
  b.config = config;
  b.cls_id = 0;
  b.token_table = uniform_tensor({config.vocab_size, d}, embed_scale, rng);
  b.position_table = uniform_tensor({config.max_seq_len, d}, embed_scale, rng);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    EncoderLayer layer;
    layer.w_q = uniform_tensor({d, d}, proj_scale, rng);
    layer.w_k = uniform_tensor({d, d}, proj_scale, rng);
    layer.w_v = uniform_tensor({d, d}, proj_scale, rng);
    layer.w_o = uniform_tensor({d, d}, proj_scale, rng);
    layer.w_1 = uniform_tensor({d, f}, proj_scale, rng);
    layer.b_1 = trainable_full({f}, 0.0);
    layer.w_2 = uniform_tensor({f, d}, ffn_out_scale, rng);
    layer.b_2 = trainable_full({d}, 0.0);
    layer.ln1_gain = trainable_full({d}, 1.0);
    layer.ln1_bias = trainable_full({d}, 0.0);
    layer.ln2_gain = trainable_full({d}, 1.0);
    layer.ln2_bias = trainable_full({d}, 0.0);
    b.layers.push_back(std::move(layer));
  }
  return b;
}

ModelInput embed(Tape& tape, const Backbone& backbone, const std::vector<std::size_t>& token_ids,
                 const TensorPtr& prompt) {
  const auto& cfg = backbone.config;
  if (!prompt || prompt->shape.size() != 2 || prompt->shape[1] != cfg.hidden_dim)
    throw ShapeError("prompt must be m x hidden_dim");
  const std::size_t m = prompt->shape[0];
  const std::size_t n = token_ids.size();
  if (m + n + 1 > cfg.max_seq_len)
    throw DataError("sequence of " + std::to_string(m + n + 1) + " rows exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
  for (std::size_t id : token_ids)
    if (id >= cfg.vocab_size)
      throw DataError("token id " + std::to_string(id) + " outside vocab of " +
                      std::to_string(cfg.vocab_size));

  std::vector<std::size_t> prompt_positions(m);
  for (std::size_t i = 0; i < m; ++i) prompt_positions[i] = i;
  std::vector<std::size_t> ids_with_cls;
  std::vector<std::size_t> token_positions;
  ids_with_cls.reserve(n + 1);
  token_positions.reserve(n + 1);
  ids_with_cls.push_back(backbone.cls_id);
  token_positions.push_back(m);
  for (std::size_t i = 0; i < n; ++i) {
    ids_with_cls.push_back(token_ids[i]);
    token_positions.push_back(m + 1 + i);
  }

  ModelInput input;
  input.prompt = tape.add(prompt, tape.rows(backbone.position_table, prompt_positions));
  input.tokens = tape.add(tape.rows(backbone.token_table, ids_with_cls),
                          tape.rows(backbone.position_table, token_positions));
  return input;
}

ModelInput encoder_layer_forward(Tape& tape, const EncoderLayer& layer,
                                 const BackboneConfig& config, const ModelInput& input) {
  const std::size_t d = config.hidden_dim;
  if (input.prompt->shape[1] != d || input.tokens->shape[1] != d)
    throw ShapeError("encoder layer fed hidden dim " + shape_str(input.prompt->shape) + " / " +
                     shape_str(input.tokens->shape) + ", expected width " + std::to_string(d));
  const std::size_t m = input.prompt->shape[0];
  auto x = tape.concat_rows({input.prompt, input.tokens});

  auto q = tape.matmul(x, layer.w_q);
  auto k = tape.matmul(x, layer.w_k);
  auto v = tape.matmul(x, layer.w_v);
  const std::size_t hd = config.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<TensorPtr> head_outputs;
  head_outputs.reserve(config.num_heads);
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    auto qh = tape.slice_cols(q, h * hd, (h + 1) * hd);
    auto kh = tape.slice_cols(k, h * hd, (h + 1) * hd);
    auto vh = tape.slice_cols(v, h * hd, (h + 1) * hd);
    auto scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    head_outputs.push_back(tape.matmul(tape.softmax_rows(scores), vh));
  }
  auto attn = tape.matmul(tape.concat_cols(head_outputs), layer.w_o);
  auto normed1 =
      tape.layer_norm(tape.add(x, attn), layer.ln1_gain, layer.ln1_bias, config.layer_norm_eps);

  auto hidden = tape.activation(tape.add_row_vector(tape.matmul(normed1, layer.w_1), layer.b_1),
                                config.mlp_activation);
  auto mlp = tape.add_row_vector(tape.matmul(hidden, layer.w_2), layer.b_2);
  auto normed2 = tape.layer_norm(tape.add(normed1, mlp), layer.ln2_gain, layer.ln2_bias,
                                 config.layer_norm_eps);

  ModelInput out;
  out.prompt = tape.slice_rows(normed2, 0, m);
  out.tokens = tape.slice_rows(normed2, m, normed2->shape[0]);
  return out;
}

ModelInput backbone_forward(Tape& tape, const Backbone& backbone, const PromptCellParams& rule,
                            const TensorPtr& prompt, const std::vector<std::size_t>& token_ids,
                            std::vector<LayerTrace>* trace) {
  ModelInput state = embed(tape, backbone, token_ids, prompt);
  const TensorPtr p_init = state.prompt;
  const std::size_t num_layers = backbone.config.num_layers;
  for (std::size_t t = 0; t < num_layers; ++t) {
    ModelInput star = encoder_layer_forward(tape, backbone.layers[t], backbone.config, state);
    if (trace) trace->push_back({state.prompt, state.tokens, star.prompt, star.tokens});
    ModelInput next;
    next.tokens = star.tokens;  // pass-through: same tensor, never rewritten
    next.prompt = (t + 1 < num_layers)
                      ? apply_prompt_update(tape, rule, star.prompt, state.prompt, p_init, t)
                      : star.prompt;
    state = next;
  }
  return state;
}

void freeze_all(Backbone& backbone) {
  for (const auto& p : backbone.params()) p->requires_grad = false;
}

std::size_t count_trainable_params(const Backbone& backbone) {
  std::size_t total = 0;
  for (const auto& p : backbone.params())
    if (p->requires_grad) total += p->size();
  return total;
}

}  // namespace gpc
