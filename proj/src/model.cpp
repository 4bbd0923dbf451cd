#include "gpc/model.hpp"

#include <cmath>

#include "gpc/errors.hpp"

namespace gpc {

std::vector<TensorPtr> PromptModel::tuned_params() const {
  std::vector<TensorPtr> out;
  for (auto& [name, p] : named_tuned_params()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> PromptModel::named_tuned_params() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("prompt", prompt);
  if (cell.forget) out.emplace_back("cell.forget", cell.forget);
  if (cell.remember) out.emplace_back("cell.remember", cell.remember);
  if (cell.shared_remember) out.emplace_back("cell.shared_remember", cell.shared_remember);
  for (std::size_t i = 0; i < cell.per_layer.size(); ++i)
    out.emplace_back("cell.per_layer." + std::to_string(i), cell.per_layer[i]);
  out.emplace_back("head.w", head.w);
  out.emplace_back("head.b", head.b);
  return out;
}

TensorPtr init_prompt(std::size_t prompt_len, std::size_t dim, Rng& rng) {
  if (dim == 0) throw ConfigError("prompt needs dim >= 1");
  const double scale = 0.5 / std::sqrt(static_cast<double>(dim));
  auto p = Tensor::zeros({prompt_len, dim});
  for (auto& v : p->values) v = rng.uniform(-scale, scale);
  p->requires_grad = true;
  return p;
}

PromptModel assemble_model(Backbone backbone, UpdateRule rule, ActivationKind theta,
                           std::size_t prompt_len, std::size_t num_classes, Rng& rng) {
  const std::size_t d = backbone.config.hidden_dim;
  const std::size_t num_layers = backbone.config.num_layers;
  PromptModel model;
  model.backbone = std::move(backbone);
  model.prompt = init_prompt(prompt_len, d, rng);
  model.cell = init_prompt_cell(rule, theta, d, num_layers, rng);
  model.head = init_head(d, num_classes, rng);
  return model;
}

std::size_t count_trainable_params(const PromptModel& model) {
  std::size_t total = count_trainable_params(model.backbone);
  for (const auto& p : model.tuned_params())
    if (p->requires_grad) total += p->size();
  return total;
}

TensorPtr example_logits(Tape& tape, const PromptModel& model, const Example& ex,
                         std::vector<LayerTrace>* trace) {
  auto final_state =
      backbone_forward(tape, model.backbone, model.cell, model.prompt, ex.tokens, trace);
  return classify_cls(tape, final_state, model.head);
}

TensorPtr batch_loss(Tape& tape, const PromptModel& model, const Dataset& data,
                     const std::vector<std::size_t>& indices,
                     std::vector<std::vector<LayerTrace>>* traces) {
  if (indices.empty()) throw DataError("batch_loss over an empty batch");
  std::vector<TensorPtr> logit_rows;
  std::vector<std::size_t> labels;
  logit_rows.reserve(indices.size());
  labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= data.size())
      throw DataError("batch index " + std::to_string(idx) + " outside dataset of " +
                      std::to_string(data.size()));
    std::vector<LayerTrace> trace;
    logit_rows.push_back(example_logits(tape, model, data[idx], traces ? &trace : nullptr));
    if (traces) traces->push_back(std::move(trace));
    labels.push_back(data[idx].label);
  }
  return tape.cross_entropy(tape.concat_rows(logit_rows), labels);
}

double evaluate_accuracy(const PromptModel& model, const Dataset& data) {
  if (data.empty()) throw DataError("evaluate_accuracy over an empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : data) {
    Tape tape;
    auto logits = example_logits(tape, model, ex);
    if (argmax_class(logits) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace gpc
