#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gpc/backbone.hpp"
#include "gpc/data.hpp"
#include "gpc/head.hpp"
#include "gpc/prompt_cell.hpp"

namespace gpc {

// Everything one prompt-tuning run owns: frozen(-able) backbone, trainable
// prompt, update-rule weights, and the classification head.
struct PromptModel {
  Backbone backbone;
  PromptCellParams cell;
  TensorPtr prompt;  // P_0, m x d
  ClassificationHead head;

  std::size_t prompt_len() const { return prompt->shape[0]; }
  std::vector<TensorPtr> tuned_params() const;
  std::vector<std::pair<std::string, TensorPtr>> named_tuned_params() const;
};

TensorPtr init_prompt(std::size_t prompt_len, std::size_t dim, Rng& rng);

PromptModel assemble_model(Backbone backbone, UpdateRule rule, ActivationKind theta,
                           std::size_t prompt_len, std::size_t num_classes, Rng& rng);

// Every requires_grad scalar in the model, backbone included.
std::size_t count_trainable_params(const PromptModel& model);

TensorPtr example_logits(Tape& tape, const PromptModel& model, const Example& ex,
                         std::vector<LayerTrace>* trace = nullptr);

// Mean cross-entropy over data[indices]. Optional per-example layer traces.
TensorPtr batch_loss(Tape& tape, const PromptModel& model, const Dataset& data,
                     const std::vector<std::size_t>& indices,
                     std::vector<std::vector<LayerTrace>>* traces = nullptr);

double evaluate_accuracy(const PromptModel& model, const Dataset& data);

}  // namespace gpc
