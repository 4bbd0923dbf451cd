#pragma once

#include <string>
#include <vector>

#include "gpc/rng.hpp"
#include "gpc/tensor.hpp"

namespace gpc {

// How the prompt rows are rewritten between adjacent encoder layers.
enum class UpdateRule {
  kVanilla,           // prompt flows through the layers untouched, like tokens
  kGpc,               // theta(P* W_F^T + P_prev W_R^T), weights shared across layers
  kGpcNoForget,       // forget path replaced by identity
  kGpcNoRemember,     // remember path replaced by identity
  kResidualOnly,      // both paths identity: theta(P* + P_prev)
  kDirectAdd,         // P_init + P*, no activation
  kSharedRemember,    // P_init W_P^T + P*, one W_P for every site
  kPerLayerRemember,  // P_init (W_P^t)^T + P*, one W_P per site
};

std::string to_string(UpdateRule rule);
UpdateRule update_rule_from_string(const std::string& name);
const std::vector<UpdateRule>& all_update_rules();

// Trainable weights owned by the update rule. Only the members a rule uses are
// allocated; the rest stay null.
struct PromptCellParams {
  UpdateRule rule = UpdateRule::kVanilla;
  ActivationKind theta = ActivationKind::kTanh;
  TensorPtr forget;                  // d x d, GPC / GPCNoRemember
  TensorPtr remember;                // d x d, GPC / GPCNoForget
  TensorPtr shared_remember;         // d x d, SharedRemember
  std::vector<TensorPtr> per_layer;  // L-1 of d x d, PerLayerRemember

  std::vector<TensorPtr> trainable() const;
};

// Trainable scalars the rule adds on top of the prompt itself.
std::size_t rule_param_count(UpdateRule rule, std::size_t dim, std::size_t num_layers);

PromptCellParams init_prompt_cell(UpdateRule rule, ActivationKind theta, std::size_t dim,
                                  std::size_t num_layers, Rng& rng);

// One inter-layer update site. p_star is the prompt slice leaving layer t,
// p_prev the slice that entered it, p_init the original trainable prompt.
// layer_index = t in [0, num_layers-1).
TensorPtr apply_prompt_update(Tape& tape, const PromptCellParams& params, const TensorPtr& p_star,
                              const TensorPtr& p_prev, const TensorPtr& p_init,
                              std::size_t layer_index);

}  // namespace gpc
