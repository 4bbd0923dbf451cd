#include "gpc/prompt_cell.hpp"

#include "gpc/errors.hpp"

namespace gpc {
namespace {

TensorPtr noise_matrix(std::size_t dim, double scale, Rng& rng) {
  auto t = Tensor::zeros({dim, dim});
  for (auto& v : t->values) v = rng.uniform(-scale, scale);
  t->requires_grad = true;
  return t;
}

TensorPtr near_identity(std::size_t dim, double scale, Rng& rng) {
  auto t = noise_matrix(dim, scale, rng);
  for (std::size_t i = 0; i < dim; ++i) t->at(i, i) += 1.0;
  return t;
}

constexpr double kUnitNoiseScale = 0.02;

}  // namespace

std::string to_string(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::kVanilla: return "vanilla";
    case UpdateRule::kGpc: return "gpc";
    case UpdateRule::kGpcNoForget: return "gpc-no-forget";
    case UpdateRule::kGpcNoRemember: return "gpc-no-remember";
    case UpdateRule::kResidualOnly: return "residual-only";
    case UpdateRule::kDirectAdd: return "direct-add";
    case UpdateRule::kSharedRemember: return "shared-remember";
    case UpdateRule::kPerLayerRemember: return "per-layer-remember";
  }
  throw ConfigError("unknown update rule tag");
}

UpdateRule update_rule_from_string(const std::string& name) {
  for (UpdateRule rule : all_update_rules())
    if (to_string(rule) == name) return rule;
  throw ConfigError("unknown update rule '" + name + "'");
}

const std::vector<UpdateRule>& all_update_rules() {
  static const std::vector<UpdateRule> rules = {
      UpdateRule::kVanilla,        UpdateRule::kGpc,
      UpdateRule::kGpcNoForget,    UpdateRule::kGpcNoRemember,
      UpdateRule::kResidualOnly,   UpdateRule::kDirectAdd,
      UpdateRule::kSharedRemember, UpdateRule::kPerLayerRemember,
  };
  return rules;
}

std::vector<TensorPtr> PromptCellParams::trainable() const {
  std::vector<TensorPtr> out;
  if (forget) out.push_back(forget);
  if (remember) out.push_back(remember);
  if (shared_remember) out.push_back(shared_remember);
  for (const auto& w : per_layer) out.push_back(w);
  return out;
}

std::size_t rule_param_count(UpdateRule rule, std::size_t dim, std::size_t num_layers) {
  const std::size_t dd = dim * dim;
  switch (rule) {
    case UpdateRule::kVanilla: return 0;
    case UpdateRule::kGpc: return 2 * dd;
    case UpdateRule::kGpcNoForget: return dd;
    case UpdateRule::kGpcNoRemember: return dd;
    case UpdateRule::kResidualOnly: return 0;
    case UpdateRule::kDirectAdd: return 0;
    case UpdateRule::kSharedRemember: return dd;
    case UpdateRule::kPerLayerRemember:
      if (num_layers == 0) throw ConfigError("per-layer-remember needs at least one layer");
      return (num_layers - 1) * dd;
  }
  throw ConfigError("unknown update rule tag");
}

PromptCellParams init_prompt_cell(UpdateRule rule, ActivationKind theta, std::size_t dim,
                                  std::size_t num_layers, Rng& rng) {
  if (dim == 0) throw ConfigError("prompt cell needs dim > 0");
  if (num_layers == 0) throw ConfigError("prompt cell needs at least one layer");
  PromptCellParams p;
  p.rule = rule;
  p.theta = theta;
  switch (rule) {
    case UpdateRule::kVanilla:
    case UpdateRule::kResidualOnly:
    case UpdateRule::kDirectAdd:
      break;
    case UpdateRule::kGpc:
      p.forget = near_identity(dim, kUnitNoiseScale, rng);
      p.remember = noise_matrix(dim, kUnitNoiseScale, rng);
      break;
    case UpdateRule::kGpcNoForget:
      p.remember = noise_matrix(dim, kUnitNoiseScale, rng);
      break;
    case UpdateRule::kGpcNoRemember:
      p.forget = near_identity(dim, kUnitNoiseScale, rng);
      break;
    case UpdateRule::kSharedRemember:
      p.shared_remember = noise_matrix(dim, kUnitNoiseScale, rng);
      break;
    case UpdateRule::kPerLayerRemember:
      for (std::size_t t = 0; t + 1 < num_layers; ++t)
        p.per_layer.push_back(noise_matrix(dim, kUnitNoiseScale, rng));
      break;
  }
  return p;
}

namespace {

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* what) {
  if (a->shape != b->shape)
    throw ShapeError(std::string("prompt update ") + what + ": " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
}

}  // namespace

TensorPtr apply_prompt_update(Tape& tape, const PromptCellParams& params, const TensorPtr& p_star,
                              const TensorPtr& p_prev, const TensorPtr& p_init,
                              std::size_t layer_index) {
  require_same_shape(p_star, p_prev, "p_star vs p_prev");
  require_same_shape(p_star, p_init, "p_star vs p_init");
  switch (params.rule) {
    case UpdateRule::kVanilla:
      return p_star;
    case UpdateRule::kGpc:
      return tape.activation(tape.add(tape.matmul(p_star, tape.transpose(params.forget)),
                                      tape.matmul(p_prev, tape.transpose(params.remember))),
                             params.theta);
    case UpdateRule::kGpcNoForget:
      return tape.activation(
          tape.add(p_star, tape.matmul(p_prev, tape.transpose(params.remember))), params.theta);
    case UpdateRule::kGpcNoRemember:
      return tape.activation(
          tape.add(tape.matmul(p_star, tape.transpose(params.forget)), p_prev), params.theta);
    case UpdateRule::kResidualOnly:
      return tape.activation(tape.add(p_star, p_prev), params.theta);
    case UpdateRule::kDirectAdd:
      return tape.add(p_init, p_star);
    case UpdateRule::kSharedRemember:
      return tape.add(tape.matmul(p_init, tape.transpose(params.shared_remember)), p_star);
    case UpdateRule::kPerLayerRemember:
      if (layer_index >= params.per_layer.size())
        throw ShapeError("per-layer-remember site " + std::to_string(layer_index) +
                         " out of range for " + std::to_string(params.per_layer.size()) +
                         " sites");
      return tape.add(tape.matmul(p_init, tape.transpose(params.per_layer[layer_index])), p_star);
  }
  throw ConfigError("unknown update rule tag");
}

}  // namespace gpc
