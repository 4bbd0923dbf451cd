#include "gpc/training.hpp"

#include <cmath>
#include <cstring>

#include "gpc/errors.hpp"

namespace gpc {

void OptimizerConfig::validate() const {
  if (lr < 0.0) throw ConfigError("learning rate must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("moment decays must lie in [0, 1)");
  if (eps <= 0.0) throw ConfigError("optimizer eps must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
}

Adam::Adam(std::vector<TensorPtr> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& p : params_) {
    if (!p->requires_grad)
      throw ConfigError("optimizer given a frozen tensor; trainable set only");
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_)
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double g = p->grad_or_zero(i);
        sq += g * g;
      }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) {
      const double scale = config_.clip_norm / norm;
      for (const auto& p : params_)
        if (p->has_grad())
          for (auto& g : p->grad) g *= scale;
    }
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = *params_[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad_or_zero(i);
      m_[pi][i] = config_.beta1 * m_[pi][i] + (1.0 - config_.beta1) * g;
      v_[pi][i] = config_.beta2 * v_[pi][i] + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[pi][i] / bc1;
      const double vhat = v_[pi][i] / bc2;
      p.values[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    p.drop_grad();
  }
}

namespace {

std::vector<double> norms_from_traces(const std::vector<std::vector<LayerTrace>>& traces,
                                      std::size_t num_layers) {
  std::vector<double> norms(num_layers, 0.0);
  for (const auto& trace : traces)
    for (std::size_t t = 0; t < num_layers; ++t) {
      const auto& p_prev = trace[t].p_prev;
      if (!p_prev->has_grad()) continue;
      for (double g : p_prev->grad) norms[t] += g * g;
    }
  for (auto& n : norms) n = std::sqrt(n);
  return norms;
}

}  // namespace

double train_step(PromptModel& model, const Dataset& data,
                  const std::vector<std::size_t>& batch, Adam& optimizer,
                  std::vector<double>* prompt_grad_norms) {
  for (const auto& p : optimizer.params()) p->drop_grad();
  Tape tape;
  std::vector<std::vector<LayerTrace>> traces;
  auto loss = batch_loss(tape, model, data, batch, prompt_grad_norms ? &traces : nullptr);
  const double value = loss->values[0];
  if (!std::isfinite(value))
    throw NumericError("non-finite training loss at optimizer step " +
                       std::to_string(optimizer.steps_taken() + 1));
  tape.backward(loss);
  if (prompt_grad_norms)
    *prompt_grad_norms = norms_from_traces(traces, model.backbone.config.num_layers);
  optimizer.step();
  return value;
}

std::vector<double> measure_prompt_gradient_norms(const PromptModel& model, const Dataset& data,
                                                  const std::vector<std::size_t>& batch) {
  for (const auto& p : model.tuned_params()) p->drop_grad();
  Tape tape;
  std::vector<std::vector<LayerTrace>> traces;
  auto loss = batch_loss(tape, model, data, batch, &traces);
  tape.backward(loss);
  auto norms = norms_from_traces(traces, model.backbone.config.num_layers);
  for (const auto& p : model.tuned_params()) p->drop_grad();
  return norms;
}

double dataset_mean_loss(const PromptModel& model, const Dataset& data,
                         const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("mean loss over an empty index set");
  double total = 0.0;
  for (std::size_t i : indices) {
    Tape tape;
    total += batch_loss(tape, model, data, {i})->values[0];
  }
  return total / static_cast<double>(indices.size());
}

GradCheckReport grad_check(const PromptModel& model, const Dataset& data,
                           const std::vector<std::size_t>& batch, double step_size,
                           double tolerance, std::size_t max_scalars) {
  auto named = model.named_tuned_params();
  GradCheckReport report;
  for (const auto& [name, p] : named) report.checked_scalars += p->size();
  if (report.checked_scalars > max_scalars)
    throw ConfigError("grad_check refused: " + std::to_string(report.checked_scalars) +
                      " trainable scalars exceed the guard of " + std::to_string(max_scalars));

  for (const auto& [name, p] : named) p->drop_grad();
  Tape tape;
  auto loss = batch_loss(tape, model, data, batch);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, p] : named) {
    std::vector<double> g(p->size(), 0.0);
    for (std::size_t i = 0; i < p->size(); ++i) g[i] = p->grad_or_zero(i);
    analytic.push_back(std::move(g));
  }

  auto eval_loss = [&]() {
    Tape t;
    return batch_loss(t, model, data, batch)->values[0];
  };
  for (std::size_t pi = 0; pi < named.size(); ++pi) {
    auto& [name, p] = named[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->values[i];
      p->values[i] = saved + step_size;
      const double up = eval_loss();
      p->values[i] = saved - step_size;
      const double down = eval_loss();
      p->values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.non_finite.push_back(name + "[" + std::to_string(i) + "]");
        continue;
      }
      const double fd = (up - down) / (2.0 * step_size);
      const double g = analytic[pi][i];
      const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
      const double rel = std::abs(fd - g) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  for (const auto& [name, p] : named) p->drop_grad();
  report.passed = report.non_finite.empty() && report.max_rel_error <= tolerance;
  return report;
}

std::uint64_t checksum_params(const std::vector<TensorPtr>& params) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      hash ^= p[i];
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& t : params) {
    const std::uint64_t n = t->size();
    mix(&n, sizeof(n));
    mix(t->values.data(), t->values.size() * sizeof(double));
  }
  return hash;
}

}  // namespace gpc
