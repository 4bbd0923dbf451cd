#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpc/model.hpp"

namespace gpc {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping

  void validate() const;
};

// Adaptive-moment optimizer over an explicit trainable set; never holds state
// for frozen tensors.
class Adam {
 public:
  Adam(std::vector<TensorPtr> params, OptimizerConfig config);

  // Applies one update from the gradients currently on the parameters, then
  // clears those gradients.
  void step();
  std::size_t steps_taken() const { return step_count_; }
  const std::vector<TensorPtr>& params() const { return params_; }

 private:
  std::vector<TensorPtr> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_count_ = 0;
};

// One forward/backward/update on a mini-batch. Returns the pre-update loss.
// Throws NumericError on a non-finite loss. When prompt_grad_norms is given,
// fills it with the per-layer d(loss)/d(P_t) norms from the same backward.
double train_step(PromptModel& model, const Dataset& data,
                  const std::vector<std::size_t>& batch, Adam& optimizer,
                  std::vector<double>* prompt_grad_norms = nullptr);

// L2 norm of d(loss)/d(P_t) for each layer input t = 0..L-1, accumulated over
// the batch. Runs its own forward/backward; leaves no gradients behind.
std::vector<double> measure_prompt_gradient_norms(const PromptModel& model, const Dataset& data,
                                                  const std::vector<std::size_t>& batch);

// Mean per-example loss over data[indices], forward passes only. A stable
// whole-split figure, unlike any single mini-batch.
double dataset_mean_loss(const PromptModel& model, const Dataset& data,
                         const std::vector<std::size_t>& indices);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked_scalars = 0;
  bool passed = false;
  std::vector<std::string> non_finite;  // coordinates whose perturbed loss blew up
};

// Central finite differences on every trainable scalar of the tuned set.
// Guarded: refuses models above max_scalars.
GradCheckReport grad_check(const PromptModel& model, const Dataset& data,
                           const std::vector<std::size_t>& batch, double step_size = 1e-4,
                           double tolerance = 1e-4, std::size_t max_scalars = 20000);

// Order-stable FNV-1a digest over raw parameter bytes.
std::uint64_t checksum_params(const std::vector<TensorPtr>& params);

}  // namespace gpc
