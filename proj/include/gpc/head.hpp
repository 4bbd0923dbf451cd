#pragma once

#include <cstddef>
#include <vector>

#include "gpc/backbone.hpp"
#include "gpc/rng.hpp"
#include "gpc/tensor.hpp"

namespace gpc {

// Linear classifier over the final-layer CLS row.
struct ClassificationHead {
  TensorPtr w;  // d x C
  TensorPtr b;  // C
  std::size_t num_classes = 0;

  std::vector<TensorPtr> trainable() const { return {w, b}; }
  std::size_t param_count() const { return w->size() + b->size(); }
};

ClassificationHead init_head(std::size_t dim, std::size_t num_classes, Rng& rng);

// Logits for the CLS row (row 0 of the token block).
TensorPtr classify_cls(Tape& tape, const ModelInput& final_state, const ClassificationHead& head);

// Lowest index wins ties.
std::size_t argmax_class(const TensorPtr& logits);

}  // namespace gpc
