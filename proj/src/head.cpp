#include "gpc/head.hpp"

#include <cmath>

#include "gpc/errors.hpp"

namespace gpc {

ClassificationHead init_head(std::size_t dim, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("classification head needs at least 2 classes");
  if (dim == 0) throw ConfigError("classification head needs dim > 0");
  const double scale = 0.5 / std::sqrt(static_cast<double>(dim));
  ClassificationHead head;
  head.num_classes = num_classes;
  head.w = Tensor::zeros({dim, num_classes});
  for (auto& v : head.w->values) v = rng.uniform(-scale, scale);
  head.w->requires_grad = true;
  head.b = Tensor::zeros({num_classes});
  head.b->requires_grad = true;
  return head;
}

TensorPtr classify_cls(Tape& tape, const ModelInput& final_state, const ClassificationHead& head) {
  if (!final_state.tokens || final_state.tokens->shape[0] == 0)
    throw ShapeError("classify_cls needs a token block with a CLS row");
  auto cls = tape.slice_rows(final_state.tokens, 0, 1);
  return tape.add_row_vector(tape.matmul(cls, head.w), head.b);
}

std::size_t argmax_class(const TensorPtr& logits) {
  if (logits->size() == 0) throw ShapeError("argmax over empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits->size(); ++i)
    if (logits->values[i] > logits->values[best]) best = i;
  return best;
}

}  // namespace gpc
