#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gpc/errors.hpp"

namespace gpc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class ActivationKind { kIdentity, kRelu, kTanh };

ActivationKind activation_kind_from_string(const std::string& name);
const char* to_string(ActivationKind kind);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major f64 tensor. Values are written once by whatever produces the
// tensor; the grad buffer stays empty until backward touches it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static TensorPtr from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr full(Shape shape, double value, bool requires_grad = false);
  static TensorPtr identity(std::size_t n, bool requires_grad = false);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void drop_grad() { grad.clear(); }
  // Reads as zero when backward never reached this tensor.
  double grad_or_zero(std::size_t i) const { return grad.empty() ? 0.0 : grad[i]; }

  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  bool leaf = true;  // false once produced by a Tape op
  std::vector<double> grad;
};

double l2_norm(const std::vector<double>& v);
bool all_finite(const std::vector<double>& v);

// Reverse-mode tape. Ops compute eagerly, append one record each, and the
// append order keeps the record list topologically sorted. A tape belongs to
// one thread of execution.
class Tape {
 public:
  struct Record {
    std::vector<TensorPtr> inputs;
    TensorPtr output;
    std::function<void()> pull;  // accumulates output grad into input grads
  };

  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr add_row_vector(const TensorPtr& x, const TensorPtr& v);
  TensorPtr scale(const TensorPtr& a, double c);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr transpose(const TensorPtr& a);
  TensorPtr rows(const TensorPtr& table, const std::vector<std::size_t>& ids);
  TensorPtr slice_rows(const TensorPtr& x, std::size_t r0, std::size_t r1);
  TensorPtr slice_cols(const TensorPtr& x, std::size_t c0, std::size_t c1);
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
  TensorPtr softmax_rows(const TensorPtr& x);
  TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias, double eps);
  TensorPtr activation(const TensorPtr& x, ActivationKind kind);
  TensorPtr sum(const TensorPtr& x);
  TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<std::size_t>& labels);

  // Extension point: forward values supplied by the caller along with the rule
  // that pushes out.grad into the inputs.
  TensorPtr custom(std::vector<TensorPtr> inputs, Shape shape, std::vector<double> values,
                   std::function<void(Tensor& out, const std::vector<TensorPtr>& inputs)> backward);

  // Seeds loss grad with 1 and replays records in reverse. Every requires_grad
  // tensor reachable from loss gets its grad accumulated; unreachable grads
  // are left untouched.
  void backward(const TensorPtr& loss);

  void clear() { records_.clear(); }
  std::size_t num_records() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  // Gradients flow into trainable leaves and through every intermediate.
  static bool wants_grad(const TensorPtr& t) { return t->requires_grad || !t->leaf; }

 private:
  TensorPtr make_output(Shape shape, std::vector<double> values);
  void push(std::vector<TensorPtr> inputs, TensorPtr output, std::function<void()> pull);

  std::vector<Record> records_;
};

}  // namespace gpc
