#include "gpc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gpc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

ActivationKind activation_kind_from_string(const std::string& name) {
  if (name == "identity") return ActivationKind::kIdentity;
  if (name == "relu") return ActivationKind::kRelu;
  if (name == "tanh") return ActivationKind::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected identity|relu|tanh)");
}

const char* to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kIdentity: return "identity";
    case ActivationKind::kRelu: return "relu";
    case ActivationKind::kTanh: return "tanh";
  }
  return "?";
}

Tensor::Tensor(Shape shape_in, std::vector<double> values_in, bool req)
    : shape(std::move(shape_in)), values(std::move(values_in)), requires_grad(req) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
}

TensorPtr Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return from(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return from(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v), requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor " + shape_str(shape));
  return shape[1];
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape) + " differ");
  }
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

TensorPtr Tape::make_output(Shape shape, std::vector<double> values) {
  auto out = Tensor::from(std::move(shape), std::move(values));
  out->leaf = false;
  return out;
}

void Tape::push(std::vector<TensorPtr> inputs, TensorPtr output, std::function<void()> pull) {
  records_.push_back({std::move(inputs), std::move(output), std::move(pull)});
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "add");
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + b->values[i];
  auto out = make_output(a->shape, std::move(v));
  push({a, b}, out, [a, b, out] {
    if (wants_grad(a)) {
      a->ensure_grad();
      accumulate(a->grad, out->grad);
    }
    if (wants_grad(b)) {
      b->ensure_grad();
      accumulate(b->grad, out->grad);
    }
  });
  return out;
}

TensorPtr Tape::add_row_vector(const TensorPtr& x, const TensorPtr& v) {
  if (x->rank() != 2 || v->rank() != 1 || v->shape[0] != x->cols()) {
    throw ShapeError("add_row_vector: " + shape_str(x->shape) + " + " + shape_str(v->shape));
  }
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out_v(x->size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out_v[i * c + j] = x->values[i * c + j] + v->values[j];
  auto out = make_output(x->shape, std::move(out_v));
  push({x, v}, out, [x, v, out, r, c] {
    if (wants_grad(x)) {
      x->ensure_grad();
      accumulate(x->grad, out->grad);
    }
    if (wants_grad(v)) {
      v->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v->grad[j] += out->grad[i * c + j];
    }
  });
  return out;
}

TensorPtr Tape::scale(const TensorPtr& a, double cst) {
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = cst * a->values[i];
  auto out = make_output(a->shape, std::move(v));
  push({a}, out, [a, out, cst] {
    if (!wants_grad(a)) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += cst * out->grad[i];
  });
  return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * b->values[i];
  auto out = make_output(a->shape, std::move(v));
  push({a, b}, out, [a, b, out] {
    if (wants_grad(a)) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->values[i];
    }
    if (wants_grad(b)) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->values[i];
    }
  });
  return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->rows()) {
    throw ShapeError("matmul: " + shape_str(a->shape) + " x " + shape_str(b->shape));
  }
  const std::size_t r = a->rows(), k = a->cols(), c = b->cols();
  std::vector<double> v(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a->values[i * k + t] * b->values[t * c + j];
      v[i * c + j] = s;
    }
  auto out = make_output({r, c}, std::move(v));
  push({a, b}, out, [a, b, out, r, k, c] {
    // dA = G B^T, dB = A^T G
    if (wants_grad(a)) {
      a->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += out->grad[i * c + j] * b->values[t * c + j];
          a->grad[i * k + t] += s;
        }
    }
    if (wants_grad(b)) {
      b->ensure_grad();
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < r; ++i) s += a->values[i * k + t] * out->grad[i * c + j];
          b->grad[t * c + j] += s;
        }
    }
  });
  return out;
}

TensorPtr Tape::transpose(const TensorPtr& a) {
  if (a->rank() != 2) throw ShapeError("transpose: " + shape_str(a->shape));
  const std::size_t r = a->rows(), c = a->cols();
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = a->values[i * c + j];
  auto out = make_output({c, r}, std::move(v));
  push({a}, out, [a, out, r, c] {
    if (!wants_grad(a)) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) a->grad[i * c + j] += out->grad[j * r + i];
  });
  return out;
}

TensorPtr Tape::rows(const TensorPtr& table, const std::vector<std::size_t>& ids) {
  if (table->rank() != 2) throw ShapeError("rows: table " + shape_str(table->shape));
  const std::size_t n = table->rows(), d = table->cols();
  for (std::size_t id : ids) {
    if (id >= n) {
      throw ShapeError("rows: index " + std::to_string(id) + " out of table " +
                       shape_str(table->shape));
    }
  }
  std::vector<double> v(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table->values.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                v.begin() + static_cast<std::ptrdiff_t>(i * d));
  auto out = make_output({ids.size(), d}, std::move(v));
  push({table}, out, [table, out, ids, d] {
    if (!wants_grad(table)) return;
    table->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) table->grad[ids[i] * d + j] += out->grad[i * d + j];
  });
  return out;
}

TensorPtr Tape::slice_rows(const TensorPtr& x, std::size_t r0, std::size_t r1) {
  if (x->rank() != 2 || r0 > r1 || r1 > x->rows()) {
    throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) + ") of " +
                     shape_str(x->shape));
  }
  const std::size_t c = x->cols();
  std::vector<double> v(x->values.begin() + static_cast<std::ptrdiff_t>(r0 * c),
                        x->values.begin() + static_cast<std::ptrdiff_t>(r1 * c));
  auto out = make_output({r1 - r0, c}, std::move(v));
  push({x}, out, [x, out, r0, c] {
    if (!wants_grad(x)) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[r0 * c + i] += out->grad[i];
  });
  return out;
}

TensorPtr Tape::slice_cols(const TensorPtr& x, std::size_t c0, std::size_t c1) {
  if (x->rank() != 2 || c0 > c1 || c1 > x->cols()) {
    throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                     shape_str(x->shape));
  }
  const std::size_t r = x->rows(), c = x->cols(), w = c1 - c0;
  std::vector<double> v(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) v[i * w + j] = x->values[i * c + c0 + j];
  auto out = make_output({r, w}, std::move(v));
  push({x}, out, [x, out, r, c, c0, w] {
    if (!wants_grad(x)) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) x->grad[i * c + c0 + j] += out->grad[i * w + j];
  });
  return out;
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t c = parts[0]->cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p->rank() != 2 || p->cols() != c) {
      throw ShapeError("concat_rows: column mismatch at " + shape_str(p->shape));
    }
    r += p->rows();
  }
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& p : parts) v.insert(v.end(), p->values.begin(), p->values.end());
  auto out = make_output({r, c}, std::move(v));
  push(parts, out, [parts, out] {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (wants_grad(p)) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += out->grad[offset + i];
      }
      offset += p->size();
    }
  });
  return out;
}

TensorPtr Tape::concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t r = parts[0]->rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p->rank() != 2 || p->rows() != r) {
      throw ShapeError("concat_cols: row mismatch at " + shape_str(p->shape));
    }
    c += p->cols();
  }
  std::vector<double> v(r * c);
  std::size_t col0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p->cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) v[i * c + col0 + j] = p->values[i * w + j];
    col0 += w;
  }
  auto out = make_output({r, c}, std::move(v));
  push(parts, out, [parts, out, r, c] {
    std::size_t col0 = 0;
    for (const auto& p : parts) {
      const std::size_t w = p->cols();
      if (wants_grad(p)) {
        p->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) p->grad[i * w + j] += out->grad[i * c + col0 + j];
      }
      col0 += w;
    }
  });
  return out;
}

TensorPtr Tape::softmax_rows(const TensorPtr& x) {
  if (x->rank() != 2) throw ShapeError("softmax_rows: " + shape_str(x->shape));
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> v(x->size());
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x->values[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x->values[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      v[i * c + j] = std::exp(x->values[i * c + j] - mx);
      z += v[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] /= z;
  }
  auto out = make_output(x->shape, std::move(v));
  push({x}, out, [x, out, r, c] {
    if (!wants_grad(x)) return;
    x->ensure_grad();
    // ds_j = s_j (g_j - sum_k g_k s_k), per row
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += out->grad[i * c + j] * out->values[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        x->grad[i * c + j] += out->values[i * c + j] * (out->grad[i * c + j] - dot);
    }
  });
  return out;
}

TensorPtr Tape::layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                           double eps) {
  if (x->rank() != 2) throw ShapeError("layer_norm: " + shape_str(x->shape));
  const std::size_t r = x->rows(), d = x->cols();
  if (d < 2) throw ShapeError("layer_norm: needs width >= 2, got " + shape_str(x->shape));
  if (eps <= 0.0) throw ShapeError("layer_norm: eps must be > 0");
  if (gain->rank() != 1 || gain->shape[0] != d || bias->rank() != 1 || bias->shape[0] != d) {
    throw ShapeError("layer_norm: gain " + shape_str(gain->shape) + " / bias " +
                     shape_str(bias->shape) + " for input " + shape_str(x->shape));
  }
  // Standardized rows and 1/sigma are cached for backward.
  auto xhat = std::make_shared<std::vector<double>>(x->size());
  auto inv_sigma = std::make_shared<std::vector<double>>(r);
  std::vector<double> v(x->size());
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x->values[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = x->values[i * d + j] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(d);  // population variance
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x->values[i * d + j] - mean) * is;
      (*xhat)[i * d + j] = xh;
      v[i * d + j] = gain->values[j] * xh + bias->values[j];
    }
  }
  auto out = make_output(x->shape, std::move(v));
  push({x, gain, bias}, out, [x, gain, bias, out, xhat, inv_sigma, r, d] {
    for (std::size_t i = 0; i < r; ++i) {
      if (wants_grad(x)) {
        x->ensure_grad();
        // dxh_j = g_j * gain_j; dx = (dxh - mean(dxh) - xh * mean(dxh .* xh)) / sigma
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = out->grad[i * d + j] * gain->values[j];
          m1 += dxh;
          m2 += dxh * (*xhat)[i * d + j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = out->grad[i * d + j] * gain->values[j];
          x->grad[i * d + j] += ((dxh - m1) - (*xhat)[i * d + j] * m2) * (*inv_sigma)[i];
        }
      }
      if (wants_grad(gain)) {
        gain->ensure_grad();
        for (std::size_t j = 0; j < d; ++j)
          gain->grad[j] += out->grad[i * d + j] * (*xhat)[i * d + j];
      }
      if (wants_grad(bias)) {
        bias->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) bias->grad[j] += out->grad[i * d + j];
      }
    }
  });
  return out;
}

TensorPtr Tape::activation(const TensorPtr& x, ActivationKind kind) {
  std::vector<double> v(x->size());
  switch (kind) {
    case ActivationKind::kIdentity:
      v = x->values;
      break;
    case ActivationKind::kRelu:
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
      break;
    case ActivationKind::kTanh:
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(x->values[i]);
      break;
  }
  auto out = make_output(x->shape, std::move(v));
  push({x}, out, [x, out, kind] {
    if (!wants_grad(x)) return;
    x->ensure_grad();
    switch (kind) {
      case ActivationKind::kIdentity:
        accumulate(x->grad, out->grad);
        break;
      case ActivationKind::kRelu:
        for (std::size_t i = 0; i < x->grad.size(); ++i)
          x->grad[i] += x->values[i] > 0.0 ? out->grad[i] : 0.0;
        break;
      case ActivationKind::kTanh:
        for (std::size_t i = 0; i < x->grad.size(); ++i) {
          const double y = out->values[i];
          x->grad[i] += out->grad[i] * (1.0 - y * y);
        }
        break;
    }
  });
  return out;
}

TensorPtr Tape::sum(const TensorPtr& x) {
  double s = 0.0;
  for (double v : x->values) s += v;
  auto out = make_output({1}, {s});
  push({x}, out, [x, out] {
    if (!wants_grad(x)) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0];
  });
  return out;
}

TensorPtr Tape::cross_entropy(const TensorPtr& logits, const std::vector<std::size_t>& labels) {
  if (logits->rank() != 2) throw ShapeError("cross_entropy: logits " + shape_str(logits->shape));
  const std::size_t b = logits->rows(), nc = logits->cols();
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  for (std::size_t label : labels) {
    if (label >= nc) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " outside [0," + std::to_string(nc) + ")");
    }
  }
  // Cache the softmax for backward.
  auto probs = std::make_shared<std::vector<double>>(logits->size());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = logits->values[i * nc];
    for (std::size_t j = 1; j < nc; ++j) mx = std::max(mx, logits->values[i * nc + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < nc; ++j) z += std::exp(logits->values[i * nc + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < nc; ++j)
      (*probs)[i * nc + j] = std::exp(logits->values[i * nc + j] - lse);
    loss += lse - logits->values[i * nc + labels[i]];
  }
  loss /= static_cast<double>(b);
  auto out = make_output({1}, {loss});
  push({logits}, out, [logits, out, probs, labels, b, nc] {
    if (!wants_grad(logits)) return;
    logits->ensure_grad();
    const double g = out->grad[0] / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < nc; ++j) {
        const double ind = (j == labels[i]) ? 1.0 : 0.0;
        logits->grad[i * nc + j] += g * ((*probs)[i * nc + j] - ind);
      }
  });
  return out;
}

TensorPtr Tape::custom(std::vector<TensorPtr> inputs, Shape shape, std::vector<double> values,
                       std::function<void(Tensor&, const std::vector<TensorPtr>&)> backward_fn) {
  auto out = make_output(std::move(shape), std::move(values));
  auto ins = std::make_shared<std::vector<TensorPtr>>(std::move(inputs));
  push(*ins, out, [out, ins, backward_fn] { backward_fn(*out, *ins); });
  return out;
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss->shape));
  }
  if (loss->leaf) {
    throw ShapeError("backward: loss was not produced by recorded operations");
  }
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->has_grad()) it->pull();
  }
}

}  // namespace gpc
