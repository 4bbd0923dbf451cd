#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gpc/rng.hpp"
#include "gpc/tensor.hpp"

namespace gpc::testutil {

inline TensorPtr random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                               bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Independent triple-loop product, no shared code with Tape::matmul.
inline std::vector<double> matmul_oracle(const std::vector<double>& a, std::size_t r,
                                         std::size_t k, const std::vector<double>& b,
                                         std::size_t c) {
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i * c + j] += a[i * k + t] * b[t * c + j];
  return out;
}

struct FdResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central finite differences against the tape's analytic gradients.
// build_loss must be a pure function of the parameter values.
inline FdResult max_fd_rel_error(const std::vector<std::pair<std::string, TensorPtr>>& params,
                                 const std::function<TensorPtr(Tape&)>& build_loss,
                                 double h = 1e-4, double denom_floor = 1e-3) {
  for (auto& [name, p] : params) p->drop_grad();
  Tape tape;
  auto loss = build_loss(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    std::vector<double> g(p->size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = p->grad_or_zero(i);
    analytic.push_back(std::move(g));
  }

  FdResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].second;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double keep = p->values[i];
      p->values[i] = keep + h;
      Tape tp;
      const double lp = build_loss(tp)->values[0];
      p->values[i] = keep - h;
      Tape tm;
      const double lm = build_loss(tm)->values[0];
      p->values[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      const double g = analytic[pi][i];
      const double err = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), denom_floor});
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = params[pi].first;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace gpc::testutil
