#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gpc/backbone.hpp"
#include "gpc/tensor.hpp"

namespace gpc {

// File format: one line of JSON ({"format","meta","tensors":[{name,shape}..]})
// then '\n' then the tensors' values as little-endian 64-bit floats in listing
// order.
inline constexpr const char* kTensorFormatTag = "gpclab-tensors-v1";

struct TensorFile {
  nlohmann::json meta;
  std::vector<std::pair<std::string, TensorPtr>> tensors;

  // Throws DataError when absent.
  TensorPtr find(const std::string& name) const;
};

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, TensorPtr>>& tensors,
                  const nlohmann::json& meta = nlohmann::json::object());
TensorFile load_tensors(const std::string& path);

void save_backbone(const std::string& path, const Backbone& backbone);
// Loaded parameters come back frozen (requires_grad = false).
Backbone load_backbone(const std::string& path);

}  // namespace gpc
