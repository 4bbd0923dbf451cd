#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "gpc/backbone.hpp"
#include "gpc/data.hpp"
#include "gpc/training.hpp"

namespace gpc {

struct SeedConfig {
  std::uint64_t init = 1;
  std::uint64_t data = 2;
  std::uint64_t shuffle = 3;
};

struct PretrainSection {
  TaskSpec task;
  std::size_t steps = 300;
  std::size_t batch_size = 16;
};

// Fully determines a run: equal configs must give byte-equal metrics.
struct ExperimentConfig {
  BackboneConfig backbone;
  UpdateRule rule = UpdateRule::kGpc;
  ActivationKind theta = ActivationKind::kTanh;
  std::size_t prompt_len = 16;
  TaskSpec task;
  SeedConfig seeds;
  std::size_t steps = 500;
  std::size_t batch_size = 16;
  std::size_t eval_interval = 50;
  OptimizerConfig optimizer;
  std::string out_dir = "runs";
  std::string backbone_path;                 // load a serialized frozen backbone
  std::optional<PretrainSection> pretrain;   // or pretrain one inline
  bool wallclock = false;  // real ms in metrics; default 0 keeps outputs byte-stable

  void validate() const;  // throws ConfigError listing every problem
  std::string run_id() const;
};

// Strict: unknown keys anywhere are rejected; all complaints are collected
// into one ConfigError.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

}  // namespace gpc
