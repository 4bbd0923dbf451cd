#pragma once

#include <string>
#include <vector>

#include "gpc/config.hpp"
#include "gpc/model.hpp"
#include "gpc/report.hpp"
#include "gpc/training.hpp"

namespace gpc {

struct MetricsRow {
  std::string run_id;
  std::size_t step = 0;
  double loss = 0.0;
  double dev_acc = 0.0;
  std::vector<double> grad_norms;  // one per layer
  long long ms = 0;
};

struct RunSummary {
  std::string run_id;
  UpdateRule rule = UpdateRule::kVanilla;
  std::size_t prompt_len = 0;
  // Mean loss over the whole train split before the first / after the last
  // update; per-step mini-batch losses live in the metrics rows.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double dev_accuracy = 0.0;
  double majority_baseline = 0.0;
  std::size_t trainable_params = 0;
  std::size_t steps = 0;
};

struct RunResult {
  RunSummary summary;
  std::vector<MetricsRow> metrics;
};

std::string metrics_csv_header(std::size_t num_layers);
std::string metrics_csv_row(const MetricsRow& row);
nlohmann::json summary_to_json(const RunSummary& summary);

struct PretrainResult {
  Backbone backbone;  // frozen
  // Whole-train-split mean losses, as in RunSummary.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double source_dev_accuracy = 0.0;
  double majority_baseline = 0.0;
};

// Trains every backbone parameter plus a throwaway head on the source task,
// then freezes. The returned backbone has zero trainable parameters.
PretrainResult pretrain_backbone(const BackboneConfig& config, const TaskSpec& source,
                                 const OptimizerConfig& optimizer, std::size_t steps,
                                 std::size_t batch_size, const SeedConfig& seeds);

// The full pipeline for one run: resolve a frozen backbone (shared > file >
// inline pretrain > random), build prompt/rule/head, train, evaluate, and
// write metrics.csv + summary.json + config.json + tuned.bin under
// config.out_dir. shared, when given, must already be frozen.
RunResult run_experiment(const ExperimentConfig& config, const Backbone* shared = nullptr);

// Resolution step of run_experiment, exposed so sweeps/matrices can share one
// backbone across runs.
Backbone resolve_backbone(const ExperimentConfig& config);

struct SweepEntry {
  std::size_t prompt_len = 0;
  RunSummary summary;
  bool best = false;  // highest dev accuracy; first wins ties
};

std::vector<SweepEntry> sweep_prompt_lengths(const ExperimentConfig& base,
                                             const std::vector<std::size_t>& lengths = {16, 32,
                                                                                        64});

struct MatrixCell {
  bool ok = false;
  RunSummary summary;
  std::string error;
};

struct MatrixResult {
  ReportTable table;  // rows = variants, cols = tasks, cells = dev acc %
  std::vector<std::vector<MatrixCell>> cells;
};

// Every (variant, task) combination on one shared frozen backbone. A failed
// cell is flagged and the table still renders.
MatrixResult run_variant_matrix(const ExperimentConfig& base, const std::vector<TaskSpec>& tasks,
                                const std::vector<std::string>& task_labels,
                                const std::vector<UpdateRule>& variants);

}  // namespace gpc
