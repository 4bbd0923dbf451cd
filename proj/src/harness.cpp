#include "gpc/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gpc/serialize.hpp"

namespace gpc {
namespace {

namespace fs = std::filesystem;

// Stream tags keeping the independent RNG consumers apart.
constexpr std::uint64_t kPretrainInitStream = 0x11;
constexpr std::uint64_t kPretrainShuffleStream = 0x12;
constexpr std::uint64_t kTuneInitStream = 0x21;
constexpr std::uint64_t kTuneShuffleStream = 0x22;
constexpr std::uint64_t kRandomBackboneStream = 0x23;

// Fixed-size shuffled mini-batches; reshuffles at each epoch boundary and
// drops ragged remainders.
class Batcher {
 public:
  Batcher(std::size_t n, std::size_t batch_size, Rng rng)
      : rng_(rng), batch_(std::min(batch_size, n)), pos_(n) {
    if (n == 0) throw DataError("cannot batch an empty dataset");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  std::vector<std::size_t> next() {
    if (pos_ + batch_ > order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

 private:
  Rng rng_;
  std::size_t batch_;
  std::size_t pos_;
  std::vector<std::size_t> order_;
};

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

TaskSpec fold_data_seed(TaskSpec spec, std::uint64_t data_seed) {
  spec.seed = derive_seed(data_seed, spec.seed);
  return spec;
}

SplitDataset obtain_datasets(const TaskSpec& task, std::uint64_t data_seed,
                             std::size_t backbone_vocab) {
  if (task.kind == TaskKind::kFile) {
    SplitDataset split;
    split.train = load_dataset(task.path + ".train", backbone_vocab, task.num_classes);
    split.dev = load_dataset(task.path + ".dev", backbone_vocab, task.num_classes);
    if (split.train.empty()) throw DataError("train split '" + task.path + ".train' is empty");
    if (split.dev.empty()) throw DataError("dev split '" + task.path + ".dev' is empty");
    return split;
  }
  return generate_synthetic_task(fold_data_seed(task, data_seed));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace

std::string metrics_csv_header(std::size_t num_layers) {
  std::ostringstream out;
  out << "run_id,step,loss,dev_acc";
  for (std::size_t t = 0; t < num_layers; ++t) out << ",grad_norm_" << t;
  out << ",ms";
  return out.str();
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out << row.run_id << ',' << row.step << ',' << format_double(row.loss) << ','
      << format_double(row.dev_acc);
  for (double n : row.grad_norms) out << ',' << format_double(n);
  out << ',' << row.ms;
  return out.str();
}

nlohmann::json summary_to_json(const RunSummary& s) {
  return {{"run_id", s.run_id},
          {"rule", to_string(s.rule)},
          {"prompt_len", s.prompt_len},
          {"initial_loss", s.initial_loss},
          {"final_loss", s.final_loss},
          {"dev_accuracy", s.dev_accuracy},
          {"majority_baseline", s.majority_baseline},
          {"trainable_params", s.trainable_params},
          {"steps", s.steps}};
}

PretrainResult pretrain_backbone(const BackboneConfig& config, const TaskSpec& source,
                                 const OptimizerConfig& optimizer, std::size_t steps,
                                 std::size_t batch_size, const SeedConfig& seeds) {
  source.validate();
  if (source.kind == TaskKind::kFile)
    throw ConfigError("pretraining expects a synthetic source task");
  if (steps == 0 || batch_size == 0) throw ConfigError("pretraining needs steps, batch_size >= 1");
  if (config.max_seq_len < source.seq_len + 1)
    throw ConfigError("backbone max_seq_len too small for the pretraining task");

  Rng init_rng(derive_seed(seeds.init, kPretrainInitStream));
  PromptModel model;
  model.backbone = init_backbone(config, init_rng);
  model.prompt = init_prompt(0, config.hidden_dim, init_rng);
  model.head = init_head(config.hidden_dim, source.num_classes, init_rng);

  auto split = generate_synthetic_task(fold_data_seed(source, seeds.data));

  std::vector<TensorPtr> params = model.backbone.params();
  for (const auto& p : model.head.trainable()) params.push_back(p);
  Adam adam(std::move(params), optimizer);
  Batcher batcher(split.train.size(), batch_size,
                  Rng(derive_seed(seeds.shuffle, kPretrainShuffleStream)));

  std::vector<std::size_t> all_train(split.train.size());
  std::iota(all_train.begin(), all_train.end(), std::size_t{0});

  PretrainResult result;
  result.initial_loss = dataset_mean_loss(model, split.train, all_train);
  for (std::size_t s = 0; s < steps; ++s) train_step(model, split.train, batcher.next(), adam);
  result.final_loss = dataset_mean_loss(model, split.train, all_train);
  result.source_dev_accuracy = evaluate_accuracy(model, split.dev);
  result.majority_baseline = majority_fraction(split.dev);
  freeze_all(model.backbone);
  result.backbone = std::move(model.backbone);
  return result;
}

Backbone resolve_backbone(const ExperimentConfig& config) {
  if (!config.backbone_path.empty()) return load_backbone(config.backbone_path);
  if (config.pretrain)
    return pretrain_backbone(config.backbone, config.pretrain->task, config.optimizer,
                             config.pretrain->steps, config.pretrain->batch_size, config.seeds)
        .backbone;
  Rng rng(derive_seed(config.seeds.init, kRandomBackboneStream));
  auto backbone = init_backbone(config.backbone, rng);
  freeze_all(backbone);
  return backbone;
}

RunResult run_experiment(const ExperimentConfig& config, const Backbone* shared) {
  config.validate();
  Backbone backbone = shared ? *shared : resolve_backbone(config);
  if (count_trainable_params(backbone) != 0)
    throw ConfigError("run_experiment requires a frozen backbone");

  auto split = obtain_datasets(config.task, config.seeds.data, backbone.config.vocab_size);

  Rng init_rng(derive_seed(config.seeds.init, kTuneInitStream));
  PromptModel model = assemble_model(std::move(backbone), config.rule, config.theta,
                                     config.prompt_len, config.task.num_classes, init_rng);
  Adam adam(model.tuned_params(), config.optimizer);
  Batcher batcher(split.train.size(), config.batch_size,
                  Rng(derive_seed(config.seeds.shuffle, kTuneShuffleStream)));

  fs::create_directories(config.out_dir);
  write_text_file(config.out_dir + "/config.json", experiment_config_to_json(config).dump(2) + "\n");

  std::ofstream metrics(config.out_dir + "/metrics.csv", std::ios::binary);
  if (!metrics) throw DataError("cannot write '" + config.out_dir + "/metrics.csv'");
  const std::size_t num_layers = model.backbone.config.num_layers;
  metrics << metrics_csv_header(num_layers) << '\n';

  RunResult result;
  result.summary.run_id = config.run_id();
  result.summary.rule = config.rule;
  result.summary.prompt_len = config.prompt_len;
  result.summary.steps = config.steps;
  result.summary.majority_baseline = majority_fraction(split.dev);
  result.summary.trainable_params = count_trainable_params(model);

  std::vector<std::size_t> all_train(split.train.size());
  std::iota(all_train.begin(), all_train.end(), std::size_t{0});
  result.summary.initial_loss = dataset_mean_loss(model, split.train, all_train);

  double dev_acc = evaluate_accuracy(model, split.dev);
  using Clock = std::chrono::steady_clock;
  for (std::size_t s = 1; s <= config.steps; ++s) {
    const auto t0 = Clock::now();
    MetricsRow row;
    row.run_id = result.summary.run_id;
    row.step = s;
    row.loss = train_step(model, split.train, batcher.next(), adam, &row.grad_norms);
    if (s % config.eval_interval == 0 || s == config.steps)
      dev_acc = evaluate_accuracy(model, split.dev);
    row.dev_acc = dev_acc;
    row.ms = config.wallclock
                 ? std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count()
                 : 0;
    metrics << metrics_csv_row(row) << '\n';
    result.metrics.push_back(std::move(row));
  }
  metrics.flush();
  if (!metrics) throw DataError("write failed for '" + config.out_dir + "/metrics.csv'");

  result.summary.final_loss = dataset_mean_loss(model, split.train, all_train);
  result.summary.dev_accuracy = dev_acc;
  write_text_file(config.out_dir + "/summary.json",
                  summary_to_json(result.summary).dump(2) + "\n");
  save_tensors(config.out_dir + "/tuned.bin", model.named_tuned_params(),
               {{"kind", "tuned-params"}, {"run_id", result.summary.run_id}});
  return result;
}

std::vector<SweepEntry> sweep_prompt_lengths(const ExperimentConfig& base,
                                             const std::vector<std::size_t>& lengths) {
  base.validate();
  if (lengths.empty()) throw ConfigError("prompt-length sweep needs at least one length");
  Backbone backbone = resolve_backbone(base);
  std::vector<SweepEntry> entries;
  for (std::size_t m : lengths) {
    ExperimentConfig config = base;
    config.prompt_len = m;
    config.out_dir = base.out_dir + "/m" + std::to_string(m);
    config.pretrain.reset();
    config.backbone_path.clear();
    SweepEntry entry;
    entry.prompt_len = m;
    entry.summary = run_experiment(config, &backbone).summary;
    entries.push_back(std::move(entry));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].summary.dev_accuracy > entries[best].summary.dev_accuracy) best = i;
  entries[best].best = true;
  return entries;
}

MatrixResult run_variant_matrix(const ExperimentConfig& base, const std::vector<TaskSpec>& tasks,
                                const std::vector<std::string>& task_labels,
                                const std::vector<UpdateRule>& variants) {
  base.validate();
  if (tasks.empty()) throw ConfigError("variant matrix needs at least one task");
  if (tasks.size() != task_labels.size())
    throw ConfigError("variant matrix needs one label per task");
  if (variants.size() < 2) throw ConfigError("variant matrix needs at least two variants");

  Backbone backbone = resolve_backbone(base);
  MatrixResult result;
  result.table.corner = "strategy";
  result.table.col_labels = task_labels;
  for (UpdateRule rule : variants) result.table.row_labels.push_back(to_string(rule));
  result.table.cells.assign(variants.size(), std::vector<double>(tasks.size(), 0.0));
  result.table.valid.assign(variants.size(), std::vector<bool>(tasks.size(), false));
  result.cells.assign(variants.size(), std::vector<MatrixCell>(tasks.size()));

  for (std::size_t c = 0; c < tasks.size(); ++c) {
    for (std::size_t r = 0; r < variants.size(); ++r) {
      ExperimentConfig config = base;
      config.task = tasks[c];
      config.rule = variants[r];
      config.out_dir =
          base.out_dir + "/cell-" + task_labels[c] + "-" + to_string(variants[r]);
      config.pretrain.reset();
      config.backbone_path.clear();
      MatrixCell& cell = result.cells[r][c];
      try {
        cell.summary = run_experiment(config, &backbone).summary;
        cell.ok = true;
        result.table.cells[r][c] = cell.summary.dev_accuracy * 100.0;
        result.table.valid[r][c] = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  }

  fs::create_directories(base.out_dir);
  write_text_file(base.out_dir + "/matrix.txt", render_text_table(result.table));
  write_text_file(base.out_dir + "/matrix.csv", render_csv_table(result.table));
  return result;
}

}  // namespace gpc
