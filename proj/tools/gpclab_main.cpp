#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "gpc/config.hpp"
#include "gpc/harness.hpp"
#include "gpc/serialize.hpp"

namespace {

using namespace gpc;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> rule;
  std::optional<std::size_t> prompt_len;
  std::optional<std::string> theta;
  std::optional<std::string> out_dir;
  bool wallclock = false;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "override seeds.init");
  cmd->add_option("--rule", o.rule, "override the update rule tag");
  cmd->add_option("--prompt-len", o.prompt_len, "override the prompt length");
  cmd->add_option("--theta", o.theta, "override the cell activation (identity|relu|tanh)");
  cmd->add_option("--out", o.out_dir, "override the output directory");
  cmd->add_flag("--wallclock", o.wallclock, "record real per-step ms in metrics");
}

ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  ExperimentConfig config = load_experiment_config(path);
  if (o.seed) config.seeds.init = *o.seed;
  if (o.rule) config.rule = update_rule_from_string(*o.rule);
  if (o.prompt_len) config.prompt_len = *o.prompt_len;
  if (o.theta) config.theta = activation_kind_from_string(*o.theta);
  if (o.out_dir) config.out_dir = *o.out_dir;
  if (o.wallclock) config.wallclock = true;
  config.validate();
  return config;
}

void print_summary(const RunSummary& s) {
  std::cout << summary_to_json(s).dump(2) << '\n';
}

int cmd_pretrain(const std::string& config_path, const Overrides& o) {
  ExperimentConfig config = load_with_overrides(config_path, o);
  if (!config.pretrain)
    throw ConfigError("pretrain subcommand needs a \"pretrain\" section in the config");
  auto result = pretrain_backbone(config.backbone, config.pretrain->task, config.optimizer,
                                  config.pretrain->steps, config.pretrain->batch_size,
                                  config.seeds);
  std::filesystem::create_directories(config.out_dir);
  const std::string path = config.out_dir + "/backbone.bin";
  save_backbone(path, result.backbone);
  std::size_t frozen_scalars = 0;
  for (const auto& p : result.backbone.params()) frozen_scalars += p->values.size();
  nlohmann::json out = {{"backbone_path", path},
                        {"initial_loss", result.initial_loss},
                        {"final_loss", result.final_loss},
                        {"source_dev_accuracy", result.source_dev_accuracy},
                        {"majority_baseline", result.majority_baseline},
                        {"frozen_params", frozen_scalars}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_tune(const std::string& config_path, const Overrides& o) {
  auto result = run_experiment(load_with_overrides(config_path, o));
  print_summary(result.summary);
  return 0;
}

int cmd_sweep(const std::string& config_path, const Overrides& o) {
  ExperimentConfig config = load_with_overrides(config_path, o);
  auto entries = sweep_prompt_lengths(config);
  ReportTable table;
  table.corner = "prompt_len";
  table.col_labels = {"dev_acc", "params"};
  table.percent_format = false;
  table.mark_max = false;
  for (const auto& e : entries) {
    table.row_labels.push_back("m=" + std::to_string(e.prompt_len) + (e.best ? " *" : ""));
    table.cells.push_back({e.summary.dev_accuracy * 100.0,
                           static_cast<double>(e.summary.trainable_params)});
  }
  std::cout << render_text_table(table);
  for (const auto& e : entries)
    if (e.best)
      std::cout << "best prompt length: " << e.prompt_len << " (dev accuracy "
                << e.summary.dev_accuracy * 100.0 << "%)\n";
  return 0;
}

int cmd_matrix(const std::string& config_path, const Overrides& o,
               const std::string& variants_csv) {
  ExperimentConfig config = load_with_overrides(config_path, o);
  std::vector<UpdateRule> variants;
  std::stringstream ss(variants_csv);
  std::string name;
  while (std::getline(ss, name, ','))
    if (!name.empty()) variants.push_back(update_rule_from_string(name));
  auto result = run_variant_matrix(config, {config.task}, {to_string(config.task.kind)},
                                   variants);
  std::cout << render_text_table(result.table);
  for (std::size_t r = 0; r < result.cells.size(); ++r)
    for (std::size_t c = 0; c < result.cells[r].size(); ++c)
      if (!result.cells[r][c].ok)
        std::cout << "cell " << result.table.row_labels[r] << " x "
                  << result.table.col_labels[c] << " failed: " << result.cells[r][c].error
                  << '\n';
  std::cout << "matrix written to " << config.out_dir << "/matrix.{txt,csv}\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_path, const Overrides& o) {
  ExperimentConfig config = load_with_overrides(config_path, o);
  Backbone backbone = resolve_backbone(config);
  Rng init_rng(derive_seed(config.seeds.init, 0x31));
  PromptModel model = assemble_model(std::move(backbone), config.rule, config.theta,
                                     config.prompt_len, config.task.num_classes, init_rng);
  TaskSpec task = config.task;
  task.seed = derive_seed(config.seeds.data, task.seed);
  auto split = generate_synthetic_task(task);
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < std::min(config.batch_size, split.train.size()); ++i)
    batch.push_back(i);
  auto report = grad_check(model, split.train, batch);
  nlohmann::json out = {{"rule", to_string(config.rule)},
                        {"checked_scalars", report.checked_scalars},
                        {"max_rel_error", report.max_rel_error},
                        {"worst_param", report.worst_param},
                        {"worst_index", report.worst_index},
                        {"passed", report.passed}};
  if (!report.non_finite.empty()) out["non_finite"] = report.non_finite;
  std::cout << out.dump(2) << '\n';
  if (!report.passed) throw NumericError("gradient check failed");
  return 0;
}

int cmd_count_params(const std::string& config_path, const Overrides& o) {
  ExperimentConfig config = load_with_overrides(config_path, o);
  Rng rng(derive_seed(config.seeds.init, 0x32));
  auto backbone = init_backbone(config.backbone, rng);
  const std::size_t backbone_params = count_trainable_params(backbone);
  freeze_all(backbone);
  const auto& bc = config.backbone;
  PromptModel model = assemble_model(std::move(backbone), config.rule, config.theta,
                                     config.prompt_len, config.task.num_classes, rng);
  const std::size_t enumerated = count_trainable_params(model);
  const std::size_t rule_params =
      rule_param_count(config.rule, bc.hidden_dim, bc.num_layers);
  const std::size_t expected = config.prompt_len * bc.hidden_dim + rule_params +
                               bc.hidden_dim * config.task.num_classes + config.task.num_classes;
  nlohmann::json out = {{"rule", to_string(config.rule)},
                        {"prompt", config.prompt_len * bc.hidden_dim},
                        {"rule_weights", rule_params},
                        {"head", bc.hidden_dim * config.task.num_classes + config.task.num_classes},
                        {"tuned_total", enumerated},
                        {"frozen_backbone", backbone_params}};
  std::cout << out.dump(2) << '\n';
  if (enumerated != expected)
    throw NumericError("enumerated trainable count disagrees with the accounting identity");
  return 0;
}

int cmd_report(const std::string& input_path, bool as_csv) {
  std::ifstream in(input_path);
  if (!in) throw DataError("cannot open report input '" + input_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report input '" + input_path + "' is not valid JSON: " + e.what());
  }
  ReportTable table;
  try {
    table.corner = j.value("corner", std::string("strategy"));
    table.row_labels = j.at("rows").get<std::vector<std::string>>();
    table.col_labels = j.at("cols").get<std::vector<std::string>>();
    table.cells = j.at("cells").get<std::vector<std::vector<double>>>();
    if (j.contains("valid")) table.valid = j.at("valid").get<std::vector<std::vector<bool>>>();
    table.percent_format = j.value("percent", true);
    table.mark_max = j.value("mark_max", true);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report input '" + input_path + "' is malformed: " + e.what());
  }
  std::cout << (as_csv ? render_csv_table(table) : render_text_table(table));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpclab: desk-scale prompt tuning with inter-layer prompt update rules"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::string variants =
      "vanilla,gpc,direct-add,shared-remember,per-layer-remember";
  std::string report_input;
  bool report_csv = false;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    add_override_flags(cmd, overrides);
  };
  add_config(app.add_subcommand("pretrain", "train and freeze a backbone on the source task"));
  add_config(app.add_subcommand("tune", "prompt-tune on the target task"));
  add_config(app.add_subcommand("sweep", "tune at prompt lengths 16/32/64 and mark the best"));
  auto* matrix = app.add_subcommand("matrix", "run every update-rule variant on the task");
  add_config(matrix);
  matrix->add_option("--variants", variants, "comma-separated update rules");
  add_config(app.add_subcommand("gradcheck", "finite-difference check of every tuned gradient"));
  add_config(app.add_subcommand("count-params", "trainable parameter accounting"));
  auto* report = app.add_subcommand("report", "render a results table (text or CSV)");
  report->add_option("input", report_input, "JSON table description")->required();
  report->add_flag("--csv", report_csv, "emit CSV instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("pretrain")) return cmd_pretrain(config_path, overrides);
    if (app.got_subcommand("tune")) return cmd_tune(config_path, overrides);
    if (app.got_subcommand("sweep")) return cmd_sweep(config_path, overrides);
    if (app.got_subcommand("matrix")) return cmd_matrix(config_path, overrides, variants);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(config_path, overrides);
    if (app.got_subcommand("count-params")) return cmd_count_params(config_path, overrides);
    if (app.got_subcommand("report")) return cmd_report(report_input, report_csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::out_of_range& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
