#include "gpc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gpc {
namespace {

using nlohmann::json;

// Collects complaints instead of failing fast so one pass reports everything.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(&errors) {
    if (!obj_.is_object()) complain("must be a JSON object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key);
  }

  const json* child(const char* key) {
    if (!has(key)) return nullptr;
    return &obj_.at(key);
  }

  void read_size(const char* key, std::size_t& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))
      out = v.get<std::size_t>();
    else
      complain_key(key, "must be a non-negative integer");
  }

  void read_u64(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))
      out = v.get<std::uint64_t>();
    else
      complain_key(key, "must be a non-negative integer");
  }

  void read_double(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_number())
      out = v.get<double>();
    else
      complain_key(key, "must be a number");
  }

  void read_bool(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_boolean())
      out = v.get<bool>();
    else
      complain_key(key, "must be a boolean");
  }

  void read_string(const char* key, std::string& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (v.is_string())
      out = v.get<std::string>();
    else
      complain_key(key, "must be a string");
  }

  template <typename T, typename Parse>
  void read_enum(const char* key, T& out, Parse parse) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_string()) {
      complain_key(key, "must be a string");
      return;
    }
    try {
      out = parse(v.get<std::string>());
    } catch (const ConfigError& e) {
      complain_key(key, e.what());
    }
  }

  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) complain("unknown key '" + key + "'");
  }

  void complain(const std::string& msg) { errors_->push_back(prefix_ + ": " + msg); }
  void complain_key(const char* key, const std::string& msg) {
    errors_->push_back(prefix_ + "." + key + ": " + msg);
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>* errors_;
  std::set<std::string> seen_;
};

void parse_backbone(const json& j, const std::string& prefix, BackboneConfig& out,
                    std::vector<std::string>& errors) {
  Reader r(j, prefix, errors);
  r.read_size("vocab_size", out.vocab_size);
  r.read_size("hidden_dim", out.hidden_dim);
  r.read_size("num_layers", out.num_layers);
  r.read_size("num_heads", out.num_heads);
  r.read_size("ffn_dim", out.ffn_dim);
  r.read_size("max_seq_len", out.max_seq_len);
  r.read_double("layer_norm_eps", out.layer_norm_eps);
  r.read_enum("mlp_activation", out.mlp_activation, activation_kind_from_string);
  r.finish();
}

void parse_task(const json& j, const std::string& prefix, TaskSpec& out,
                std::vector<std::string>& errors) {
  Reader r(j, prefix, errors);
  r.read_enum("kind", out.kind, task_kind_from_string);
  r.read_size("vocab_size", out.vocab_size);
  r.read_size("seq_len", out.seq_len);
  r.read_size("num_classes", out.num_classes);
  r.read_size("train_size", out.train_size);
  r.read_size("dev_size", out.dev_size);
  r.read_u64("seed", out.seed);
  r.read_string("path", out.path);
  r.finish();
}

void parse_optimizer(const json& j, const std::string& prefix, OptimizerConfig& out,
                     std::vector<std::string>& errors) {
  Reader r(j, prefix, errors);
  r.read_double("lr", out.lr);
  r.read_double("beta1", out.beta1);
  r.read_double("beta2", out.beta2);
  r.read_double("eps", out.eps);
  r.read_double("clip_norm", out.clip_norm);
  r.finish();
}

std::vector<std::string> validate_collect(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto guard = [&errors](const char* where, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back(std::string(where) + ": " + e.what());
    }
  };
  guard("backbone", [&] { c.backbone.validate(); });
  guard("task", [&] { c.task.validate(); });
  guard("optimizer", [&] { c.optimizer.validate(); });
  if (c.pretrain) {
    guard("pretrain.task", [&] { c.pretrain->task.validate(); });
    if (c.pretrain->steps == 0) errors.push_back("pretrain.steps: must be >= 1");
    if (c.pretrain->batch_size == 0) errors.push_back("pretrain.batch_size: must be >= 1");
    if (c.pretrain->task.kind == TaskKind::kFile)
      errors.push_back("pretrain.task.kind: pretraining uses synthetic tasks");
  }
  if (c.steps == 0) errors.push_back("steps: must be >= 1");
  if (c.batch_size == 0) errors.push_back("batch_size: must be >= 1");
  if (c.eval_interval == 0) errors.push_back("eval_interval: must be >= 1");
  if (c.out_dir.empty()) errors.push_back("out_dir: must not be empty");
  if (c.backbone.max_seq_len < c.prompt_len + c.task.seq_len + 1 &&
      c.task.kind != TaskKind::kFile)
    errors.push_back("backbone.max_seq_len: too small for prompt_len + seq_len + CLS");
  if (c.task.kind != TaskKind::kFile && c.task.vocab_size > c.backbone.vocab_size)
    errors.push_back("task.vocab_size: exceeds backbone vocab");
  if (c.pretrain && c.pretrain->task.vocab_size > c.backbone.vocab_size)
    errors.push_back("pretrain.task.vocab_size: exceeds backbone vocab");
  if (c.pretrain &&
      c.backbone.max_seq_len < c.pretrain->task.seq_len + 1)
    errors.push_back("backbone.max_seq_len: too small for the pretraining task");
  return errors;
}

[[noreturn]] void throw_joined(const std::vector<std::string>& errors) {
  std::ostringstream out;
  out << "config invalid (" << errors.size() << " problem" << (errors.size() == 1 ? "" : "s")
      << "):";
  for (const auto& e : errors) out << "\n  - " << e;
  throw ConfigError(out.str());
}

}  // namespace

void ExperimentConfig::validate() const {
  auto errors = validate_collect(*this);
  if (!errors.empty()) throw_joined(errors);
}

std::string ExperimentConfig::run_id() const {
  return "tune-" + to_string(rule) + "-m" + std::to_string(prompt_len) + "-seed" +
         std::to_string(seeds.init);
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  Reader r(j, "config", errors);
  if (const json* b = r.child("backbone")) parse_backbone(*b, "backbone", c.backbone, errors);
  r.read_enum("rule", c.rule, update_rule_from_string);
  r.read_enum("theta", c.theta, activation_kind_from_string);
  r.read_size("prompt_len", c.prompt_len);
  if (const json* t = r.child("task")) parse_task(*t, "task", c.task, errors);
  if (const json* s = r.child("seeds")) {
    Reader sr(*s, "seeds", errors);
    sr.read_u64("init", c.seeds.init);
    sr.read_u64("data", c.seeds.data);
    sr.read_u64("shuffle", c.seeds.shuffle);
    sr.finish();
  }
  r.read_size("steps", c.steps);
  r.read_size("batch_size", c.batch_size);
  r.read_size("eval_interval", c.eval_interval);
  if (const json* o = r.child("optimizer")) parse_optimizer(*o, "optimizer", c.optimizer, errors);
  r.read_string("out_dir", c.out_dir);
  r.read_string("backbone_path", c.backbone_path);
  if (const json* p = r.child("pretrain")) {
    PretrainSection section;
    Reader pr(*p, "pretrain", errors);
    if (const json* pt = pr.child("task")) parse_task(*pt, "pretrain.task", section.task, errors);
    pr.read_size("steps", section.steps);
    pr.read_size("batch_size", section.batch_size);
    pr.finish();
    c.pretrain = std::move(section);
  }
  r.read_bool("wallclock", c.wallclock);
  r.finish();

  if (errors.empty())
    for (const auto& e : validate_collect(c)) errors.push_back(e);
  if (!errors.empty()) throw_joined(errors);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["backbone"] = {{"vocab_size", c.backbone.vocab_size},
                   {"hidden_dim", c.backbone.hidden_dim},
                   {"num_layers", c.backbone.num_layers},
                   {"num_heads", c.backbone.num_heads},
                   {"ffn_dim", c.backbone.ffn_dim},
                   {"max_seq_len", c.backbone.max_seq_len},
                   {"layer_norm_eps", c.backbone.layer_norm_eps},
                   {"mlp_activation", to_string(c.backbone.mlp_activation)}};
  j["rule"] = to_string(c.rule);
  j["theta"] = to_string(c.theta);
  j["prompt_len"] = c.prompt_len;
  j["task"] = {{"kind", to_string(c.task.kind)},     {"vocab_size", c.task.vocab_size},
               {"seq_len", c.task.seq_len},          {"num_classes", c.task.num_classes},
               {"train_size", c.task.train_size},    {"dev_size", c.task.dev_size},
               {"seed", c.task.seed}};
  if (!c.task.path.empty()) j["task"]["path"] = c.task.path;
  j["seeds"] = {{"init", c.seeds.init}, {"data", c.seeds.data}, {"shuffle", c.seeds.shuffle}};
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["eval_interval"] = c.eval_interval;
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"clip_norm", c.optimizer.clip_norm}};
  j["out_dir"] = c.out_dir;
  if (!c.backbone_path.empty()) j["backbone_path"] = c.backbone_path;
  if (c.pretrain) {
    j["pretrain"] = {{"task",
                      {{"kind", to_string(c.pretrain->task.kind)},
                       {"vocab_size", c.pretrain->task.vocab_size},
                       {"seq_len", c.pretrain->task.seq_len},
                       {"num_classes", c.pretrain->task.num_classes},
                       {"train_size", c.pretrain->task.train_size},
                       {"dev_size", c.pretrain->task.dev_size},
                       {"seed", c.pretrain->task.seed}}},
                     {"steps", c.pretrain->steps},
                     {"batch_size", c.pretrain->batch_size}};
  }
  if (c.wallclock) j["wallclock"] = true;
  return j;
}

}  // namespace gpc
