#include "gpc/serialize.hpp"

#include <cstring>
#include <fstream>

#include "gpc/errors.hpp"

namespace gpc {
namespace {

void write_f64_le(std::ostream& out, const std::vector<double>& values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f64_le(std::istream& in, std::size_t count, const std::string& path) {
  std::vector<unsigned char> buf(count * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw DataError("tensor file '" + path + "' truncated");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    std::memcpy(&values[i], &bits, 8);
  }
  return values;
}

}  // namespace

TensorPtr TensorFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("tensor '" + name + "' missing from file");
}

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, TensorPtr>>& tensors,
                  const nlohmann::json& meta) {
  nlohmann::json header;
  header["format"] = kTensorFormatTag;
  header["meta"] = meta;
  auto& list = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t->shape;
    list.push_back(std::move(entry));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor file '" + path + "'");
  out << header.dump() << '\n';
  for (const auto& [name, t] : tensors) write_f64_le(out, t->values);
  if (!out) throw DataError("write failed for tensor file '" + path + "'");
}

TensorFile load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError("tensor file '" + path + "' has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("tensor file '" + path + "' header is not JSON: " + e.what());
  }
  if (!header.contains("format") || header["format"] != kTensorFormatTag)
    throw DataError("tensor file '" + path + "' has an unrecognized format tag");

  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.value("tensors", nlohmann::json::array())) {
    const std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    auto values = read_f64_le(in, shape_numel(shape), path);
    file.tensors.emplace_back(name, Tensor::from(shape, std::move(values)));
  }
  return file;
}

namespace {

std::vector<std::pair<std::string, TensorPtr>> backbone_named_params(const Backbone& b) {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("token_table", b.token_table);
  out.emplace_back("position_table", b.position_table);
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const auto& l = b.layers[i];
    const std::string prefix = "layer." + std::to_string(i) + ".";
    out.emplace_back(prefix + "w_q", l.w_q);
    out.emplace_back(prefix + "w_k", l.w_k);
    out.emplace_back(prefix + "w_v", l.w_v);
    out.emplace_back(prefix + "w_o", l.w_o);
    out.emplace_back(prefix + "w_1", l.w_1);
    out.emplace_back(prefix + "b_1", l.b_1);
    out.emplace_back(prefix + "w_2", l.w_2);
    out.emplace_back(prefix + "b_2", l.b_2);
    out.emplace_back(prefix + "ln1_gain", l.ln1_gain);
    out.emplace_back(prefix + "ln1_bias", l.ln1_bias);
    out.emplace_back(prefix + "ln2_gain", l.ln2_gain);
    out.emplace_back(prefix + "ln2_bias", l.ln2_bias);
  }
  return out;
}

}  // namespace

void save_backbone(const std::string& path, const Backbone& backbone) {
  nlohmann::json meta;
  meta["kind"] = "backbone";
  meta["cls_id"] = backbone.cls_id;
  auto& cfg = meta["config"];
  cfg["vocab_size"] = backbone.config.vocab_size;
  cfg["hidden_dim"] = backbone.config.hidden_dim;
  cfg["num_layers"] = backbone.config.num_layers;
  cfg["num_heads"] = backbone.config.num_heads;
  cfg["ffn_dim"] = backbone.config.ffn_dim;
  cfg["max_seq_len"] = backbone.config.max_seq_len;
  cfg["layer_norm_eps"] = backbone.config.layer_norm_eps;
  cfg["mlp_activation"] = to_string(backbone.config.mlp_activation);
  save_tensors(path, backbone_named_params(backbone), meta);
}

Backbone load_backbone(const std::string& path) {
  auto file = load_tensors(path);
  if (file.meta.value("kind", "") != "backbone")
    throw DataError("tensor file '" + path + "' does not hold a backbone");
  const auto& cfg = file.meta.at("config");
  Backbone b;
  try {
    b.config.vocab_size = cfg.at("vocab_size").get<std::size_t>();
    b.config.hidden_dim = cfg.at("hidden_dim").get<std::size_t>();
    b.config.num_layers = cfg.at("num_layers").get<std::size_t>();
    b.config.num_heads = cfg.at("num_heads").get<std::size_t>();
    b.config.ffn_dim = cfg.at("ffn_dim").get<std::size_t>();
    b.config.max_seq_len = cfg.at("max_seq_len").get<std::size_t>();
    b.config.layer_norm_eps = cfg.at("layer_norm_eps").get<double>();
    b.config.mlp_activation =
        activation_kind_from_string(cfg.at("mlp_activation").get<std::string>());
    b.cls_id = file.meta.at("cls_id").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("backbone file '" + path + "' has a bad config block: " + e.what());
  }
  try {
    b.config.validate();
  } catch (const ConfigError& e) {
    throw DataError("backbone file '" + path + "' holds an invalid config: " + e.what());
  }
  b.token_table = file.find("token_table");
  b.position_table = file.find("position_table");
  for (std::size_t i = 0; i < b.config.num_layers; ++i) {
    const std::string prefix = "layer." + std::to_string(i) + ".";
    EncoderLayer l;
    l.w_q = file.find(prefix + "w_q");
    l.w_k = file.find(prefix + "w_k");
    l.w_v = file.find(prefix + "w_v");
    l.w_o = file.find(prefix + "w_o");
    l.w_1 = file.find(prefix + "w_1");
    l.b_1 = file.find(prefix + "b_1");
    l.w_2 = file.find(prefix + "w_2");
    l.b_2 = file.find(prefix + "b_2");
    l.ln1_gain = file.find(prefix + "ln1_gain");
    l.ln1_bias = file.find(prefix + "ln1_bias");
    l.ln2_gain = file.find(prefix + "ln2_gain");
    l.ln2_bias = file.find(prefix + "ln2_bias");
    b.layers.push_back(std::move(l));
  }
  for (const auto& p : b.params()) {
    if (p->shape.size() > 2 || p->size() == 0)
      throw DataError("backbone file '" + path + "' holds a malformed tensor");
    p->requires_grad = false;
  }
  return b;
}

}  // namespace gpc
