#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gpc/serialize.hpp"
#include "test_util.hpp"

using namespace gpc;
using namespace gpc::testutil;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

BackboneConfig small_config() {
  BackboneConfig config;
  config.vocab_size = 12;
  config.hidden_dim = 4;
  config.num_layers = 2;
  config.num_heads = 2;
  config.ffn_dim = 6;
  config.max_seq_len = 16;
  return config;
}

}  // namespace

TEST_SUITE_BEGIN("serialize");

TEST_CASE("tensors round-trip bit-exactly with metadata") {
  Rng rng(71);
  auto a = random_tensor({3, 5}, rng);
  auto b = random_tensor({7}, rng);
  a->values[0] = 1.0 / 3.0;
  b->values[1] = -0.0;  // signed zero must survive

  auto path = temp_path("gpclab_tensors_roundtrip.bin");
  save_tensors(path, {{"a", a}, {"b", b}}, {{"purpose", "test"}});

  auto file = load_tensors(path);
  CHECK(file.meta.at("purpose") == "test");
  REQUIRE(file.tensors.size() == 2);
  CHECK(file.tensors[0].first == "a");

  auto a2 = file.find("a");
  auto b2 = file.find("b");
  CHECK(a2->shape == a->shape);
  CHECK(b2->shape == b->shape);
  for (std::size_t i = 0; i < a->values.size(); ++i) {
    CHECK(std::memcmp(&a2->values[i], &a->values[i], sizeof(double)) == 0);
  }
  CHECK(std::signbit(b2->values[1]));
  CHECK_THROWS_AS(file.find("missing"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("empty tensor list round-trips") {
  auto path = temp_path("gpclab_tensors_empty.bin");
  save_tensors(path, {});
  auto file = load_tensors(path);
  CHECK(file.tensors.empty());
  std::remove(path.c_str());
}

TEST_CASE("corrupt files are rejected with DataError") {
  auto path = temp_path("gpclab_tensors_corrupt.bin");

  auto write_raw = [&](const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    out << body;
  };

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_tensors(temp_path("gpclab_no_such.bin")), DataError);
  }
  SUBCASE("not json") {
    write_raw("garbage\n");
    CHECK_THROWS_AS(load_tensors(path), DataError);
  }
  SUBCASE("wrong format tag") {
    write_raw("{\"format\":\"other-v9\",\"meta\":{},\"tensors\":[]}\n");
    CHECK_THROWS_AS(load_tensors(path), DataError);
  }
  SUBCASE("truncated payload") {
    Rng rng(73);
    save_tensors(path, {{"a", random_tensor({4, 4}, rng)}});
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 8);
    CHECK_THROWS_AS(load_tensors(path), DataError);
  }
  std::remove(path.c_str());
}

TEST_CASE("backbone round-trips and the copy computes identical logits") {
  Rng rng(75);
  auto config = small_config();
  auto backbone = init_backbone(config, rng);

  auto path = temp_path("gpclab_backbone_roundtrip.bin");
  save_backbone(path, backbone);
  auto loaded = load_backbone(path);

  CHECK(loaded.config.vocab_size == config.vocab_size);
  CHECK(loaded.config.hidden_dim == config.hidden_dim);
  CHECK(loaded.config.num_layers == config.num_layers);
  CHECK(loaded.config.num_heads == config.num_heads);
  CHECK(loaded.config.ffn_dim == config.ffn_dim);
  CHECK(loaded.config.max_seq_len == config.max_seq_len);
  CHECK(loaded.cls_id == backbone.cls_id);

  auto original_params = backbone.params();
  auto loaded_params = loaded.params();
  REQUIRE(original_params.size() == loaded_params.size());
  for (std::size_t i = 0; i < original_params.size(); ++i) {
    CHECK(loaded_params[i]->values == original_params[i]->values);
    CHECK_FALSE(loaded_params[i]->requires_grad);  // loaded backbones come back frozen
  }

  PromptCellParams cell;
  cell.rule = UpdateRule::kVanilla;
  auto prompt = Tensor::from({2, config.hidden_dim},
                             std::vector<double>(2 * config.hidden_dim, 0.1));
  std::vector<std::size_t> ids = {3, 5, 7};

  Tape tape;
  auto out_a = backbone_forward(tape, backbone, cell, prompt, ids);
  auto out_b = backbone_forward(tape, loaded, cell, prompt, ids);
  CHECK(out_a.tokens->values == out_b.tokens->values);
  std::remove(path.c_str());
}

TEST_CASE("backbone loader validates the stored config") {
  auto path = temp_path("gpclab_backbone_badconfig.bin");
  Rng rng(77);
  auto backbone = init_backbone(small_config(), rng);
  save_backbone(path, backbone);

  // Rewrite the header with an inconsistent hidden_dim, keeping the payload.
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto json = nlohmann::json::parse(header);
  json["meta"]["config"]["hidden_dim"] = 5;  // indivisible by num_heads
  {
    std::ofstream out(path, std::ios::binary);
    out << json.dump() << "\n" << payload;
  }
  CHECK_THROWS_AS(load_backbone(path), DataError);
  std::remove(path.c_str());
}

TEST_SUITE_END();
