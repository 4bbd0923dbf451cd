#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gpc/data.hpp"

using namespace gpc;

namespace {

// Independent label predicates, written directly from the task definitions.
bool has_bigram(const std::vector<std::size_t>& seq, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    if (seq[i] == a && seq[i + 1] == b) return true;
  }
  return false;
}

std::size_t parity_of(const std::vector<std::size_t>& seq, std::size_t a) {
  std::size_t count = 0;
  for (std::size_t t : seq) {
    if (t == a) ++count;
  }
  return count % 2;
}

TaskSpec pattern_spec(std::uint64_t seed = 7) {
  TaskSpec spec;
  spec.kind = TaskKind::kSyntheticPattern;
  spec.vocab_size = 16;
  spec.seq_len = 10;
  spec.train_size = 64;
  spec.dev_size = 32;
  spec.seed = seed;
  return spec;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("task kind names round-trip") {
  for (TaskKind k : {TaskKind::kSyntheticPattern, TaskKind::kSyntheticParity, TaskKind::kFile}) {
    CHECK(task_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(task_kind_from_string("bogus"), ConfigError);
}

TEST_CASE("spec validation rejects degenerate settings") {
  TaskSpec spec = pattern_spec();
  CHECK_NOTHROW(spec.validate());

  TaskSpec bad = spec;
  bad.vocab_size = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.seq_len = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.num_classes = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.train_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.kind = TaskKind::kFile;
  bad.path.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("designated tokens are in-vocabulary and distinct") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [a, b] = designated_tokens(seed, 16);
    CHECK(a >= 1);
    CHECK(a < 16);
    CHECK(b >= 1);
    CHECK(b < 16);
    CHECK(a != b);
  }
}

TEST_CASE("pattern labels match an independent bigram predicate") {
  auto spec = pattern_spec(11);
  auto data = generate_synthetic_task(spec);
  auto [a, b] = designated_tokens(spec.seed, spec.vocab_size);
  for (const auto* split : {&data.train, &data.dev}) {
    for (const auto& ex : *split) {
      CHECK(ex.tokens.size() == spec.seq_len);
      CHECK(ex.label == (has_bigram(ex.tokens, a, b) ? 1u : 0u));
    }
  }
}

TEST_CASE("parity labels match an independent count predicate") {
  auto spec = pattern_spec(13);
  spec.kind = TaskKind::kSyntheticParity;
  auto data = generate_synthetic_task(spec);
  auto [a, b] = designated_tokens(spec.seed, spec.vocab_size);
  (void)b;
  for (const auto* split : {&data.train, &data.dev}) {
    for (const auto& ex : *split) {
      CHECK(ex.label == parity_of(ex.tokens, a));
    }
  }
}

TEST_CASE("splits are balanced, sized, in-vocabulary, and disjoint") {
  auto spec = pattern_spec(17);
  auto data = generate_synthetic_task(spec);
  CHECK(data.train.size() == spec.train_size);
  CHECK(data.dev.size() == spec.dev_size);

  auto check_split = [&](const Dataset& split) {
    std::size_t positives = 0;
    for (const auto& ex : split) {
      positives += ex.label;
      for (std::size_t t : ex.tokens) {
        CHECK(t >= 1);
        CHECK(t < spec.vocab_size);
      }
    }
    CHECK(positives == split.size() / 2);
  };
  check_split(data.train);
  check_split(data.dev);

  std::set<std::vector<std::size_t>> seen;
  for (const auto& ex : data.train) CHECK(seen.insert(ex.tokens).second);
  for (const auto& ex : data.dev) CHECK(seen.insert(ex.tokens).second);

  CHECK(majority_fraction(data.train) == doctest::Approx(0.5));
}

TEST_CASE("generation is deterministic in the seed") {
  auto spec = pattern_spec(23);
  auto x = generate_synthetic_task(spec);
  auto y = generate_synthetic_task(spec);
  CHECK(x.train == y.train);
  CHECK(x.dev == y.dev);

  spec.seed = 24;
  auto z = generate_synthetic_task(spec);
  CHECK(x.train != z.train);
}

TEST_CASE("exhausting the distinct-sequence pool raises DataError") {
  TaskSpec spec;
  spec.kind = TaskKind::kSyntheticParity;
  spec.vocab_size = 4;  // ids 1..3
  spec.seq_len = 4;     // only 81 distinct sequences exist
  spec.train_size = 200;
  spec.dev_size = 10;
  spec.seed = 5;
  CHECK_THROWS_AS(generate_synthetic_task(spec), DataError);
}

TEST_CASE("save and load round-trip a dataset") {
  Dataset data = {{{4, 9, 2, 2}, 1}, {{1, 1, 1, 1}, 0}};
  auto path = temp_path("gpclab_data_roundtrip.tsv");
  save_dataset(path, data);
  auto back = load_dataset(path, 16, 2);
  CHECK(back == data);
  std::remove(path.c_str());
}

TEST_CASE("loader accepts comments and blank lines") {
  auto path = temp_path("gpclab_data_comments.tsv");
  {
    std::ofstream out(path);
    out << "# header comment\n";
    out << "1\t4 9 2 2\n";
    out << "\n";
    out << "0\t1 1 1 1\n";
  }
  auto data = load_dataset(path, 16, 2);
  REQUIRE(data.size() == 2);
  CHECK(data[0].tokens == std::vector<std::size_t>{4, 9, 2, 2});
  CHECK(data[0].label == 1);
  CHECK(data[1].label == 0);
  std::remove(path.c_str());
}

TEST_CASE("loader reports the offending line") {
  auto path = temp_path("gpclab_data_bad.tsv");

  auto write_and_expect = [&](const std::string& body, const std::string& needle) {
    {
      std::ofstream out(path);
      out << body;
    }
    try {
      load_dataset(path, 16, 2);
      FAIL_CHECK("expected DataError for: " << body);
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  write_and_expect("1\t4 9\nbroken line\n", ":2:");  // missing tab separator
  write_and_expect("5\t4 9\n", ":1:");               // label out of range
  write_and_expect("1\t4 99\n", ":1:");              // token out of range
  write_and_expect("1\t4 -2\n", ":1:");              // negative id
  write_and_expect("1\t4 x\n", ":1:");               // non-numeric id
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_dataset(temp_path("gpclab_no_such_file.tsv"), 16, 2), DataError);
}

TEST_CASE("majority fraction reflects the dominant label") {
  Dataset data = {{{1, 2}, 0}, {{2, 3}, 0}, {{3, 4}, 1}};
  CHECK(majority_fraction(data) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(majority_fraction({}), DataError);
}

TEST_SUITE_END();
