#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gpc/errors.hpp"

namespace gpc {

struct Example {
  std::vector<std::size_t> tokens;
  std::size_t label = 0;

  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

enum class TaskKind { kSyntheticPattern, kSyntheticParity, kFile };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::kSyntheticPattern;
  std::size_t vocab_size = 32;
  std::size_t seq_len = 12;
  std::size_t num_classes = 2;
  std::size_t train_size = 256;
  std::size_t dev_size = 128;
  std::uint64_t seed = 0;
  std::string path;  // kFile only

  void validate() const;  // throws ConfigError
};

struct SplitDataset {
  Dataset train;
  Dataset dev;
};

// Deterministic under spec.seed; train/dev sequences disjoint; labels balanced.
// Pattern: label 1 iff a designated ordered adjacent bigram occurs.
// Parity: label = (occurrences of a designated token) mod 2.
SplitDataset generate_synthetic_task(const TaskSpec& spec);

// The (a, b) the seed designates: the pattern bigram is a->b, the parity
// token is a. Both in [1, vocab_size), always distinct.
std::pair<std::size_t, std::size_t> designated_tokens(std::uint64_t seed,
                                                      std::size_t vocab_size);

// Line format: `label<TAB>space-separated token ids`; '#' starts a comment line.
Dataset load_dataset(const std::string& path, std::size_t vocab_size, std::size_t num_classes);
void save_dataset(const std::string& path, const Dataset& data);

// Fraction held by the most common label; the baseline a useful model must beat.
double majority_fraction(const Dataset& data);

}  // namespace gpc
