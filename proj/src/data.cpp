#include "gpc/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gpc/rng.hpp"

namespace gpc {
namespace {

constexpr std::size_t kMaxAttemptsPerExample = 10000;

bool contains_bigram(const std::vector<std::size_t>& seq, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i + 1 < seq.size(); ++i)
    if (seq[i] == a && seq[i + 1] == b) return true;
  return false;
}

std::size_t count_token(const std::vector<std::size_t>& seq, std::size_t tok) {
  return static_cast<std::size_t>(std::count(seq.begin(), seq.end(), tok));
}

// Token ids are drawn from [1, V): id 0 stays reserved for CLS.
std::vector<std::size_t> random_sequence(const TaskSpec& spec, Rng& rng) {
  std::vector<std::size_t> seq(spec.seq_len);
  for (auto& t : seq) t = 1 + rng.uniform_index(spec.vocab_size - 1);
  return seq;
}

using SeenSet = std::set<std::vector<std::size_t>>;

Dataset generate_split(const TaskSpec& spec, std::size_t size, Rng& rng, SeenSet& seen) {
  const auto [a, pattern_b] = designated_tokens(spec.seed, spec.vocab_size);
  Dataset out;
  out.reserve(size);
  const std::size_t positives = size / 2;
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t want = (i < positives) ? 1 : 0;
    bool made = false;
    for (std::size_t attempt = 0; attempt < kMaxAttemptsPerExample; ++attempt) {
      auto seq = random_sequence(spec, rng);
      std::size_t label = 0;
      if (spec.kind == TaskKind::kSyntheticPattern) {
        if (want == 1) {
          const std::size_t pos = rng.uniform_index(spec.seq_len - 1);
          seq[pos] = a;
          seq[pos + 1] = pattern_b;
        }
        label = contains_bigram(seq, a, pattern_b) ? 1 : 0;
      } else {
        label = count_token(seq, a) % 2;
      }
      if (label != want) continue;
      if (seen.count(seq)) continue;
      seen.insert(seq);
      out.push_back({std::move(seq), label});
      made = true;
      break;
    }
    if (!made)
      throw DataError("could not generate a balanced " + to_string(spec.kind) +
                      " example after " + std::to_string(kMaxAttemptsPerExample) + " attempts");
  }
  rng.shuffle(out);
  return out;
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kSyntheticPattern: return "synthetic_pattern";
    case TaskKind::kSyntheticParity: return "synthetic_parity";
    case TaskKind::kFile: return "file";
  }
  throw ConfigError("unknown task kind tag");
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "synthetic_pattern") return TaskKind::kSyntheticPattern;
  if (name == "synthetic_parity") return TaskKind::kSyntheticParity;
  if (name == "file") return TaskKind::kFile;
  throw ConfigError("unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  if (kind == TaskKind::kFile) {
    if (path.empty()) throw ConfigError("file task needs a path");
    return;
  }
  if (vocab_size < 4) throw ConfigError("synthetic task needs vocab_size >= 4");
  if (seq_len < 4) throw ConfigError("synthetic task needs seq_len >= 4");
  if (num_classes != 2) throw ConfigError("synthetic tasks are binary");
  if (train_size == 0 || dev_size == 0) throw ConfigError("train/dev sizes must be positive");
}

std::pair<std::size_t, std::size_t> designated_tokens(std::uint64_t seed,
                                                      std::size_t vocab_size) {
  const std::size_t pool = vocab_size - 1;
  const std::size_t a = 1 + (splitmix64(seed) % pool);
  std::size_t b = 1 + (splitmix64(seed + 1) % pool);
  if (b == a) b = 1 + (a % pool);  // pool >= 3, so this lands on a different id
  return {a, b};
}

SplitDataset generate_synthetic_task(const TaskSpec& spec) {
  spec.validate();
  if (spec.kind == TaskKind::kFile)
    throw ConfigError("file tasks are loaded, not generated");
  Rng rng(derive_seed(spec.seed, 0xDA7A));
  SeenSet seen;
  SplitDataset split;
  split.train = generate_split(spec, spec.train_size, rng, seen);
  split.dev = generate_split(spec, spec.dev_size, rng, seen);
  return split;
}

Dataset load_dataset(const std::string& path, std::size_t vocab_size, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(line_no) + ": missing tab separator");
    Example ex;
    std::istringstream label_in(line.substr(0, tab));
    long long label = -1;
    if (!(label_in >> label) || label < 0)
      throw DataError(path + ":" + std::to_string(line_no) + ": bad label");
    if (static_cast<std::size_t>(label) >= num_classes)
      throw DataError(path + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                      " outside " + std::to_string(num_classes) + " classes");
    ex.label = static_cast<std::size_t>(label);
    std::istringstream tok_in(line.substr(tab + 1));
    long long id;
    while (tok_in >> id) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
        throw DataError(path + ":" + std::to_string(line_no) + ": token id " +
                        std::to_string(id) + " outside vocab of " + std::to_string(vocab_size));
      ex.tokens.push_back(static_cast<std::size_t>(id));
    }
    if (!tok_in.eof())
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed token list");
    out.push_back(std::move(ex));
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file '" + path + "'");
  for (const auto& ex : data) {
    out << ex.label << '\t';
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) out << ' ';
      out << ex.tokens[i];
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for dataset file '" + path + "'");
}

double majority_fraction(const Dataset& data) {
  if (data.empty()) throw DataError("majority baseline over an empty dataset");
  std::vector<std::size_t> counts;
  for (const auto& ex : data) {
    if (ex.label >= counts.size()) counts.resize(ex.label + 1, 0);
    ++counts[ex.label];
  }
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(data.size());
}

}  // namespace gpc
