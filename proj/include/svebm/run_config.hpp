#pragma once

// Flat "section.key = value" configuration. A "[section]" line prefixes the
// keys that follow it; '#' starts a comment. Errors name the source and line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "svebm/model.hpp"
#include "svebm/trainer.hpp"

namespace svebm {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

class KeyValues {
 public:
  KeyValues() = default;
  explicit KeyValues(std::string source) : source_(std::move(source)) {}

  const std::string& source() const noexcept { return source_; }
  const std::vector<KeyValue>& entries() const noexcept { return entries_; }

  /// Later assignments override earlier ones.
  void set(const std::string& key, const std::string& value, int line = 0);
  const KeyValue* find(const std::string& key) const;
  bool contains(const std::string& key) const { return find(key) != nullptr; }

  /// "source:line: message" (or "source: message" without a line).
  std::string where(const KeyValue* kv) const;

  void write(std::ostream& os) const;

 private:
  std::string source_;
  std::vector<KeyValue> entries_;
};

KeyValues parse_key_values(std::istream& is, const std::string& source);
KeyValues read_key_values(const std::filesystem::path& path);

enum class TrainMode { Svebm, IbEbm };

TrainMode parse_mode(std::string_view name);
std::string_view mode_name(TrainMode m);

struct EvalOptions {
  std::vector<std::string> metrics;  // empty: modality defaults
  std::size_t nll_samples = 500;
  std::size_t log_z_samples = 100000;
  std::size_t max_examples = 0;      // 0: whole dataset
  std::size_t nll_examples = 100;    // importance-sampled NLL is averaged over this many examples
  std::size_t grid_size = 100;
  std::size_t sample_count = 2000;   // samples behind generated-data panels and metrics
  std::uint64_t seed = 0;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TrainMode mode = TrainMode::Svebm;
  std::filesystem::path train_data;
  std::filesystem::path labeled_data;
  std::filesystem::path eval_data;
  std::filesystem::path vocab_path;
  double label_fraction = 0.0;  // share of train_data used as labeled data
  std::filesystem::path output_dir;
  EvalOptions eval;

  /// Every setting including defaults, for the checkpoint echo.
  KeyValues to_key_values() const;
  /// Checks types, ranges and required keys; unknown keys are errors.
  static RunConfig from_key_values(const KeyValues& kv);

  /// Cross-field checks (mode vs lambda, learning rates, sizes).
  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

std::vector<std::string> split_list(const std::string& s, char sep = ',');

}  // namespace svebm
