#pragma once

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace svebm {

enum class Modality { Points, Sequence, Document };

Modality parse_modality(std::string_view name);
std::string_view modality_name(Modality m);

/// A point in R^D (the 2D toy distributions use D = 2).
struct PointExample {
  std::vector<double> coords;
  bool operator==(const PointExample&) const = default;
};

/// Content tokens only; BOS/EOS are implied by the decoder.
struct SequenceExample {
  std::vector<int> tokens;
  bool operator==(const SequenceExample&) const = default;
};

struct TokenCount {
  int id = 0;
  int count = 0;
  bool operator==(const TokenCount&) const = default;
};

/// Bag of words stored sparsely; ids are unique.
struct DocumentExample {
  std::vector<TokenCount> counts;
  int total() const;
  bool operator==(const DocumentExample&) const = default;
};

using Observation = std::variant<PointExample, SequenceExample, DocumentExample>;

struct Example {
  Observation x;
  std::optional<int> label;
  bool operator==(const Example&) const = default;
};

Modality modality_of(const Observation& x);

}  // namespace svebm
