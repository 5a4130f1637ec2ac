#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace svebm {

/// Seeded random stream. Copying an Rng forks an identical stream; the whole
/// state (engine plus the normal sampler's cached value) round-trips through
/// serialize()/deserialize().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Draws an index from an (unnormalized, non-negative) weight vector.
  std::size_t categorical(std::span<const double> weights);
  void fill_normal(std::span<double> out);

  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const;

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace svebm
