#include "svebm/rng.hpp"

#include <sstream>

#include "svebm/errors.hpp"

namespace svebm {

std::size_t Rng::below(std::size_t n) {
  require(n > 0, "Rng::below: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  require(!weights.empty(), "Rng::categorical: no weights");
  double total = 0.0;
  for (double w : weights) total += w;
  require(total > 0.0, "Rng::categorical: weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding can leave u == total; return the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

void Rng::fill_normal(std::span<double> out) {
  for (double& x : out) x = normal();
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_ << ' ' << uniform_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  std::istringstream is(text);
  is >> r.engine_ >> r.normal_ >> r.uniform_;
  if (!is) throw DataError("invalid serialized RNG state");
  return r;
}

bool Rng::operator==(const Rng& other) const { return serialize() == other.serialize(); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace svebm
