#pragma once

// Unadjusted Langevin dynamics in latent space:
//   z <- z + s * score(z) + sqrt(2 s) * e,   e ~ N(0, I).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "svebm/example.hpp"
#include "svebm/prior_ebm.hpp"
#include "svebm/rng.hpp"

namespace svebm {

struct Model;

/// Any coordinate beyond this magnitude is treated as divergence.
inline constexpr double kDivergenceBound = 1e6;

struct LangevinConfig {
  double step_size = 0.16;
  std::size_t steps = 20;

  void validate() const;
};

/// Persistent chains for prior expectations.
struct ChainPool {
  Matrix states;                     // [L x d]
  std::vector<std::uint64_t> ages;   // Langevin steps since (re)initialization
  std::uint64_t seed = 0;            // seed the pool was created from

  ChainPool() = default;
  /// L chains drawn from N(0, I) using a stream derived from seed.
  ChainPool(std::size_t num_chains, std::size_t latent_dim, std::uint64_t seed);

  std::size_t size() const noexcept { return states.rows(); }
  std::size_t latent_dim() const noexcept { return states.cols(); }
  /// Redraws every chain from N(0, I) and resets the ages.
  void reinitialize(Rng& rng);

  bool operator==(const ChainPool&) const = default;
};

using ScoreFn = std::function<std::vector<double>(std::span<const double>)>;
using BatchScoreFn = std::function<Matrix(const Matrix&)>;

std::vector<double> langevin_step(std::span<const double> z, const ScoreFn& score, double s, Rng& rng);
/// One step for every row; noise is drawn row-major.
void langevin_step(Matrix& z, const BatchScoreFn& score, double s, Rng& rng);
/// cfg.steps batch steps.
void run_langevin(Matrix& z, const BatchScoreFn& score, const LangevinConfig& cfg, Rng& rng);

/// Picks m distinct chains uniformly at random, advances each by cfg.steps
/// steps on the marginal prior and writes them back. The pool is left
/// untouched if the sampler diverges.
Matrix sample_prior(ChainPool& pool, const EnergyParams& params, const LangevinConfig& cfg,
                    std::size_t m, Rng& rng);

/// `count` prior samples from a copy of the pool, drawn in rounds of at most
/// pool.size() chains.
Matrix draw_prior_samples(ChainPool pool, const EnergyParams& params, const LangevinConfig& cfg,
                          std::size_t count, Rng& rng);

/// Short-run chains from N(0, I) targeting p(z|y = label).
Matrix sample_conditional_prior(const EnergyParams& params, std::size_t label, std::size_t n,
                                const LangevinConfig& cfg, Rng& rng);

/// Non-amortized posterior sample: Langevin on log p(z) + log p(x|z) from a
/// N(0, I) start.
std::vector<double> posterior_langevin(const Example& x, const Model& model, const LangevinConfig& cfg,
                                       Rng& rng);

}  // namespace svebm
