#include "svebm/langevin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svebm/errors.hpp"
#include "svebm/model.hpp"

namespace svebm {

namespace {

void check_state(std::span<const double> z) {
  for (double v : z)
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound)
      throw SamplerDivergence("Langevin chain diverged", std::vector<double>(z.begin(), z.end()));
}

void check_score(std::span<const double> z, std::span<const double> g) {
  if (!all_finite(g))
    throw SamplerDivergence("non-finite score", std::vector<double>(z.begin(), z.end()));
}

}  // namespace

void LangevinConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw ConfigError("Langevin step size must be > 0");
  if (steps < 1) throw ConfigError("Langevin step count must be >= 1");
}

ChainPool::ChainPool(std::size_t num_chains, std::size_t latent_dim, std::uint64_t seed_)
    : states(num_chains, latent_dim), ages(num_chains, 0), seed(seed_) {
  if (num_chains < 1) throw ConfigError("chain pool needs at least one chain");
  Rng rng(derive_seed(seed_, 0x636861696eULL));
  rng.fill_normal(states.flat());
}

void ChainPool::reinitialize(Rng& rng) {
  rng.fill_normal(states.flat());
  std::fill(ages.begin(), ages.end(), 0);
}

std::vector<double> langevin_step(std::span<const double> z, const ScoreFn& score, double s, Rng& rng) {
  const std::vector<double> g = score(z);
  require(g.size() == z.size(), "langevin_step: score has wrong length");
  check_score(z, g);
  const double noise_scale = std::sqrt(2.0 * s);
  std::vector<double> out(z.begin(), z.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * g[i] + noise_scale * rng.normal();
  check_state(out);
  return out;
}

void langevin_step(Matrix& z, const BatchScoreFn& score, double s, Rng& rng) {
  const Matrix g = score(z);
  require(g.rows() == z.rows() && g.cols() == z.cols(), "langevin_step: score has wrong shape");
  for (std::size_t r = 0; r < z.rows(); ++r) check_score(z.row(r), g.row(r));
  const double noise_scale = std::sqrt(2.0 * s);
  for (std::size_t i = 0; i < z.size(); ++i)
    z.data()[i] += s * g.data()[i] + noise_scale * rng.normal();
  for (std::size_t r = 0; r < z.rows(); ++r) check_state(z.row(r));
}

void run_langevin(Matrix& z, const BatchScoreFn& score, const LangevinConfig& cfg, Rng& rng) {
  for (std::size_t t = 0; t < cfg.steps; ++t) langevin_step(z, score, cfg.step_size, rng);
}

Matrix sample_prior(ChainPool& pool, const EnergyParams& params, const LangevinConfig& cfg,
                    std::size_t m, Rng& rng) {
  if (m > pool.size())
    throw ConfigError("cannot draw " + std::to_string(m) + " chains from a pool of " +
                      std::to_string(pool.size()));
  require(pool.latent_dim() == params.latent_dim(), "sample_prior: latent dimension mismatch");
  // Partial Fisher-Yates: the first m entries are a uniform draw without replacement.
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(pool.size() - i)]);
  idx.resize(m);

  Matrix z(m, pool.latent_dim());
  for (std::size_t i = 0; i < m; ++i) std::ranges::copy(pool.states.row(idx[i]), z.row(i).begin());
  run_langevin(z, [&](const Matrix& x) { return grad_z_log_prior(params, x); }, cfg, rng);
  for (std::size_t i = 0; i < m; ++i) {
    std::ranges::copy(z.row(i), pool.states.row(idx[i]).begin());
    pool.ages[idx[i]] += cfg.steps;
  }
  return z;
}

Matrix draw_prior_samples(ChainPool pool, const EnergyParams& params, const LangevinConfig& cfg,
                          std::size_t count, Rng& rng) {
  Matrix out(count, params.latent_dim());
  for (std::size_t done = 0; done < count;) {
    const std::size_t m = std::min(pool.size(), count - done);
    const Matrix z = sample_prior(pool, params, cfg, m, rng);
    std::copy(z.data(), z.data() + z.size(), out.row(done).data());
    done += m;
  }
  return out;
}

Matrix sample_conditional_prior(const EnergyParams& params, std::size_t label, std::size_t n,
                                const LangevinConfig& cfg, Rng& rng) {
  require(label < params.num_classes(), "conditional sampler: label out of range");
  Matrix z(n, params.latent_dim());
  rng.fill_normal(z.flat());
  if (n == 0) return z;
  run_langevin(z, [&](const Matrix& x) { return grad_z_log_conditional_prior(params, x, label); }, cfg,
               rng);
  return z;
}

std::vector<double> posterior_langevin(const Example& x, const Model& model, const LangevinConfig& cfg,
                                       Rng& rng) {
  Matrix z(1, model.config.latent_dim);
  rng.fill_normal(z.flat());
  const std::vector<double> one{1.0};
  run_langevin(
      z,
      [&](const Matrix& zz) {
        Matrix g = grad_z_log_prior(model.prior, zz);
        const DecodeResult dec = model.decoder.forward(std::span<const Example>(&x, 1), zz);
        const Matrix dz = model.decoder.input_gradient(dec, one);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += dz.data()[i];
        return g;
      },
      cfg, rng);
  return z.storage();
}

}  // namespace svebm
