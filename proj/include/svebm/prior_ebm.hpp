#pragma once

// Coupled symbol-vector prior
//   p(y, z) ∝ exp(<y, f(z)>) p0(z),  p0 = N(0, I_d),
// where f maps a latent vector to K logits. Summing out the one-hot y gives
// the marginal energy F(z) = logsumexp_k f(z)_k, and p(y|z) = softmax(f(z)).

#include <cstddef>
#include <span>
#include <vector>

#include "svebm/nn.hpp"

namespace svebm {

struct PriorConfig {
  std::size_t latent_dim = 2;
  std::size_t num_classes = 2;
  std::vector<std::size_t> hidden{200, 200};
  Activation activation = Activation::Swish;
};

/// Weights of the energy head f: R^d -> R^K.
class EnergyParams {
 public:
  EnergyParams() = default;
  explicit EnergyParams(const PriorConfig& cfg);

  /// Fan-in scaled random weights; the output layer is scaled by output_gain
  /// so the initial energy is nearly flat and the prior starts close to p0.
  void init(Rng& rng, double output_gain = 0.1);

  std::size_t latent_dim() const noexcept { return cfg_.latent_dim; }
  std::size_t num_classes() const noexcept { return cfg_.num_classes; }
  const PriorConfig& config() const noexcept { return cfg_; }

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }

  void collect(ParamRefs& out) { net_.collect(out); }
  ParamRefs parameters();

 private:
  PriorConfig cfg_;
  Mlp net_;
};

// --- single latent vector --------------------------------------------------

std::vector<double> logits(const EnergyParams& params, std::span<const double> z);
/// F(z) = log sum_k exp(f(z)_k), max-shifted.
double marginal_energy(const EnergyParams& params, std::span<const double> z);
/// p(y|z) = softmax(f(z)).
std::vector<double> symbol_posterior(const EnergyParams& params, std::span<const double> z);
/// log N(z; 0, I).
double log_standard_normal(std::span<const double> z);
/// F(z) + log p0(z); the partition function is not included.
double unnormalized_log_prior(const EnergyParams& params, std::span<const double> z);
/// sum_k p(k|z) grad f_k(z) - z.
std::vector<double> grad_z_log_prior(const EnergyParams& params, std::span<const double> z);

// --- batches (rows are latent vectors) --------------------------------------

struct EnergyEval {
  Matrix logits;               // [B x K]
  Matrix probs;                // softmax rows
  std::vector<double> energy;  // F per row
  Mlp::Tape tape;
};

EnergyEval evaluate_energy(const EnergyParams& params, const Matrix& z);

/// Score of the marginal prior for every row.
Matrix grad_z_log_prior(const EnergyParams& params, const Matrix& z);
/// Score of the label-conditional prior p(z|y) ∝ exp(f(z)_y) p0(z).
Matrix grad_z_log_conditional_prior(const EnergyParams& params, const Matrix& z, std::size_t label);

/// Backpropagates d(loss)/d(logits) through f. Accumulates parameter
/// gradients into params and returns d(loss)/dz when need_dz.
Matrix backprop_logits(EnergyParams& params, const EnergyEval& eval, const Matrix& dlogits,
                       bool need_dz);

/// Adds weight * d/dalpha [sum_rows F(z_row)] to the parameter gradients.
void accumulate_energy_grad(EnergyParams& params, const Matrix& z, double weight);

}  // namespace svebm
