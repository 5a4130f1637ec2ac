#pragma once

// Training losses in minimization form.
//
//   total = -recon + kl - prior_energy - lambda * mutual_info + supervised_ce
//
// recon is log p(x|z+), kl is KL(q(z|x) || p0), prior_energy is F(z+) and
// mutual_info is the mini-batch estimate of I(z, y) under p(y|z). All parts
// are batch means. The ELBO surrogate recon - kl + F(z+) drops log Z, so
// prior_energy is only meaningful together with the negative-phase term that
// the trainer adds to the prior gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "svebm/model.hpp"

namespace svebm {

struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double prior_energy = 0.0;
  double mutual_info = 0.0;
  double supervised_ce = 0.0;
  double total = 0.0;

  /// Recomputes total from the parts.
  void finalize(double lambda);
  bool finite() const;
  bool operator==(const LossBreakdown&) const = default;
};

/// Single example, one reparameterized posterior draw.
LossBreakdown elbo_terms(const Model& model, const Example& x, Rng& rng);

/// Forward state of the ELBO surrogate for a batch.
struct ElboBatch {
  EncodeResult enc;
  Matrix noise;               // standard-normal draws e
  Matrix z;                   // mean + exp(logvar / 2) * e
  std::vector<double> kl;     // per row
  DecodeResult dec;
  EnergyEval energy;          // f, p(y|z), F at z
};

ElboBatch elbo_forward(const Model& model, std::span<const Example> xs, const Matrix& noise);

/// Per-parameter gradient arrays, in EnergyParams::parameters() order.
using GradientSet = std::vector<std::vector<double>>;

/// mean_pos grad F - mean_neg grad F. Parameter gradients are left as found.
GradientSet prior_grad_estimate(EnergyParams& params, const Matrix& z_pos, const Matrix& z_neg);

struct MutualInfo {
  double value = 0.0;
  Matrix dlogits;  // d(value)/d(logits)
};

/// H(mean_b p_b) - mean_b H(p_b) from logits, with 0 log 0 = 0.
MutualInfo mutual_info_from_logits(const Matrix& logits);
double mutual_info_zy(const EnergyParams& params, const Matrix& z_batch);

struct IbOptions {
  double lambda = 0.0;
  double kl_weight = 1.0;
};

/// Evaluates the batch objective at z+ = mean + std * noise and accumulates
/// its gradients: the decoder and encoder receive the surrogate plus the MI
/// term through z+, the prior receives the positive phase -mean grad F(z+)
/// plus the MI term. The negative phase is left to the caller.
LossBreakdown ib_objective(Model& model, std::span<const Example> xs, const Matrix& noise,
                           const IbOptions& opt);

/// -log p(y = label | z = mean(x)).
double supervised_class_loss(const Model& model, const Example& x, std::size_t label);

/// Mean cross-entropy over a labeled batch (labels taken from the examples);
/// accumulates gradients into the prior and encoder.
double supervised_loss_batch(Model& model, std::span<const Example> xs);

}  // namespace svebm
