#include "svebm/objectives.hpp"

#include <cmath>

#include "svebm/errors.hpp"

namespace svebm {

void LossBreakdown::finalize(double lambda) {
  total = -recon + kl - prior_energy - lambda * mutual_info + supervised_ce;
}

bool LossBreakdown::finite() const {
  for (double v : {recon, kl, prior_energy, mutual_info, supervised_ce, total})
    if (!std::isfinite(v)) return false;
  return true;
}

ElboBatch elbo_forward(const Model& model, std::span<const Example> xs, const Matrix& noise) {
  require(!xs.empty(), "elbo: empty batch");
  ElboBatch eb;
  eb.enc = model.encoder.forward(xs);
  require(noise.rows() == xs.size() && noise.cols() == eb.enc.mean.cols(), "elbo: noise shape mismatch");
  eb.noise = noise;
  eb.z = eb.enc.mean;
  for (std::size_t i = 0; i < eb.z.size(); ++i)
    eb.z.data()[i] += std::exp(0.5 * eb.enc.logvar.data()[i]) * noise.data()[i];
  eb.kl = kl_to_reference(eb.enc.mean, eb.enc.logvar);
  eb.dec = model.decoder.forward(xs, eb.z);
  eb.energy = evaluate_energy(model.prior, eb.z);
  return eb;
}

LossBreakdown elbo_terms(const Model& model, const Example& x, Rng& rng) {
  Matrix noise(1, model.config.latent_dim);
  rng.fill_normal(noise.flat());
  const ElboBatch eb = elbo_forward(model, std::span<const Example>(&x, 1), noise);
  LossBreakdown lb;
  lb.recon = eb.dec.loglik[0];
  lb.kl = eb.kl[0];
  lb.prior_energy = eb.energy.energy[0];
  lb.finalize(0.0);
  return lb;
}

GradientSet prior_grad_estimate(EnergyParams& params, const Matrix& z_pos, const Matrix& z_neg) {
  require(z_pos.rows() > 0 && z_neg.rows() > 0, "prior_grad_estimate: empty batch");
  const ParamRefs ps = params.parameters();
  GradientSet saved, pos, out;
  for (Parameter* p : ps) saved.push_back(p->grad);

  zero_grads(ps);
  accumulate_energy_grad(params, z_pos, 1.0 / static_cast<double>(z_pos.rows()));
  for (Parameter* p : ps) pos.push_back(p->grad);
  zero_grads(ps);
  accumulate_energy_grad(params, z_neg, 1.0 / static_cast<double>(z_neg.rows()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::vector<double> g = pos[i];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= ps[i]->grad[j];
    out.push_back(std::move(g));
    ps[i]->grad = saved[i];
  }
  return out;
}

MutualInfo mutual_info_from_logits(const Matrix& logits) {
  const std::size_t B = logits.rows();
  const std::size_t K = logits.cols();
  require(B >= 1 && K >= 1, "mutual information: empty batch");
  const double inv_b = 1.0 / static_cast<double>(B);

  Matrix logp(B, K), p(B, K);
  std::vector<double> qbar(K, 0.0);
  double mean_cond_entropy = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double lse = log_sum_exp(logits.row(b));
    for (std::size_t k = 0; k < K; ++k) {
      logp(b, k) = logits(b, k) - lse;
      p(b, k) = std::exp(logp(b, k));
      qbar[k] += inv_b * p(b, k);
      mean_cond_entropy -= inv_b * p(b, k) * logp(b, k);
    }
  }
  std::vector<double> logq(K, 0.0);
  double marginal_entropy = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (qbar[k] > 0.0) {
      logq[k] = std::log(qbar[k]);
      marginal_entropy -= qbar[k] * logq[k];
    }
  }

  MutualInfo mi;
  mi.value = marginal_entropy - mean_cond_entropy;
  // dI/dp_bk = (log p_bk - log qbar_k) / B, then through the softmax.
  mi.dlogits.resize(B, K);
  for (std::size_t b = 0; b < B; ++b) {
    double dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) dot += p(b, k) * (logp(b, k) - logq[k]);
    for (std::size_t k = 0; k < K; ++k)
      mi.dlogits(b, k) = inv_b * p(b, k) * ((logp(b, k) - logq[k]) - dot);
  }
  return mi;
}

double mutual_info_zy(const EnergyParams& params, const Matrix& z_batch) {
  require(z_batch.rows() >= 2, "mutual information needs a batch of at least 2");
  return mutual_info_from_logits(evaluate_energy(params, z_batch).logits).value;
}

LossBreakdown ib_objective(Model& model, std::span<const Example> xs, const Matrix& noise,
                           const IbOptions& opt) {
  require(opt.lambda >= 0.0, "lambda must be >= 0");
  const std::size_t B = xs.size();
  const double inv_b = 1.0 / static_cast<double>(B);
  const ElboBatch eb = elbo_forward(model, xs, noise);

  LossBreakdown lb;
  for (std::size_t b = 0; b < B; ++b) {
    lb.recon += eb.dec.loglik[b];
    lb.kl += eb.kl[b];
    lb.prior_energy += eb.energy.energy[b];
  }
  lb.recon *= inv_b;
  lb.kl *= inv_b;
  lb.prior_energy *= inv_b;
  const MutualInfo mi = mutual_info_from_logits(eb.energy.logits);
  lb.mutual_info = mi.value;
  lb.finalize(opt.lambda);

  const std::vector<double> dll(B, -inv_b);
  Matrix dz = model.decoder.backward(eb.dec, dll, true);

  Matrix dlogits = eb.energy.probs;
  for (double& v : dlogits.flat()) v *= -inv_b;
  if (opt.lambda != 0.0)
    for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits.data()[i] -= opt.lambda * mi.dlogits.data()[i];
  const Matrix dz_prior = backprop_logits(model.prior, eb.energy, dlogits, true);
  for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] += dz_prior.data()[i];

  Matrix dmean = dz;
  Matrix dlogvar(dz.rows(), dz.cols());
  const double kw = opt.kl_weight * inv_b;
  for (std::size_t i = 0; i < dz.size(); ++i) {
    const double lv = eb.enc.logvar.data()[i];
    const double sd = std::exp(0.5 * lv);
    dmean.data()[i] += kw * eb.enc.mean.data()[i];
    dlogvar.data()[i] = dz.data()[i] * noise.data()[i] * 0.5 * sd + kw * 0.5 * (sd * sd - 1.0);
  }
  model.encoder.backward(eb.enc, dmean, dlogvar);
  return lb;
}

namespace {

std::size_t checked_label(const Example& x, std::size_t K) {
  if (!x.label) throw DataError("labeled example has no label");
  if (*x.label < 0 || static_cast<std::size_t>(*x.label) >= K)
    throw DataError("label " + std::to_string(*x.label) + " outside [0, " + std::to_string(K) + ")");
  return static_cast<std::size_t>(*x.label);
}

}  // namespace

double supervised_class_loss(const Model& model, const Example& x, std::size_t label) {
  const std::size_t K = model.config.num_classes;
  if (label >= K)
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(K) + ")");
  const EncodeResult enc = model.encoder.forward(std::span<const Example>(&x, 1));
  const std::vector<double> f = logits(model.prior, enc.mean.row(0));
  return log_sum_exp(f) - f[label];
}

double supervised_loss_batch(Model& model, std::span<const Example> xs) {
  require(!xs.empty(), "supervised loss: empty batch");
  const std::size_t K = model.config.num_classes;
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  std::vector<std::size_t> labels;
  for (const auto& x : xs) labels.push_back(checked_label(x, K));

  const EncodeResult enc = model.encoder.forward(xs);
  const EnergyEval ev = evaluate_energy(model.prior, enc.mean);
  double ce = 0.0;
  Matrix dlogits = ev.probs;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    ce += ev.energy[b] - ev.logits(b, labels[b]);
    dlogits(b, labels[b]) -= 1.0;
  }
  for (double& v : dlogits.flat()) v *= inv_n;
  const Matrix dz = backprop_logits(model.prior, ev, dlogits, true);
  model.encoder.backward(enc, dz, Matrix(dz.rows(), dz.cols(), 0.0));
  return ce * inv_n;
}

}  // namespace svebm
