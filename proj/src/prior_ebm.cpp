#include "svebm/prior_ebm.hpp"

#include <cmath>
#include <numbers>

#include "svebm/errors.hpp"

namespace svebm {

EnergyParams::EnergyParams(const PriorConfig& cfg) : cfg_(cfg) {
  require(cfg.latent_dim >= 1, "EnergyParams: latent dimension must be >= 1");
  require(cfg.num_classes >= 2, "EnergyParams: number of classes must be >= 2");
  net_ = Mlp("prior", MlpSpec{cfg.latent_dim, cfg.hidden, cfg.num_classes, cfg.activation, false});
}

void EnergyParams::init(Rng& rng, double output_gain) { net_.init(rng, output_gain); }

ParamRefs EnergyParams::parameters() {
  ParamRefs out;
  collect(out);
  return out;
}

namespace {

void check_latent(const EnergyParams& params, std::size_t got) {
  if (got != params.latent_dim())
    throw ContractError("latent vector has length " + std::to_string(got) + ", expected " +
                        std::to_string(params.latent_dim()));
}

}  // namespace

std::vector<double> logits(const EnergyParams& params, std::span<const double> z) {
  check_latent(params, z.size());
  const Matrix out = params.net().forward(row_matrix(z));
  return out.storage();
}

double marginal_energy(const EnergyParams& params, std::span<const double> z) {
  return log_sum_exp(logits(params, z));
}

std::vector<double> symbol_posterior(const EnergyParams& params, std::span<const double> z) {
  auto p = logits(params, z);
  softmax_inplace(p);
  return p;
}

double log_standard_normal(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * sq - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

double unnormalized_log_prior(const EnergyParams& params, std::span<const double> z) {
  return marginal_energy(params, z) + log_standard_normal(z);
}

std::vector<double> grad_z_log_prior(const EnergyParams& params, std::span<const double> z) {
  check_latent(params, z.size());
  return grad_z_log_prior(params, row_matrix(z)).storage();
}

EnergyEval evaluate_energy(const EnergyParams& params, const Matrix& z) {
  check_latent(params, z.cols());
  EnergyEval ev;
  ev.logits = params.net().forward(z, &ev.tape);
  ev.probs = softmax_rows(ev.logits);
  ev.energy.resize(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) ev.energy[r] = log_sum_exp(ev.logits.row(r));
  return ev;
}

Matrix grad_z_log_prior(const EnergyParams& params, const Matrix& z) {
  const EnergyEval ev = evaluate_energy(params, z);
  // dF/dlogits = softmax; the Gaussian reference contributes -z.
  Matrix g = params.net().input_gradient(ev.tape, ev.probs);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] -= z.data()[i];
  return g;
}

Matrix grad_z_log_conditional_prior(const EnergyParams& params, const Matrix& z, std::size_t label) {
  require(label < params.num_classes(), "conditional prior: label out of range");
  check_latent(params, z.cols());
  Mlp::Tape tape;
  params.net().forward(z, &tape);
  Matrix onehot(z.rows(), params.num_classes(), 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) onehot(r, label) = 1.0;
  Matrix g = params.net().input_gradient(tape, onehot);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] -= z.data()[i];
  return g;
}

Matrix backprop_logits(EnergyParams& params, const EnergyEval& eval, const Matrix& dlogits,
                       bool need_dz) {
  return params.net().backward(eval.tape, dlogits, need_dz, true);
}

void accumulate_energy_grad(EnergyParams& params, const Matrix& z, double weight) {
  const EnergyEval ev = evaluate_energy(params, z);
  Matrix d = ev.probs;
  for (double& v : d.flat()) v *= weight;
  params.net().backward(ev.tape, d, false, true);
}

}  // namespace svebm
