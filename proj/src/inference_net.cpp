#include "svebm/inference_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "svebm/errors.hpp"

namespace svebm {

namespace {

void squash_logvar(const Matrix& raw, Matrix& logvar) {
  logvar = raw;
  for (double& v : logvar.flat()) v = kLogVarBound * std::tanh(v / kLogVarBound);
}

Matrix squash_logvar_grad(const Matrix& raw, const Matrix& dlogvar) {
  Matrix g = dlogvar;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = std::tanh(raw.data()[i] / kLogVarBound);
    g.data()[i] *= 1.0 - t * t;
  }
  return g;
}

void add_into(Matrix& acc, const Matrix& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += x.data()[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// MlpEncoder
// ---------------------------------------------------------------------------

MlpEncoder::MlpEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  require(cfg.input_dim >= 1, "MlpEncoder: input dimension must be >= 1");
  std::size_t trunk = cfg.input_dim;
  if (!cfg.hidden.empty()) {
    std::vector<std::size_t> inner(cfg.hidden.begin(), cfg.hidden.end() - 1);
    body_ = Mlp("encoder.body", MlpSpec{cfg.input_dim, inner, cfg.hidden.back(), cfg.activation, true});
    trunk = cfg.hidden.back();
  }
  mean_head_ = Linear("encoder.mean", trunk, cfg.latent_dim);
  logvar_head_ = Linear("encoder.logvar", trunk, cfg.latent_dim);
}

void MlpEncoder::init(Rng& rng) {
  if (has_body()) body_.init(rng);
  mean_head_.init(rng);
  logvar_head_.init(rng, 0.1);
}

Matrix MlpEncoder::featurize(std::span<const Example> xs) const {
  Matrix f(xs.size(), cfg_.input_dim, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (const auto* p = std::get_if<PointExample>(&xs[i].x)) {
      if (p->coords.size() != cfg_.input_dim)
        throw DataError("point has " + std::to_string(p->coords.size()) + " coordinates, expected " +
                        std::to_string(cfg_.input_dim));
      std::copy(p->coords.begin(), p->coords.end(), f.row(i).begin());
    } else if (const auto* d = std::get_if<DocumentExample>(&xs[i].x)) {
      const int total = d->total();
      if (total < 1) throw DataError("document has no tokens");
      for (const auto& tc : d->counts) {
        if (tc.id < 0 || static_cast<std::size_t>(tc.id) >= cfg_.input_dim)
          throw DataError("token id " + std::to_string(tc.id) + " outside vocabulary of size " +
                          std::to_string(cfg_.input_dim));
        f(i, static_cast<std::size_t>(tc.id)) += static_cast<double>(tc.count) / total;
      }
    } else {
      throw DataError("MLP encoder cannot read token sequences");
    }
  }
  return f;
}

void MlpEncoder::forward(std::span<const Example> xs, Matrix& mean, Matrix& logvar,
                         Tape& tape) const {
  tape.features = featurize(xs);
  tape.trunk = has_body() ? body_.forward(tape.features, &tape.body) : tape.features;
  mean = mean_head_.forward(tape.trunk);
  tape.raw_logvar = logvar_head_.forward(tape.trunk);
  squash_logvar(tape.raw_logvar, logvar);
}

void MlpEncoder::backward(const Tape& tape, const Matrix& dmean, const Matrix& dlogvar) {
  const Matrix draw = squash_logvar_grad(tape.raw_logvar, dlogvar);
  if (!has_body()) {
    mean_head_.backward(tape.trunk, dmean, nullptr);
    logvar_head_.backward(tape.trunk, draw, nullptr);
    return;
  }
  Matrix dtrunk, dtrunk2;
  mean_head_.backward(tape.trunk, dmean, &dtrunk);
  logvar_head_.backward(tape.trunk, draw, &dtrunk2);
  add_into(dtrunk, dtrunk2);
  body_.backward(tape.body, dtrunk, false);
}

void MlpEncoder::collect(ParamRefs& out) {
  if (has_body()) body_.collect(out);
  mean_head_.collect(out);
  logvar_head_.collect(out);
}

// ---------------------------------------------------------------------------
// GruEncoder
// ---------------------------------------------------------------------------

GruEncoder::GruEncoder(const EncoderConfig& cfg)
    : cfg_(cfg),
      embed_("encoder.embed", cfg.vocab_size, cfg.embed_dim),
      rnn_("encoder.gru", cfg.embed_dim, cfg.rnn_hidden),
      mean_head_("encoder.mean", cfg.rnn_hidden, cfg.latent_dim),
      logvar_head_("encoder.logvar", cfg.rnn_hidden, cfg.latent_dim) {
  require(cfg.vocab_size >= 1, "GruEncoder: empty vocabulary");
}

void GruEncoder::init(Rng& rng) {
  embed_.init(rng);
  rnn_.init(rng);
  mean_head_.init(rng);
  logvar_head_.init(rng, 0.1);
}

void GruEncoder::forward(std::span<const Example> xs, Matrix& mean, Matrix& logvar,
                         Tape& tape) const {
  const std::size_t B = xs.size();
  std::size_t T = 0;
  std::vector<const std::vector<int>*> seqs(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto* s = std::get_if<SequenceExample>(&xs[b].x);
    if (s == nullptr) throw DataError("GRU encoder expects token sequences");
    seqs[b] = &s->tokens;
    T = std::max(T, s->tokens.size());
  }
  tape.step_ids.assign(T, std::vector<int>(B, 0));
  tape.masks.assign(T, std::vector<double>(B, 0.0));
  std::vector<Matrix> inputs(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      if (t < seqs[b]->size()) {
        tape.step_ids[t][b] = (*seqs[b])[t];
        tape.masks[t][b] = 1.0;
      }
    }
    inputs[t] = embed_.lookup(tape.step_ids[t]);
  }
  const Matrix h0(B, cfg_.rnn_hidden, 0.0);
  auto hs = rnn_.forward(inputs, h0, tape.masks, &tape.rnn);
  tape.final_h = T > 0 ? hs.back() : h0;
  mean = mean_head_.forward(tape.final_h);
  tape.raw_logvar = logvar_head_.forward(tape.final_h);
  squash_logvar(tape.raw_logvar, logvar);
}

void GruEncoder::backward(const Tape& tape, const Matrix& dmean, const Matrix& dlogvar) {
  const Matrix draw = squash_logvar_grad(tape.raw_logvar, dlogvar);
  Matrix dh, dh2;
  mean_head_.backward(tape.final_h, dmean, &dh);
  logvar_head_.backward(tape.final_h, draw, &dh2);
  add_into(dh, dh2);
  const std::size_t T = tape.rnn.steps.size();
  if (T == 0) return;
  std::vector<Matrix> dh_out(T);
  dh_out.back() = std::move(dh);
  std::vector<Matrix> dinputs;
  rnn_.backward(tape.rnn, dh_out, &dinputs, nullptr);
  for (std::size_t t = 0; t < T; ++t) embed_.backward(tape.step_ids[t], dinputs[t]);
}

void GruEncoder::collect(ParamRefs& out) {
  embed_.collect(out);
  rnn_.collect(out);
  mean_head_.collect(out);
  logvar_head_.collect(out);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

Encoder::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  require(cfg.latent_dim >= 1, "Encoder: latent dimension must be >= 1");
  if (cfg.modality == Modality::Sequence)
    impl_ = GruEncoder(cfg);
  else
    impl_ = MlpEncoder(cfg);
}

void Encoder::init(Rng& rng) {
  std::visit([&](auto& e) { e.init(rng); }, impl_);
}

EncodeResult Encoder::forward(std::span<const Example> xs) const {
  EncodeResult res;
  std::visit(
      [&](const auto& e) {
        using Tape = typename std::decay_t<decltype(e)>::Tape;
        Tape tape;
        e.forward(xs, res.mean, res.logvar, tape);
        res.tape = std::move(tape);
      },
      impl_);
  return res;
}

void Encoder::backward(const EncodeResult& res, const Matrix& dmean, const Matrix& dlogvar) {
  std::visit(
      [&](auto& e) {
        using Tape = typename std::decay_t<decltype(e)>::Tape;
        e.backward(std::get<Tape>(res.tape), dmean, dlogvar);
      },
      impl_);
}

void Encoder::collect(ParamRefs& out) {
  std::visit([&](auto& e) { e.collect(out); }, impl_);
}

ParamRefs Encoder::parameters() {
  ParamRefs out;
  collect(out);
  return out;
}

void Encoder::zero_heads() {
  std::visit(
      [](auto& e) {
        for (Linear* l : {&e.mean_head(), &e.logvar_head()}) {
          std::fill(l->weight.value.begin(), l->weight.value.end(), 0.0);
          std::fill(l->bias.value.begin(), l->bias.value.end(), 0.0);
        }
      },
      impl_);
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

GaussianPosterior encode(const Encoder& params, const Example& x) {
  const EncodeResult r = params.forward(std::span<const Example>(&x, 1));
  return {r.mean.storage(), r.logvar.storage()};
}

std::vector<double> reparam_sample(const GaussianPosterior& post, std::span<const double> noise) {
  require(noise.size() == post.mean.size() && post.logvar.size() == post.mean.size(),
          "reparam_sample: dimension mismatch");
  std::vector<double> z(post.mean.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = post.mean[i] + std::exp(0.5 * post.logvar[i]) * noise[i];
  return z;
}

std::vector<double> reparam_sample(const GaussianPosterior& post, Rng& rng) {
  std::vector<double> e(post.mean.size());
  rng.fill_normal(e);
  return reparam_sample(post, e);
}

double kl_to_reference(const GaussianPosterior& post) {
  require(post.logvar.size() == post.mean.size(), "kl_to_reference: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < post.mean.size(); ++i) {
    const double lv = post.logvar[i];
    kl += post.mean[i] * post.mean[i] + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * kl;
}

std::vector<double> kl_to_reference(const Matrix& mean, const Matrix& logvar) {
  require(mean.rows() == logvar.rows() && mean.cols() == logvar.cols(),
          "kl_to_reference: shape mismatch");
  std::vector<double> out(mean.rows());
  for (std::size_t r = 0; r < mean.rows(); ++r) {
    double kl = 0.0;
    for (std::size_t c = 0; c < mean.cols(); ++c) {
      const double lv = logvar(r, c);
      kl += mean(r, c) * mean(r, c) + std::exp(lv) - 1.0 - lv;
    }
    out[r] = 0.5 * kl;
  }
  return out;
}

double log_gaussian_density(std::span<const double> z, std::span<const double> mean,
                            std::span<const double> logvar) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - mean[i];
    s += -0.5 * (std::log(2.0 * std::numbers::pi) + logvar[i] + d * d * std::exp(-logvar[i]));
  }
  return s;
}

}  // namespace svebm
