#include "svebm/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "svebm/errors.hpp"
#include "svebm/kernels.hpp"

namespace svebm {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

namespace {
const std::vector<std::string> kReserved{"<pad>", "<bos>", "<eos>", "<unk>"};

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}
}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : kReserved) add(t);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumReserved || !std::equal(kReserved.begin(), kReserved.end(), tokens.begin()))
    throw DataError("vocabulary must start with the reserved tokens <pad> <bos> <eos> <unk>");
  Vocabulary v;
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

int Vocabulary::add(std::string_view token) {
  const std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(key);
  index_.emplace(key, id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

// ---------------------------------------------------------------------------
// GaussianDecoder
// ---------------------------------------------------------------------------

GaussianDecoder::GaussianDecoder(const DecoderConfig& cfg) : cfg_(cfg) {
  require(cfg.observation_std > 0.0, "GaussianDecoder: observation std must be > 0");
  net_ = Mlp("decoder", MlpSpec{cfg.latent_dim, cfg.hidden, cfg.output_dim, cfg.activation, false});
}

void GaussianDecoder::init(Rng& rng) { net_.init(rng); }

std::vector<double> GaussianDecoder::forward(std::span<const Example> xs, const Matrix& z,
                                             Tape& tape) const {
  require(z.rows() == xs.size(), "GaussianDecoder: batch size mismatch");
  const std::size_t D = cfg_.output_dim;
  tape.target.resize(xs.size(), D);
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto* p = std::get_if<PointExample>(&xs[b].x);
    if (p == nullptr) throw DataError("Gaussian decoder expects points");
    if (p->coords.size() != D) throw DataError("point dimension mismatch");
    std::copy(p->coords.begin(), p->coords.end(), tape.target.row(b).begin());
  }
  tape.mean = net_.forward(z, &tape.net);
  const double var = cfg_.observation_std * cfg_.observation_std;
  const double log_norm = -0.5 * static_cast<double>(D) * std::log(2.0 * std::numbers::pi * var);
  std::vector<double> ll(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) {
    double sq = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double d = tape.target(b, j) - tape.mean(b, j);
      sq += d * d;
    }
    ll[b] = log_norm - 0.5 * sq / var;
  }
  return ll;
}

Matrix GaussianDecoder::backward(const Tape& tape, std::span<const double> dll, bool need_dz,
                                 bool accumulate) {
  const double var = cfg_.observation_std * cfg_.observation_std;
  Matrix dmean(tape.mean.rows(), tape.mean.cols());
  for (std::size_t b = 0; b < dmean.rows(); ++b)
    for (std::size_t j = 0; j < dmean.cols(); ++j)
      dmean(b, j) = dll[b] * (tape.target(b, j) - tape.mean(b, j)) / var;
  return net_.backward(tape.net, dmean, need_dz, accumulate);
}

std::vector<Observation> GaussianDecoder::sample(const Matrix& z, const SampleOptions& opt,
                                                 Rng& rng) const {
  const Matrix m = net_.forward(z);
  std::vector<Observation> out;
  out.reserve(z.rows());
  for (std::size_t b = 0; b < z.rows(); ++b) {
    PointExample p;
    p.coords.assign(m.row(b).begin(), m.row(b).end());
    if (opt.add_noise)
      for (double& c : p.coords) c += cfg_.observation_std * rng.normal();
    out.emplace_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MultinomialDecoder
// ---------------------------------------------------------------------------

MultinomialDecoder::MultinomialDecoder(const DecoderConfig& cfg) : cfg_(cfg) {
  net_ = Mlp("decoder", MlpSpec{cfg.latent_dim, cfg.hidden, cfg.output_dim, cfg.activation, false});
}

void MultinomialDecoder::init(Rng& rng) { net_.init(rng); }

std::vector<double> MultinomialDecoder::forward(std::span<const Example> xs, const Matrix& z,
                                                Tape& tape) const {
  require(z.rows() == xs.size(), "MultinomialDecoder: batch size mismatch");
  const std::size_t V = cfg_.output_dim;
  tape.counts.resize(xs.size(), V);
  tape.totals.assign(xs.size(), 0.0);
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto* d = std::get_if<DocumentExample>(&xs[b].x);
    if (d == nullptr) throw DataError("multinomial decoder expects documents");
    for (const auto& tc : d->counts) {
      if (tc.id < 0 || static_cast<std::size_t>(tc.id) >= V)
        throw DataError("token id " + std::to_string(tc.id) + " outside vocabulary");
      if (tc.count < 0) throw DataError("negative token count");
      tape.counts(b, static_cast<std::size_t>(tc.id)) += tc.count;
      tape.totals[b] += tc.count;
    }
    if (tape.totals[b] < 1.0) throw DataError("document has no tokens");
  }
  const Matrix lg = net_.forward(z, &tape.net);
  tape.probs = softmax_rows(lg);
  std::vector<double> ll(xs.size(), 0.0);
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const double lse = log_sum_exp(lg.row(b));
    for (std::size_t w = 0; w < V; ++w)
      if (tape.counts(b, w) != 0.0) ll[b] += tape.counts(b, w) * (lg(b, w) - lse);
  }
  return ll;
}

Matrix MultinomialDecoder::backward(const Tape& tape, std::span<const double> dll, bool need_dz,
                                    bool accumulate) {
  Matrix dlogits(tape.probs.rows(), tape.probs.cols());
  for (std::size_t b = 0; b < dlogits.rows(); ++b)
    for (std::size_t w = 0; w < dlogits.cols(); ++w)
      dlogits(b, w) = dll[b] * (tape.counts(b, w) - tape.totals[b] * tape.probs(b, w));
  return net_.backward(tape.net, dlogits, need_dz, accumulate);
}

std::vector<Observation> MultinomialDecoder::sample(const Matrix& z, const SampleOptions& opt,
                                                    Rng& rng) const {
  require(opt.temperature > 0.0, "sampling temperature must be > 0");
  Matrix lg = net_.forward(z);
  std::vector<Observation> out;
  for (std::size_t b = 0; b < z.rows(); ++b) {
    auto row = lg.row(b);
    for (double& v : row) v /= opt.temperature;
    softmax_inplace(row);
    std::vector<int> counts(cfg_.output_dim, 0);
    for (std::size_t i = 0; i < opt.document_length; ++i) {
      const std::size_t w = opt.greedy ? argmax_lowest(row) : rng.categorical(row);
      ++counts[w];
    }
    DocumentExample d;
    for (std::size_t w = 0; w < counts.size(); ++w)
      if (counts[w] > 0) d.counts.push_back({static_cast<int>(w), counts[w]});
    out.emplace_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// GruDecoder
// ---------------------------------------------------------------------------

GruDecoder::GruDecoder(const DecoderConfig& cfg)
    : cfg_(cfg),
      embed_("decoder.embed", cfg.output_dim, cfg.embed_dim),
      init_("decoder.init", cfg.latent_dim, cfg.rnn_hidden),
      rnn_("decoder.gru", cfg.embed_dim + cfg.latent_dim, cfg.rnn_hidden),
      out_("decoder.out", cfg.rnn_hidden, cfg.output_dim) {
  require(cfg.output_dim > Vocabulary::kNumReserved, "GruDecoder: vocabulary too small");
}

void GruDecoder::init(Rng& rng) {
  embed_.init(rng);
  init_.init(rng);
  rnn_.init(rng);
  out_.init(rng);
}

std::vector<double> GruDecoder::forward(std::span<const Example> xs, const Matrix& z,
                                        Tape& tape) const {
  const std::size_t B = xs.size();
  require(z.rows() == B && z.cols() == cfg_.latent_dim, "GruDecoder: latent batch shape mismatch");
  std::vector<const std::vector<int>*> seqs(B);
  std::size_t max_tokens = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto* s = std::get_if<SequenceExample>(&xs[b].x);
    if (s == nullptr) throw DataError("GRU decoder expects token sequences");
    if (s->tokens.size() > cfg_.max_len)
      throw DataError("sequence of length " + std::to_string(s->tokens.size()) +
                      " exceeds maximum length " + std::to_string(cfg_.max_len));
    seqs[b] = &s->tokens;
    max_tokens = std::max(max_tokens, s->tokens.size());
  }
  const std::size_t T = max_tokens + 1;  // content tokens plus EOS

  tape.z = z;
  tape.h0_pre = init_.forward(z);
  tape.h0 = tape.h0_pre;
  for (double& v : tape.h0.flat()) v = std::tanh(v);

  tape.prev_ids.assign(T, std::vector<int>(B, Vocabulary::kPad));
  tape.masks.assign(T, std::vector<double>(B, 0.0));
  tape.rows.clear();
  tape.targets.clear();
  std::vector<Matrix> inputs(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto& s = *seqs[b];
      if (t <= s.size()) {
        tape.masks[t][b] = 1.0;
        tape.prev_ids[t][b] = t == 0 ? Vocabulary::kBos : s[t - 1];
        tape.rows.emplace_back(t, b);
        tape.targets.push_back(t < s.size() ? s[t] : Vocabulary::kEos);
      }
    }
    inputs[t] = hconcat(embed_.lookup(tape.prev_ids[t]), z);
  }
  for (int target : tape.targets)
    if (target < 0 || static_cast<std::size_t>(target) >= cfg_.output_dim)
      throw DataError("token id " + std::to_string(target) + " outside vocabulary");

  const auto hs = rnn_.forward(inputs, tape.h0, tape.masks, &tape.rnn);
  tape.out_in.resize(tape.rows.size(), cfg_.rnn_hidden);
  for (std::size_t i = 0; i < tape.rows.size(); ++i) {
    const auto [t, b] = tape.rows[i];
    std::copy(hs[t].row(b).begin(), hs[t].row(b).end(), tape.out_in.row(i).begin());
  }
  const Matrix lg = out_.forward(tape.out_in);
  tape.probs = softmax_rows(lg);
  std::vector<double> ll(B, 0.0);
  for (std::size_t i = 0; i < tape.rows.size(); ++i) {
    const std::size_t b = tape.rows[i].second;
    ll[b] += lg(i, static_cast<std::size_t>(tape.targets[i])) - log_sum_exp(lg.row(i));
  }
  return ll;
}

Matrix GruDecoder::backward(const Tape& tape, std::span<const double> dll, bool need_dz,
                            bool accumulate) {
  const std::size_t B = tape.z.rows();
  const std::size_t H = cfg_.rnn_hidden;
  const std::size_t E = cfg_.embed_dim;
  const std::size_t T = tape.masks.size();

  Matrix dlogits = tape.probs;
  for (std::size_t i = 0; i < tape.rows.size(); ++i) {
    const double g = dll[tape.rows[i].second];
    auto row = dlogits.row(i);
    for (double& v : row) v *= -g;
    row[static_cast<std::size_t>(tape.targets[i])] += g;
  }
  Matrix dout_in;
  out_.backward(tape.out_in, dlogits, &dout_in, accumulate);

  std::vector<Matrix> dh_out(T, Matrix(B, H, 0.0));
  for (std::size_t i = 0; i < tape.rows.size(); ++i) {
    const auto [t, b] = tape.rows[i];
    kernels::axpy(1.0, dout_in.row(i), dh_out[t].row(b));
  }
  std::vector<Matrix> dinputs;
  Matrix dh0;
  rnn_.backward(tape.rnn, dh_out, &dinputs, &dh0, accumulate);

  Matrix dz(B, cfg_.latent_dim, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix demb(B, E);
    for (std::size_t b = 0; b < B; ++b) {
      auto src = dinputs[t].row(b);
      std::copy_n(src.begin(), E, demb.row(b).begin());
      for (std::size_t j = 0; j < cfg_.latent_dim; ++j) dz(b, j) += src[E + j];
    }
    if (accumulate) embed_.backward(tape.prev_ids[t], demb);
  }
  Matrix dpre = dh0;
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    const double h = tape.h0.data()[i];
    dpre.data()[i] *= 1.0 - h * h;
  }
  Matrix dz_init;
  init_.backward(tape.z, dpre, need_dz ? &dz_init : nullptr, accumulate);
  if (!need_dz) return {};
  for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] += dz_init.data()[i];
  return dz;
}

std::vector<Observation> GruDecoder::sample(const Matrix& z, const SampleOptions& opt,
                                            Rng& rng) const {
  require(opt.temperature > 0.0, "sampling temperature must be > 0");
  require(z.cols() == cfg_.latent_dim, "GruDecoder::sample: latent dimension mismatch");
  const std::size_t B = z.rows();
  Matrix h = init_.forward(z);
  for (double& v : h.flat()) v = std::tanh(v);
  std::vector<int> prev(B, Vocabulary::kBos);
  std::vector<bool> done(B, false);
  std::vector<SequenceExample> seqs(B);
  const std::vector<double> mask(B, 1.0);
  std::size_t active = B;
  for (std::size_t t = 0; t <= opt.max_len && active > 0; ++t) {
    const Matrix x = hconcat(embed_.lookup(prev), z);
    h = rnn_.step(x, h, mask, nullptr);
    Matrix lg = out_.forward(h);
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) continue;
      auto row = lg.row(b);
      std::size_t tok;
      if (opt.greedy) {
        tok = argmax_lowest(row);
      } else {
        for (double& v : row) v /= opt.temperature;
        softmax_inplace(row);
        tok = rng.categorical(row);
      }
      // Reaching max_len content tokens ends the sequence as if EOS was drawn.
      if (static_cast<int>(tok) == Vocabulary::kEos || t == opt.max_len) {
        done[b] = true;
        --active;
        continue;
      }
      seqs[b].tokens.push_back(static_cast<int>(tok));
      prev[b] = static_cast<int>(tok);
    }
  }
  std::vector<Observation> out;
  out.reserve(B);
  for (auto& s : seqs) out.emplace_back(std::move(s));
  return out;
}

void GruDecoder::collect(ParamRefs& out) {
  embed_.collect(out);
  init_.collect(out);
  rnn_.collect(out);
  out_.collect(out);
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

Decoder::Decoder(const DecoderConfig& cfg) : cfg_(cfg) {
  switch (cfg.modality) {
    case Modality::Points:
      impl_ = GaussianDecoder(cfg);
      break;
    case Modality::Document:
      impl_ = MultinomialDecoder(cfg);
      break;
    case Modality::Sequence:
      impl_ = GruDecoder(cfg);
      break;
  }
}

void Decoder::init(Rng& rng) {
  std::visit([&](auto& d) { d.init(rng); }, impl_);
}

DecodeResult Decoder::forward(std::span<const Example> xs, const Matrix& z) const {
  DecodeResult res;
  std::visit(
      [&](const auto& d) {
        using Tape = typename std::decay_t<decltype(d)>::Tape;
        Tape tape;
        res.loglik = d.forward(xs, z, tape);
        res.tape = std::move(tape);
      },
      impl_);
  return res;
}

Matrix Decoder::backward(const DecodeResult& res, std::span<const double> dll, bool need_dz) {
  require(dll.size() == res.loglik.size(), "Decoder::backward: gradient length mismatch");
  return std::visit(
      [&](auto& d) {
        using Tape = typename std::decay_t<decltype(d)>::Tape;
        return d.backward(std::get<Tape>(res.tape), dll, need_dz, true);
      },
      impl_);
}

Matrix Decoder::input_gradient(const DecodeResult& res, std::span<const double> dll) const {
  require(dll.size() == res.loglik.size(), "Decoder::input_gradient: gradient length mismatch");
  // The backward passes only write parameter gradients when accumulate is set.
  auto& self = const_cast<Decoder&>(*this);
  return std::visit(
      [&](auto& d) {
        using Tape = typename std::decay_t<decltype(d)>::Tape;
        return d.backward(std::get<Tape>(res.tape), dll, true, false);
      },
      self.impl_);
}

std::vector<Observation> Decoder::sample(const Matrix& z, const SampleOptions& opt, Rng& rng) const {
  return std::visit([&](const auto& d) { return d.sample(z, opt, rng); }, impl_);
}

void Decoder::collect(ParamRefs& out) {
  std::visit([&](auto& d) { d.collect(out); }, impl_);
}

ParamRefs Decoder::parameters() {
  ParamRefs out;
  collect(out);
  return out;
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

double seq_log_likelihood(const Decoder& params, const SequenceExample& x, std::span<const double> z) {
  if (x.tokens.empty()) throw DataError("seq_log_likelihood: empty sequence");
  const Example ex{x, std::nullopt};
  return params.forward(std::span<const Example>(&ex, 1), row_matrix(z)).loglik[0];
}

SequenceExample seq_sample(const Decoder& params, std::span<const double> z, std::size_t max_len,
                           double temperature, Rng& rng, bool greedy) {
  SampleOptions opt;
  opt.max_len = max_len;
  opt.temperature = temperature;
  opt.greedy = greedy;
  auto out = params.sample(row_matrix(z), opt, rng);
  return std::get<SequenceExample>(out.front());
}

double doc_log_likelihood(const Decoder& params, const DocumentExample& x, std::span<const double> z) {
  const Example ex{x, std::nullopt};
  return params.forward(std::span<const Example>(&ex, 1), row_matrix(z)).loglik[0];
}

}  // namespace svebm
