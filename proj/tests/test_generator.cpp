#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "svebm/errors.hpp"
#include "svebm/generator.hpp"
#include "test_util.hpp"

using namespace svebm;
using namespace svebm::test;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Log-probabilities of the next token after BOS + prefix, computed directly
/// from the raw weights.
std::vector<double> reference_next(GruDecoder& g, const std::vector<int>& prefix, std::span<const double> z) {
  const std::size_t H = g.rnn().hidden_dim();
  const std::size_t E = g.embedding().dim();
  const std::size_t d = z.size();
  const std::size_t I = E + d;
  std::vector<double> h(H);
  for (std::size_t j = 0; j < H; ++j) {
    double s = g.init_map().bias.value[j];
    for (std::size_t k = 0; k < d; ++k) s += g.init_map().weight.value[j * d + k] * z[k];
    h[j] = std::tanh(s);
  }
  const auto& wih = g.rnn().w_ih.value;
  const auto& whh = g.rnn().w_hh.value;
  const auto& bih = g.rnn().b_ih.value;
  const auto& bhh = g.rnn().b_hh.value;
  std::vector<int> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), prefix.begin(), prefix.end());
  for (int prev : inputs) {
    std::vector<double> x(I);
    for (std::size_t k = 0; k < E; ++k) x[k] = g.embedding().table.value[static_cast<std::size_t>(prev) * E + k];
    for (std::size_t k = 0; k < d; ++k) x[E + k] = z[k];
    std::vector<double> gi(3 * H), gh(3 * H);
    for (std::size_t r = 0; r < 3 * H; ++r) {
      gi[r] = bih[r];
      gh[r] = bhh[r];
      for (std::size_t k = 0; k < I; ++k) gi[r] += wih[r * I + k] * x[k];
      for (std::size_t k = 0; k < H; ++k) gh[r] += whh[r * H + k] * h[k];
    }
    std::vector<double> hn(H);
    for (std::size_t j = 0; j < H; ++j) {
      const double rg = sigmoid(gi[j] + gh[j]);
      const double ug = sigmoid(gi[H + j] + gh[H + j]);
      const double ng = std::tanh(gi[2 * H + j] + rg * gh[2 * H + j]);
      hn[j] = (1.0 - ug) * ng + ug * h[j];
    }
    h = hn;
  }
  const std::size_t V = g.output().out_dim();
  std::vector<double> lg(V);
  for (std::size_t v = 0; v < V; ++v) {
    lg[v] = g.output().bias.value[v];
    for (std::size_t k = 0; k < H; ++k) lg[v] += g.output().weight.value[v * H + k] * h[k];
  }
  double mx = lg[0];
  for (double v : lg) mx = std::max(mx, v);
  double se = 0.0;
  for (double v : lg) se += std::exp(v - mx);
  for (double& v : lg) v -= mx + std::log(se);
  return lg;
}

double reference_seq_loglik(GruDecoder& g, const std::vector<int>& tokens, std::span<const double> z) {
  double ll = 0.0;
  std::vector<int> prefix;
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    const int target = t < tokens.size() ? tokens[t] : Vocabulary::kEos;
    ll += reference_next(g, prefix, z)[static_cast<std::size_t>(target)];
    prefix.push_back(target);
  }
  return ll;
}

void zero_param(Parameter& p) { std::fill(p.value.begin(), p.value.end(), 0.0); }

}  // namespace

TEST_CASE("vocabulary") {
  Vocabulary v;
  CHECK(v.size() == Vocabulary::kNumReserved);
  const int a = v.add("alpha");
  CHECK(v.add("alpha") == a);
  CHECK(v.id("missing") == Vocabulary::kUnk);
  const auto ids = v.encode("alpha beta");
  CHECK(ids == std::vector<int>{a, Vocabulary::kUnk});
  CHECK(v.decode(std::vector<int>{a, a}) == "alpha alpha");
  const auto dir = scratch_dir("vocab");
  v.save(dir / "v.txt");
  CHECK(Vocabulary::load(dir / "v.txt") == v);
}

TEST_CASE("sequence likelihood: uniform predictive") {
  Model m = make_model(tiny_sequence_config(10), 1);
  zero_param(m.decoder.gru()->output().weight);
  zero_param(m.decoder.gru()->output().bias);
  const SequenceExample x{{4, 5, 6}};
  const std::vector<double> z{0.3, -0.2};
  CHECK(seq_log_likelihood(m.decoder, x, z) == doctest::Approx(4.0 * -std::log(10.0)).epsilon(1e-12));
  CHECK(seq_log_likelihood(m.decoder, x, z) == doctest::Approx(-9.2103).epsilon(1e-5));
}

TEST_CASE("sequence likelihood: independence of z") {
  Model m = make_model(tiny_sequence_config(), 2);
  GruDecoder& g = *m.decoder.gru();
  zero_param(g.init_map().weight);
  const std::size_t I = g.rnn().input_dim(), E = g.embedding().dim();
  for (std::size_t r = 0; r < 3 * g.rnn().hidden_dim(); ++r)
    for (std::size_t k = E; k < I; ++k) g.rnn().w_ih.value[r * I + k] = 0.0;
  const SequenceExample x{{4, 7, 5}};
  CHECK(seq_log_likelihood(m.decoder, x, std::vector<double>{1.0, 2.0}) ==
        seq_log_likelihood(m.decoder, x, std::vector<double>{-3.0, 0.5}));
}

TEST_CASE("sequence likelihood matches a hand-rolled scorer") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Model m = make_model(tiny_sequence_config(), 100 + s);
    Rng rng(200 + s);
    const Example x = random_example(m.config, rng);
    const std::vector<double> z{rng.normal(), rng.normal()};
    const auto& tokens = std::get<SequenceExample>(x.x).tokens;
    CHECK(seq_log_likelihood(m.decoder, std::get<SequenceExample>(x.x), z) ==
          doctest::Approx(reference_seq_loglik(*m.decoder.gru(), tokens, z)).epsilon(1e-12));
  }
}

TEST_CASE("batched decoding agrees with single examples of mixed length") {
  Model m = make_model(tiny_sequence_config(), 3);
  Rng rng(4);
  std::vector<Example> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_example(m.config, rng));
  const Matrix z = random_matrix(6, 2, rng);
  const DecodeResult r = m.decoder.forward(xs, z);
  for (std::size_t i = 0; i < xs.size(); ++i)
    CHECK(r.loglik[i] == doctest::Approx(seq_log_likelihood(m.decoder, std::get<SequenceExample>(xs[i].x), z.row(i)))
                             .epsilon(1e-12));
}

TEST_CASE("sequence sampling") {
  Model m = make_model(tiny_sequence_config(), 5);
  GruDecoder& g = *m.decoder.gru();
  zero_param(g.output().weight);
  zero_param(g.output().bias);
  g.output().bias.value[Vocabulary::kEos] = 100.0;
  Rng rng(6);
  const std::vector<double> z{0.1, 0.2};
  CHECK(seq_sample(m.decoder, z, 10, 1.0, rng).tokens.empty());

  // greedy decoding equals step-by-step argmax of the reference scorer
  for (std::uint64_t seed = 7; seed < 12; ++seed) {
    Model r = make_model(tiny_sequence_config(), seed);
    const std::size_t max_len = 6;
    std::vector<int> expect;
    while (expect.size() < max_len) {
      const auto lp = reference_next(*r.decoder.gru(), expect, z);
      const auto best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      if (best == Vocabulary::kEos) break;
      expect.push_back(best);
    }
    CHECK(seq_sample(r.decoder, z, max_len, 1.0, rng, true).tokens == expect);
  }
}

TEST_CASE("unigram-forced sampling frequencies") {
  Model m = make_model(tiny_sequence_config(), 8);
  GruDecoder& g = *m.decoder.gru();
  zero_param(g.output().weight);
  auto& b = g.output().bias.value;
  std::fill(b.begin(), b.end(), -60.0);
  b[Vocabulary::kEos] = std::log(0.1);
  b[4] = std::log(0.9 * 0.9);
  b[5] = std::log(0.9 * 0.1);
  Rng rng(9);
  const Matrix z(10000, 2);
  SampleOptions opt;
  opt.max_len = 500;
  double n4 = 0, n5 = 0, other = 0;
  for (const auto& o : m.decoder.sample(z, opt, rng))
    for (int t : std::get<SequenceExample>(o).tokens) (t == 4 ? n4 : t == 5 ? n5 : other) += 1;
  const double total = n4 + n5 + other;
  CHECK(other == 0);
  CHECK(std::abs(n4 / total - 0.9) < 0.02);
  CHECK(std::abs(n5 / total - 0.1) < 0.02);
  // mean content length of a geometric stop with p = 0.1
  CHECK(total / 10000.0 == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("document likelihood") {
  Model m = make_model(tiny_document_config(2), 10);
  auto ps = m.decoder.parameters();
  for (Parameter* p : ps) zero_param(*p);
  const DocumentExample x{{{0, 2}, {1, 1}}};
  const std::vector<double> z{0.4, 0.1};
  CHECK(doc_log_likelihood(m.decoder, x, z) == doctest::Approx(3.0 * -std::log(2.0)).epsilon(1e-12));
  CHECK(doc_log_likelihood(m.decoder, x, z) == doctest::Approx(-2.0794).epsilon(1e-4));

  Model r = make_model(tiny_document_config(), 11);
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    const Example e = random_example(r.config, rng);
    auto d = std::get<DocumentExample>(e.x);
    const std::vector<double> zz{rng.normal(), rng.normal()};
    const double ll = doc_log_likelihood(r.decoder, d, zz);
    // two affine layers with a swish between them, from the raw parameter arrays
    const auto P = r.decoder.parameters();
    std::vector<double> h(4), lg(7);
    for (std::size_t o = 0; o < 4; ++o) {
      double v = P[1]->value[o] + P[0]->value[o * 2] * zz[0] + P[0]->value[o * 2 + 1] * zz[1];
      h[o] = v / (1.0 + std::exp(-v));
    }
    for (std::size_t o = 0; o < 7; ++o) {
      lg[o] = P[3]->value[o];
      for (std::size_t k = 0; k < 4; ++k) lg[o] += P[2]->value[o * 4 + k] * h[k];
    }
    const double lse = log_sum_exp(lg);
    double direct = 0.0;
    for (const auto& tc : d.counts) direct += tc.count * (lg[static_cast<std::size_t>(tc.id)] - lse);
    CHECK(ll == doctest::Approx(direct).epsilon(1e-12));
    for (auto& tc : d.counts) tc.count *= 2;
    CHECK(doc_log_likelihood(r.decoder, d, zz) == doctest::Approx(2.0 * ll).epsilon(1e-12));
  }
}

TEST_CASE("gaussian point likelihood") {
  ModelConfig mc = tiny_points_config();
  Model m = make_model(mc, 13);
  Rng rng(14);
  const Example x = random_example(mc, rng);
  const Matrix z = random_matrix(1, 2, rng);
  const DecodeResult r = m.decoder.forward(std::span<const Example>(&x, 1), z);
  const Matrix mean = m.decoder.gaussian()->mean(z);
  const auto& c = std::get<PointExample>(x.x).coords;
  const double var = mc.observation_std * mc.observation_std;
  double expect = 0.0;
  for (std::size_t j = 0; j < 2; ++j)
    expect += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (c[j] - mean(0, j)) * (c[j] - mean(0, j)) / var;
  CHECK(r.loglik[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("decoder gradients match finite differences") {
  for (const ModelConfig& base : {tiny_points_config(), tiny_sequence_config(), tiny_document_config()}) {
    for (std::uint64_t s = 0; s < 34; ++s) {
      Model m = make_model(base, 300 + s);
      Rng rng(400 + s);
      std::vector<Example> xs;
      for (int i = 0; i < 3; ++i) xs.push_back(random_example(base, rng));
      Matrix z = random_matrix(3, base.latent_dim, rng);
      const std::vector<double> w{0.7, -1.1, 0.4};
      auto loss = [&] {
        const auto ll = m.decoder.forward(xs, z).loglik;
        return w[0] * ll[0] + w[1] * ll[1] + w[2] * ll[2];
      };
      ParamRefs ps = m.decoder.parameters();
      zero_grads(ps);
      const DecodeResult r = m.decoder.forward(xs, z);
      const Matrix dz = m.decoder.backward(r, w, true);
      CHECK(rel_error(flat_grads(ps), numeric_grad(ps, loss)) < 1e-3);
      std::vector<double> zv(z.flat().begin(), z.flat().end());
      const auto ndz = numeric_grad(zv, [&] {
        std::copy(zv.begin(), zv.end(), z.flat().begin());
        return loss();
      });
      CHECK(rel_error(dz.flat(), ndz) < 1e-3);
      const auto before = flat_grads(ps);
      CHECK(rel_error(m.decoder.input_gradient(r, w).flat(), ndz) < 1e-3);
      CHECK(flat_grads(ps) == before);
    }
  }
}

TEST_CASE("decoder rejects malformed input") {
  Model m = make_model(tiny_sequence_config(), 15);
  const Example too_long{SequenceExample{std::vector<int>(20, 4)}, std::nullopt};
  CHECK_THROWS_AS(m.decoder.forward(std::span<const Example>(&too_long, 1), Matrix(1, 2)), DataError);
  const Example bad_id{SequenceExample{{99}}, std::nullopt};
  CHECK_THROWS_AS(m.decoder.forward(std::span<const Example>(&bad_id, 1), Matrix(1, 2)), DataError);
}
