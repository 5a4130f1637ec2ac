#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "svebm/errors.hpp"
#include "svebm/eval_metrics.hpp"
#include "test_util.hpp"

using namespace svebm;
using namespace svebm::test;

namespace {

/// Points model with identity encoder mean, identity decoder mean and a
/// linear energy head with the given weights.
Model identity_points_model(std::size_t K, std::vector<double> prior_w, double obs_std = 0.05) {
  ModelConfig mc;
  mc.modality = Modality::Points;
  mc.latent_dim = 2;
  mc.num_classes = K;
  mc.data_dim = 2;
  mc.prior_hidden = {};
  mc.encoder_hidden = {};
  mc.decoder_hidden = {};
  mc.activation = Activation::Identity;
  mc.observation_std = obs_std;
  Model m = make_model(mc, 1);
  m.encoder.zero_heads();
  auto enc = m.encoder.parameters();  // mean weight, mean bias, logvar weight, logvar bias
  enc[0]->value = {1, 0, 0, 1};
  enc[3]->value = {-6.0, -6.0};
  auto dec = m.decoder.parameters();
  dec[0]->value = {1, 0, 0, 1};
  dec[1]->value = {0, 0};
  m.prior.net().layer(0).weight.value = std::move(prior_w);
  std::fill(m.prior.net().layer(0).bias.value.begin(), m.prior.net().layer(0).bias.value.end(), 0.0);
  return m;
}

double entropy_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

}  // namespace

TEST_CASE("classify") {
  Model flat = make_model(tiny_points_config(2, 4), 1);
  zero_output_layer(flat.prior.net());
  Rng rng(2);
  const Example x = random_example(flat.config, rng);
  const Classification c = classify(flat, x);
  CHECK(c.index == 0);
  for (double p : c.probs) CHECK(p == doctest::Approx(0.25));

  // planted structure: class k sits along direction k
  Model m = identity_points_model(2, {8.0, 0.0, -8.0, 0.0});
  std::vector<Example> xs;
  for (int i = 0; i < 50; ++i) {
    const int label = static_cast<int>(rng.below(2));
    xs.push_back({PointExample{{(label == 0 ? 1.0 : -1.0) + 0.2 * rng.normal(), rng.normal()}}, label});
  }
  const auto pred = classify_batch(m, xs);
  CHECK(pred == true_labels(xs));

  // decoder parameters play no part
  Model other = m;
  for (Parameter* p : other.decoder.parameters())
    for (double& v : p->value) v = rng.normal();
  CHECK(classify_batch(other, xs) == pred);
  CHECK_THROWS_AS(true_labels(std::vector<Example>{{PointExample{{0.0, 0.0}}, std::nullopt}}), DataError);
}

TEST_CASE("homogeneity") {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  const std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
  CHECK(homogeneity(truth, relabeled) == doctest::Approx(1.0));
  CHECK(homogeneity(truth, std::vector<int>(6, 3)) == doctest::Approx(0.0));
  const std::vector<int> t4{0, 0, 1, 1}, p4{0, 1, 1, 1};
  const double expect = 1.0 - (0.75 * entropy_bits({1.0 / 3.0, 2.0 / 3.0})) / entropy_bits({0.5, 0.5});
  CHECK(homogeneity(t4, p4) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(homogeneity(t4, p4) == doctest::Approx(0.311278).epsilon(1e-6));
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    std::vector<int> t(30), p(30);
    for (auto& v : t) v = static_cast<int>(rng.below(3));
    for (auto& v : p) v = static_cast<int>(rng.below(4));
    const double h = homogeneity(t, p);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    std::vector<int> q = p;
    for (auto& v : q) v = 3 - v;  // permuted ids
    CHECK(homogeneity(t, q) == doctest::Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("matched accuracy") {
  const std::vector<int> truth{0, 1, 2, 2, 1, 0};
  CHECK(matched_accuracy(truth, std::vector<int>{2, 0, 1, 1, 0, 2}, 3, 3) == 1.0);
  // confusion ((3, 1), (0, 4))
  const std::vector<int> t{0, 0, 0, 0, 1, 1, 1, 1};
  const std::vector<int> p{0, 0, 0, 1, 1, 1, 1, 1};
  CHECK(matched_accuracy(t, p, 2, 2) == doctest::Approx(7.0 / 8.0));

  Rng rng(4);
  std::vector<int> tt(20000), pp(20000);
  for (auto& v : tt) v = static_cast<int>(rng.below(4));
  for (auto& v : pp) v = static_cast<int>(rng.below(4));
  CHECK(std::abs(matched_accuracy(tt, pp, 4, 4) - 0.25) < 0.02);

  // never below the accuracy of the identity mapping, and equal to brute force
  for (int i = 0; i < 30; ++i) {
    std::vector<int> a(25), b(25);
    for (auto& v : a) v = static_cast<int>(rng.below(4));
    for (auto& v : b) v = static_cast<int>(rng.below(4));
    double plain = 0;
    for (std::size_t j = 0; j < 25; ++j) plain += a[j] == b[j];
    const double ma = matched_accuracy(a, b, 4, 4);
    CHECK(ma >= plain / 25.0);
    std::vector<int> perm{0, 1, 2, 3};
    double best = 0;
    do {
      double hits = 0;
      for (std::size_t j = 0; j < 25; ++j) hits += perm[static_cast<std::size_t>(b[j])] == a[j];
      best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(ma == doctest::Approx(best / 25.0));
  }
}

TEST_CASE("assignment solver matches exhaustive search") {
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    Matrix cost = random_matrix(5, 5, rng);
    const auto assign = min_cost_assignment(cost);
    double got = 0;
    for (std::size_t r = 0; r < 5; ++r) got += cost(r, assign[r]);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    double best = 1e300;
    do {
      double c = 0;
      for (std::size_t r = 0; r < 5; ++r) c += cost(r, perm[r]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("bleu") {
  const std::vector<TokenSeq> refs{{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
  CHECK(bleu(refs, refs) == 100.0);
  CHECK(bleu(refs, {{20, 21, 22, 23, 24}, {25, 26, 27, 28}}) == 0.0);
  // "a b c d" vs "a b c e": p1 = 3/4, smoothed p2 = 3/4, p3 = 2/3, p4 = 1/2
  const double expect = 100.0 * std::exp((std::log(0.75) + std::log(0.75) + std::log(2.0 / 3.0) + std::log(0.5)) / 4.0);
  CHECK(bleu({{1, 2, 3, 4}}, {{1, 2, 3, 5}}) == doctest::Approx(expect).epsilon(1e-12));
  // brevity penalty exp(1 - r/c)
  const double short_hyp = bleu({{1, 2, 3, 4}}, {{1, 2, 3}});
  const double p = std::exp((std::log(1.0) + std::log(3.0 / 3.0) + std::log(2.0 / 2.0) + std::log(1.0 / 1.0)) / 4.0);
  CHECK(short_hyp == doctest::Approx(100.0 * p * std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("word kl") {
  const std::vector<TokenSeq> a{{1, 2, 3}, {3, 3, 4}};
  CHECK(word_kl(a, a) <= 1e-9);
  const double disjoint = word_kl({{1, 2}}, {{3, 4}});
  CHECK(std::isfinite(disjoint));
  CHECK(disjoint > 10.0);
  // p = (2/3, 1/3), q = (1/3, 2/3) -> (1/3) ln 2
  CHECK(word_kl({{1, 1, 2}}, {{1, 2, 2}}) == doctest::Approx(std::log(2.0) / 3.0).epsilon(1e-9));
  CHECK(std::abs(word_kl({{1, 1, 2}}, {{1, 2, 2}}) - std::log(2.0) / 3.0) < 1e-9);
}

TEST_CASE("log partition of a flat prior") {
  Model m = make_model(tiny_points_config(2, 5), 6);
  zero_output_layer(m.prior.net());
  Rng rng(7);
  CHECK(estimate_log_partition(m.prior, 1000, rng) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("importance-sampled nll: constant weights are exact") {
  ModelConfig mc = tiny_points_config();
  Model m = make_model(mc, 8);
  zero_output_layer(m.prior.net());
  m.encoder.zero_heads();
  auto dec = m.decoder.parameters();
  for (Parameter* p : dec) std::fill(p->value.begin(), p->value.end(), 0.0);
  dec.back()->value = {0.3, -0.4};
  Rng rng(9);
  const double log_z = estimate_log_partition(m.prior, 100, rng);
  const Example x{PointExample{{1.0, 0.5}}, std::nullopt};
  const double var = mc.observation_std * mc.observation_std;
  const double exact = 2 * 0.5 * std::log(2 * std::numbers::pi * var) + 0.5 * (0.7 * 0.7 + 0.9 * 0.9) / var;
  for (std::size_t n : {1u, 7u, 100u}) CHECK(nll_importance_sampling(m, x, n, rng, log_z) == doctest::Approx(exact).epsilon(1e-10));
  CHECK_THROWS_AS(nll_importance_sampling(m, x, 10, rng, std::numeric_limits<double>::infinity()), EvaluationError);
}

TEST_CASE("importance-sampled nll on the linear-Gaussian toy") {
  // p(z) = N(0, 1), p(x|z) = N(w z + b, s^2) -> p(x) = N(b, w^2 + s^2)
  const double w = 1.3, b = -0.2, s = 0.6;
  ModelConfig mc;
  mc.modality = Modality::Points;
  mc.latent_dim = 1;
  mc.num_classes = 2;
  mc.data_dim = 1;
  mc.prior_hidden = {};
  mc.encoder_hidden = {};
  mc.decoder_hidden = {};
  mc.observation_std = s;
  Model m = make_model(mc, 10);
  zero_output_layer(m.prior.net());
  auto dec = m.decoder.parameters();
  dec[0]->value = {w};
  dec[1]->value = {b};
  // proposal close to, but not exactly, the posterior
  const double prec = 1.0 + w * w / (s * s);
  auto enc = m.encoder.parameters();
  enc[0]->value = {1.1 * (w / (s * s)) / prec};
  enc[1]->value = {0.05};
  enc[2]->value = {0.0};
  enc[3]->value = {std::log(1.0 / prec) + 0.3};
  Rng rng(11);
  const double log_z = estimate_log_partition(m.prior, 10, rng);
  for (double xv : {-1.5, 0.3, 2.2}) {
    const double var = w * w + s * s;
    const double exact = 0.5 * std::log(2 * std::numbers::pi * var) + 0.5 * (xv - b) * (xv - b) / var;
    const Example x{PointExample{{xv}}, std::nullopt};
    CHECK(std::abs(nll_importance_sampling(m, x, 500, rng, log_z) - exact) < 0.01 * exact);
  }
}

TEST_CASE("importance-sampled nll tightens with more samples and beats the elbo") {
  Model m = make_model(tiny_points_config(), 12);
  Rng rng(13);
  const double log_z = estimate_log_partition(m.prior, 100000, rng);
  const Example x = random_example(m.config, rng);
  double small = 0.0, large = 0.0;
  for (int r = 0; r < 50; ++r) {
    small += nll_importance_sampling(m, x, 5, rng, log_z) / 50.0;
    large += nll_importance_sampling(m, x, 5000, rng, log_z) / 50.0;
  }
  CHECK(large <= small);

  // -ELBO = E_q[-log p(x|z) - F(z) + log Z - log p0(z) + log q(z|x)]
  const GaussianPosterior q = encode(m.encoder, x);
  double neg_elbo = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto z = reparam_sample(q, rng);
    const Matrix zm = row_matrix(z);
    const double ll = m.decoder.forward(std::span<const Example>(&x, 1), zm).loglik[0];
    neg_elbo += (-ll - unnormalized_log_prior(m.prior, z) + log_z + log_gaussian_density(z, q.mean, q.logvar)) / n;
  }
  CHECK(nll_importance_sampling(m, x, 20000, rng, log_z) <= neg_elbo + 0.05);
}

TEST_CASE("attribute control accuracy") {
  Model m = identity_points_model(2, {6.0, 0.0, -6.0, 0.0});
  const Judge judge = [&](const Observation& o) { return static_cast<int>(classify(m, Example{o, std::nullopt}).index); };
  Rng rng(14);
  const LangevinConfig cfg{0.05, 200};
  CHECK(attribute_control_accuracy(m, 0, 300, judge, cfg, rng) > 0.9);
  CHECK(attribute_control_accuracy(m, 1, 300, judge, cfg, rng) > 0.9);

  // priors need two classes, so the one-class case is a judge with a single class
  const Judge zero = [](const Observation&) { return 0; };
  CHECK(attribute_control_accuracy(m, 0, 50, zero, cfg, rng) == 1.0);

  Rng jr(15);
  const Judge random = [&](const Observation&) { return static_cast<int>(jr.below(4)); };
  CHECK(std::abs(attribute_control_accuracy(m, 1, 4000, random, {0.05, 5}, rng) - 0.25) < 0.025);
}

TEST_CASE("report round trip") {
  const auto dir = scratch_dir("report");
  const std::vector<ReportRow> rows{{"homogeneity", 0.123456789012345678, 10, 3, "abc"}, {"nll", -4.5, 7, 3, "abc"}};
  write_report(dir / "r.csv", rows);
  const auto back = read_report(dir / "r.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].metric == "homogeneity");
  CHECK(back[0].value == rows[0].value);
  CHECK(back[1].n == 7);
  CHECK(back[1].checkpoint_id == "abc");
}
