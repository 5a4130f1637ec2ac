#include <cmath>

#include "doctest.h"
#include "svebm/errors.hpp"
#include "svebm/objectives.hpp"
#include "reference_objective.hpp"
#include "test_util.hpp"

using namespace svebm;
using namespace svebm::test;

namespace {

/// Brute-force double sum: I = sum_b sum_k (1/B) p_bk log(p_bk / qbar_k).
double brute_mi(const Matrix& lg) {
  const Matrix p = softmax_rows(lg);
  const std::size_t B = p.rows(), K = p.cols();
  std::vector<double> q(K, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) q[k] += p(b, k) / static_cast<double>(B);
  double s = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k)
      if (p(b, k) > 0.0) s += p(b, k) * std::log(p(b, k) / q[k]) / static_cast<double>(B);
  return s;
}

std::vector<Example> batch(const ModelConfig& mc, Rng& rng, std::size_t n, bool labeled = false) {
  std::vector<Example> xs;
  for (std::size_t i = 0; i < n; ++i)
    xs.push_back(random_example(mc, rng, labeled ? std::optional<int>(static_cast<int>(rng.below(mc.num_classes)))
                                                 : std::nullopt));
  return xs;
}

}  // namespace

TEST_CASE("elbo terms reductions") {
  ModelConfig mc = tiny_points_config(2, 4);
  Model m = make_model(mc, 1);
  zero_output_layer(m.prior.net());
  Rng rng(2);
  const Example x = random_example(mc, rng);
  const LossBreakdown lb = elbo_terms(m, x, rng);
  CHECK(lb.prior_energy == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(lb.total == doctest::Approx(-lb.recon + lb.kl - lb.prior_energy));
  m.encoder.zero_heads();
  CHECK(elbo_terms(m, x, rng).kl == 0.0);
}

TEST_CASE("objective gradient matches finite differences") {
  // covers the ELBO surrogate for encoder and decoder, the positive phase for
  // the prior, and the lambda-weighted mutual information term
  for (const double lambda : {0.0, 50.0}) {
    for (const ModelConfig& base : {tiny_points_config(), tiny_sequence_config(5 + 4), tiny_document_config(5)}) {
      for (std::uint64_t s = 0; s < 17; ++s) {
        Model m = make_model(base, 500 + s);
        Rng rng(600 + s);
        const auto xs = batch(base, rng, 4);
        const Matrix noise = random_matrix(4, base.latent_dim, rng);
        const IbOptions opt{lambda, 1.0};
        ParamRefs ps = m.all_params();
        zero_grads(ps);
        ib_objective(m, xs, noise, opt);
        const auto analytic = flat_grads(ps);
        const auto numeric = numeric_grad(ps, [&] { return ib_objective(m, xs, noise, opt).total; });
        CHECK(rel_error(analytic, numeric) < 1e-3);
      }
    }
  }
}

TEST_CASE("lambda = 0 information bottleneck equals the plain objective bitwise") {
  for (const ModelConfig& base : {tiny_points_config(), tiny_sequence_config(), tiny_document_config()}) {
    Model a = make_model(base, 7), b = make_model(base, 7);
    Rng rng(8);
    const auto xs = batch(base, rng, 5);
    const Matrix noise = random_matrix(5, base.latent_dim, rng);

    ParamRefs pa = a.all_params();
    zero_grads(pa);
    const LossBreakdown ib = ib_objective(a, xs, noise, {0.0, 1.0});

    ParamRefs pb = b.all_params();
    zero_grads(pb);
    const LossBreakdown plain = plain_objective(b, xs, noise);

    CHECK(ib.recon == plain.recon);
    CHECK(ib.kl == plain.kl);
    CHECK(ib.prior_energy == plain.prior_energy);
    CHECK(ib.mutual_info == plain.mutual_info);
    CHECK(ib.total == plain.total);
    CHECK(flat_grads(pa) == flat_grads(pb));
  }
}

TEST_CASE("prior gradient estimate") {
  EnergyParams p({2, 3, {5}, Activation::Swish});
  Rng rng(9);
  p.init(rng, 1.0);
  const Matrix z = random_matrix(6, 2, rng);
  ParamRefs ps = p.parameters();
  for (Parameter* q : ps) std::fill(q->grad.begin(), q->grad.end(), 0.25);
  const GradientSet g = prior_grad_estimate(p, z, z);
  for (const auto& arr : g)
    for (double v : arr) CHECK(v == 0.0);
  for (Parameter* q : ps)
    for (double v : q->grad) CHECK(v == 0.25);  // left as found

  // linear f: grad_W F = p z^T, grad_b F = p
  EnergyParams lin({2, 2, {}, Activation::Identity});
  lin.net().layer(0).weight.value = {0.5, -1.0, 0.3, 0.8};
  lin.net().layer(0).bias.value = {0.1, -0.4};
  const Matrix zp(1, 2, std::vector<double>{0.7, -0.2});
  const Matrix zn(1, 2, std::vector<double>{-1.1, 0.9});
  const auto pp = symbol_posterior(lin, zp.row(0));
  const auto pn = symbol_posterior(lin, zn.row(0));
  const GradientSet gl = prior_grad_estimate(lin, zp, zn);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(gl[0][k * 2 + j] == doctest::Approx(pp[k] * zp(0, j) - pn[k] * zn(0, j)).epsilon(1e-12));
    CHECK(gl[1][k] == doctest::Approx(pp[k] - pn[k]).epsilon(1e-12));
  }

  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng r(20 + s);
    EnergyParams q({2, 3, {5}, Activation::Swish});
    q.init(r, 1.0);
    const Matrix a = random_matrix(4, 2, r), b = random_matrix(7, 2, r);
    const GradientSet est = prior_grad_estimate(q, a, b);
    std::vector<double> flat;
    for (const auto& arr : est) flat.insert(flat.end(), arr.begin(), arr.end());
    ParamRefs qs = q.parameters();
    const auto numeric = numeric_grad(qs, [&] {
      double fa = 0.0, fb = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) fa += marginal_energy(q, a.row(i)) / 4.0;
      for (std::size_t i = 0; i < b.rows(); ++i) fb += marginal_energy(q, b.row(i)) / 7.0;
      return fa - fb;
    });
    CHECK(rel_error(flat, numeric) < 1e-4);
  }
}

TEST_CASE("mutual information estimate") {
  Matrix same(5, 4);
  for (std::size_t b = 0; b < 5; ++b)
    for (std::size_t k = 0; k < 4; ++k) same(b, k) = 0.3 * static_cast<double>(k);
  CHECK(mutual_info_from_logits(same).value == doctest::Approx(0.0).epsilon(1e-15));

  Matrix vertices(4, 4, -40.0);
  for (std::size_t k = 0; k < 4; ++k) vertices(k, k) = 40.0;
  CHECK(mutual_info_from_logits(vertices).value == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  Rng rng(30);
  for (int i = 0; i < 20; ++i) {
    const Matrix lg = random_matrix(6, 3, rng, 2.0);
    CHECK(mutual_info_from_logits(lg).value == doctest::Approx(brute_mi(lg)).epsilon(1e-12));
  }

  // d(value)/d(logits) against central differences
  for (int i = 0; i < 20; ++i) {
    Matrix lg = random_matrix(5, 4, rng, 2.0);
    const MutualInfo mi = mutual_info_from_logits(lg);
    std::vector<double> v(lg.flat().begin(), lg.flat().end());
    const auto numeric = numeric_grad(v, [&] {
      std::copy(v.begin(), v.end(), lg.flat().begin());
      return brute_mi(lg);
    });
    CHECK(rel_error(mi.dlogits.flat(), numeric) < 1e-6);
  }

  EnergyParams p({2, 3, {5}, Activation::Swish});
  p.init(rng, 1.0);
  CHECK_THROWS_AS(mutual_info_zy(p, Matrix(1, 2)), ContractError);
}

TEST_CASE("supervised class loss") {
  ModelConfig mc = tiny_points_config(2, 4);
  Model m = make_model(mc, 40);
  zero_output_layer(m.prior.net());
  Rng rng(41);
  const Example x = random_example(mc, rng);
  for (std::size_t k = 0; k < 4; ++k) CHECK(supervised_class_loss(m, x, k) == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(supervised_class_loss(m, x, 4), DataError);

  Model two = make_model(tiny_points_config(2, 2), 42);
  Linear& last = two.prior.net().layer(two.prior.net().num_layers() - 1);
  std::fill(last.weight.value.begin(), last.weight.value.end(), 0.0);
  last.bias.value = {10.0, 0.0};
  CHECK(supervised_class_loss(two, x, 0) < 1e-4);

  for (const ModelConfig& base : {tiny_points_config(), tiny_sequence_config(), tiny_document_config()}) {
    for (std::uint64_t s = 0; s < 34; ++s) {
      Model r = make_model(base, 700 + s);
      Rng rr(800 + s);
      const auto xs = batch(base, rr, 3, true);
      ParamRefs ps = r.supervised_params();
      zero_grads(ps);
      const double ce = supervised_loss_batch(r, xs);
      double direct = 0.0;
      for (const auto& e : xs) direct += supervised_class_loss(r, e, static_cast<std::size_t>(*e.label)) / 3.0;
      CHECK(ce == doctest::Approx(direct).epsilon(1e-12));
      const auto analytic = flat_grads(ps);
      const auto numeric = numeric_grad(ps, [&] {
        double v = 0.0;
        for (const auto& e : xs) v += supervised_class_loss(r, e, static_cast<std::size_t>(*e.label)) / 3.0;
        return v;
      });
      CHECK(rel_error(analytic, numeric) < 1e-3);
    }
  }
}
