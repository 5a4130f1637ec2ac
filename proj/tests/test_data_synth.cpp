#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "svebm/data_synth.hpp"
#include "svebm/errors.hpp"
#include "test_util.hpp"

using namespace svebm;
using namespace svebm::test;

TEST_CASE("eight gaussians") {
  const PointDataset ds = eight_gaussians(8000, 1);
  CHECK(ds.size() == 8000);
  CHECK(ds.num_components == 8);
  std::vector<int> counts(8, 0);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++counts[static_cast<std::size_t>(ds.component[i])];
    if (ds.component[i] == 0) mx += ds.points(i, 0), my += ds.points(i, 1);
  }
  for (int c : counts) CHECK(std::abs(c - 1000) <= 200);
  const auto c0 = eight_gaussians_center(0);
  CHECK(c0[0] == doctest::Approx(2.0));
  CHECK(std::abs(mx / counts[0] - c0[0]) < 0.02);
  CHECK(std::abs(my / counts[0] - c0[1]) < 0.02);
  CHECK(eight_gaussians(100, 5).points == eight_gaussians(100, 5).points);
  CHECK(eight_gaussians(100, 5).component == eight_gaussians(100, 5).component);
  const auto ex = ds.examples();
  CHECK(ex[10].label == ds.component[10]);
}

TEST_CASE("pinwheel") {
  PinwheelConfig straight;
  straight.rate = 0.0;
  const PointDataset ds = pinwheel(10000, 2, straight);
  CHECK(ds.num_components == 5);
  std::vector<double> sx(5, 0.0), sy(5, 0.0);
  std::vector<int> counts(5, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto k = static_cast<std::size_t>(ds.component[i]);
    sx[k] += ds.points(i, 0);
    sy[k] += ds.points(i, 1);
    ++counts[k];
  }
  for (std::size_t k = 0; k < 5; ++k) {
    const double angle = std::atan2(sy[k], sx[k]);
    double diff = angle - 2.0 * std::numbers::pi * static_cast<double>(k) / 5.0;
    diff = std::remainder(diff, 2.0 * std::numbers::pi);
    CHECK(std::abs(diff) < 0.05);
    // multinomial: sd = sqrt(10000 * 0.2 * 0.8) = 40
    CHECK(std::abs(counts[k] - 2000) < 160);
  }
  CHECK(pinwheel(50, 3).points == pinwheel(50, 3).points);
}

TEST_CASE("toy text corpus") {
  const GrammarSpec spec = GrammarSpec::default_spec();
  CHECK(spec.num_classes() == 4);
  const TextCorpus c = toy_text_corpus(spec, 4000, 3);
  CHECK(c.vocab.size() >= 55);
  CHECK(c.vocab.size() <= 70);
  // keyword lookup: a class owns every word in its own slot lists
  std::vector<std::set<std::string>> keywords(4);
  for (std::size_t k = 0; k < 4; ++k)
    for (const auto& [slot, words] : spec.class_slots[k]) keywords[k].insert(words.begin(), words.end());
  std::vector<int> counts(4, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < c.sequences.size(); ++i) {
    const auto& e = c.sequences[i];
    const auto& toks = std::get<SequenceExample>(e.x).tokens;
    CHECK(toks.size() >= spec.min_len);
    CHECK(toks.size() <= spec.max_len);
    std::vector<int> votes(4, 0);
    for (int t : toks)
      for (std::size_t k = 0; k < 4; ++k) votes[k] += keywords[k].count(c.vocab.token(t)) > 0;
    const auto guess = std::max_element(votes.begin(), votes.end()) - votes.begin();
    correct += guess == *e.label;
    ++counts[static_cast<std::size_t>(*e.label)];
    CHECK(c.documents[i].label == e.label);
    CHECK(std::get<DocumentExample>(c.documents[i].x).total() == static_cast<int>(toks.size()));
  }
  CHECK(correct == c.sequences.size());
  // sd of a class count = sqrt(4000 * 0.25 * 0.75) ~ 27
  for (int n : counts) CHECK(std::abs(n - 1000) < 110);
  CHECK(toy_text_corpus(spec, 50, 9).sequences == toy_text_corpus(spec, 50, 9).sequences);

  GrammarSpec bad = spec;
  bad.templates[0].push_back({"{missing}"});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("kde grid") {
  GridSpec g;
  g.nx = g.ny = 61;
  const Matrix origin(1, 2, 0.0);
  const Matrix d = kde_grid(origin, 0.3, g);
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (d(i, j) > d(bi, bj)) bi = i, bj = j;
  CHECK(std::abs(g.x(bj)) <= g.dx() / 2 + 1e-12);
  CHECK(std::abs(g.y(bi)) <= g.dy() / 2 + 1e-12);

  const PointDataset ds = eight_gaussians(500, 4);
  GridSpec wide{-6, 6, -6, 6, 200, 200};
  const double h = scott_bandwidth(ds.points);
  const Matrix dens = kde_grid(ds.points, h, wide);
  double mass = 0.0;
  for (double v : dens.flat()) {
    CHECK(v >= 0.0);
    mass += v * wide.dx() * wide.dy();
  }
  CHECK(mass >= 0.98);
  CHECK(mass <= 1.0 + 1e-9);
  CHECK(grid_mass_within(dens, wide, 0.0, 0.0, 100.0) == doctest::Approx(mass));

  Matrix shifted = ds.points;
  for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, 0) += 1.5, shifted(i, 1) -= 0.5;
  GridSpec moved{-4.5, 7.5, -6.5, 5.5, 200, 200};
  const Matrix dm = kde_grid(shifted, h, moved);
  for (std::size_t i = 0; i < dm.size(); ++i) CHECK(dm.flat()[i] == doctest::Approx(dens.flat()[i]).epsilon(1e-9));

  Matrix reversed(ds.points.rows(), 2);
  for (std::size_t i = 0; i < reversed.rows(); ++i) {
    reversed(i, 0) = ds.points(reversed.rows() - 1 - i, 0);
    reversed(i, 1) = ds.points(reversed.rows() - 1 - i, 1);
  }
  const Matrix dr = kde_grid(reversed, h, wide);
  for (std::size_t i = 0; i < dr.size(); ++i) CHECK(dr.flat()[i] == doctest::Approx(dens.flat()[i]).epsilon(1e-12));

  CHECK_THROWS(kde_grid(ds.points, 0.0, wide));
  CHECK_THROWS(kde_grid(Matrix(0, 2), 0.5, wide));
}
