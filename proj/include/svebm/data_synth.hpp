#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svebm/example.hpp"
#include "svebm/generator.hpp"
#include "svebm/tensor.hpp"

namespace svebm {

struct PointDataset {
  Matrix points;               // [N x 2]
  std::vector<int> component;  // generating component of each point
  std::size_t num_components = 0;

  std::size_t size() const noexcept { return points.rows(); }
  /// Points as labeled examples (label = component).
  std::vector<Example> examples() const;
};

struct EightGaussiansConfig {
  double radius = 2.0;
  double std = 0.1;
};

/// Equal-weight mixture of 8 isotropic Gaussians centred at angles 2 pi k / 8.
PointDataset eight_gaussians(std::size_t n, std::uint64_t seed, const EightGaussiansConfig& cfg = {});
/// Centre of component k.
std::vector<double> eight_gaussians_center(std::size_t k, const EightGaussiansConfig& cfg = {});

struct PinwheelConfig {
  std::size_t arms = 5;
  double radial_std = 0.3;
  double tangential_std = 0.05;
  double rate = 0.25;
};

/// Arm k starts at angle 2 pi k / arms; a point at radial offset r (mean 1)
/// is rotated by a further rate * exp(r).
PointDataset pinwheel(std::size_t n, std::uint64_t seed, const PinwheelConfig& cfg = {});

/// Class-conditional template grammar. Template tokens are literals or
/// "{slot}" references; a slot is filled from the class's own list when the
/// class defines it, otherwise from the shared list.
struct GrammarSpec {
  std::vector<std::string> class_names;
  std::vector<std::map<std::string, std::vector<std::string>>> class_slots;  // [class][slot]
  std::map<std::string, std::vector<std::string>> shared_slots;
  std::vector<std::vector<std::vector<std::string>>> templates;  // [class][template][token]
  std::size_t min_len = 4;
  std::size_t max_len = 10;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  void validate() const;
  /// Every word the grammar can emit, sorted.
  std::vector<std::string> words() const;

  /// Four classes over roughly sixty words, sequences of 4 to 10 tokens.
  static GrammarSpec default_spec();
};

struct TextCorpus {
  Vocabulary vocab;
  std::vector<Example> sequences;  // SequenceExample + label
  std::vector<Example> documents;  // DocumentExample (same text) + label
};

TextCorpus toy_text_corpus(const GrammarSpec& spec, std::size_t n, std::uint64_t seed);

/// Bag-of-words view of a token sequence.
DocumentExample to_document(const SequenceExample& s);

struct GridSpec {
  double x_min = -3.0, x_max = 3.0;
  double y_min = -3.0, y_max = 3.0;
  std::size_t nx = 100, ny = 100;

  double dx() const { return (x_max - x_min) / static_cast<double>(nx); }
  double dy() const { return (y_max - y_min) / static_cast<double>(ny); }
  /// Cell centres.
  double x(std::size_t j) const { return x_min + (static_cast<double>(j) + 0.5) * dx(); }
  double y(std::size_t i) const { return y_min + (static_cast<double>(i) + 0.5) * dy(); }
};

/// Gaussian-kernel density at the cell centres; result(i, j) is the density
/// at (x(j), y(i)).
Matrix kde_grid(const Matrix& points, double bandwidth, const GridSpec& grid);
/// Scott's rule for 2D: mean per-axis standard deviation times N^(-1/6).
double scott_bandwidth(const Matrix& points);
/// Probability mass of the grid inside a disc (cells whose centre lies in it).
double grid_mass_within(const Matrix& density, const GridSpec& grid, double cx, double cy, double radius);

}  // namespace svebm
