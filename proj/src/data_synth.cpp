#include "svebm/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "svebm/errors.hpp"
#include "svebm/kernels.hpp"
#include "svebm/rng.hpp"

namespace svebm {

std::vector<Example> PointDataset::examples() const {
  std::vector<Example> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    PointExample p;
    p.coords.assign(points.row(i).begin(), points.row(i).end());
    out.push_back({std::move(p), component.empty() ? std::optional<int>{} : component[i]});
  }
  return out;
}

std::vector<double> eight_gaussians_center(std::size_t k, const EightGaussiansConfig& cfg) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / 8.0;
  return {cfg.radius * std::cos(a), cfg.radius * std::sin(a)};
}

PointDataset eight_gaussians(std::size_t n, std::uint64_t seed, const EightGaussiansConfig& cfg) {
  if (n < 8) throw ContractError("eight_gaussians: need n >= 8");
  Rng rng(seed);
  PointDataset ds;
  ds.num_components = 8;
  ds.points.resize(n, 2);
  ds.component.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.below(8);
    const auto c = eight_gaussians_center(k, cfg);
    ds.component[i] = static_cast<int>(k);
    ds.points(i, 0) = c[0] + cfg.std * rng.normal();
    ds.points(i, 1) = c[1] + cfg.std * rng.normal();
  }
  return ds;
}

PointDataset pinwheel(std::size_t n, std::uint64_t seed, const PinwheelConfig& cfg) {
  if (n < cfg.arms || cfg.arms < 1) throw ContractError("pinwheel: need n >= arms >= 1");
  Rng rng(seed);
  PointDataset ds;
  ds.num_components = cfg.arms;
  ds.points.resize(n, 2);
  ds.component.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.below(cfg.arms);
    const double r = 1.0 + cfg.radial_std * rng.normal();
    const double t = cfg.tangential_std * rng.normal();
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(cfg.arms) +
                         cfg.rate * std::exp(r);
    const double c = std::cos(angle), s = std::sin(angle);
    ds.component[i] = static_cast<int>(k);
    ds.points(i, 0) = c * r - s * t;
    ds.points(i, 1) = s * r + c * t;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Toy text
// ---------------------------------------------------------------------------

namespace {

bool is_slot(const std::string& tok) { return tok.size() > 2 && tok.front() == '{' && tok.back() == '}'; }

const std::vector<std::string>& fillers(const GrammarSpec& spec, std::size_t cls, const std::string& slot) {
  if (const auto it = spec.class_slots[cls].find(slot); it != spec.class_slots[cls].end()) return it->second;
  if (const auto it = spec.shared_slots.find(slot); it != spec.shared_slots.end()) return it->second;
  throw ConfigError("grammar: slot '" + slot + "' is not defined for class " + spec.class_names[cls]);
}

std::vector<std::vector<std::string>> split_templates(std::initializer_list<const char*> ts) {
  std::vector<std::vector<std::string>> out;
  for (const char* t : ts) {
    std::vector<std::string> toks;
    std::string cur;
    for (const char* p = t;; ++p) {
      if (*p == ' ' || *p == '\0') {
        if (!cur.empty()) toks.push_back(cur);
        cur.clear();
        if (*p == '\0') break;
      } else {
        cur += *p;
      }
    }
    out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace

void GrammarSpec::validate() const {
  const std::size_t C = class_names.size();
  if (C < 1) throw ConfigError("grammar: no classes");
  if (class_slots.size() != C || templates.size() != C)
    throw ConfigError("grammar: per-class slot and template lists must match the class count");
  if (min_len < 1 || min_len > max_len) throw ConfigError("grammar: invalid length range");
  for (std::size_t c = 0; c < C; ++c) {
    if (templates[c].empty()) throw ConfigError("grammar: class " + class_names[c] + " has no templates");
    for (const auto& t : templates[c]) {
      if (t.size() < min_len || t.size() > max_len)
        throw ConfigError("grammar: a template of class " + class_names[c] + " violates the length range");
      for (const auto& tok : t) {
        if (!is_slot(tok)) continue;
        if (fillers(*this, c, tok.substr(1, tok.size() - 2)).empty())
          throw ConfigError("grammar: empty slot " + tok);
      }
    }
  }
}

std::vector<std::string> GrammarSpec::words() const {
  std::set<std::string> w;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    for (const auto& t : templates[c])
      for (const auto& tok : t)
        if (!is_slot(tok)) w.insert(tok);
    for (const auto& [slot, fs] : class_slots[c]) w.insert(fs.begin(), fs.end());
  }
  for (const auto& [slot, fs] : shared_slots) w.insert(fs.begin(), fs.end());
  return {w.begin(), w.end()};
}

GrammarSpec GrammarSpec::default_spec() {
  GrammarSpec g;
  g.class_names = {"weather", "food", "sports", "music"};
  g.class_slots = {
      {{"N", {"rain", "snow", "wind", "storm"}}, {"V", {"falls", "blows", "pours"}}, {"A", {"cold", "cloudy", "wet"}}},
      {{"N", {"pizza", "soup", "bread", "cheese"}}, {"V", {"tastes", "smells", "cooks"}}, {"A", {"tasty", "spicy", "fresh"}}},
      {{"N", {"goal", "match", "team", "coach"}}, {"V", {"wins", "scores", "plays"}}, {"A", {"fast", "strong", "tough"}}},
      {{"N", {"song", "guitar", "band", "drum"}}, {"V", {"sounds", "rocks", "sings"}}, {"A", {"loud", "catchy", "melodic"}}},
  };
  g.shared_slots = {
      {"D", {"the", "a", "this", "that"}},
      {"I", {"very", "really", "quite"}},
      {"C", {"and", "but"}},
      {"P", {"today", "tonight", "again", "now"}},
  };
  g.templates = {
      split_templates({"{D} {N} {V} {P}", "{D} {N} {V} {C} {D} {N} is {A}", "{D} {A} {N} is {I} {I} {A}"}),
      split_templates({"{D} {N} is {A}", "it was {I} {A} {C} {D} {N} {V} {P}", "{D} {N} {V} {C} it is {A} {P}"}),
      split_templates({"{D} {N} is {I} {A}", "{D} {N} is {A} {C} {D} {N} is {I} {A}", "{D} {N} and {D} {N} {V}"}),
      split_templates({"{D} {A} {N} {V} {P}", "{P} {D} {N} {V} so {I} {A}", "{D} {N} {V} {I} {A} {P}"}),
  };
  g.min_len = 4;
  g.max_len = 10;
  return g;
}

DocumentExample to_document(const SequenceExample& s) {
  std::map<int, int> counts;
  for (int t : s.tokens) ++counts[t];
  DocumentExample d;
  for (const auto& [id, c] : counts) d.counts.push_back({id, c});
  return d;
}

TextCorpus toy_text_corpus(const GrammarSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  TextCorpus corpus;
  for (const auto& w : spec.words()) corpus.vocab.add(w);
  Rng rng(seed);
  corpus.sequences.reserve(n);
  corpus.documents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.below(spec.num_classes());
    const auto& tmpl = spec.templates[c][rng.below(spec.templates[c].size())];
    SequenceExample s;
    for (const auto& tok : tmpl) {
      if (is_slot(tok)) {
        const auto& fs = fillers(spec, c, tok.substr(1, tok.size() - 2));
        s.tokens.push_back(corpus.vocab.id(fs[rng.below(fs.size())]));
      } else {
        s.tokens.push_back(corpus.vocab.id(tok));
      }
    }
    corpus.documents.push_back({to_document(s), static_cast<int>(c)});
    corpus.sequences.push_back({std::move(s), static_cast<int>(c)});
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// KDE
// ---------------------------------------------------------------------------

Matrix kde_grid(const Matrix& points, double bandwidth, const GridSpec& grid) {
  if (!(bandwidth > 0.0)) throw ContractError("kde_grid: bandwidth must be > 0");
  if (points.rows() < 1 || points.cols() != 2) throw ContractError("kde_grid: need at least one 2D point");
  if (grid.nx < 1 || grid.ny < 1 || !(grid.x_max > grid.x_min) || !(grid.y_max > grid.y_min))
    throw ContractError("kde_grid: invalid grid");
  const std::size_t N = points.rows();
  // The 2D Gaussian kernel factorizes, so the grid is Wy^T Wx.
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * bandwidth);
  Matrix wx(N, grid.nx), wy(N, grid.ny);
  for (std::size_t p = 0; p < N; ++p) {
    for (std::size_t j = 0; j < grid.nx; ++j) {
      const double u = (grid.x(j) - points(p, 0)) / bandwidth;
      wx(p, j) = norm * std::exp(-0.5 * u * u);
    }
    for (std::size_t i = 0; i < grid.ny; ++i) {
      const double u = (grid.y(i) - points(p, 1)) / bandwidth;
      wy(p, i) = norm * std::exp(-0.5 * u * u) / static_cast<double>(N);
    }
  }
  Matrix out(grid.ny, grid.nx);
  kernels::active().gemm_tn(grid.ny, grid.nx, N, wy.data(), wx.data(), out.data(), false);
  for (double& v : out.flat()) v = std::max(v, 0.0);
  return out;
}

double scott_bandwidth(const Matrix& points) {
  const std::size_t N = points.rows();
  if (N < 2) throw ContractError("scott_bandwidth: need at least two points");
  double sd_sum = 0.0;
  for (std::size_t c = 0; c < points.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < N; ++r) mean += points(r, c);
    mean /= static_cast<double>(N);
    double var = 0.0;
    for (std::size_t r = 0; r < N; ++r) var += (points(r, c) - mean) * (points(r, c) - mean);
    sd_sum += std::sqrt(var / static_cast<double>(N - 1));
  }
  const double h = sd_sum / static_cast<double>(points.cols()) * std::pow(static_cast<double>(N), -1.0 / 6.0);
  return h > 0.0 ? h : 1e-3;
}

double grid_mass_within(const Matrix& density, const GridSpec& grid, double cx, double cy, double radius) {
  double mass = 0.0;
  for (std::size_t i = 0; i < grid.ny; ++i)
    for (std::size_t j = 0; j < grid.nx; ++j) {
      const double dx = grid.x(j) - cx, dy = grid.y(i) - cy;
      if (dx * dx + dy * dy <= radius * radius) mass += density(i, j);
    }
  return mass * grid.dx() * grid.dy();
}

}  // namespace svebm
