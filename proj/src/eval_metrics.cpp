#include "svebm/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "svebm/errors.hpp"
#include "svebm/run_config.hpp"

namespace svebm {

namespace {

constexpr std::size_t kChunk = 256;

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

void check_labels(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size())
    throw DataError("label vectors differ in length (" + std::to_string(truth.size()) + " vs " +
                    std::to_string(pred.size()) + ")");
  if (truth.empty()) throw DataError("no labels to score");
  for (int v : truth)
    if (v < 0) throw DataError("negative class id");
  for (int v : pred)
    if (v < 0) throw DataError("negative cluster id");
}

double entropy_of_counts(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  return h;
}

}  // namespace

Classification classify(const Model& model, const Example& x) {
  const EncodeResult enc = model.encoder.forward(std::span<const Example>(&x, 1));
  Classification c;
  c.probs = symbol_posterior(model.prior, enc.mean.row(0));
  c.index = argmax_lowest(c.probs);
  return c;
}

std::vector<int> classify_batch(const Model& model, std::span<const Example> xs, Matrix* probs) {
  std::vector<int> out;
  out.reserve(xs.size());
  if (probs != nullptr) probs->resize(xs.size(), model.config.num_classes);
  for (std::size_t s = 0; s < xs.size(); s += kChunk) {
    const auto chunk = xs.subspan(s, std::min(kChunk, xs.size() - s));
    const EncodeResult enc = model.encoder.forward(chunk);
    const EnergyEval ev = evaluate_energy(model.prior, enc.mean);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      out.push_back(static_cast<int>(argmax_lowest(ev.probs.row(b))));
      if (probs != nullptr) std::ranges::copy(ev.probs.row(b), probs->row(s + b).begin());
    }
  }
  return out;
}

std::vector<int> true_labels(std::span<const Example> xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    if (!x.label) throw DataError("example without a ground-truth label");
    out.push_back(*x.label);
  }
  return out;
}

double homogeneity(std::span<const int> truth, std::span<const int> pred) {
  check_labels(truth, pred);
  const double n = static_cast<double>(truth.size());
  std::map<int, double> class_counts;
  std::map<int, double> cluster_counts;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    class_counts[truth[i]] += 1.0;
    cluster_counts[pred[i]] += 1.0;
    joint[{pred[i], truth[i]}] += 1.0;
  }
  std::vector<double> cc;
  for (const auto& [k, v] : class_counts) cc.push_back(v);
  const double h_class = entropy_of_counts(cc, n);
  if (h_class == 0.0) return 1.0;
  double h_cond = 0.0;
  for (const auto& [key, v] : joint) h_cond -= (v / n) * std::log(v / cluster_counts[key.first]);
  return std::clamp(1.0 - h_cond / h_class, 0.0, 1.0);
}

std::vector<std::size_t> min_cost_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  require(cost.cols() == n, "min_cost_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based Hungarian method, 1-indexed with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double matched_accuracy(std::span<const int> truth, std::span<const int> pred, std::size_t num_clusters,
                        std::size_t num_classes) {
  check_labels(truth, pred);
  for (int t : truth)
    if (static_cast<std::size_t>(t) >= num_classes) throw DataError("class id outside [0, C)");
  for (int k : pred)
    if (static_cast<std::size_t>(k) >= num_clusters) throw DataError("cluster id outside [0, K)");
  const std::size_t n = std::max(num_clusters, num_classes);
  Matrix cost(n, n, 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i)
    cost(static_cast<std::size_t>(pred[i]), static_cast<std::size_t>(truth[i])) -= 1.0;
  const auto assign = min_cost_assignment(cost);
  double matched = 0.0;
  for (std::size_t r = 0; r < n; ++r) matched -= cost(r, assign[r]);
  return matched / static_cast<double>(truth.size());
}

double bleu(const std::vector<TokenSeq>& refs, const std::vector<TokenSeq>& hyps) {
  if (refs.empty() || hyps.empty()) throw DataError("BLEU needs a non-empty corpus");
  if (refs.size() != hyps.size()) throw DataError("BLEU: reference and hypothesis counts differ");
  constexpr std::size_t kMaxOrder = 4;
  double matches[kMaxOrder] = {};
  double totals[kMaxOrder] = {};
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    const auto& r = refs[s];
    const auto& h = hyps[s];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      std::map<std::vector<int>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + i, r.begin() + i + n}];
      std::map<std::vector<int>, int> hyp_counts;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[{h.begin() + i, h.begin() + i + n}];
      for (const auto& [gram, c] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(c, it->second);
        totals[n - 1] += c;
      }
    }
  }
  if (matches[0] == 0.0 || hyp_len == 0.0) return 0.0;
  double log_sum = std::log(matches[0] / totals[0]);
  for (std::size_t n = 2; n <= kMaxOrder; ++n) log_sum += std::log((matches[n - 1] + 1.0) / (totals[n - 1] + 1.0));
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

double bleu_reconstruction(const Model& model, std::span<const Example> xs, Rng& rng) {
  if (xs.empty()) throw DataError("BLEU needs a non-empty corpus");
  std::vector<TokenSeq> refs, hyps;
  SampleOptions opt;
  opt.greedy = true;
  opt.max_len = model.config.max_len;
  for (std::size_t s = 0; s < xs.size(); s += kChunk) {
    const auto chunk = xs.subspan(s, std::min(kChunk, xs.size() - s));
    const EncodeResult enc = model.encoder.forward(chunk);
    const auto out = model.decoder.sample(enc.mean, opt, rng);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto* ref = std::get_if<SequenceExample>(&chunk[b].x);
      if (ref == nullptr) throw DataError("BLEU reconstruction needs token sequences");
      refs.push_back(ref->tokens);
      hyps.push_back(std::get<SequenceExample>(out[b]).tokens);
    }
  }
  return bleu(refs, hyps);
}

double word_kl(const std::vector<TokenSeq>& corpus_a, const std::vector<TokenSeq>& corpus_b) {
  std::map<int, double> fa, fb;
  double na = 0.0, nb = 0.0;
  for (const auto& s : corpus_a)
    for (int t : s) fa[t] += 1.0, na += 1.0;
  for (const auto& s : corpus_b)
    for (int t : s) fb[t] += 1.0, nb += 1.0;
  if (na == 0.0 || nb == 0.0) throw DataError("word_kl needs two non-empty corpora");
  std::map<int, bool> vocab;
  for (const auto& [t, c] : fa) vocab[t] = true;
  for (const auto& [t, c] : fb) vocab[t] = true;
  const double eps = kWordKlSmoothing;
  const double denom = 1.0 + eps * static_cast<double>(vocab.size());
  double kl = 0.0;
  for (const auto& [t, c] : fa) {
    const double p = c / na;
    const auto it = fb.find(t);
    const double q = ((it == fb.end() ? 0.0 : it->second / nb) + eps) / denom;
    kl += p * std::log(p / q);
  }
  return std::max(kl, 0.0);
}

double estimate_log_partition(const EnergyParams& params, std::size_t n, Rng& rng) {
  require(n >= 1, "estimate_log_partition: need at least one draw");
  std::vector<double> f;
  f.reserve(n);
  for (std::size_t s = 0; s < n; s += 4096) {
    Matrix z(std::min<std::size_t>(4096, n - s), params.latent_dim());
    rng.fill_normal(z.flat());
    const EnergyEval ev = evaluate_energy(params, z);
    f.insert(f.end(), ev.energy.begin(), ev.energy.end());
  }
  return log_sum_exp(f) - std::log(static_cast<double>(n));
}

double nll_importance_sampling(const Model& model, const Example& x, std::size_t n, Rng& rng, double log_z) {
  require(n >= 1, "nll_importance_sampling: need at least one sample");
  const std::size_t d = model.config.latent_dim;
  const EncodeResult enc = model.encoder.forward(std::span<const Example>(&x, 1));
  std::vector<double> logw;
  logw.reserve(n);
  for (std::size_t s = 0; s < n; s += kChunk) {
    const std::size_t m = std::min(kChunk, n - s);
    Matrix z(m, d);
    rng.fill_normal(z.flat());
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < d; ++j)
        z(r, j) = enc.mean(0, j) + std::exp(0.5 * enc.logvar(0, j)) * z(r, j);
    const std::vector<Example> rep(m, x);
    const DecodeResult dec = model.decoder.forward(rep, z);
    const EnergyEval ev = evaluate_energy(model.prior, z);
    for (std::size_t r = 0; r < m; ++r) {
      const double log_prior = ev.energy[r] + log_standard_normal(z.row(r)) - log_z;
      const double log_q = log_gaussian_density(z.row(r), enc.mean.row(0), enc.logvar.row(0));
      logw.push_back(dec.loglik[r] + log_prior - log_q);
    }
  }
  const double lse = log_sum_exp(logw);
  if (!std::isfinite(lse)) throw EvaluationError("importance weights are all zero or non-finite");
  return -(lse - std::log(static_cast<double>(n)));
}

double attribute_control_accuracy(const Model& model, std::size_t label, std::size_t n, const Judge& judge,
                                  const LangevinConfig& cfg, Rng& rng, const SampleOptions& sample) {
  if (model.config.num_classes < 2) return 1.0;
  if (n == 0) throw EvaluationError("attribute control accuracy needs at least one sample");
  const Matrix z = sample_conditional_prior(model.prior, label, n, cfg, rng);
  const auto xs = model.decoder.sample(z, sample, rng);
  std::size_t hits = 0;
  for (const auto& x : xs)
    if (judge(x) == static_cast<int>(label)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report " + path.string());
  os << kReportHeader << '\n';
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    os << r.metric << ',' << buf << ',' << r.n << ',' << r.seed << ',' << r.checkpoint_id << '\n';
  }
  if (!os) throw IoError("failed writing report " + path.string());
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read report " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kReportHeader) throw DataError(path.string() + ":1: unexpected report header");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    const auto f = split_list(line);
    if (f.size() < 4) throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed report row");
    ReportRow r;
    r.metric = f[0];
    r.value = std::strtod(f[1].c_str(), nullptr);
    r.n = std::stoull(f[2]);
    r.seed = std::stoull(f[3]);
    if (f.size() > 4) r.checkpoint_id = f[4];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace svebm
