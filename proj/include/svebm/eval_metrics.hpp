#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svebm/langevin.hpp"
#include "svebm/model.hpp"

namespace svebm {

struct Classification {
  std::size_t index = 0;
  std::vector<double> probs;
};

/// argmax_k p(y = k | z = mean(x)); ties go to the lowest index.
Classification classify(const Model& model, const Example& x);
/// Batched classify; fills probs (rows) when non-null.
std::vector<int> classify_batch(const Model& model, std::span<const Example> xs, Matrix* probs = nullptr);

/// Ground-truth labels; throws DataError when an example has none.
std::vector<int> true_labels(std::span<const Example> xs);

/// 1 - H(truth | pred) / H(truth), and 1 when H(truth) = 0.
double homogeneity(std::span<const int> truth, std::span<const int> pred);
/// Accuracy under the cluster-to-class mapping with the most matches
/// (one-to-one; clusters beyond the class count match nothing).
double matched_accuracy(std::span<const int> truth, std::span<const int> pred, std::size_t num_clusters,
                        std::size_t num_classes);
/// Minimum-cost perfect matching on a square cost matrix; result[r] is the
/// column assigned to row r.
std::vector<std::size_t> min_cost_assignment(const Matrix& cost);

using TokenSeq = std::vector<int>;

/// Corpus BLEU-4 in [0, 100] with brevity penalty; n-gram orders 2..4 add one
/// to both match and total counts.
double bleu(const std::vector<TokenSeq>& refs, const std::vector<TokenSeq>& hyps);
/// Greedy reconstructions x -> mean(x) -> argmax decoding, scored with bleu().
double bleu_reconstruction(const Model& model, std::span<const Example> xs, Rng& rng);

inline constexpr double kWordKlSmoothing = 1e-10;
/// KL(unigram_a || unigram_b); b is smoothed as (f + eps) / (1 + eps |U|)
/// over the union vocabulary U of both corpora.
double word_kl(const std::vector<TokenSeq>& corpus_a, const std::vector<TokenSeq>& corpus_b);

/// log E_{p0}[exp F(z)] from n draws.
double estimate_log_partition(const EnergyParams& params, std::size_t n, Rng& rng);

/// -log (1/n) sum_i p(x|z_i) p(z_i) / q(z_i|x), z_i ~ q(z|x), in nats per
/// example, with p(z) = exp(F(z)) p0(z) / exp(log_z). Document likelihoods
/// omit the multinomial coefficient.
double nll_importance_sampling(const Model& model, const Example& x, std::size_t n, Rng& rng, double log_z);

using Judge = std::function<int(const Observation&)>;

/// Share of n samples decoded from p(z | y = label) that the judge assigns to
/// label.
double attribute_control_accuracy(const Model& model, std::size_t label, std::size_t n, const Judge& judge,
                                  const LangevinConfig& cfg, Rng& rng, const SampleOptions& sample = {});

struct ReportRow {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_id;
};

inline constexpr const char* kReportHeader = "metric,value,n,seed,checkpoint_id";
void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_report(const std::filesystem::path& path);

}  // namespace svebm
