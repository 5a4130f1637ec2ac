#pragma once

// Top-down model p(x|z): an autoregressive GRU decoder for token sequences,
// a multinomial bag-of-words decoder for documents, and a fixed-variance
// Gaussian decoder for real-valued points.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "svebm/example.hpp"
#include "svebm/nn.hpp"

namespace svebm {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kNumReserved = 4;

  /// Vocabulary holding only the reserved tokens.
  Vocabulary();
  /// Builds from tokens in id order; the first four must be the reserved ones.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int add(std::string_view token);
  /// Id of the token, or kUnk when absent.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  /// One token per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct DecoderConfig {
  Modality modality = Modality::Points;
  std::size_t latent_dim = 2;
  std::size_t output_dim = 2;  // point dimension, or vocabulary size
  std::vector<std::size_t> hidden{128, 128};
  Activation activation = Activation::Swish;
  double observation_std = 0.1;
  // sequences
  std::size_t embed_dim = 64;
  std::size_t rnn_hidden = 512;
  std::size_t max_len = 40;
};

struct SampleOptions {
  std::size_t max_len = 40;
  double temperature = 1.0;
  bool greedy = false;
  bool add_noise = true;            // points: draw x ~ N(g(z), std^2) instead of g(z)
  std::size_t document_length = 0;  // documents: number of tokens to draw
};

class GaussianDecoder {
 public:
  struct Tape {
    Mlp::Tape net;
    Matrix target;
    Matrix mean;
  };

  GaussianDecoder() = default;
  explicit GaussianDecoder(const DecoderConfig& cfg);
  void init(Rng& rng);

  std::vector<double> forward(std::span<const Example> xs, const Matrix& z, Tape& tape) const;
  Matrix backward(const Tape& tape, std::span<const double> dll, bool need_dz, bool accumulate);
  std::vector<Observation> sample(const Matrix& z, const SampleOptions& opt, Rng& rng) const;
  Matrix mean(const Matrix& z) const { return net_.forward(z); }
  void collect(ParamRefs& out) { net_.collect(out); }

 private:
  DecoderConfig cfg_;
  Mlp net_;
};

class MultinomialDecoder {
 public:
  struct Tape {
    Mlp::Tape net;
    Matrix counts;
    Matrix probs;
    std::vector<double> totals;
  };

  MultinomialDecoder() = default;
  explicit MultinomialDecoder(const DecoderConfig& cfg);
  void init(Rng& rng);

  std::vector<double> forward(std::span<const Example> xs, const Matrix& z, Tape& tape) const;
  Matrix backward(const Tape& tape, std::span<const double> dll, bool need_dz, bool accumulate);
  std::vector<Observation> sample(const Matrix& z, const SampleOptions& opt, Rng& rng) const;
  Matrix logits(const Matrix& z) const { return net_.forward(z); }
  void collect(ParamRefs& out) { net_.collect(out); }

 private:
  DecoderConfig cfg_;
  Mlp net_;
};

/// z sets the initial state h0 = tanh(W z + b) and is concatenated to the
/// embedding of the previous token at every step.
class GruDecoder {
 public:
  struct Tape {
    Matrix z;
    Matrix h0_pre;
    Matrix h0;
    std::vector<std::vector<int>> prev_ids;  // per step, per row
    std::vector<std::vector<double>> masks;
    Gru::Tape rnn;
    std::vector<std::pair<std::size_t, std::size_t>> rows;  // (step, batch row) of each scored position
    std::vector<int> targets;
    Matrix out_in;  // hidden states of the scored positions
    Matrix probs;   // predictive distribution at each scored position
  };

  GruDecoder() = default;
  explicit GruDecoder(const DecoderConfig& cfg);
  void init(Rng& rng);

  std::vector<double> forward(std::span<const Example> xs, const Matrix& z, Tape& tape) const;
  Matrix backward(const Tape& tape, std::span<const double> dll, bool need_dz, bool accumulate);
  std::vector<Observation> sample(const Matrix& z, const SampleOptions& opt, Rng& rng) const;
  void collect(ParamRefs& out);

  Embedding& embedding() { return embed_; }
  Linear& init_map() { return init_; }
  Gru& rnn() { return rnn_; }
  Linear& output() { return out_; }

 private:
  DecoderConfig cfg_;
  Embedding embed_;
  Linear init_;
  Gru rnn_;
  Linear out_;
};

struct DecodeResult {
  std::vector<double> loglik;  // log p(x_b | z_b) per row
  std::variant<GaussianDecoder::Tape, MultinomialDecoder::Tape, GruDecoder::Tape> tape;
};

/// Parameters of the generator (beta).
class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(const DecoderConfig& cfg);
  void init(Rng& rng);

  const DecoderConfig& config() const noexcept { return cfg_; }

  DecodeResult forward(std::span<const Example> xs, const Matrix& z) const;
  /// dll[b] = d(loss)/d(loglik_b). Accumulates parameter gradients and
  /// returns d(loss)/dz when need_dz.
  Matrix backward(const DecodeResult& res, std::span<const double> dll, bool need_dz);
  /// d(loss)/dz without touching parameter gradients.
  Matrix input_gradient(const DecodeResult& res, std::span<const double> dll) const;

  std::vector<Observation> sample(const Matrix& z, const SampleOptions& opt, Rng& rng) const;

  void collect(ParamRefs& out);
  ParamRefs parameters();

  GaussianDecoder* gaussian() { return std::get_if<GaussianDecoder>(&impl_); }
  MultinomialDecoder* multinomial() { return std::get_if<MultinomialDecoder>(&impl_); }
  GruDecoder* gru() { return std::get_if<GruDecoder>(&impl_); }
  const GaussianDecoder* gaussian() const { return std::get_if<GaussianDecoder>(&impl_); }

 private:
  DecoderConfig cfg_;
  std::variant<GaussianDecoder, MultinomialDecoder, GruDecoder> impl_;
};

using DecoderParams = Decoder;

/// Teacher-forced sum of log p(x_t | x_<t, z) over the tokens and EOS.
double seq_log_likelihood(const Decoder& params, const SequenceExample& x, std::span<const double> z);
/// Ancestral sampling until EOS or max_len content tokens.
SequenceExample seq_sample(const Decoder& params, std::span<const double> z, std::size_t max_len,
                           double temperature, Rng& rng, bool greedy = false);
/// sum_w count_w log softmax(logits(z))_w; the multinomial coefficient is
/// omitted (it does not depend on any parameter).
double doc_log_likelihood(const Decoder& params, const DocumentExample& x, std::span<const double> z);

}  // namespace svebm
