#pragma once

// Amortized diagonal-Gaussian posterior q(z|x).
//
// Points and documents use an MLP over the (normalized) observation; token
// sequences use a GRU whose final hidden state feeds the two heads. The
// log-variance head is squashed to (-10, 10) with 10*tanh(raw/10), which is
// smooth everywhere and the identity near zero.

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "svebm/example.hpp"
#include "svebm/nn.hpp"

namespace svebm {

inline constexpr double kLogVarBound = 10.0;

struct GaussianPosterior {
  std::vector<double> mean;
  std::vector<double> logvar;
};

struct EncoderConfig {
  Modality modality = Modality::Points;
  std::size_t latent_dim = 2;
  std::size_t input_dim = 2;  // point dimension, or vocabulary size for documents
  std::vector<std::size_t> hidden{128, 128};
  Activation activation = Activation::Swish;
  // sequences
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t rnn_hidden = 512;
};

class MlpEncoder {
 public:
  struct Tape {
    Matrix features;
    Mlp::Tape body;
    Matrix trunk;  // input to the heads
    Matrix raw_logvar;
  };

  MlpEncoder() = default;
  explicit MlpEncoder(const EncoderConfig& cfg);
  void init(Rng& rng);

  Matrix featurize(std::span<const Example> xs) const;
  void forward(std::span<const Example> xs, Matrix& mean, Matrix& logvar, Tape& tape) const;
  void backward(const Tape& tape, const Matrix& dmean, const Matrix& dlogvar);
  void collect(ParamRefs& out);

  Linear& mean_head() { return mean_head_; }
  Linear& logvar_head() { return logvar_head_; }
  bool has_body() const { return !cfg_.hidden.empty(); }
  Mlp& body() { return body_; }

 private:
  EncoderConfig cfg_;
  Mlp body_;
  Linear mean_head_;
  Linear logvar_head_;
};

class GruEncoder {
 public:
  struct Tape {
    std::vector<std::vector<int>> step_ids;  // token id per row per step (0 where masked)
    std::vector<std::vector<double>> masks;
    Gru::Tape rnn;
    Matrix final_h;
    Matrix raw_logvar;
  };

  GruEncoder() = default;
  explicit GruEncoder(const EncoderConfig& cfg);
  void init(Rng& rng);

  void forward(std::span<const Example> xs, Matrix& mean, Matrix& logvar, Tape& tape) const;
  void backward(const Tape& tape, const Matrix& dmean, const Matrix& dlogvar);
  void collect(ParamRefs& out);

  Linear& mean_head() { return mean_head_; }
  Linear& logvar_head() { return logvar_head_; }

 private:
  EncoderConfig cfg_;
  Embedding embed_;
  Gru rnn_;
  Linear mean_head_;
  Linear logvar_head_;
};

struct EncodeResult {
  Matrix mean;    // [B x d]
  Matrix logvar;  // [B x d], within (-10, 10)
  std::variant<MlpEncoder::Tape, GruEncoder::Tape> tape;
};

/// Parameters of the inference network (phi).
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg);
  void init(Rng& rng);

  const EncoderConfig& config() const noexcept { return cfg_; }
  std::size_t latent_dim() const noexcept { return cfg_.latent_dim; }

  EncodeResult forward(std::span<const Example> xs) const;
  /// Accumulates parameter gradients given d(loss)/d(mean), d(loss)/d(logvar).
  void backward(const EncodeResult& res, const Matrix& dmean, const Matrix& dlogvar);

  void collect(ParamRefs& out);
  ParamRefs parameters();

  /// Zero-weight heads make q(z|x) = N(0, I) for every x.
  void zero_heads();

 private:
  EncoderConfig cfg_;
  std::variant<MlpEncoder, GruEncoder> impl_;
};

using EncoderParams = Encoder;

GaussianPosterior encode(const Encoder& params, const Example& x);
/// mean + exp(logvar / 2) * e with e ~ N(0, I).
std::vector<double> reparam_sample(const GaussianPosterior& post, Rng& rng);
/// Same with a caller-provided standard-normal draw.
std::vector<double> reparam_sample(const GaussianPosterior& post, std::span<const double> noise);
/// KL(N(mean, diag(exp(logvar))) || N(0, I)).
double kl_to_reference(const GaussianPosterior& post);
/// Row-wise KL for a batch.
std::vector<double> kl_to_reference(const Matrix& mean, const Matrix& logvar);
/// log q(z|x) for a diagonal Gaussian.
double log_gaussian_density(std::span<const double> z, std::span<const double> mean,
                            std::span<const double> logvar);

}  // namespace svebm
