#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "svebm/example.hpp"
#include "svebm/generator.hpp"
#include "svebm/inference_net.hpp"
#include "svebm/prior_ebm.hpp"

namespace svebm {

struct ModelConfig {
  Modality modality = Modality::Points;
  std::size_t latent_dim = 2;
  std::size_t num_classes = 2;
  std::size_t data_dim = 2;  // point dimension, or vocabulary size for text
  std::vector<std::size_t> prior_hidden{200, 200};
  std::vector<std::size_t> encoder_hidden{128, 128};
  std::vector<std::size_t> decoder_hidden{128, 128};
  Activation activation = Activation::Swish;
  double prior_output_gain = 0.1;
  double observation_std = 0.1;
  std::size_t embed_dim = 64;
  std::size_t rnn_hidden = 512;
  std::size_t max_len = 40;

  PriorConfig prior_config() const;
  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
};

/// Prior (alpha), inference network (phi) and generator (beta), plus the
/// vocabulary for text modalities.
struct Model {
  ModelConfig config;
  EnergyParams prior;
  Encoder encoder;
  Decoder decoder;
  Vocabulary vocab;

  Model() = default;
  explicit Model(const ModelConfig& cfg);

  void init(Rng& rng);

  ParamRefs prior_params() { return prior.parameters(); }
  ParamRefs encoder_params() { return encoder.parameters(); }
  ParamRefs decoder_params() { return decoder.parameters(); }
  /// psi = (encoder, decoder).
  ParamRefs psi_params();
  /// gamma = (prior, encoder).
  ParamRefs supervised_params();
  ParamRefs all_params();
};

}  // namespace svebm
