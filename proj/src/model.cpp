#include "svebm/model.hpp"

#include "svebm/errors.hpp"

namespace svebm {

PriorConfig ModelConfig::prior_config() const {
  return PriorConfig{latent_dim, num_classes, prior_hidden, activation};
}

EncoderConfig ModelConfig::encoder_config() const {
  EncoderConfig c;
  c.modality = modality;
  c.latent_dim = latent_dim;
  c.input_dim = data_dim;
  c.hidden = encoder_hidden;
  c.activation = activation;
  c.vocab_size = data_dim;
  c.embed_dim = embed_dim;
  c.rnn_hidden = rnn_hidden;
  return c;
}

DecoderConfig ModelConfig::decoder_config() const {
  DecoderConfig c;
  c.modality = modality;
  c.latent_dim = latent_dim;
  c.output_dim = data_dim;
  c.hidden = decoder_hidden;
  c.activation = activation;
  c.observation_std = observation_std;
  c.embed_dim = embed_dim;
  c.rnn_hidden = rnn_hidden;
  c.max_len = max_len;
  return c;
}

Model::Model(const ModelConfig& cfg)
    : config(cfg),
      prior(cfg.prior_config()),
      encoder(cfg.encoder_config()),
      decoder(cfg.decoder_config()) {
  require(cfg.data_dim >= 1, "model: data dimension must be >= 1");
}

void Model::init(Rng& rng) {
  prior.init(rng, config.prior_output_gain);
  encoder.init(rng);
  decoder.init(rng);
}

ParamRefs Model::psi_params() {
  ParamRefs out;
  encoder.collect(out);
  decoder.collect(out);
  return out;
}

ParamRefs Model::supervised_params() {
  ParamRefs out;
  prior.collect(out);
  encoder.collect(out);
  return out;
}

ParamRefs Model::all_params() {
  ParamRefs out;
  prior.collect(out);
  encoder.collect(out);
  decoder.collect(out);
  return out;
}

}  // namespace svebm
