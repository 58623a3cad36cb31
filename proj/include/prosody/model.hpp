#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prosody/corpus.hpp"
#include "prosody/layers.hpp"
#include "prosody/params.hpp"
#include "prosody/rng.hpp"

namespace prosody::model {

using nn::Id;
using nn::Tape;
using nn::Tensor;

struct ModelConfig {
  std::size_t vocab_size = 54;
  std::size_t text_embed_dim = 32;
  std::size_t text_lstm_hidden = 32;
  std::size_t text_latent_dim = 20;
  std::size_t emotion_latent_dim = 3;
  std::size_t speaker_latent_dim = 8;
  std::size_t decoder_hidden = 64;
  std::size_t decoder_layers = 2;
  std::size_t critic_hidden = 64;
  std::size_t critic_layers = 2;
  double noise_mean = 0.0;
  double noise_variance = 0.7;
  bool use_speaker = true;
  bool critic_conditional = false;
  corpus::InputMode input_mode = corpus::InputMode::tokens;

  std::size_t fused_dim() const {
    return text_latent_dim + emotion_latent_dim +
           (use_speaker ? speaker_latent_dim : 0);
  }
  std::size_t input_dim() const {
    return input_mode == corpus::InputMode::tokens ? vocab_size
                                                   : corpus::kPosTagCount;
  }
  std::size_t critic_input_dim() const {
    return 1 + (critic_conditional ? corpus::kEmotionCount : 0);
  }
  void validate() const;
};

// Per-phrase noise; variance matches the latent-code scale.
struct NoiseSpec {
  double mean = 0.0;
  double variance = 0.7;
  std::size_t width = 0;

  Tensor sample(Rng& rng) const;
};

enum class NoiseInjection {
  none,     // pretraining path
  encoder,  // GAN path: add noise_encoder(z)
  direct,   // IMLE path: add z itself
};

struct GenOutput {
  std::vector<Id> lengths;  // one scalar node per timestep
  Id emotion_probs = -1;    // 6-way distribution
};

class Generator {
 public:
  Generator(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  NoiseSpec noise_spec() const;

  // linear embed -> biLSTM -> linear, one latent per timestep
  std::vector<Id> encode_text(Tape& tape, const std::vector<Tensor>& rows);
  Id encode_emotion(Tape& tape, const Tensor& emotion_onehot);
  Id encode_speaker(Tape& tape, const Tensor& speaker_onehot);

  // per timestep: concat(text_t, emo[, spk]) + injected noise
  std::vector<Id> assemble_latent(Tape& tape, const std::vector<Id>& text_latents,
                                  Id emo_latent, Id spk_latent,
                                  const Tensor& noise, NoiseInjection injection);

  // stacked LSTMs -> scalar head per step; emotion head on the final state
  GenOutput decode(Tape& tape, const std::vector<Id>& fused);

  // Full traced pass for training.
  GenOutput run(Tape& tape, const corpus::EncodedSample& sample,
                const Tensor& noise, NoiseInjection injection);

  // Value-level generation (fresh internal tape).
  corpus::RelativeSequence generate(const corpus::EncodedSample& sample, Rng& rng,
                                    NoiseInjection injection = NoiseInjection::encoder);

 private:
  ModelConfig config_;
  nn::ParamSet params_;
  Id onehot_check(Tape& tape, const Tensor& v, std::size_t width, const char* what);
};

class Critic {
 public:
  Critic(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Traced score over a sequence of per-step scalar nodes.
  Id criticize(Tape& tape, const std::vector<Id>& lengths,
               const Tensor* emotion_onehot = nullptr);
  // Convenience over raw values.
  Id criticize(Tape& tape, const std::vector<double>& lengths,
               const Tensor* emotion_onehot = nullptr);
  double score(const std::vector<double>& lengths,
               const Tensor* emotion_onehot = nullptr);

 private:
  ModelConfig config_;
  nn::ParamSet params_;
};

}  // namespace prosody::model
