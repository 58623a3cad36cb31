#include "prosody/model.hpp"

#include <algorithm>
#include <cmath>

#include "prosody/error.hpp"

namespace prosody::model {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) fail("model config: ", name, " must be >= 1");
  };
  positive(vocab_size, "vocab_size");
  positive(text_embed_dim, "text_embed_dim");
  positive(text_lstm_hidden, "text_lstm_hidden");
  positive(text_latent_dim, "text_latent_dim");
  positive(emotion_latent_dim, "emotion_latent_dim");
  positive(speaker_latent_dim, "speaker_latent_dim");
  positive(decoder_hidden, "decoder_hidden");
  positive(decoder_layers, "decoder_layers");
  positive(critic_hidden, "critic_hidden");
  positive(critic_layers, "critic_layers");
  if (!(noise_variance > 0.0)) fail("model config: noise_variance must be > 0");
}

Tensor NoiseSpec::sample(Rng& rng) const {
  Tensor z({width});
  const double stddev = std::sqrt(variance);
  for (double& v : z.data()) v = rng.normal(mean, stddev);
  return z;
}

Generator::Generator(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const std::size_t in = config_.input_dim();
  const std::size_t H = config_.text_lstm_hidden;
  nn::add_linear(params_, "text.embed", config_.text_embed_dim, in);
  nn::add_lstm(params_, "text.fwd", H, config_.text_embed_dim);
  nn::add_lstm(params_, "text.bwd", H, config_.text_embed_dim);
  nn::add_linear(params_, "text.latent", config_.text_latent_dim, 2 * H);
  nn::add_linear(params_, "emotion.l1", config_.emotion_latent_dim,
                 corpus::kEmotionCount);
  nn::add_linear(params_, "emotion.l2", config_.emotion_latent_dim,
                 config_.emotion_latent_dim);
  if (config_.use_speaker) {
    nn::add_linear(params_, "speaker.l1", config_.speaker_latent_dim,
                   corpus::kSpeakerCount);
    nn::add_linear(params_, "speaker.l2", config_.speaker_latent_dim,
                   config_.speaker_latent_dim);
  }
  nn::add_linear(params_, "noise.proj", config_.fused_dim(), config_.fused_dim());
  std::size_t dec_in = config_.fused_dim();
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    nn::add_lstm(params_, cat("decoder.lstm", l), config_.decoder_hidden, dec_in);
    dec_in = config_.decoder_hidden;
  }
  nn::add_linear(params_, "decoder.out", 1, config_.decoder_hidden);
  nn::add_linear(params_, "decoder.emotion", corpus::kEmotionCount,
                 config_.decoder_hidden);
  nn::init_param_values(params_, rng);
}

NoiseSpec Generator::noise_spec() const {
  return {config_.noise_mean, config_.noise_variance, config_.fused_dim()};
}

Id Generator::onehot_check(Tape& tape, const Tensor& v, std::size_t width,
                           const char* what) {
  if (v.rank() != 1 || v.size() != width) {
    fail(what, ": expected a 1-hot of width ", width, ", got ", nn::shape_str(v));
  }
  double total = 0.0;
  for (double x : v.data()) total += x;
  if (std::abs(total - 1.0) > 1e-9) {
    fail(what, ": vector sums to ", total, ", not 1");
  }
  return tape.leaf(v);
}

std::vector<Id> Generator::encode_text(Tape& tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) fail("encode_text: empty token sequence");
  const std::size_t in = config_.input_dim();
  auto embed = nn::bind(tape, nn::linear_ref(params_, "text.embed"));
  auto fwd = nn::lstm_ref(params_, "text.fwd");
  auto bwd = nn::lstm_ref(params_, "text.bwd");
  auto latent = nn::bind(tape, nn::linear_ref(params_, "text.latent"));
  std::vector<Id> embedded;
  embedded.reserve(rows.size());
  for (const Tensor& row : rows) {
    if (row.rank() != 1 || row.size() != in) {
      fail("encode_text: token row has width ", row.size(), ", expected ", in);
    }
    embedded.push_back(nn::linear(tape, embed, tape.leaf(row)));
  }
  auto context = nn::bilstm(tape, fwd, bwd, embedded);
  std::vector<Id> out;
  out.reserve(context.size());
  for (Id h : context) out.push_back(nn::linear(tape, latent, h));
  return out;
}

Id Generator::encode_emotion(Tape& tape, const Tensor& emotion_onehot) {
  Id x = onehot_check(tape, emotion_onehot, corpus::kEmotionCount, "encode_emotion");
  Id h = tape.tanh(nn::linear(tape, nn::linear_ref(params_, "emotion.l1"), x));
  return nn::linear(tape, nn::linear_ref(params_, "emotion.l2"), h);
}

Id Generator::encode_speaker(Tape& tape, const Tensor& speaker_onehot) {
  if (!config_.use_speaker) fail("encode_speaker: model has no speaker encoder");
  Id x = onehot_check(tape, speaker_onehot, corpus::kSpeakerCount, "encode_speaker");
  Id h = tape.tanh(nn::linear(tape, nn::linear_ref(params_, "speaker.l1"), x));
  return nn::linear(tape, nn::linear_ref(params_, "speaker.l2"), h);
}

std::vector<Id> Generator::assemble_latent(Tape& tape,
                                           const std::vector<Id>& text_latents,
                                           Id emo_latent, Id spk_latent,
                                           const Tensor& noise,
                                           NoiseInjection injection) {
  if (text_latents.empty()) fail("assemble_latent: empty text latents");
  Id noise_term = -1;
  if (injection != NoiseInjection::none) {
    if (noise.rank() != 1 || noise.size() != config_.fused_dim()) {
      fail("assemble_latent: noise width ", noise.size(), ", expected ",
           config_.fused_dim());
    }
    Id z = tape.leaf(noise);
    noise_term = injection == NoiseInjection::encoder
                     ? nn::linear(tape, nn::linear_ref(params_, "noise.proj"), z)
                     : z;
  }
  std::vector<Id> fused;
  fused.reserve(text_latents.size());
  for (Id text_t : text_latents) {
    std::vector<Id> parts{text_t, emo_latent};
    if (config_.use_speaker) parts.push_back(spk_latent);
    Id merged = tape.concat(parts);
    if (tape.value(merged).size() != config_.fused_dim()) {
      fail("assemble_latent: fused width ", tape.value(merged).size(),
           ", expected ", config_.fused_dim());
    }
    fused.push_back(noise_term >= 0 ? tape.add(merged, noise_term) : merged);
  }
  return fused;
}

GenOutput Generator::decode(Tape& tape, const std::vector<Id>& fused) {
  if (fused.empty()) fail("decode: empty latent sequence");
  std::vector<Id> seq = fused;
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    seq = nn::lstm_run(tape, nn::lstm_ref(params_, cat("decoder.lstm", l)), seq);
  }
  auto out_head = nn::bind(tape, nn::linear_ref(params_, "decoder.out"));
  GenOutput out;
  out.lengths.reserve(seq.size());
  for (Id h : seq) out.lengths.push_back(nn::linear(tape, out_head, h));
  Id logits = nn::linear(tape, nn::linear_ref(params_, "decoder.emotion"), seq.back());
  out.emotion_probs = tape.softmax(logits);
  return out;
}

GenOutput Generator::run(Tape& tape, const corpus::EncodedSample& sample,
                         const Tensor& noise, NoiseInjection injection) {
  auto text = encode_text(tape, sample.rows);
  Id emo = encode_emotion(tape, sample.emotion_onehot);
  Id spk = config_.use_speaker ? encode_speaker(tape, sample.speaker_onehot) : -1;
  auto fused = assemble_latent(tape, text, emo, spk, noise, injection);
  return decode(tape, fused);
}

corpus::RelativeSequence Generator::generate(const corpus::EncodedSample& sample,
                                             Rng& rng, NoiseInjection injection) {
  Tape tape;
  Tensor noise;
  if (injection != NoiseInjection::none) noise = noise_spec().sample(rng);
  GenOutput out = run(tape, sample, noise, injection);
  corpus::RelativeSequence rel;
  rel.sentence_id = sample.sentence_id;
  rel.emotion = sample.emotion;
  rel.speaker_id = sample.speaker_id;
  rel.values.reserve(out.lengths.size());
  for (Id id : out.lengths) rel.values.push_back(tape.value(id).item());
  return rel;
}

Critic::Critic(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  std::size_t in = config_.critic_input_dim();
  for (std::size_t l = 0; l < config_.critic_layers; ++l) {
    nn::add_lstm(params_, cat("critic.lstm", l), config_.critic_hidden, in);
    in = config_.critic_hidden;
  }
  const std::size_t mid = std::max<std::size_t>(1, config_.critic_hidden / 2);
  nn::add_linear(params_, "critic.head1", mid, config_.critic_hidden);
  nn::add_linear(params_, "critic.head2", 1, mid);
  nn::init_param_values(params_, rng);
}

Id Critic::criticize(Tape& tape, const std::vector<Id>& lengths,
                     const Tensor* emotion_onehot) {
  if (lengths.empty()) fail("criticize: empty sequence");
  Id cond = -1;
  if (config_.critic_conditional) {
    if (emotion_onehot == nullptr) {
      fail("criticize: conditional critic needs the emotion 1-hot");
    }
    cond = tape.leaf(*emotion_onehot);
  }
  std::vector<Id> seq;
  seq.reserve(lengths.size());
  for (Id r : lengths) {
    if (tape.value(r).size() != 1) {
      fail("criticize: per-step input must be scalar, got ",
           nn::shape_str(tape.value(r)));
    }
    seq.push_back(cond >= 0 ? tape.concat({r, cond}) : r);
  }
  for (std::size_t l = 0; l < config_.critic_layers; ++l) {
    seq = nn::lstm_run(tape, nn::lstm_ref(params_, cat("critic.lstm", l)), seq);
  }
  Id h = tape.tanh(nn::linear(tape, nn::linear_ref(params_, "critic.head1"), seq.back()));
  return nn::linear(tape, nn::linear_ref(params_, "critic.head2"), h);
}

Id Critic::criticize(Tape& tape, const std::vector<double>& lengths,
                     const Tensor* emotion_onehot) {
  std::vector<Id> ids;
  ids.reserve(lengths.size());
  for (double v : lengths) ids.push_back(tape.leaf(Tensor::scalar(v)));
  return criticize(tape, ids, emotion_onehot);
}

double Critic::score(const std::vector<double>& lengths,
                     const Tensor* emotion_onehot) {
  Tape tape;
  return tape.value(criticize(tape, lengths, emotion_onehot)).item();
}

}  // namespace prosody::model
