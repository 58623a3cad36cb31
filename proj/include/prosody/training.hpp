#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prosody/corpus.hpp"
#include "prosody/error.hpp"
#include "prosody/model.hpp"

namespace prosody::train {

using model::Critic;
using model::Generator;
using model::ModelConfig;
using nn::Id;
using nn::Tape;
using nn::Tensor;

enum class PaddingMode { none, zero };

struct TrainConfig {
  std::size_t epochs = 1000;
  int n_critic = 5;           // critic steps per generator step
  double clip_bound = 0.03;
  double lr = 5e-5;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  int recon_every = 5;        // generator steps between reconstruction steps; 0 disables
  double lambda_recon = 1.0;
  double lambda_emotion = 0.5;
  int accumulate = 16;        // samples per optimizer step
  std::uint64_t seed = 0;
  PaddingMode padding_mode = PaddingMode::none;
  // Literal reading of the paper's schedule: one generator update per
  // n_critic epochs instead of per n_critic critic steps.
  bool per_epoch_generator_schedule = false;

  void validate() const;
};

struct ImleConfig {
  int m = 10;  // noise samples per target
  std::size_t pretrain_epochs = 200;
  std::size_t epochs = 1000;
  double lr = 5e-5;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double w_estimate = 0.0;   // mean D(real) - D(fake) over the epoch's critic steps
  double critic_loss = 0.0;
  double gen_loss = 0.0;     // 0 when no generator step ran this epoch
  double recon_loss = 0.0;   // 0 when no reconstruction step ran
  double imle_loss = 0.0;    // IMLE runs only
  bool pretrain = false;     // IMLE pretraining phase
};

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;
  enum class Kind { critic, generator, reconstruction, imle } kind = Kind::critic;
  double critic_weight_max = 0.0;  // max |w| after the step
};
using StepHook = std::function<void(const StepInfo&)>;

// --- losses ---------------------------------------------------------------

// -( mean D(real) - mean D(fake) ), for minimization.
Id critic_loss(Tape& tape, Critic& critic,
               const std::vector<std::vector<double>>& real_batch,
               const std::vector<std::vector<double>>& fake_batch);

// -mean D(fake) + lambda_emotion * cross-entropy(emotion_probs, targets).
// fake_batch entries are traced per-step scalar nodes.
Id generator_loss(Tape& tape, Critic& critic,
                  const std::vector<std::vector<Id>>& fake_batch,
                  const std::vector<Id>& emotion_probs,
                  const std::vector<int>& emotion_targets,
                  double lambda_emotion,
                  const std::vector<const Tensor*>& conditions = {});

// Mean squared error over timesteps.
Id reconstruction_loss(Tape& tape, const std::vector<Id>& generated,
                       const std::vector<double>& target);

// Clamp every critic parameter into [-bound, bound].
void clip_weights(Critic& critic, double bound);
double max_abs_weight(const nn::ParamSet& params);

// --- WGAN -------------------------------------------------------------------

// Final state comes along so callers can checkpoint and resume exactly.
struct WganResult {
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Critic> critic;
  std::vector<EpochStats> history;
  std::map<std::string, Tensor> gen_accum;
  std::map<std::string, Tensor> critic_accum;
  std::string rng_state;
  std::uint64_t epoch = 0;  // total epochs completed including resumed-from
};

WganResult train_wgan(const corpus::Dataset& dataset, const ModelConfig& mc,
                      const TrainConfig& tc, const StepHook& hook = {});

// --- IMLE -------------------------------------------------------------------

// Min-over-m-noise-samples squared euclidean distance; gradients flow only
// through the winning sample. Accumulates into the generator's gradients.
double imle_step(Generator& gen, const corpus::EncodedSample& sample, int m,
                 Rng& rng);

struct ImleResult {
  std::unique_ptr<Generator> generator;
  std::vector<EpochStats> history;
  std::map<std::string, Tensor> gen_accum;
  std::string rng_state;
  std::uint64_t epoch = 0;
};

ImleResult imle_pretrain(const corpus::Dataset& dataset, const ModelConfig& mc,
                         const ImleConfig& ic);
ImleResult train_imle(const corpus::Dataset& dataset, const ModelConfig& mc,
                      const ImleConfig& ic, const StepHook& hook = {});

// --- checkpointing -----------------------------------------------------------

class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};
class CheckpointTruncatedError : public Error {
 public:
  using Error::Error;
};
class CheckpointChecksumError : public Error {
 public:
  using Error::Error;
};

struct Checkpoint {
  std::uint32_t version = 1;
  std::string model_kind;  // "gan" | "imle"
  ModelConfig config;
  std::uint64_t epoch = 0;
  std::string rng_state;
  // Data header carried along so `generate` works from the checkpoint alone.
  std::vector<std::string> vocab_tokens;
  std::vector<std::string> sentence_texts;
  std::vector<std::vector<double>> references;
  corpus::PosTable pos_table;
  // g.* generator, c.* critic, opt.g.* / opt.c.* optimizer accumulators
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Full training state round-trip helpers used by resume.
struct TrainState {
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Critic> critic;          // null for IMLE checkpoints
  std::map<std::string, Tensor> gen_accum;
  std::map<std::string, Tensor> critic_accum;
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::string model_kind;
};

Checkpoint make_checkpoint(const std::string& kind, const corpus::Dataset& ds,
                           const Generator& gen, const Critic* critic,
                           const std::map<std::string, Tensor>& gen_accum,
                           const std::map<std::string, Tensor>& critic_accum,
                           std::uint64_t epoch, const std::string& rng_state);
TrainState restore_state(const Checkpoint& ckpt);

// Resumable variants: continue from a checkpointed state for extra epochs.
WganResult resume_wgan(const corpus::Dataset& dataset, const TrainConfig& tc,
                       TrainState state, std::size_t extra_epochs,
                       const StepHook& hook = {});
ImleResult resume_imle(const corpus::Dataset& dataset, const ImleConfig& ic,
                       TrainState state, std::size_t extra_epochs,
                       const StepHook& hook = {});

}  // namespace prosody::train
