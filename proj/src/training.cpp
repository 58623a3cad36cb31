#include "prosody/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prosody/error.hpp"

namespace prosody::train {

void TrainConfig::validate() const {
  if (!(clip_bound > 0.0)) fail("train config: clip_bound must be > 0");
  if (n_critic < 1) fail("train config: n_critic must be >= 1");
  if (accumulate < 1) fail("train config: accumulate must be >= 1");
  if (!(lr > 0.0)) fail("train config: lr must be > 0");
  if (recon_every < 0) fail("train config: recon_every must be >= 0");
}

void ImleConfig::validate() const {
  if (m < 1) fail("imle config: m must be >= 1");
  if (!(lr > 0.0)) fail("imle config: lr must be > 0");
}

Id critic_loss(Tape& tape, Critic& critic,
               const std::vector<std::vector<double>>& real_batch,
               const std::vector<std::vector<double>>& fake_batch) {
  if (real_batch.empty() || fake_batch.empty()) {
    fail("critic_loss: empty batch");
  }
  std::vector<Id> real_scores, fake_scores;
  for (const auto& seq : real_batch) real_scores.push_back(critic.criticize(tape, seq));
  for (const auto& seq : fake_batch) fake_scores.push_back(critic.criticize(tape, seq));
  Id mean_real = tape.mean(tape.concat(real_scores));
  Id mean_fake = tape.mean(tape.concat(fake_scores));
  return tape.sub(mean_fake, mean_real);
}

namespace {

Id critic_loss_conditional(Tape& tape, Critic& critic,
                           const std::vector<double>& real_seq,
                           const std::vector<double>& fake_seq,
                           const Tensor* condition) {
  Id real_score = critic.criticize(tape, real_seq, condition);
  Id fake_score = critic.criticize(tape, fake_seq, condition);
  return tape.sub(fake_score, real_score);
}

Id cross_entropy(Tape& tape, Id probs, int target_index) {
  Id p = tape.slice(probs, static_cast<std::size_t>(target_index), 1);
  return tape.scale(tape.log(p), -1.0);
}

}  // namespace

Id generator_loss(Tape& tape, Critic& critic,
                  const std::vector<std::vector<Id>>& fake_batch,
                  const std::vector<Id>& emotion_probs,
                  const std::vector<int>& emotion_targets,
                  double lambda_emotion,
                  const std::vector<const Tensor*>& conditions) {
  if (fake_batch.empty()) fail("generator_loss: empty batch");
  if (emotion_probs.size() != fake_batch.size() ||
      emotion_targets.size() != fake_batch.size()) {
    fail("generator_loss: batch sizes disagree");
  }
  std::vector<Id> scores;
  std::vector<Id> ces;
  for (std::size_t i = 0; i < fake_batch.size(); ++i) {
    const Tensor* cond = i < conditions.size() ? conditions[i] : nullptr;
    scores.push_back(critic.criticize(tape, fake_batch[i], cond));
    ces.push_back(cross_entropy(tape, emotion_probs[i], emotion_targets[i]));
  }
  Id loss = tape.scale(tape.mean(tape.concat(scores)), -1.0);
  if (lambda_emotion != 0.0) {
    loss = tape.add(loss, tape.scale(tape.mean(tape.concat(ces)), lambda_emotion));
  }
  return loss;
}

Id reconstruction_loss(Tape& tape, const std::vector<Id>& generated,
                       const std::vector<double>& target) {
  if (generated.size() != target.size()) {
    fail("reconstruction_loss: ", generated.size(), " generated vs ",
         target.size(), " target values");
  }
  Id gen_seq = tape.concat(generated);
  Id tgt = tape.leaf(Tensor::from_vector(target));
  return tape.scale(tape.sum_sq_diff(gen_seq, tgt),
                    1.0 / static_cast<double>(target.size()));
}

void clip_weights(Critic& critic, double bound) {
  if (!(bound > 0.0)) fail("clip_weights: bound must be > 0");
  nn::ParamSet& params = critic.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double& v : params.at(i).tensor.data()) {
      v = std::clamp(v, -bound, bound);
    }
  }
}

double max_abs_weight(const nn::ParamSet& params) {
  double mx = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double v : params.at(i).tensor.data()) mx = std::max(mx, std::abs(v));
  }
  return mx;
}

namespace {

void check_finite(double v, const char* what, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(cat("training: non-finite ", what, " at epoch ", epoch,
                           ", step ", step));
  }
}

std::vector<corpus::EncodedSample> encode_all(const corpus::Dataset& ds,
                                              const ModelConfig& mc,
                                              PaddingMode padding) {
  std::vector<corpus::EncodedSample> encoded;
  encoded.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    encoded.push_back(corpus::encode_dataset_sample(ds, s, mc.input_mode));
  }
  if (padding == PaddingMode::zero) {
    std::size_t max_len = 0;
    for (const auto& e : encoded) max_len = std::max(max_len, e.rows.size());
    const std::size_t width = mc.input_dim();
    for (auto& e : encoded) {
      while (e.rows.size() < max_len) {
        e.rows.push_back(Tensor({width}));
        e.target.push_back(0.0);
      }
    }
  }
  return encoded;
}

struct WganLoop {
  const TrainConfig& tc;
  Generator& gen;
  Critic& critic;
  nn::RmsProp& opt_g;
  nn::RmsProp& opt_c;
  Rng& rng;
  const std::vector<corpus::EncodedSample>& encoded;
  const StepHook& hook;

  std::size_t steps_per_epoch() const {
    const std::size_t n = encoded.size();
    const std::size_t k = static_cast<std::size_t>(tc.accumulate);
    return (n + k - 1) / k;
  }

  void fire(std::size_t epoch, std::size_t step, StepInfo::Kind kind) {
    if (!hook) return;
    hook({epoch, step, kind, max_abs_weight(critic.params())});
  }

  std::vector<double> generate_values(const corpus::EncodedSample& sample) {
    Tape tape;
    Tensor noise = gen.noise_spec().sample(rng);
    auto out = gen.run(tape, sample, noise, model::NoiseInjection::encoder);
    std::vector<double> values;
    values.reserve(out.lengths.size());
    for (Id id : out.lengths) values.push_back(tape.value(id).item());
    return values;
  }

  std::vector<std::size_t> order_cache;

  // One epoch; epoch_no is 1-based across the whole (possibly resumed) run.
  EpochStats run_epoch(std::size_t epoch_no, std::size_t& global_step,
                       std::size_t& gen_steps) {
    EpochStats stats;
    stats.epoch = epoch_no;
    order_cache.resize(encoded.size());
    std::iota(order_cache.begin(), order_cache.end(), 0);
    rng.shuffle(order_cache);
    const std::vector<std::size_t>& order = order_cache;

    double w_sum = 0.0, closs_sum = 0.0;
    std::size_t critic_steps = 0;
    double gloss_sum = 0.0, rloss_sum = 0.0;
    std::size_t gen_count = 0, recon_count = 0;

    for (std::size_t base = 0; base < order.size();
         base += static_cast<std::size_t>(tc.accumulate)) {
      const std::size_t chunk_end =
          std::min(order.size(), base + static_cast<std::size_t>(tc.accumulate));
      const std::size_t chunk = chunk_end - base;
      const double inv = 1.0 / static_cast<double>(chunk);

      // critic update, one variable-length sample at a time
      critic.params().zero_grad();
      double step_w = 0.0, step_loss = 0.0;
      for (std::size_t j = base; j < chunk_end; ++j) {
        const corpus::EncodedSample& sample = encoded[order[j]];
        const std::vector<double> fake = generate_values(sample);
        Tape tape;
        Id loss = critic.config().critic_conditional
                      ? critic_loss_conditional(tape, critic, sample.target, fake,
                                                &sample.emotion_onehot)
                      : critic_loss(tape, critic, {sample.target}, {fake});
        const double lv = tape.value(loss).item();
        check_finite(lv, "critic loss", epoch_no, global_step + 1);
        tape.backward(loss, inv);
        step_loss += lv * inv;
        step_w += -lv * inv;
      }
      opt_c.step(critic.params());
      critic.params().zero_grad();
      clip_weights(critic, tc.clip_bound);
      ++global_step;
      ++critic_steps;
      w_sum += step_w;
      closs_sum += step_loss;
      fire(epoch_no, global_step, StepInfo::Kind::critic);

      const bool gen_due = !tc.per_epoch_generator_schedule &&
                           global_step % static_cast<std::size_t>(tc.n_critic) == 0;
      if (gen_due) {
        gloss_sum += generator_update(epoch_no, global_step, base, chunk_end, inv);
        ++gen_count;
        ++gen_steps;
        if (tc.recon_every > 0 &&
            gen_steps % static_cast<std::size_t>(tc.recon_every) == 0) {
          rloss_sum += reconstruction_update(epoch_no, global_step, base,
                                             chunk_end, inv);
          ++recon_count;
        }
      }
    }

    if (tc.per_epoch_generator_schedule &&
        epoch_no % static_cast<std::size_t>(tc.n_critic) == 0) {
      const std::size_t chunk =
          std::min<std::size_t>(encoded.size(), static_cast<std::size_t>(tc.accumulate));
      gloss_sum += generator_update(epoch_no, global_step, 0, chunk,
                                    1.0 / static_cast<double>(chunk));
      ++gen_count;
      ++gen_steps;
      if (tc.recon_every > 0 &&
          gen_steps % static_cast<std::size_t>(tc.recon_every) == 0) {
        rloss_sum += reconstruction_update(epoch_no, global_step, 0, chunk,
                                           1.0 / static_cast<double>(chunk));
        ++recon_count;
      }
    }

    stats.w_estimate = critic_steps ? w_sum / static_cast<double>(critic_steps) : 0.0;
    stats.critic_loss = critic_steps ? closs_sum / static_cast<double>(critic_steps) : 0.0;
    stats.gen_loss = gen_count ? gloss_sum / static_cast<double>(gen_count) : 0.0;
    stats.recon_loss = recon_count ? rloss_sum / static_cast<double>(recon_count) : 0.0;
    return stats;
  }

  double generator_update(std::size_t epoch_no, std::size_t global_step,
                          std::size_t base, std::size_t chunk_end, double inv) {
    gen.params().zero_grad();
    double total = 0.0;
    for (std::size_t j = base; j < chunk_end; ++j) {
      const corpus::EncodedSample& sample = encoded[order_cache[j]];
      Tensor noise = gen.noise_spec().sample(rng);
      Tape tape;
      auto out = gen.run(tape, sample, noise, model::NoiseInjection::encoder);
      const Tensor* cond =
          critic.config().critic_conditional ? &sample.emotion_onehot : nullptr;
      Id loss = generator_loss(tape, critic, {out.lengths}, {out.emotion_probs},
                               {static_cast<int>(sample.emotion)},
                               tc.lambda_emotion, {cond});
      const double lv = tape.value(loss).item();
      check_finite(lv, "generator loss", epoch_no, global_step);
      tape.backward(loss, inv);
      total += lv * inv;
    }
    opt_g.step(gen.params());
    gen.params().zero_grad();
    critic.params().zero_grad();
    fire(epoch_no, global_step, StepInfo::Kind::generator);
    return total;
  }

  double reconstruction_update(std::size_t epoch_no, std::size_t global_step,
                               std::size_t base, std::size_t chunk_end, double inv) {
    gen.params().zero_grad();
    double total = 0.0;
    for (std::size_t j = base; j < chunk_end; ++j) {
      const corpus::EncodedSample& sample = encoded[order_cache[j]];
      Tensor noise = gen.noise_spec().sample(rng);
      Tape tape;
      auto out = gen.run(tape, sample, noise, model::NoiseInjection::encoder);
      Id loss = tape.scale(reconstruction_loss(tape, out.lengths, sample.target),
                           tc.lambda_recon);
      const double lv = tape.value(loss).item();
      check_finite(lv, "reconstruction loss", epoch_no, global_step);
      tape.backward(loss, inv);
      total += lv * inv;
    }
    opt_g.step(gen.params());
    gen.params().zero_grad();
    fire(epoch_no, global_step, StepInfo::Kind::reconstruction);
    return total;
  }
};

std::vector<EpochStats> run_wgan_epochs(const corpus::Dataset& dataset,
                                        const TrainConfig& tc, Generator& gen,
                                        Critic& critic, nn::RmsProp& opt_g,
                                        nn::RmsProp& opt_c, Rng& rng,
                                        std::size_t first_epoch,
                                        std::size_t epochs, const StepHook& hook) {
  if (dataset.samples.empty()) fail("train: dataset is empty");
  auto encoded = encode_all(dataset, gen.config(), tc.padding_mode);
  WganLoop loop{tc, gen, critic, opt_g, opt_c, rng, encoded, hook, {}};

  // Counters continue across resumes; both are pure functions of the epoch
  // count for a fixed dataset and config.
  std::size_t global_step = first_epoch * loop.steps_per_epoch();
  std::size_t gen_steps;
  if (tc.per_epoch_generator_schedule) {
    gen_steps = first_epoch / static_cast<std::size_t>(tc.n_critic);
  } else {
    gen_steps = global_step / static_cast<std::size_t>(tc.n_critic);
  }

  std::vector<EpochStats> history;
  history.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    history.push_back(loop.run_epoch(first_epoch + e + 1, global_step, gen_steps));
  }
  return history;
}

}  // namespace

WganResult train_wgan(const corpus::Dataset& dataset, const ModelConfig& mc,
                      const TrainConfig& tc, const StepHook& hook) {
  mc.validate();
  tc.validate();
  Rng rng(tc.seed);
  auto gen = std::make_unique<Generator>(mc, rng);
  auto critic = std::make_unique<Critic>(mc, rng);
  nn::RmsProp opt_g(tc.lr, tc.rms_decay, tc.rms_eps);
  nn::RmsProp opt_c(tc.lr, tc.rms_decay, tc.rms_eps);
  auto history = run_wgan_epochs(dataset, tc, *gen, *critic, opt_g, opt_c, rng, 0,
                                 tc.epochs, hook);
  WganResult result;
  result.generator = std::move(gen);
  result.critic = std::move(critic);
  result.history = std::move(history);
  result.gen_accum = std::move(opt_g.accumulators());
  result.critic_accum = std::move(opt_c.accumulators());
  result.rng_state = rng.save_state();
  result.epoch = tc.epochs;
  return result;
}

WganResult resume_wgan(const corpus::Dataset& dataset, const TrainConfig& tc,
                       TrainState state, std::size_t extra_epochs,
                       const StepHook& hook) {
  tc.validate();
  if (!state.generator || !state.critic) {
    fail("resume: checkpoint does not hold a WGAN state");
  }
  Rng rng(0);
  rng.restore_state(state.rng_state);
  nn::RmsProp opt_g(tc.lr, tc.rms_decay, tc.rms_eps);
  nn::RmsProp opt_c(tc.lr, tc.rms_decay, tc.rms_eps);
  opt_g.accumulators() = std::move(state.gen_accum);
  opt_c.accumulators() = std::move(state.critic_accum);
  auto history =
      run_wgan_epochs(dataset, tc, *state.generator, *state.critic, opt_g, opt_c,
                      rng, state.epoch, extra_epochs, hook);
  WganResult result;
  result.generator = std::move(state.generator);
  result.critic = std::move(state.critic);
  result.history = std::move(history);
  result.gen_accum = std::move(opt_g.accumulators());
  result.critic_accum = std::move(opt_c.accumulators());
  result.rng_state = rng.save_state();
  result.epoch = state.epoch + extra_epochs;
  return result;
}

// --- IMLE -------------------------------------------------------------------

double imle_step(Generator& gen, const corpus::EncodedSample& sample, int m,
                 Rng& rng) {
  if (m < 1) fail("imle_step: m must be >= 1");
  const model::NoiseSpec spec = gen.noise_spec();
  std::vector<Tensor> noises;
  noises.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) noises.push_back(spec.sample(rng));

  // Value-only pass over all m candidates, then one traced pass through the
  // winner so gradients flow only through it.
  int best = 0;
  double best_dist = 0.0;
  for (int i = 0; i < m; ++i) {
    Tape tape;
    auto out = gen.run(tape, sample, noises[static_cast<std::size_t>(i)],
                       model::NoiseInjection::direct);
    double dist = 0.0;
    for (std::size_t t = 0; t < out.lengths.size(); ++t) {
      const double d = tape.value(out.lengths[t]).item() - sample.target[t];
      dist += d * d;
    }
    if (i == 0 || dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }

  Tape tape;
  auto out = gen.run(tape, sample, noises[static_cast<std::size_t>(best)],
                     model::NoiseInjection::direct);
  Id gen_seq = tape.concat(out.lengths);
  Id target = tape.leaf(Tensor::from_vector(sample.target));
  Id loss = tape.sum_sq_diff(gen_seq, target);
  const double lv = tape.value(loss).item();
  if (!std::isfinite(lv)) {
    throw NumericError(cat("imle_step: non-finite loss"));
  }
  tape.backward(loss);
  return lv;
}

namespace {

std::vector<EpochStats> run_imle_epochs(const corpus::Dataset& dataset,
                                        const ImleConfig& ic, Generator& gen,
                                        nn::RmsProp& opt, Rng& rng,
                                        std::size_t first_epoch,
                                        std::size_t epochs, const StepHook& hook) {
  if (dataset.samples.empty()) fail("train: dataset is empty");
  auto encoded = encode_all(dataset, gen.config(), PaddingMode::none);
  std::vector<EpochStats> history;
  history.reserve(epochs);
  std::size_t step = first_epoch * encoded.size();
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch_no = first_epoch + e + 1;
    const bool pretrain = epoch_no <= ic.pretrain_epochs;
    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const corpus::EncodedSample& sample = encoded[idx];
      double lv;
      if (pretrain) {
        gen.params().zero_grad();
        Tape tape;
        auto out = gen.run(tape, sample, Tensor(), model::NoiseInjection::none);
        Id loss = reconstruction_loss(tape, out.lengths, sample.target);
        lv = tape.value(loss).item();
        check_finite(lv, "pretrain loss", epoch_no, step + 1);
        tape.backward(loss);
      } else {
        gen.params().zero_grad();
        lv = imle_step(gen, sample, ic.m, rng);
      }
      opt.step(gen.params());
      gen.params().zero_grad();
      ++step;
      if (hook) hook({epoch_no, step, StepInfo::Kind::imle, 0.0});
      loss_sum += lv;
    }
    EpochStats stats;
    stats.epoch = epoch_no;
    stats.pretrain = pretrain;
    stats.imle_loss = loss_sum / static_cast<double>(encoded.size());
    history.push_back(stats);
  }
  return history;
}

}  // namespace

namespace {
ImleResult finish_imle(std::unique_ptr<Generator> gen,
                       std::vector<EpochStats> history, nn::RmsProp& opt,
                       Rng& rng, std::uint64_t epoch) {
  ImleResult result;
  result.generator = std::move(gen);
  result.history = std::move(history);
  result.gen_accum = std::move(opt.accumulators());
  result.rng_state = rng.save_state();
  result.epoch = epoch;
  return result;
}
}  // namespace

ImleResult imle_pretrain(const corpus::Dataset& dataset, const ModelConfig& mc,
                         const ImleConfig& ic) {
  mc.validate();
  ic.validate();
  Rng rng(ic.seed);
  auto gen = std::make_unique<Generator>(mc, rng);
  nn::RmsProp opt(ic.lr, ic.rms_decay, ic.rms_eps);
  auto history =
      run_imle_epochs(dataset, ic, *gen, opt, rng, 0, ic.pretrain_epochs, {});
  return finish_imle(std::move(gen), std::move(history), opt, rng,
                     ic.pretrain_epochs);
}

ImleResult train_imle(const corpus::Dataset& dataset, const ModelConfig& mc,
                      const ImleConfig& ic, const StepHook& hook) {
  mc.validate();
  ic.validate();
  Rng rng(ic.seed);
  auto gen = std::make_unique<Generator>(mc, rng);
  nn::RmsProp opt(ic.lr, ic.rms_decay, ic.rms_eps);
  auto history = run_imle_epochs(dataset, ic, *gen, opt, rng, 0,
                                 ic.pretrain_epochs + ic.epochs, hook);
  return finish_imle(std::move(gen), std::move(history), opt, rng,
                     ic.pretrain_epochs + ic.epochs);
}

ImleResult resume_imle(const corpus::Dataset& dataset, const ImleConfig& ic,
                       TrainState state, std::size_t extra_epochs,
                       const StepHook& hook) {
  ic.validate();
  if (!state.generator) fail("resume: checkpoint does not hold a generator");
  Rng rng(0);
  rng.restore_state(state.rng_state);
  nn::RmsProp opt(ic.lr, ic.rms_decay, ic.rms_eps);
  opt.accumulators() = std::move(state.gen_accum);
  auto history = run_imle_epochs(dataset, ic, *state.generator, opt, rng,
                                 state.epoch, extra_epochs, hook);
  return finish_imle(std::move(state.generator), std::move(history), opt, rng,
                     state.epoch + extra_epochs);
}

}  // namespace prosody::train
