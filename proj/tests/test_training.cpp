#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>

#include "prosody/error.hpp"
#include "prosody/training.hpp"
#include "testutil.hpp"

using namespace prosody;
using model::Critic;
using model::Generator;
using model::ModelConfig;
using nn::Tape;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(std::size_t vocab) {
  ModelConfig mc;
  mc.vocab_size = vocab;
  mc.text_embed_dim = 6;
  mc.text_lstm_hidden = 6;
  mc.text_latent_dim = 6;
  mc.speaker_latent_dim = 3;
  mc.decoder_hidden = 8;
  mc.critic_hidden = 8;
  return mc;
}

corpus::Dataset toy_dataset(double noise, std::uint64_t seed, int sentences = 2,
                            int speakers = 2, int clips = 2) {
  corpus::SynthSpec spec;
  for (int i = 0; i < sentences; ++i) spec.sentence_ids.push_back(i + 2);
  spec.emotions = {corpus::Emotion::neutral, corpus::Emotion::happy,
                   corpus::Emotion::anger};
  for (int i = 0; i < speakers; ++i) spec.speaker_ids.push_back(i);
  spec.clips_per_cell = clips;
  spec.noise_scale = noise;
  for (int sid : spec.sentence_ids) {
    const std::size_t n = corpus::fixture_sentences()[sid].words.size();
    spec.means[{sid, corpus::Emotion::happy}] = std::vector<double>(n, 0.3);
    spec.means[{sid, corpus::Emotion::anger}] = std::vector<double>(n, -0.2);
  }
  return corpus::prepare_dataset(corpus::synth_corpus(spec, seed), 0.5);
}

bool params_equal(const nn::ParamSet& a, const nn::ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.at(i).name != b.at(i).name) return false;
    if (a.at(i).tensor.data() != b.at(i).tensor.data()) return false;
  }
  return true;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("prosody_train_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("critic loss follows the wasserstein sign convention") {
  Rng rng(1);
  auto mc = small_config(8);
  Critic critic(mc, rng);

  SUBCASE("identical real and fake batches score zero") {
    std::vector<std::vector<double>> batch = {{0.1, 0.2, 0.3}, {0.0, -0.1, 0.2}};
    Tape tape;
    auto loss = train::critic_loss(tape, critic, batch, batch);
    CHECK(tape.value(loss).item() == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("a zero-parameter critic scores zero") {
    for (std::size_t i = 0; i < critic.params().size(); ++i) {
      critic.params().at(i).tensor.fill(0.0);
    }
    Tape tape;
    auto loss = train::critic_loss(tape, critic, {{0.5, 0.1}}, {{-0.3, 0.2}});
    CHECK(tape.value(loss).item() == 0.0);
  }

  SUBCASE("loss equals mean fake score minus mean real score") {
    std::vector<std::vector<double>> real = {{0.3, 0.35, 0.3}, {0.28, 0.3, 0.31}};
    std::vector<std::vector<double>> fake = {{0.0, 0.05, -0.02}, {0.6, 0.55, 0.62}};
    double mean_real = 0.0, mean_fake = 0.0;
    for (const auto& s : real) mean_real += critic.score(s) / 2.0;
    for (const auto& s : fake) mean_fake += critic.score(s) / 2.0;
    Tape tape;
    auto loss = train::critic_loss(tape, critic, real, fake);
    CHECK(tape.value(loss).item() ==
          doctest::Approx(mean_fake - mean_real).epsilon(1e-12));
  }
}

TEST_CASE("generator loss combines the critic score and the emotion term") {
  Rng rng(2);
  auto mc = small_config(8);
  Critic critic(mc, rng);

  auto traced_batch = [&](Tape& tape, const std::vector<std::vector<double>>& seqs) {
    std::vector<std::vector<nn::Id>> out;
    for (const auto& s : seqs) {
      std::vector<nn::Id> ids;
      for (double v : s) ids.push_back(tape.leaf(Tensor::scalar(v)));
      out.push_back(ids);
    }
    return out;
  };
  auto uniform_probs = [&](Tape& tape) {
    return tape.leaf(Tensor::from_vector(std::vector<double>(6, 1.0 / 6)));
  };

  SUBCASE("with lambda zero it is minus the mean critic score") {
    std::vector<std::vector<double>> seqs = {{0.2, 0.1}, {0.4, -0.1}};
    double mean_score = 0.0;
    for (const auto& s : seqs) mean_score += critic.score(s) / 2.0;
    Tape tape;
    auto fake = traced_batch(tape, seqs);
    auto loss = train::generator_loss(tape, critic, fake,
                                      {uniform_probs(tape), uniform_probs(tape)},
                                      {0, 1}, 0.0);
    CHECK(tape.value(loss).item() == doctest::Approx(-mean_score).epsilon(1e-12));
  }

  SUBCASE("a perfect emotion prediction contributes zero cross-entropy") {
    Tape tape;
    auto fake = traced_batch(tape, {{0.2, 0.1}});
    Tensor point({6});
    point[3] = 1.0;
    auto loss_perfect = train::generator_loss(
        tape, critic, fake, {tape.leaf(point)}, {3}, 0.5);
    auto fake2 = traced_batch(tape, {{0.2, 0.1}});
    auto loss_uniform = train::generator_loss(
        tape, critic, fake2, {uniform_probs(tape)}, {3}, 0.5);
    const double ce_part =
        tape.value(loss_uniform).item() - tape.value(loss_perfect).item();
    CHECK(ce_part == doctest::Approx(0.5 * std::log(6.0)).epsilon(1e-9));
  }

  SUBCASE("zero critic and lambda zero give exactly zero") {
    for (std::size_t i = 0; i < critic.params().size(); ++i) {
      critic.params().at(i).tensor.fill(0.0);
    }
    Tape tape;
    auto fake = traced_batch(tape, {{1.0, 2.0}});
    auto loss =
        train::generator_loss(tape, critic, fake, {uniform_probs(tape)}, {2}, 0.0);
    CHECK(tape.value(loss).item() == 0.0);
  }
}

TEST_CASE("reconstruction loss is the mean squared error") {
  Tape tape;
  auto seq = [&](const std::vector<double>& v) {
    std::vector<nn::Id> ids;
    for (double x : v) ids.push_back(tape.leaf(Tensor::scalar(x)));
    return ids;
  };
  CHECK(tape.value(train::reconstruction_loss(tape, seq({0.3, 0.4}), {0.3, 0.4}))
            .item() == 0.0);
  CHECK(tape.value(train::reconstruction_loss(tape, seq({0, 0}), {1, 1})).item() ==
        doctest::Approx(1.0));
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto a = testutil::random_vector(4, rng);
    auto b = testutil::random_vector(4, rng);
    double mse = 0.0;
    for (int i = 0; i < 4; ++i) mse += (a[i] - b[i]) * (a[i] - b[i]) / 4.0;
    CHECK(std::abs(tape.value(train::reconstruction_loss(tape, seq(a), b)).item() -
                   mse) <= 1e-12);
  }
  CHECK_THROWS_AS(train::reconstruction_loss(tape, seq({1.0}), {1.0, 2.0}), Error);
}

TEST_CASE("weight clipping clamps only the critic") {
  Rng rng(4);
  auto mc = small_config(8);
  Critic critic(mc, rng);
  Generator gen(mc, rng);
  critic.params().get("critic.head2.W").tensor[0] = 0.05;
  critic.params().get("critic.head2.b").tensor[0] = -1.0;
  gen.params().get("decoder.out.W").tensor[0] = 0.5;

  train::clip_weights(critic, 0.03);
  CHECK(critic.params().get("critic.head2.W").tensor[0] == 0.03);
  CHECK(critic.params().get("critic.head2.b").tensor[0] == -0.03);
  CHECK(train::max_abs_weight(critic.params()) <= 0.03);
  CHECK(gen.params().get("decoder.out.W").tensor[0] == 0.5);  // untouched

  // idempotent on already-bounded weights
  auto before = critic.params().get("critic.lstm0.Wx").tensor.data();
  train::clip_weights(critic, 0.03);
  CHECK(critic.params().get("critic.lstm0.Wx").tensor.data() == before);

  CHECK_THROWS_AS(train::clip_weights(critic, 0.0), Error);
}

TEST_CASE("zero epochs leave the models at initialization") {
  auto ds = toy_dataset(0.05, 5);
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 17;
  auto result = train::train_wgan(ds, mc, tc);

  Rng rng(17);
  Generator fresh_gen(mc, rng);
  Critic fresh_critic(mc, rng);
  CHECK(params_equal(result.generator->params(), fresh_gen.params()));
  CHECK(params_equal(result.critic->params(), fresh_critic.params()));
  CHECK(result.history.empty());
}

TEST_CASE("critic weights respect the bound after every optimizer step") {
  auto ds = toy_dataset(0.05, 6, 1, 1, 1);
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 12;
  tc.accumulate = 4;
  tc.lr = 1e-3;
  tc.seed = 3;
  std::size_t steps_seen = 0;
  auto result = train::train_wgan(ds, mc, tc, [&](const train::StepInfo& info) {
    ++steps_seen;
    CHECK(info.critic_weight_max <= tc.clip_bound + 1e-15);
  });
  CHECK(steps_seen > 0);
  CHECK(train::max_abs_weight(result.critic->params()) <= tc.clip_bound + 1e-15);
}

TEST_CASE("training is deterministic in the seed") {
  auto ds = toy_dataset(0.05, 7, 1, 2, 1);
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 6;
  tc.accumulate = 4;
  tc.lr = 1e-3;
  tc.seed = 11;
  auto a = train::train_wgan(ds, mc, tc);
  auto b = train::train_wgan(ds, mc, tc);
  CHECK(params_equal(a.generator->params(), b.generator->params()));
  CHECK(params_equal(a.critic->params(), b.critic->params()));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].w_estimate == b.history[e].w_estimate);
    CHECK(a.history[e].critic_loss == b.history[e].critic_loss);
    CHECK(a.history[e].gen_loss == b.history[e].gen_loss);
  }
  tc.seed = 12;
  auto c = train::train_wgan(ds, mc, tc);
  CHECK_FALSE(params_equal(a.generator->params(), c.generator->params()));
}

TEST_CASE("gradient accumulation equals one step on the mean loss") {
  Rng rng(8);
  auto mc = small_config(8);
  const int k = 5;
  std::vector<std::vector<double>> reals, fakes;
  for (int i = 0; i < k; ++i) {
    reals.push_back(testutil::random_vector(4, rng, 0.0, 0.5));
    fakes.push_back(testutil::random_vector(4, rng, -0.5, 0.0));
  }

  // route A: accumulate per-sample losses scaled by 1/k, then step
  Rng ra(9);
  Critic ca(mc, ra);
  nn::RmsProp oa(1e-3, 0.9, 1e-8);
  ca.params().zero_grad();
  for (int i = 0; i < k; ++i) {
    Tape tape;
    auto loss = train::critic_loss(tape, ca, {reals[i]}, {fakes[i]});
    tape.backward(loss, 1.0 / k);
  }
  oa.step(ca.params());

  // route B: one tape over the whole batch (its loss is already the mean)
  Rng rb(9);
  Critic cb(mc, rb);
  nn::RmsProp ob(1e-3, 0.9, 1e-8);
  cb.params().zero_grad();
  {
    Tape tape;
    auto loss = train::critic_loss(tape, cb, reals, fakes);
    tape.backward(loss);
  }
  ob.step(cb.params());

  for (std::size_t p = 0; p < ca.params().size(); ++p) {
    const auto& ta = ca.params().at(p).tensor;
    const auto& tb = cb.params().at(p).tensor;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      CHECK(std::abs(ta[i] - tb[i]) <= 1e-10);
    }
  }
}

TEST_CASE("zero padding mode pads and still trains") {
  auto ds = toy_dataset(0.05, 10, 2, 1, 1);  // two sentence lengths
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 2;
  tc.accumulate = 4;
  tc.lr = 1e-3;
  tc.padding_mode = train::PaddingMode::zero;
  tc.seed = 2;
  auto result = train::train_wgan(ds, mc, tc);
  CHECK(result.history.size() == 2);
  for (const auto& h : result.history) CHECK(std::isfinite(h.w_estimate));
}

TEST_CASE("literal per-epoch generator schedule runs fewer generator steps") {
  auto ds = toy_dataset(0.05, 11, 1, 1, 2);
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 10;
  tc.accumulate = 4;
  tc.lr = 1e-3;
  tc.seed = 4;

  std::size_t default_gen_steps = 0, literal_gen_steps = 0;
  auto count_gen = [](std::size_t& counter) {
    return [&counter](const train::StepInfo& info) {
      if (info.kind == train::StepInfo::Kind::generator) ++counter;
    };
  };
  train::train_wgan(ds, mc, tc, count_gen(default_gen_steps));
  tc.per_epoch_generator_schedule = true;
  train::train_wgan(ds, mc, tc, count_gen(literal_gen_steps));
  CHECK(literal_gen_steps == 2);  // epochs 5 and 10
  CHECK(default_gen_steps > literal_gen_steps);
}

TEST_CASE("imle step behavior") {
  auto ds = toy_dataset(0.0, 12, 1, 1, 1);
  auto mc = small_config(ds.vocab.size());
  Rng rng(5);
  Generator gen(mc, rng);
  auto sample = corpus::encode_dataset_sample(ds, ds.samples[1], mc.input_mode);

  SUBCASE("m = 1 equals the plain squared distance of the single draw") {
    Rng r1(100);
    Rng r2(100);
    gen.params().zero_grad();
    const double loss = train::imle_step(gen, sample, 1, r1);
    Tensor noise = gen.noise_spec().sample(r2);
    Tape tape;
    auto out = gen.run(tape, sample, noise, model::NoiseInjection::direct);
    double expected = 0.0;
    for (std::size_t t = 0; t < out.lengths.size(); ++t) {
      const double d = tape.value(out.lengths[t]).item() - sample.target[t];
      expected += d * d;
    }
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("the winning sample is the distance argmin") {
    Rng r1(200);
    Rng r2(200);
    gen.params().zero_grad();
    const double loss = train::imle_step(gen, sample, 6, r1);
    double best = 1e300;
    for (int i = 0; i < 6; ++i) {
      Tensor noise = gen.noise_spec().sample(r2);
      Tape tape;
      auto out = gen.run(tape, sample, noise, model::NoiseInjection::direct);
      double d2 = 0.0;
      for (std::size_t t = 0; t < out.lengths.size(); ++t) {
        const double d = tape.value(out.lengths[t]).item() - sample.target[t];
        d2 += d * d;
      }
      best = std::min(best, d2);
    }
    CHECK(loss == doctest::Approx(best).epsilon(1e-12));
  }

  SUBCASE("loss is non-increasing in m on a shared noise prefix") {
    for (int trial = 0; trial < 100; ++trial) {
      Rng r1(300 + trial);
      Rng r8(300 + trial);
      gen.params().zero_grad();
      const double l1 = train::imle_step(gen, sample, 1, r1);
      gen.params().zero_grad();
      const double l8 = train::imle_step(gen, sample, 8, r8);
      CHECK(l8 <= l1 + 1e-15);
    }
  }

  SUBCASE("m below 1 is rejected") {
    Rng r(1);
    CHECK_THROWS_AS(train::imle_step(gen, sample, 0, r), Error);
  }
}

TEST_CASE("imle pretraining fits a deterministic corpus") {
  auto ds = toy_dataset(0.0, 13, 1, 1, 1);
  auto mc = small_config(ds.vocab.size());

  SUBCASE("mean L2 drops below 0.01") {
    train::ImleConfig ic;
    ic.pretrain_epochs = 150;
    ic.epochs = 0;
    ic.lr = 3e-3;
    ic.seed = 6;
    auto result = train::imle_pretrain(ds, mc, ic);
    REQUIRE(result.history.size() == 150);
    CHECK(result.history.back().pretrain);
    CHECK(result.history.back().imle_loss < 0.01);
  }

  SUBCASE("loss is non-increasing over 10-epoch windows at the default rate") {
    train::ImleConfig ic;
    ic.pretrain_epochs = 120;
    ic.epochs = 0;
    ic.lr = 5e-5;
    ic.seed = 6;
    auto result = train::imle_pretrain(ds, mc, ic);
    auto window = [&](std::size_t start) {
      double s = 0.0;
      for (std::size_t i = start; i < start + 10; ++i) {
        s += result.history[i].imle_loss;
      }
      return s / 10.0;
    };
    double prev = window(0);
    for (std::size_t start = 10; start + 10 <= 120; start += 10) {
      const double cur = window(start);
      CHECK(cur <= prev + 1e-9);
      prev = cur;
    }
    CHECK(result.history.front().imle_loss > result.history.back().imle_loss);
  }
}

TEST_CASE("imle epochs of zero return the initialized generator") {
  auto ds = toy_dataset(0.0, 14, 1, 1, 1);
  auto mc = small_config(ds.vocab.size());
  train::ImleConfig ic;
  ic.pretrain_epochs = 0;
  ic.epochs = 0;
  ic.seed = 21;
  auto result = train::train_imle(ds, mc, ic);
  Rng rng(21);
  Generator fresh(mc, rng);
  CHECK(params_equal(result.generator->params(), fresh.params()));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  auto ds = toy_dataset(0.05, 15, 1, 2, 1);
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 4;
  tc.accumulate = 4;
  tc.lr = 1e-3;
  tc.seed = 9;
  auto result = train::train_wgan(ds, mc, tc);

  TempDir dir;
  const auto path = dir.path / "model.pfck";
  // a real post-training state; optimizer accumulators faked as empty maps
  auto ckpt = train::make_checkpoint("gan", ds, *result.generator,
                                     result.critic.get(), {}, {}, 4, Rng(1).save_state());
  train::save_checkpoint(path, ckpt);

  SUBCASE("save, load, save is byte-identical") {
    auto loaded = train::load_checkpoint(path);
    const auto path2 = dir.path / "model2.pfck";
    train::save_checkpoint(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    CHECK_FALSE(b1.empty());
  }

  SUBCASE("restore rebuilds identical parameters") {
    auto state = train::restore_state(train::load_checkpoint(path));
    CHECK(params_equal(state.generator->params(), result.generator->params()));
    CHECK(params_equal(state.critic->params(), result.critic->params()));
    CHECK(state.epoch == 4);
  }

  SUBCASE("corrupted trailing bytes fail the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x5a');
    f.close();
    CHECK_THROWS_AS(train::load_checkpoint(path), train::CheckpointChecksumError);
  }

  SUBCASE("truncation is a distinct error") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(train::load_checkpoint(path), train::CheckpointTruncatedError);
  }

  SUBCASE("a bumped version is a distinct error") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    bytes[4] = '\x02';  // version field, little-endian low byte
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size() - 4)));
    for (int i = 0; i < 4; ++i) {
      bytes[bytes.size() - 4 + static_cast<std::size_t>(i)] =
          static_cast<char>((crc >> (8 * i)) & 0xff);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(train::load_checkpoint(path), train::CheckpointVersionError);
  }
}

TEST_CASE("resumed training reproduces an unbroken run bit-exactly") {
  auto ds = toy_dataset(0.05, 16, 1, 2, 1);
  auto mc = small_config(ds.vocab.size());
  train::TrainConfig tc;
  tc.epochs = 8;
  tc.accumulate = 4;
  tc.lr = 1e-3;
  tc.seed = 31;

  auto full = train::train_wgan(ds, mc, tc);

  train::TrainConfig half = tc;
  half.epochs = 4;
  auto first = train::train_wgan(ds, mc, half);

  TempDir dir;
  const auto path = dir.path / "half.pfck";
  train::save_checkpoint(
      path, train::make_checkpoint("gan", ds, *first.generator,
                                   first.critic.get(), first.gen_accum,
                                   first.critic_accum, first.epoch,
                                   first.rng_state));
  auto state = train::restore_state(train::load_checkpoint(path));
  auto resumed = train::resume_wgan(ds, half, std::move(state), 4);

  CHECK(resumed.epoch == 8);
  CHECK(params_equal(resumed.generator->params(), full.generator->params()));
  CHECK(params_equal(resumed.critic->params(), full.critic->params()));
  CHECK(resumed.rng_state == full.rng_state);
  REQUIRE(resumed.history.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(resumed.history[e].epoch == full.history[4 + e].epoch);
    CHECK(resumed.history[e].w_estimate == full.history[4 + e].w_estimate);
  }
}
