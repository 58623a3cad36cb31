#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "prosody/corpus.hpp"
#include "prosody/error.hpp"
#include "prosody/eval.hpp"
#include "prosody/model.hpp"
#include "prosody/ssml.hpp"
#include "prosody/training.hpp"

using namespace prosody;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write ", path.string());
  return out;
}

void write_header(std::ofstream& out, std::uint64_t seed, const std::string& hash) {
  out << "# seed=" << seed << " config_hash=" << hash << "\n";
}

// ---- dataset file -----------------------------------------------------

void write_dataset_json(const fs::path& path, const corpus::Dataset& ds,
                        double alpha_threshold, std::uint64_t seed,
                        const std::string& hash) {
  json doc;
  doc["meta"] = {{"seed", seed}, {"config_hash", hash}, {"tool", "prosody"}};
  doc["alpha_threshold"] = alpha_threshold;
  json sentences = json::array();
  for (const auto& s : ds.sentences) {
    sentences.push_back({{"id", s.id}, {"text", s.text}});
  }
  doc["sentences"] = sentences;
  doc["vocabulary"] = ds.vocab.tokens();
  doc["pos_tags"] = ds.pos_table;
  doc["references"] = ds.references;
  json samples = json::array();
  for (const auto& s : ds.samples) {
    samples.push_back({{"clip_id", s.clip_id},
                       {"sentence_id", s.rel.sentence_id},
                       {"speaker_id", s.rel.speaker_id},
                       {"emotion", corpus::to_string(s.rel.emotion)},
                       {"intensity", corpus::to_string(s.intensity)},
                       {"alpha", s.alpha},
                       {"values", s.rel.values}});
  }
  doc["samples"] = samples;
  auto out = open_out(path);
  out << doc.dump(1) << "\n";
}

corpus::Dataset read_dataset_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open dataset ", path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail("dataset ", path.string(), ": bad JSON: ", e.what());
  }
  corpus::Dataset ds;
  try {
    for (const auto& js : doc.at("sentences")) {
      ds.sentences.push_back(corpus::make_sentence(js.at("id").get<int>(),
                                                   js.at("text").get<std::string>()));
    }
    ds.vocab = corpus::Vocabulary(doc.at("vocabulary").get<std::vector<std::string>>());
    ds.pos_table = doc.at("pos_tags").get<corpus::PosTable>();
    ds.references = doc.at("references").get<std::vector<std::vector<double>>>();
    for (const auto& js : doc.at("samples")) {
      corpus::DatasetSample s;
      s.clip_id = js.at("clip_id").get<std::string>();
      s.intensity = corpus::intensity_from_string(js.at("intensity").get<std::string>());
      s.alpha = js.at("alpha").get<double>();
      s.rel.sentence_id = js.at("sentence_id").get<int>();
      s.rel.speaker_id = js.at("speaker_id").get<int>();
      s.rel.emotion = corpus::emotion_from_string(js.at("emotion").get<std::string>());
      s.rel.values = js.at("values").get<std::vector<double>>();
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail("dataset ", path.string(), ": ", e.what());
  }
  return ds;
}

corpus::Dataset dataset_from_checkpoint(const train::Checkpoint& ckpt) {
  corpus::Dataset ds;
  for (std::size_t i = 0; i < ckpt.sentence_texts.size(); ++i) {
    ds.sentences.push_back(
        corpus::make_sentence(static_cast<int>(i), ckpt.sentence_texts[i]));
  }
  ds.vocab = corpus::Vocabulary(ckpt.vocab_tokens);
  ds.pos_table = ckpt.pos_table;
  ds.references = ckpt.references;
  return ds;
}

// ---- shared option blocks ----------------------------------------------

struct ModelOpts {
  model::ModelConfig mc;
  bool no_speaker = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--text-embed", mc.text_embed_dim, "text embedding width");
    cmd->add_option("--text-lstm-hidden", mc.text_lstm_hidden, "text biLSTM hidden size");
    cmd->add_option("--text-latent", mc.text_latent_dim, "text latent width");
    cmd->add_option("--emotion-latent", mc.emotion_latent_dim, "emotion latent width");
    cmd->add_option("--speaker-latent", mc.speaker_latent_dim, "speaker latent width");
    cmd->add_option("--decoder-hidden", mc.decoder_hidden, "decoder LSTM hidden size");
    cmd->add_option("--decoder-layers", mc.decoder_layers, "decoder LSTM layers");
    cmd->add_option("--critic-hidden", mc.critic_hidden, "critic LSTM hidden size");
    cmd->add_option("--critic-layers", mc.critic_layers, "critic LSTM layers");
    cmd->add_option("--noise-variance", mc.noise_variance, "latent noise variance");
    cmd->add_flag("--no-speaker", no_speaker, "drop the speaker encoder");
    cmd->add_flag("--conditional-critic", mc.critic_conditional,
                  "critic also sees the emotion one-hot");
    cmd->add_option("--input-mode", input_mode_str,
                    "generator input representation (tokens|pos)")
        ->check(CLI::IsMember({"tokens", "pos"}));
  }

  model::ModelConfig resolve(std::size_t vocab_size) {
    mc.vocab_size = vocab_size;
    mc.use_speaker = !no_speaker;
    mc.input_mode = input_mode_str == "pos" ? corpus::InputMode::pos
                                            : corpus::InputMode::tokens;
    return mc;
  }

  std::string canonical() const {
    return cat("te=", mc.text_embed_dim, ";th=", mc.text_lstm_hidden,
               ";tl=", mc.text_latent_dim, ";el=", mc.emotion_latent_dim,
               ";sl=", mc.speaker_latent_dim, ";dh=", mc.decoder_hidden,
               ";dl=", mc.decoder_layers, ";ch=", mc.critic_hidden,
               ";cl=", mc.critic_layers, ";nv=", mc.noise_variance,
               ";ns=", no_speaker, ";cc=", mc.critic_conditional,
               ";im=", input_mode_str);
  }

 private:
  std::string input_mode_str = "tokens";
};

void write_loss_csv(const fs::path& path, const std::vector<train::EpochStats>& history,
                    const std::string& kind, std::uint64_t seed,
                    const std::string& hash) {
  auto out = open_out(path);
  write_header(out, seed, hash);
  out << "epoch,phase,w_estimate,critic_loss,gen_loss,recon_loss,imle_loss\n";
  for (const auto& h : history) {
    const char* phase = kind == "gan" ? "wgan" : (h.pretrain ? "pretrain" : "imle");
    out << h.epoch << ',' << phase << ',' << fmt_double(h.w_estimate) << ','
        << fmt_double(h.critic_loss) << ',' << fmt_double(h.gen_loss) << ','
        << fmt_double(h.recon_loss) << ',' << fmt_double(h.imle_loss) << "\n";
  }
}

// ---- commands -----------------------------------------------------------

int run_prepare(const fs::path& alignments, const fs::path& pos_file,
                double alpha_threshold, const fs::path& out_dir,
                std::uint64_t seed) {
  auto records = corpus::parse_alignments(alignments);
  if (records.empty()) fail("no clips found in ", alignments.string());
  auto ds = corpus::prepare_dataset(records, alpha_threshold);
  if (!pos_file.empty()) {
    ds.pos_table = corpus::parse_pos_csv(pos_file, ds.sentences);
  }
  const std::string hash =
      fnv1a_hex(cat("prepare;alpha=", alpha_threshold, ";pos=", pos_file.string()));
  fs::create_directories(out_dir);
  write_dataset_json(out_dir / "dataset.json", ds, alpha_threshold, seed, hash);

  std::map<corpus::Emotion, std::size_t> counts;
  for (const auto& s : ds.samples) ++counts[s.rel.emotion];
  std::cout << "parsed clips: " << records.size() << "\n";
  std::cout << "retained at alpha >= " << alpha_threshold << ": "
            << ds.samples.size() << "\n";
  for (const auto& [emo, n] : counts) {
    std::cout << "  " << corpus::to_string(emo) << ": " << n << "\n";
  }
  std::cout << "vocabulary size: " << ds.vocab.size() << "\n";
  std::cout << "wrote " << (out_dir / "dataset.json").string() << "\n";
  return kExitOk;
}

int run_train(const fs::path& dataset_path, const std::string& kind,
              ModelOpts& model_opts, train::TrainConfig tc, train::ImleConfig ic,
              const fs::path& resume, const fs::path& out_dir) {
  auto ds = read_dataset_json(dataset_path);
  if (ds.samples.empty()) fail("dataset has no samples");
  fs::create_directories(out_dir);
  const std::string hash = fnv1a_hex(
      cat("train;kind=", kind, ";", model_opts.canonical(), ";epochs=", tc.epochs,
          ";nc=", tc.n_critic, ";clip=", tc.clip_bound, ";lr=", tc.lr,
          ";re=", tc.recon_every, ";lrc=", tc.lambda_recon,
          ";le=", tc.lambda_emotion, ";acc=", tc.accumulate,
          ";pad=", tc.padding_mode == train::PaddingMode::zero,
          ";pes=", tc.per_epoch_generator_schedule, ";m=", ic.m,
          ";pre=", ic.pretrain_epochs, ";ie=", ic.epochs, ";ilr=", ic.lr,
          ";seed=", tc.seed));

  train::Checkpoint ckpt;
  std::vector<train::EpochStats> history;
  if (kind == "gan") {
    train::WganResult result;
    if (resume.empty()) {
      auto mc = model_opts.resolve(ds.vocab.size());
      result = train::train_wgan(ds, mc, tc);
    } else {
      auto state = train::restore_state(train::load_checkpoint(resume));
      if (state.model_kind != "gan") fail("--resume checkpoint is not a gan model");
      result = train::resume_wgan(ds, tc, std::move(state), tc.epochs);
    }
    history = result.history;
    ckpt = train::make_checkpoint("gan", ds, *result.generator,
                                  result.critic.get(), result.gen_accum,
                                  result.critic_accum, result.epoch,
                                  result.rng_state);
  } else {
    ic.seed = tc.seed;
    train::ImleResult result;
    if (resume.empty()) {
      auto mc = model_opts.resolve(ds.vocab.size());
      result = train::train_imle(ds, mc, ic);
    } else {
      auto state = train::restore_state(train::load_checkpoint(resume));
      if (state.model_kind != "imle") fail("--resume checkpoint is not an imle model");
      result = train::resume_imle(ds, ic, std::move(state), ic.epochs);
    }
    history = result.history;
    ckpt = train::make_checkpoint("imle", ds, *result.generator, nullptr,
                                  result.gen_accum, {}, result.epoch,
                                  result.rng_state);
  }
  train::save_checkpoint(out_dir / "checkpoint.pfck", ckpt);
  write_loss_csv(out_dir / "loss.csv", history, kind, tc.seed, hash);
  std::cout << "trained " << history.size() << " epochs; checkpoint at "
            << (out_dir / "checkpoint.pfck").string() << "\n";
  return kExitOk;
}

int run_generate(const fs::path& checkpoint, int sentence_id,
                 const std::string& emotion_name, int speaker_id, int count,
                 std::uint64_t seed, const std::string& voice,
                 const fs::path& out_dir) {
  auto ckpt = train::load_checkpoint(checkpoint);
  auto state = train::restore_state(ckpt);
  auto ds = dataset_from_checkpoint(ckpt);
  if (sentence_id < 0 || sentence_id >= static_cast<int>(ds.sentences.size())) {
    fail("sentence_id ", sentence_id, " out of range [0, ",
         ds.sentences.size() - 1, "]");
  }
  const corpus::Emotion emotion = corpus::emotion_from_string(emotion_name);
  if (speaker_id < 0 || speaker_id >= corpus::kSpeakerCount) {
    fail("speaker_id ", speaker_id, " out of range [0, 90]");
  }
  if (count < 1) fail("count must be >= 1");

  corpus::RelativeSequence probe;
  probe.sentence_id = sentence_id;
  probe.emotion = emotion;
  probe.speaker_id = speaker_id;
  probe.values.assign(ds.sentences[static_cast<std::size_t>(sentence_id)].tokens.size(), 0.0);
  auto enc = corpus::encode_sample(probe, ds.vocab, ckpt.config.input_mode,
                                   ds.sentences, ds.pos_table);

  const std::string hash = fnv1a_hex(cat("generate;s=", sentence_id, ";e=",
                                         emotion_name, ";spk=", speaker_id,
                                         ";n=", count, ";voice=", voice));
  fs::create_directories(out_dir);
  auto csv = open_out(out_dir / "lengths.csv");
  write_header(csv, seed, hash);
  csv << "sentence_id,emotion,speaker_id,sample_index,word_index,word,value,"
         "rate_percent\n";

  Rng rng(seed);
  const auto injection = ckpt.model_kind == "imle"
                             ? model::NoiseInjection::direct
                             : model::NoiseInjection::encoder;
  const auto& words = ds.sentences[static_cast<std::size_t>(sentence_id)].words;
  for (int k = 0; k < count; ++k) {
    auto rel = state.generator->generate(enc, rng, injection);
    std::vector<int> rates;
    for (std::size_t w = 0; w < rel.values.size(); ++w) {
      const auto rate = ssml::relative_to_rate(rel.values[w]);
      rates.push_back(rate.percent);
      if (rate.clamped) {
        std::cerr << "warning: sample " << k << " word " << w
                  << " rate clamped to " << rate.percent << "%\n";
      }
      csv << sentence_id << ',' << corpus::to_string(emotion) << ','
          << speaker_id << ',' << k << ',' << w << ',' << words[w] << ','
          << fmt_double(rel.values[w]) << ',' << rate.percent << "\n";
    }
    const fs::path ssml_path =
        out_dir / cat("s", sentence_id, "_", corpus::to_string(emotion), "_", k,
                      ".ssml");
    auto out = open_out(ssml_path);
    out << "<!-- seed=" << seed << " config_hash=" << hash << " -->\n"
        << ssml::emit_ssml(words, rates, voice);
  }
  std::cout << "wrote " << count << " samples to " << out_dir.string() << "\n";
  return kExitOk;
}

int run_evaluate(const fs::path& checkpoint, const fs::path& dataset_path,
                 int count, const std::string& fd_mode_name, double frame_rate,
                 std::uint64_t seed, const fs::path& out_dir) {
  auto ckpt = train::load_checkpoint(checkpoint);
  auto state = train::restore_state(ckpt);
  auto ds = read_dataset_json(dataset_path);
  if (count < 1) fail("count must be >= 1");
  eval::FdMode fd_mode = eval::FdMode::rms;
  if (fd_mode_name == "mean-square") fd_mode = eval::FdMode::mean_square;
  else if (fd_mode_name == "sum-root") fd_mode = eval::FdMode::sum_root;

  const std::string hash = fnv1a_hex(
      cat("evaluate;count=", count, ";fd=", fd_mode_name, ";fr=", frame_rate));
  fs::create_directories(out_dir);

  eval::GroupedSequences real;
  std::map<eval::GroupKey, std::vector<int>> speakers_by_key;
  for (const auto& s : ds.samples) {
    const eval::GroupKey key{s.rel.sentence_id, s.rel.emotion};
    real[key].push_back(s.rel.values);
    speakers_by_key[key].push_back(s.rel.speaker_id);
  }

  Rng rng(seed);
  const auto injection = ckpt.model_kind == "imle"
                             ? model::NoiseInjection::direct
                             : model::NoiseInjection::encoder;
  eval::GroupedSequences generated;
  std::vector<std::string> warnings;

  auto metrics = open_out(out_dir / "metrics.csv");
  write_header(metrics, seed, hash);
  metrics << "sentence_id,emotion,n_generated,mse_to_mean,rmse,pcc,dtw_distance,"
             "frame_disturbance\n";

  struct CellRow {
    double mse = 0, rmse = 0, pcc = 0, dtw = 0, fd = 0;
    bool has_pcc = false;
  };
  std::vector<CellRow> rows;
  for (const auto& [key, real_seqs] : real) {
    const auto& [sid, emotion] = key;
    if (ds.references[static_cast<std::size_t>(sid)].empty()) {
      warnings.push_back(cat("no reference durations for sentence ", sid,
                             "; skipped"));
      continue;
    }
    corpus::RelativeSequence probe;
    probe.sentence_id = sid;
    probe.emotion = emotion;
    const auto& cell_speakers = speakers_by_key[key];
    const auto real_mean = eval::mean_sequence(real_seqs);
    std::vector<eval::Sequence> gen_seqs;
    for (int k = 0; k < count; ++k) {
      probe.speaker_id =
          cell_speakers[static_cast<std::size_t>(k) % cell_speakers.size()];
      probe.values.assign(real_mean.size(), 0.0);
      auto enc = corpus::encode_sample(probe, ds.vocab, ckpt.config.input_mode,
                                       ds.sentences, ds.pos_table);
      gen_seqs.push_back(state.generator->generate(enc, rng, injection).values);
    }
    generated[key] = gen_seqs;

    CellRow row;
    eval::GroupedSequences g1{{key, gen_seqs}}, r1{{key, real_seqs}};
    row.mse = eval::mse_to_population_mean(g1, r1);
    double rmse_sum = 0.0, pcc_sum = 0.0, dtw_sum = 0.0, fd_sum = 0.0;
    int pcc_n = 0;
    const auto& ref = ds.references[static_cast<std::size_t>(sid)];
    const auto real_env = eval::lengths_to_envelope(real_mean, ref, frame_rate);
    for (const auto& g : gen_seqs) {
      rmse_sum += eval::rmse(g, real_mean);
      try {
        pcc_sum += eval::pcc(g, real_mean);
        ++pcc_n;
      } catch (const Error&) {
        // zero-variance cells have no defined correlation
      }
      const auto gen_env = eval::lengths_to_envelope(g, ref, frame_rate);
      auto dtw_res = eval::dtw(gen_env, real_env);
      dtw_sum += dtw_res.distance;
      fd_sum += eval::frame_disturbance(dtw_res.path, fd_mode);
    }
    row.rmse = rmse_sum / count;
    row.has_pcc = pcc_n > 0;
    row.pcc = pcc_n > 0 ? pcc_sum / pcc_n : 0.0;
    if (pcc_n == 0) {
      warnings.push_back(cat("pcc undefined for sentence ", sid, " ",
                             corpus::to_string(emotion),
                             " (zero variance); wrote nan"));
    }
    row.dtw = dtw_sum / count;
    row.fd = fd_sum / count;
    rows.push_back(row);

    metrics << sid << ',' << corpus::to_string(emotion) << ',' << count << ','
            << fmt_double(row.mse) << ',' << fmt_double(row.rmse) << ','
            << (row.has_pcc ? fmt_double(row.pcc) : "nan") << ','
            << fmt_double(row.dtw) << ',' << fmt_double(row.fd) << "\n";
  }
  if (!rows.empty()) {
    double mse = 0, rm = 0, pc = 0, dt = 0, fd = 0;
    int pcn = 0;
    for (const auto& r : rows) {
      mse += r.mse;
      rm += r.rmse;
      dt += r.dtw;
      fd += r.fd;
      if (r.has_pcc) {
        pc += r.pcc;
        ++pcn;
      }
    }
    const double n = static_cast<double>(rows.size());
    metrics << "all,all," << count << ',' << fmt_double(mse / n) << ','
            << fmt_double(rm / n) << ','
            << (pcn ? fmt_double(pc / pcn) : "nan") << ',' << fmt_double(dt / n)
            << ',' << fmt_double(fd / n) << "\n";
  }

  auto meanvar = open_out(out_dir / "meanvar.csv");
  write_header(meanvar, seed, hash);
  meanvar << "source,sentence_id,emotion,sample_index,mean,variance\n";
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::string>> pair_rows;
  auto emit_summary = [&](const char* source, const eval::GroupedSequences& set) {
    for (const auto& [key, seqs] : set) {
      auto summary = eval::distribution_summary(seqs);
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        meanvar << source << ',' << key.first << ','
                << corpus::to_string(key.second) << ',' << i << ','
                << fmt_double(summary.mean_variance[i].first) << ','
                << fmt_double(summary.mean_variance[i].second) << "\n";
      }
      for (const auto& [ij, points] : summary.pair_points) {
        for (const auto& [ri, rj] : points) {
          pair_rows[ij].push_back(cat(source, ',', key.first, ',',
                                      corpus::to_string(key.second), ',',
                                      fmt_double(ri), ',', fmt_double(rj)));
        }
      }
    }
  };
  emit_summary("real", real);
  emit_summary("generated", generated);
  for (const auto& [ij, lines] : pair_rows) {
    auto out = open_out(out_dir / cat("pairs_", ij.first, "_", ij.second, ".csv"));
    write_header(out, seed, hash);
    out << "source,sentence_id,emotion,r_i,r_j\n";
    for (const auto& line : lines) out << line << "\n";
  }

  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "evaluated " << rows.size() << " cells; reports in "
            << out_dir.string() << "\n";
  return kExitOk;
}

int run_stats(const fs::path& dataset_path, double alpha, std::uint64_t seed,
              const fs::path& out_dir) {
  auto ds = read_dataset_json(dataset_path);
  if (ds.samples.empty()) fail("dataset has no samples");
  const std::string hash = fnv1a_hex(cat("stats;alpha=", alpha));
  fs::create_directories(out_dir);

  // per-clip scalar: mean relative word length, the rate-of-speech proxy
  auto clip_mean = [](const corpus::DatasetSample& s) {
    double m = 0.0;
    for (double v : s.rel.values) m += v;
    return m / static_cast<double>(s.rel.values.size());
  };

  struct Factor {
    std::string name;
    std::map<std::string, std::vector<double>> groups;
  };
  std::vector<Factor> factors(3);
  factors[0].name = "emotion";
  factors[1].name = "speaker";
  factors[2].name = "intensity";
  for (const auto& s : ds.samples) {
    const double m = clip_mean(s);
    factors[0].groups[corpus::to_string(s.rel.emotion)].push_back(m);
    factors[1].groups[cat("spk", s.rel.speaker_id)].push_back(m);
    factors[2].groups[corpus::to_string(s.intensity)].push_back(m);
  }

  auto anova_csv = open_out(out_dir / "anova.csv");
  write_header(anova_csv, seed, hash);
  anova_csv << "factor,f,df_between,df_within,p_value,significant\n";
  auto tukey_csv = open_out(out_dir / "tukey.csv");
  write_header(tukey_csv, seed, hash);
  tukey_csv << "factor,group_a,group_b,mean_a,mean_b,q,significant\n";

  for (const auto& factor : factors) {
    if (factor.groups.size() < 2) {
      std::cerr << "warning: factor " << factor.name
                << " has fewer than 2 groups; skipped\n";
      continue;
    }
    std::vector<std::string> names;
    std::vector<std::vector<double>> groups;
    for (const auto& [name, values] : factor.groups) {
      names.push_back(name);
      groups.push_back(values);
    }
    auto res = eval::anova_oneway(groups, alpha);
    anova_csv << factor.name << ',' << fmt_double(res.f) << ',' << res.df_between
              << ',' << res.df_within << ',' << fmt_double(res.p_value) << ','
              << (res.significant ? "1" : "0") << "\n";
    if (groups.size() > 10) {
      std::cerr << "warning: factor " << factor.name << " has " << groups.size()
                << " groups; embedded Tukey table covers k <= 10, skipped\n";
      continue;
    }
    for (const auto& pair : eval::tukey_hsd(groups, alpha)) {
      tukey_csv << factor.name << ',' << names[pair.a] << ',' << names[pair.b]
                << ',' << fmt_double(pair.mean_a) << ',' << fmt_double(pair.mean_b)
                << ',' << fmt_double(pair.q) << ','
                << (pair.significant ? "1" : "0") << "\n";
    }
  }
  std::cout << "wrote anova.csv and tukey.csv to " << out_dir.string() << "\n";
  return kExitOk;
}

int run_ssml(const fs::path& lengths_path, const std::string& voice,
             const fs::path& out_dir) {
  std::ifstream in(lengths_path);
  if (!in) fail("cannot open ", lengths_path.string());
  fs::create_directories(out_dir);

  struct SampleKey {
    int sentence;
    std::string emotion;
    int index;
    auto operator<=>(const SampleKey&) const = default;
  };
  std::map<SampleKey, std::vector<std::pair<std::string, int>>> samples;
  std::string line;
  std::size_t line_no = 0;
  std::string header = "# seed=0 config_hash=0";
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      header = line;
      continue;
    }
    if (line.rfind("sentence_id,", 0) == 0) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 8) {
      fail("lengths csv line ", line_no, ": expected 8 fields, got ", fields.size());
    }
    try {
      SampleKey key{std::stoi(fields[0]), fields[1], std::stoi(fields[3])};
      samples[key].emplace_back(fields[5], std::stoi(fields[7]));
    } catch (const std::exception&) {
      fail("lengths csv line ", line_no, ": malformed numeric field");
    }
  }
  if (samples.empty()) fail("no rows in ", lengths_path.string());
  for (const auto& [key, entries] : samples) {
    std::vector<std::string> tokens;
    std::vector<int> rates;
    for (const auto& [word, rate] : entries) {
      tokens.push_back(word);
      rates.push_back(rate);
    }
    const fs::path path =
        out_dir / cat("s", key.sentence, "_", key.emotion, "_", key.index, ".ssml");
    auto out = open_out(path);
    out << "<!--" << header.substr(1) << " -->\n"
        << ssml::emit_ssml(tokens, rates, voice);
  }
  std::cout << "wrote " << samples.size() << " SSML files to "
            << out_dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-conditioned word-length generation toolkit"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand(
      "prepare", "parse alignments, filter by rater agreement, build the dataset");
  std::string p_alignments, p_pos, p_out = ".";
  double p_alpha = 0.667;
  std::uint64_t p_seed = 0;
  prepare->set_config("--config");
  prepare->add_option("--alignments", p_alignments,
                      "alignment CSV file or aligner JSON directory")
      ->required();
  prepare->add_option("--pos", p_pos,
                      "POS annotation CSV (sentence_id,word_index,pos_tag)");
  prepare->add_option("--alpha-threshold", p_alpha, "rater-agreement cutoff");
  prepare->add_option("--out", p_out, "output directory");
  prepare->add_option("--seed", p_seed, "seed recorded into outputs");

  auto* tr = app.add_subcommand("train", "train the gan or imle model");
  std::string t_dataset, t_model = "gan", t_resume, t_out = ".";
  train::TrainConfig tc;
  train::ImleConfig ic;
  ModelOpts t_model_opts;
  std::string t_padding = "none";
  tr->set_config("--config");
  tr->add_option("--dataset", t_dataset, "dataset.json from prepare")->required();
  tr->add_option("--model", t_model, "gan|imle")
      ->check(CLI::IsMember({"gan", "imle"}));
  tr->add_option("--epochs", tc.epochs, "training epochs (additional when resuming)");
  tr->add_option("--n-critic", tc.n_critic, "critic steps per generator step");
  tr->add_option("--clip-bound", tc.clip_bound, "critic weight clamp");
  tr->add_option("--lr", tc.lr, "learning rate");
  tr->add_option("--recon-every", tc.recon_every,
                 "generator steps between reconstruction steps (0 disables)");
  tr->add_option("--lambda-recon", tc.lambda_recon, "reconstruction weight");
  tr->add_option("--lambda-emotion", tc.lambda_emotion, "emotion head weight");
  tr->add_option("--accumulate", tc.accumulate, "samples per optimizer step");
  tr->add_option("--padding", t_padding, "none|zero")
      ->check(CLI::IsMember({"none", "zero"}));
  tr->add_flag("--per-epoch-schedule", tc.per_epoch_generator_schedule,
               "one generator update per n-critic epochs");
  tr->add_option("--imle-m", ic.m, "imle noise samples per target");
  tr->add_option("--pretrain-epochs", ic.pretrain_epochs, "imle pretraining epochs");
  tr->add_option("--imle-epochs", ic.epochs, "imle main-phase epochs");
  tr->add_option("--imle-lr", ic.lr, "imle learning rate");
  tr->add_option("--seed", tc.seed, "training seed");
  tr->add_option("--resume", t_resume, "checkpoint to continue from");
  tr->add_option("--out", t_out, "output directory");
  t_model_opts.attach(tr);

  auto* gen = app.add_subcommand("generate", "sample word lengths and emit SSML");
  std::string g_checkpoint, g_emotion, g_voice = "en-US-JennyNeural", g_out = ".";
  int g_sentence = 0, g_speaker = 0, g_count = 2;
  std::uint64_t g_seed = 0;
  gen->set_config("--config");
  gen->add_option("--checkpoint", g_checkpoint, "trained model")->required();
  gen->add_option("--sentence", g_sentence, "sentence id [0, 11]")->required();
  gen->add_option("--emotion", g_emotion, "target emotion")->required();
  gen->add_option("--speaker", g_speaker, "speaker id [0, 90]");
  gen->add_option("--count", g_count, "samples to draw");
  gen->add_option("--voice", g_voice, "voice name for the SSML output");
  gen->add_option("--seed", g_seed, "noise seed");
  gen->add_option("--out", g_out, "output directory");

  auto* ev = app.add_subcommand("evaluate", "objective metrics against a dataset");
  std::string e_checkpoint, e_dataset, e_fd = "rms", e_out = ".";
  int e_count = 100;
  double e_frame_rate = 100.0;
  std::uint64_t e_seed = 0;
  ev->set_config("--config");
  ev->add_option("--checkpoint", e_checkpoint, "trained model")->required();
  ev->add_option("--dataset", e_dataset, "dataset.json with the real data")
      ->required();
  ev->add_option("--count", e_count, "generated samples per (sentence, emotion)");
  ev->add_option("--fd-mode", e_fd, "rms|mean-square|sum-root")
      ->check(CLI::IsMember({"rms", "mean-square", "sum-root"}));
  ev->add_option("--frame-rate", e_frame_rate, "envelope frames per second");
  ev->add_option("--seed", e_seed, "noise seed");
  ev->add_option("--out", e_out, "output directory");

  auto* st = app.add_subcommand("stats", "anova and tukey tables per factor");
  std::string s_dataset, s_out = ".";
  double s_alpha = 0.01;
  std::uint64_t s_seed = 0;
  st->set_config("--config");
  st->add_option("--dataset", s_dataset, "dataset.json")->required();
  st->add_option("--alpha", s_alpha, "significance level (0.01 or 0.05)");
  st->add_option("--seed", s_seed, "seed recorded into outputs");
  st->add_option("--out", s_out, "output directory");

  auto* ss = app.add_subcommand("ssml", "convert a lengths CSV into SSML files");
  std::string x_lengths, x_voice = "en-US-JennyNeural", x_out = ".";
  ss->set_config("--config");
  ss->add_option("--lengths", x_lengths, "lengths.csv from generate")->required();
  ss->add_option("--voice", x_voice, "voice name");
  ss->add_option("--out", x_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (prepare->parsed()) {
      return run_prepare(p_alignments, p_pos, p_alpha, p_out, p_seed);
    }
    if (tr->parsed()) {
      tc.padding_mode = t_padding == "zero" ? train::PaddingMode::zero
                                            : train::PaddingMode::none;
      return run_train(t_dataset, t_model, t_model_opts, tc, ic, t_resume, t_out);
    }
    if (gen->parsed()) {
      return run_generate(g_checkpoint, g_sentence, g_emotion, g_speaker, g_count,
                          g_seed, g_voice, g_out);
    }
    if (ev->parsed()) {
      return run_evaluate(e_checkpoint, e_dataset, e_count, e_fd, e_frame_rate,
                          e_seed, e_out);
    }
    if (st->parsed()) {
      return run_stats(s_dataset, s_alpha, s_seed, s_out);
    }
    if (ss->parsed()) {
      return run_ssml(x_lengths, x_voice, x_out);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
