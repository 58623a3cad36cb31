#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "prosody/error.hpp"
#include "prosody/training.hpp"

namespace prosody::train {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  put_u64(buf, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::string& buf) : buf_(buf) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw CheckpointTruncatedError("checkpoint: file truncated");
    }
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"vocab_size", c.vocab_size},
      {"text_embed_dim", c.text_embed_dim},
      {"text_lstm_hidden", c.text_lstm_hidden},
      {"text_latent_dim", c.text_latent_dim},
      {"emotion_latent_dim", c.emotion_latent_dim},
      {"speaker_latent_dim", c.speaker_latent_dim},
      {"decoder_hidden", c.decoder_hidden},
      {"decoder_layers", c.decoder_layers},
      {"critic_hidden", c.critic_hidden},
      {"critic_layers", c.critic_layers},
      {"noise_mean", c.noise_mean},
      {"noise_variance", c.noise_variance},
      {"use_speaker", c.use_speaker},
      {"critic_conditional", c.critic_conditional},
      {"input_mode",
       c.input_mode == corpus::InputMode::tokens ? "tokens" : "pos"},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.text_embed_dim = j.at("text_embed_dim").get<std::size_t>();
  c.text_lstm_hidden = j.at("text_lstm_hidden").get<std::size_t>();
  c.text_latent_dim = j.at("text_latent_dim").get<std::size_t>();
  c.emotion_latent_dim = j.at("emotion_latent_dim").get<std::size_t>();
  c.speaker_latent_dim = j.at("speaker_latent_dim").get<std::size_t>();
  c.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
  c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
  c.critic_hidden = j.at("critic_hidden").get<std::size_t>();
  c.critic_layers = j.at("critic_layers").get<std::size_t>();
  c.noise_mean = j.at("noise_mean").get<double>();
  c.noise_variance = j.at("noise_variance").get<double>();
  c.use_speaker = j.at("use_speaker").get<bool>();
  c.critic_conditional = j.at("critic_conditional").get<bool>();
  c.input_mode = j.at("input_mode").get<std::string>() == "pos"
                     ? corpus::InputMode::pos
                     : corpus::InputMode::tokens;
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, ckpt.version);

  nlohmann::json meta = {
      {"kind", ckpt.model_kind},
      {"config", config_to_json(ckpt.config)},
      {"epoch", ckpt.epoch},
      {"rng", ckpt.rng_state},
      {"vocab", ckpt.vocab_tokens},
      {"sentences", ckpt.sentence_texts},
      {"references", ckpt.references},
      {"pos", ckpt.pos_table},
      {"tensor_count", ckpt.tensors.size()},
  };
  const std::string meta_str = meta.dump();
  put_u32(buf, static_cast<std::uint32_t>(meta_str.size()));
  buf += meta_str;

  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) put_u64(buf, e);
    for (double v : tensor.data()) put_f64(buf, v);
  }

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("checkpoint: cannot write ", path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail("checkpoint: write failed for ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("checkpoint: cannot open ", path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  Reader r(buf);
  if (r.bytes(4) != std::string(kMagic, 4)) {
    fail("checkpoint: bad magic in ", path.string());
  }
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != 1) {
    throw CheckpointVersionError(
        cat("checkpoint: unsupported format version ", ckpt.version));
  }
  const std::uint32_t meta_len = r.u32();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint: bad metadata: ", e.what());
  }
  try {
    ckpt.model_kind = meta.at("kind").get<std::string>();
    ckpt.config = config_from_json(meta.at("config"));
    ckpt.epoch = meta.at("epoch").get<std::uint64_t>();
    ckpt.rng_state = meta.at("rng").get<std::string>();
    ckpt.vocab_tokens = meta.at("vocab").get<std::vector<std::string>>();
    ckpt.sentence_texts = meta.at("sentences").get<std::vector<std::string>>();
    ckpt.references = meta.at("references").get<std::vector<std::vector<double>>>();
    ckpt.pos_table = meta.at("pos").get<corpus::PosTable>();
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint: bad metadata: ", e.what());
  }
  const auto tensor_count = meta.at("tensor_count").get<std::size_t>();
  for (std::size_t i = 0; i < tensor_count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= shape.back();
    }
    std::vector<double> values(numel);
    for (double& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() < 4) {
    throw CheckpointTruncatedError("checkpoint: missing CRC");
  }
  if (r.remaining() > 4) {
    fail("checkpoint: ", r.remaining() - 4, " unexpected trailing bytes");
  }
  const std::size_t body_len = r.pos();
  const std::uint32_t stored = r.u32();
  const auto computed = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(body_len)));
  if (stored != computed) {
    throw CheckpointChecksumError("checkpoint: CRC mismatch");
  }
  return ckpt;
}

Checkpoint make_checkpoint(const std::string& kind, const corpus::Dataset& ds,
                           const Generator& gen, const Critic* critic,
                           const std::map<std::string, Tensor>& gen_accum,
                           const std::map<std::string, Tensor>& critic_accum,
                           std::uint64_t epoch, const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.model_kind = kind;
  ckpt.config = gen.config();
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  ckpt.vocab_tokens = ds.vocab.tokens();
  for (const auto& s : ds.sentences) ckpt.sentence_texts.push_back(s.text);
  ckpt.references = ds.references;
  ckpt.pos_table = ds.pos_table;

  const nn::ParamSet& gp = gen.params();
  for (std::size_t i = 0; i < gp.size(); ++i) {
    ckpt.tensors.emplace_back("g." + gp.at(i).name, gp.at(i).tensor);
  }
  if (critic != nullptr) {
    const nn::ParamSet& cp = critic->params();
    for (std::size_t i = 0; i < cp.size(); ++i) {
      ckpt.tensors.emplace_back("c." + cp.at(i).name, cp.at(i).tensor);
    }
  }
  for (const auto& [name, t] : gen_accum) {
    ckpt.tensors.emplace_back("opt.g." + name, t);
  }
  for (const auto& [name, t] : critic_accum) {
    ckpt.tensors.emplace_back("opt.c." + name, t);
  }
  return ckpt;
}

TrainState restore_state(const Checkpoint& ckpt) {
  TrainState state;
  state.epoch = ckpt.epoch;
  state.rng_state = ckpt.rng_state;
  state.model_kind = ckpt.model_kind;

  Rng scratch(0);
  state.generator = std::make_unique<Generator>(ckpt.config, scratch);
  const bool has_critic = ckpt.model_kind == "gan";
  if (has_critic) state.critic = std::make_unique<Critic>(ckpt.config, scratch);

  auto assign = [](nn::ParamSet& params, const std::string& name, const Tensor& t) {
    nn::Parameter& p = params.get(name);
    if (!p.tensor.same_shape(t)) {
      fail("checkpoint: tensor '", name, "' has shape ", nn::shape_str(t),
           ", model expects ", nn::shape_str(p.tensor));
    }
    p.tensor = t;
  };

  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("opt.g.", 0) == 0) {
      state.gen_accum.emplace(name.substr(6), t);
    } else if (name.rfind("opt.c.", 0) == 0) {
      state.critic_accum.emplace(name.substr(6), t);
    } else if (name.rfind("g.", 0) == 0) {
      assign(state.generator->params(), name.substr(2), t);
    } else if (name.rfind("c.", 0) == 0) {
      if (!has_critic) fail("checkpoint: critic tensor in an imle checkpoint");
      assign(state.critic->params(), name.substr(2), t);
    } else {
      fail("checkpoint: unrecognized tensor name '", name, "'");
    }
  }
  return state;
}

}  // namespace prosody::train
