#include "prosody/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "prosody/error.hpp"

namespace prosody::corpus {

namespace {

const char* kEmotionNames[] = {"anger", "disgust", "fear",
                               "happy", "neutral", "sad"};
const char* kIntensityNames[] = {"low", "medium", "high", "unspecified"};

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' ||
         c == ':' || c == '"' || c == '(' || c == ')';
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Shortest round-trip decimal text, padded to at least three decimals.
std::string format_seconds(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    s += ".000";
  } else {
    while (s.size() - dot - 1 < 3) s += '0';
  }
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no, const char* field) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail("alignments: line ", line_no, ": field '", field,
         "' is not a number: '", s, "'");
  }
}

int parse_int(const std::string& s, std::size_t line_no, const char* field) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail("alignments: line ", line_no, ": field '", field,
         "' is not an integer: '", s, "'");
  }
}

}  // namespace

const char* to_string(Emotion e) { return kEmotionNames[static_cast<int>(e)]; }
const char* to_string(Intensity i) { return kIntensityNames[static_cast<int>(i)]; }

Emotion emotion_from_string(const std::string& s) {
  for (int i = 0; i < kEmotionCount; ++i) {
    if (s == kEmotionNames[i]) return static_cast<Emotion>(i);
  }
  fail("unknown emotion '", s, "'");
}

Intensity intensity_from_string(const std::string& s) {
  for (int i = 0; i < 4; ++i) {
    if (s == kIntensityNames[i]) return static_cast<Intensity>(i);
  }
  fail("unknown intensity '", s, "'");
}

std::vector<double> ClipRecord::durations() const {
  std::vector<double> d;
  d.reserve(words.size());
  for (const WordAlignment& w : words) d.push_back(w.duration());
  return d;
}

std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && is_terminal_punct(cur[b])) ++b;
    while (e > b && is_terminal_punct(cur[e - 1])) --e;
    if (e > b) tokens.push_back(lower(cur.substr(b, e - b)));
    cur.clear();
  };
  for (char c : sentence) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return tokens;
}

Sentence make_sentence(int id, const std::string& text) {
  Sentence s;
  s.id = id;
  s.text = text;
  std::string cur;
  for (char c : text + " ") {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) s.words.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  s.tokens = tokenize(text);
  return s;
}

const std::vector<Sentence>& fixture_sentences() {
  static const std::vector<Sentence> sentences = [] {
    const char* texts[kSentenceCount] = {
        "I would like a new alarm clock",
        "I think I have a doctor's appointment",
        "Don't forget a jacket",
        "I think I've seen this before",
        "The surface is slick",
        "We'll stop in a couple of minutes",
        "It's eleven o'clock",
        "That is exactly what happened",
        "I'm on my way to the meeting",
        "I wonder what this is about",
        "The airplane is almost full",
        "Maybe tomorrow it will be cold",
    };
    std::vector<Sentence> out;
    for (int i = 0; i < kSentenceCount; ++i) out.push_back(make_sentence(i, texts[i]));
    return out;
  }();
  return sentences;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], i);
    if (!inserted) fail("vocabulary: duplicate token '", tokens_[i], "'");
  }
}

std::optional<std::size_t> Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(const std::vector<std::string>& sentences) {
  std::vector<std::string> tokens;
  std::map<std::string, std::size_t> seen;
  for (const std::string& s : sentences) {
    for (const std::string& t : tokenize(s)) {
      if (seen.emplace(t, tokens.size()).second) tokens.push_back(t);
    }
  }
  return Vocabulary(std::move(tokens));
}

const std::array<const char*, 17> kPosTags = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

std::size_t pos_tag_index(const std::string& tag) {
  for (std::size_t i = 0; i < kPosTags.size(); ++i) {
    if (tag == kPosTags[i]) return i;
  }
  fail("unknown POS tag '", tag, "'");
}

const PosTable& fixture_pos_table() {
  static const PosTable table = {
      {"PRON", "AUX", "VERB", "DET", "ADJ", "NOUN", "NOUN"},
      {"PRON", "VERB", "PRON", "VERB", "DET", "NOUN", "NOUN"},
      {"AUX", "VERB", "DET", "NOUN"},
      {"PRON", "VERB", "PRON", "VERB", "PRON", "ADV"},
      {"DET", "NOUN", "AUX", "ADJ"},
      {"PRON", "VERB", "ADP", "DET", "NOUN", "ADP", "NOUN"},
      {"PRON", "NUM", "NOUN"},
      {"PRON", "AUX", "ADV", "PRON", "VERB"},
      {"PRON", "ADP", "PRON", "NOUN", "ADP", "DET", "NOUN"},
      {"PRON", "VERB", "PRON", "PRON", "AUX", "ADP"},
      {"DET", "NOUN", "AUX", "ADV", "ADJ"},
      {"ADV", "NOUN", "PRON", "AUX", "AUX", "ADJ"},
  };
  return table;
}

PosTable parse_pos_csv(const std::filesystem::path& path,
                       const std::vector<Sentence>& sentences) {
  std::ifstream in(path);
  if (!in) fail("pos: cannot open ", path.string());
  PosTable table(sentences.size());
  for (const Sentence& s : sentences) {
    table[s.id].resize(s.words.size());
  }
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (header) {
      header = false;
      if (fields.size() == 3 && fields[0] == "sentence_id") continue;
    }
    if (fields.size() != 3) {
      fail("pos: line ", line_no, ": expected 3 fields, got ", fields.size());
    }
    const int sid = parse_int(fields[0], line_no, "sentence_id");
    const int wi = parse_int(fields[1], line_no, "word_index");
    if (sid < 0 || sid >= static_cast<int>(table.size())) {
      fail("pos: line ", line_no, ": sentence_id ", sid, " out of range");
    }
    if (wi < 0 || wi >= static_cast<int>(table[sid].size())) {
      fail("pos: line ", line_no, ": word_index ", wi, " out of range for sentence ", sid);
    }
    pos_tag_index(fields[2]);  // validates
    table[sid][wi] = fields[2];
  }
  for (const Sentence& s : sentences) {
    for (std::size_t i = 0; i < table[s.id].size(); ++i) {
      if (table[s.id][i].empty()) {
        fail("pos: missing tag for sentence ", s.id, " word ", i);
      }
    }
  }
  return table;
}

void validate_record(const ClipRecord& rec) {
  if (rec.words.empty()) fail("clip ", rec.clip_id, ": no words");
  if (rec.speaker_id < 0 || rec.speaker_id >= kSpeakerCount) {
    fail("clip ", rec.clip_id, ": speaker_id ", rec.speaker_id, " out of [0, 90]");
  }
  if (rec.sentence_id < 0 || rec.sentence_id >= kSentenceCount) {
    fail("clip ", rec.clip_id, ": sentence_id ", rec.sentence_id, " out of [0, 11]");
  }
  if (rec.alpha < -1.0 || rec.alpha > 1.0) {
    fail("clip ", rec.clip_id, ": alpha ", rec.alpha, " out of [-1, 1]");
  }
  double prev_end = -1e300;
  for (const WordAlignment& w : rec.words) {
    if (!(w.end > w.start)) {
      fail("clip ", rec.clip_id, ": word '", w.word,
           "' has end <= start (", w.start, ", ", w.end, ")");
    }
    if (w.start + 1e-9 < prev_end) {
      fail("clip ", rec.clip_id, ": word '", w.word,
           "' overlaps the previous word");
    }
    prev_end = w.end;
  }
  const Sentence& s = fixture_sentences()[rec.sentence_id];
  if (rec.words.size() != s.tokens.size()) {
    fail("clip ", rec.clip_id, ": ", rec.words.size(), " words but sentence ",
         rec.sentence_id, " has ", s.tokens.size());
  }
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const auto toks = tokenize(rec.words[i].word);
    if (toks.size() != 1 || toks[0] != s.tokens[i]) {
      fail("clip ", rec.clip_id, ": word ", i, " '", rec.words[i].word,
           "' does not match sentence token '", s.tokens[i], "'");
    }
  }
}

std::vector<ClipRecord> parse_alignment_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("alignments: cannot open ", path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<ClipRecord> records;
  std::map<std::string, std::size_t> by_id;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!saw_header) {
      saw_header = true;
      if (!fields.empty() && fields[0] == "clip_id") continue;
    }
    if (fields.size() != 10) {
      fail("alignments: line ", line_no, ": expected 10 fields, got ",
           fields.size());
    }
    const std::string& clip_id = fields[0];
    if (clip_id.empty()) fail("alignments: line ", line_no, ": empty clip_id");
    auto it = by_id.find(clip_id);
    if (it == by_id.end()) {
      ClipRecord rec;
      rec.clip_id = clip_id;
      rec.speaker_id = parse_int(fields[1], line_no, "speaker_id");
      rec.sentence_id = parse_int(fields[2], line_no, "sentence_id");
      rec.emotion = emotion_from_string(fields[3]);
      rec.intensity = intensity_from_string(fields[4]);
      rec.alpha = parse_double(fields[5], line_no, "alpha");
      records.push_back(std::move(rec));
      it = by_id.emplace(clip_id, records.size() - 1).first;
    }
    ClipRecord& rec = records[it->second];
    const int word_index = parse_int(fields[6], line_no, "word_index");
    if (word_index != static_cast<int>(rec.words.size())) {
      fail("alignments: line ", line_no, ": clip ", clip_id,
           " word_index ", word_index, " out of order");
    }
    WordAlignment w;
    w.word = fields[7];
    w.start = parse_double(fields[8], line_no, "start");
    w.end = parse_double(fields[9], line_no, "end");
    if (w.start < 0.0) {
      fail("alignments: line ", line_no, ": clip ", clip_id, ": negative start");
    }
    rec.words.push_back(std::move(w));
  }
  for (const ClipRecord& rec : records) validate_record(rec);
  return records;
}

std::vector<ClipRecord> parse_alignment_json_dir(const std::filesystem::path& dir) {
  const auto meta_path = dir / "metadata.csv";
  std::ifstream meta(meta_path);
  if (!meta) fail("alignments: cannot open ", meta_path.string());
  std::vector<ClipRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!saw_header) {
      saw_header = true;
      if (!fields.empty() && fields[0] == "clip_id") continue;
    }
    if (fields.size() != 6) {
      fail("alignments: metadata line ", line_no, ": expected 6 fields, got ",
           fields.size());
    }
    ClipRecord rec;
    rec.clip_id = fields[0];
    rec.speaker_id = parse_int(fields[1], line_no, "speaker_id");
    rec.sentence_id = parse_int(fields[2], line_no, "sentence_id");
    rec.emotion = emotion_from_string(fields[3]);
    rec.intensity = intensity_from_string(fields[4]);
    rec.alpha = parse_double(fields[5], line_no, "alpha");

    const auto json_path = dir / (rec.clip_id + ".json");
    std::ifstream jf(json_path);
    if (!jf) fail("alignments: clip ", rec.clip_id, ": missing ", json_path.string());
    nlohmann::json doc;
    try {
      jf >> doc;
    } catch (const nlohmann::json::exception& e) {
      fail("alignments: clip ", rec.clip_id, ": bad JSON: ", e.what());
    }
    if (!doc.contains("words") || !doc["words"].is_array()) {
      fail("alignments: clip ", rec.clip_id, ": no words array");
    }
    for (const auto& jw : doc["words"]) {
      WordAlignment w;
      try {
        w.word = jw.at("alignedWord").get<std::string>();
        w.start = jw.at("start").get<double>();
        w.end = jw.at("end").get<double>();
      } catch (const nlohmann::json::exception& e) {
        fail("alignments: clip ", rec.clip_id, ": bad word entry: ", e.what());
      }
      rec.words.push_back(std::move(w));
    }
    records.push_back(std::move(rec));
  }
  for (const ClipRecord& rec : records) validate_record(rec);
  return records;
}

std::vector<ClipRecord> parse_alignments(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return parse_alignment_json_dir(path);
  return parse_alignment_csv(path);
}

void write_alignment_csv(const std::filesystem::path& path,
                         const std::vector<ClipRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("alignments: cannot write ", path.string());
  out << "clip_id,speaker_id,sentence_id,emotion,intensity,alpha,"
         "word_index,word,start,end\n";
  for (const ClipRecord& rec : records) {
    for (std::size_t i = 0; i < rec.words.size(); ++i) {
      const WordAlignment& w = rec.words[i];
      out << rec.clip_id << ',' << rec.speaker_id << ',' << rec.sentence_id
          << ',' << to_string(rec.emotion) << ',' << to_string(rec.intensity)
          << ',' << format_seconds(rec.alpha) << ',' << i << ',' << w.word
          << ',' << format_seconds(w.start) << ',' << format_seconds(w.end)
          << '\n';
    }
  }
}

std::vector<ClipRecord> filter_by_alpha(const std::vector<ClipRecord>& records,
                                        double threshold) {
  if (threshold < -1.0 || threshold > 1.0) {
    fail("filter_by_alpha: threshold ", threshold, " out of [-1, 1]");
  }
  std::vector<ClipRecord> kept;
  for (const ClipRecord& rec : records) {
    if (rec.alpha >= threshold) kept.push_back(rec);
  }
  return kept;
}

std::vector<double> neutral_reference(const std::vector<ClipRecord>& records,
                                      int sentence_id, int speaker_id) {
  std::vector<double> sum;
  std::size_t count = 0;
  auto accumulate = [&](bool speaker_only) {
    sum.clear();
    count = 0;
    for (const ClipRecord& rec : records) {
      if (rec.sentence_id != sentence_id || rec.emotion != Emotion::neutral) continue;
      if (speaker_only && rec.speaker_id != speaker_id) continue;
      const auto d = rec.durations();
      if (sum.empty()) {
        sum.assign(d.size(), 0.0);
      } else if (sum.size() != d.size()) {
        fail("neutral_reference: clip ", rec.clip_id,
             " word count differs from other neutral clips");
      }
      for (std::size_t i = 0; i < d.size(); ++i) sum[i] += d[i];
      ++count;
    }
  };
  accumulate(true);
  if (count == 0) accumulate(false);
  if (count == 0) {
    fail("neutral_reference: no neutral clip for sentence ", sentence_id);
  }
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

RelativeSequence compute_relative(const ClipRecord& clip,
                                  const std::vector<double>& reference) {
  if (clip.words.size() != reference.size()) {
    fail("compute_relative: clip ", clip.clip_id, " has ", clip.words.size(),
         " words but reference has ", reference.size());
  }
  RelativeSequence rel;
  rel.sentence_id = clip.sentence_id;
  rel.emotion = clip.emotion;
  rel.speaker_id = clip.speaker_id;
  rel.values.reserve(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (!(reference[i] > 0.0)) {
      fail("compute_relative: reference duration ", i, " is not positive");
    }
    rel.values.push_back((clip.words[i].duration() - reference[i]) / reference[i]);
  }
  return rel;
}

namespace {
nn::Tensor onehot(std::size_t index, std::size_t width) {
  nn::Tensor t({width});
  t[index] = 1.0;
  return t;
}
}  // namespace

EncodedSample encode_sample(const RelativeSequence& relseq,
                            const Vocabulary& vocab, InputMode mode,
                            const std::vector<Sentence>& sentences,
                            const PosTable& pos_table) {
  if (relseq.sentence_id < 0 ||
      relseq.sentence_id >= static_cast<int>(sentences.size())) {
    fail("encode: sentence_id ", relseq.sentence_id, " out of range");
  }
  const Sentence& s = sentences[relseq.sentence_id];
  if (relseq.values.size() != s.tokens.size()) {
    fail("encode: sentence ", s.id, " has ", s.tokens.size(),
         " tokens but sequence has ", relseq.values.size(), " values");
  }
  EncodedSample enc;
  enc.sentence_id = relseq.sentence_id;
  enc.emotion = relseq.emotion;
  enc.speaker_id = relseq.speaker_id;
  enc.target = relseq.values;
  if (relseq.speaker_id < 0 || relseq.speaker_id >= kSpeakerCount) {
    fail("encode: speaker_id ", relseq.speaker_id, " out of range");
  }
  enc.emotion_onehot = onehot(static_cast<std::size_t>(relseq.emotion), kEmotionCount);
  enc.speaker_onehot = onehot(static_cast<std::size_t>(relseq.speaker_id), kSpeakerCount);
  if (mode == InputMode::tokens) {
    for (const std::string& tok : s.tokens) {
      auto idx = vocab.index_of(tok);
      if (!idx) fail("encode: token '", tok, "' not in vocabulary");
      enc.rows.push_back(onehot(*idx, vocab.size()));
    }
  } else {
    if (s.id >= static_cast<int>(pos_table.size())) {
      fail("encode: no POS tags for sentence ", s.id);
    }
    const auto& tags = pos_table[s.id];
    if (tags.size() != s.tokens.size()) {
      fail("encode: POS row for sentence ", s.id, " has ", tags.size(),
           " tags, expected ", s.tokens.size());
    }
    for (const std::string& tag : tags) {
      enc.rows.push_back(onehot(pos_tag_index(tag), kPosTagCount));
    }
  }
  return enc;
}

std::vector<double> SynthSpec::reference_durations(int sentence_id) const {
  const Sentence& s = fixture_sentences()[sentence_id];
  std::vector<double> ref(s.tokens.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    ref[k] = 0.22 + 0.04 * static_cast<double>((k + sentence_id) % 4);
  }
  return ref;
}

std::vector<ClipRecord> synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> sentence_ids = spec.sentence_ids;
  if (sentence_ids.empty()) {
    for (int i = 0; i < kSentenceCount; ++i) sentence_ids.push_back(i);
  }
  std::vector<Emotion> emotions = spec.emotions;
  if (std::find(emotions.begin(), emotions.end(), Emotion::neutral) == emotions.end()) {
    emotions.insert(emotions.begin(), Emotion::neutral);
  }
  std::vector<ClipRecord> records;
  auto emit_clip = [&](int sid, Emotion emo, int spk, int k) {
    const Sentence& sentence = fixture_sentences()[sid];
    const auto ref = spec.reference_durations(sid);
    std::vector<double> mean(ref.size(), 0.0);
    if (auto it = spec.means.find({sid, emo}); it != spec.means.end()) {
      if (it->second.size() != ref.size()) {
        fail("synth: mean vector for sentence ", sid, " emotion ",
             to_string(emo), " has wrong length");
      }
      mean = it->second;
    }
    double offset = 0.0;
    if (auto it = spec.speaker_offsets.find(spk); it != spec.speaker_offsets.end()) {
      offset = it->second;
    }
    const bool noiseless = emo == Emotion::neutral && spec.noiseless_neutral;
    ClipRecord rec;
    rec.clip_id = cat("synth_s", sid, "_", to_string(emo), "_spk", spk, "_", k);
    rec.speaker_id = spk;
    rec.sentence_id = sid;
    rec.emotion = emo;
    rec.intensity = Intensity::unspecified;
    rec.alpha = spec.default_alpha;
    double t = 0.0;
    for (std::size_t w = 0; w < ref.size(); ++w) {
      const double eps = noiseless ? 0.0 : rng.normal(0.0, spec.noise_scale);
      double d = ref[w] * (1.0 + mean[w] + offset + eps);
      d = std::max(d, 1e-4);
      rec.words.push_back({sentence.words[w], t, t + d});
      t += d;
    }
    records.push_back(std::move(rec));
  };

  if (spec.rotate_speakers) {
    std::size_t cell = 0;
    for (int sid : sentence_ids) {
      for (Emotion emo : emotions) {
        for (int k = 0; k < spec.clips_per_cell; ++k) {
          const std::size_t pick =
              (cell * 7 + static_cast<std::size_t>(k)) % spec.speaker_ids.size();
          emit_clip(sid, emo, spec.speaker_ids[pick], k);
        }
        ++cell;
      }
    }
  } else {
    for (int sid : sentence_ids) {
      for (int spk : spec.speaker_ids) {
        for (Emotion emo : emotions) {
          for (int k = 0; k < spec.clips_per_cell; ++k) {
            emit_clip(sid, emo, spk, k);
          }
        }
      }
    }
  }
  return records;
}

const Sentence& Dataset::sentence(int id) const {
  for (const Sentence& s : sentences) {
    if (s.id == id) return s;
  }
  fail("dataset: unknown sentence id ", id);
}

Dataset prepare_dataset(const std::vector<ClipRecord>& records,
                        double alpha_threshold) {
  for (const ClipRecord& rec : records) validate_record(rec);
  const auto kept = filter_by_alpha(records, alpha_threshold);
  Dataset ds;
  ds.sentences = fixture_sentences();
  std::vector<std::string> texts;
  for (const Sentence& s : ds.sentences) texts.push_back(s.text);
  ds.vocab = build_vocabulary(texts);
  ds.pos_table = fixture_pos_table();

  ds.references.resize(ds.sentences.size());
  for (const Sentence& s : ds.sentences) {
    bool has_neutral = false;
    for (const ClipRecord& rec : kept) {
      if (rec.sentence_id == s.id && rec.emotion == Emotion::neutral) {
        has_neutral = true;
        break;
      }
    }
    if (has_neutral) {
      // all-speaker mean; per-speaker references are used per clip below
      ds.references[s.id] = neutral_reference(kept, s.id, -1);
    }
  }

  for (const ClipRecord& rec : kept) {
    DatasetSample sample;
    sample.clip_id = rec.clip_id;
    sample.intensity = rec.intensity;
    sample.alpha = rec.alpha;
    sample.rel = compute_relative(
        rec, neutral_reference(kept, rec.sentence_id, rec.speaker_id));
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

EncodedSample encode_dataset_sample(const Dataset& ds, const DatasetSample& s,
                                    InputMode mode) {
  return encode_sample(s.rel, ds.vocab, mode, ds.sentences, ds.pos_table);
}

}  // namespace prosody::corpus
