#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prosody/rng.hpp"
#include "prosody/tensor.hpp"

namespace prosody::corpus {

// Surprise is excluded from the six basic emotions on purpose.
enum class Emotion { anger, disgust, fear, happy, neutral, sad };
enum class Intensity { low, medium, high, unspecified };

inline constexpr int kEmotionCount = 6;
inline constexpr int kSpeakerCount = 91;
inline constexpr int kSentenceCount = 12;

const char* to_string(Emotion e);
const char* to_string(Intensity i);
Emotion emotion_from_string(const std::string& s);
Intensity intensity_from_string(const std::string& s);

struct WordAlignment {
  std::string word;
  double start = 0.0;  // seconds
  double end = 0.0;
  double duration() const { return end - start; }
};

struct ClipRecord {
  std::string clip_id;
  int speaker_id = 0;    // [0, 90]
  int sentence_id = 0;   // [0, 11]
  Emotion emotion = Emotion::neutral;
  Intensity intensity = Intensity::unspecified;
  double alpha = 0.0;    // rater agreement, [-1, 1]
  std::vector<WordAlignment> words;

  std::vector<double> durations() const;
};

// Per-word lengths relative to neutral speech; neutral == 0 by construction.
struct RelativeSequence {
  int sentence_id = 0;
  Emotion emotion = Emotion::neutral;
  int speaker_id = 0;
  std::vector<double> values;
};

struct Sentence {
  int id = 0;
  std::string text;
  std::vector<std::string> words;   // original case, whitespace-split
  std::vector<std::string> tokens;  // lowercased model tokens, 1:1 with words
};

// Lowercase, split on whitespace, strip terminal punctuation, keep internal
// apostrophes; one token per aligned word.
std::vector<std::string> tokenize(const std::string& sentence);

Sentence make_sentence(int id, const std::string& text);

// The 12 emotionally neutral prompts the corpus is built on.
const std::vector<Sentence>& fixture_sentences();

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t i) const { return tokens_[i]; }
  std::optional<std::size_t> index_of(const std::string& token) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

// First-occurrence order over tokenized sentences; empty sentences skipped.
Vocabulary build_vocabulary(const std::vector<std::string>& sentences);

// The 17-tag universal POS set.
extern const std::array<const char*, 17> kPosTags;
inline constexpr std::size_t kPosTagCount = 17;
std::size_t pos_tag_index(const std::string& tag);

// tags[sentence_id][word_index] -> UPOS tag
using PosTable = std::vector<std::vector<std::string>>;
const PosTable& fixture_pos_table();
PosTable parse_pos_csv(const std::filesystem::path& path,
                       const std::vector<Sentence>& sentences);

enum class InputMode { tokens, pos };

struct EncodedSample {
  std::vector<nn::Tensor> rows;  // per word: 1-hot over vocab or POS tagset
  nn::Tensor emotion_onehot;     // [6]
  nn::Tensor speaker_onehot;     // [91]
  std::vector<double> target;
  int sentence_id = 0;
  Emotion emotion = Emotion::neutral;
  int speaker_id = 0;
};

// --- operations ---------------------------------------------------------

std::vector<ClipRecord> parse_alignments(const std::filesystem::path& path);
std::vector<ClipRecord> parse_alignment_csv(const std::filesystem::path& path);
// Directory of <clip_id>.json aligner outputs plus metadata.csv sidecar.
std::vector<ClipRecord> parse_alignment_json_dir(const std::filesystem::path& dir);
void write_alignment_csv(const std::filesystem::path& path,
                         const std::vector<ClipRecord>& records);

void validate_record(const ClipRecord& rec);

std::vector<ClipRecord> filter_by_alpha(const std::vector<ClipRecord>& records,
                                        double threshold);

// Mean duration per word over the speaker's neutral clips of the sentence;
// falls back to the all-speaker neutral mean when the speaker has none.
std::vector<double> neutral_reference(const std::vector<ClipRecord>& records,
                                      int sentence_id, int speaker_id);

// r_i = (duration_i - reference_i) / reference_i
RelativeSequence compute_relative(const ClipRecord& clip,
                                  const std::vector<double>& reference);

EncodedSample encode_sample(const RelativeSequence& relseq,
                            const Vocabulary& vocab, InputMode mode,
                            const std::vector<Sentence>& sentences,
                            const PosTable& pos_table);

// --- synthetic corpora ---------------------------------------------------

struct SynthSpec {
  std::vector<int> sentence_ids;                       // default: all 12
  std::vector<Emotion> emotions;                       // neutral added if missing
  // per (sentence, emotion): mean relative length per word
  std::map<std::pair<int, Emotion>, std::vector<double>> means;
  double noise_scale = 0.0;
  int clips_per_cell = 1;                              // per (sentence, emotion, speaker)
  std::vector<int> speaker_ids = {0};
  // When set, each (sentence, emotion) cell gets clips_per_cell clips with
  // speakers rotated deterministically through speaker_ids instead of one
  // block per speaker; lets a corpus reference many speakers while staying
  // small.
  bool rotate_speakers = false;
  std::map<int, double> speaker_offsets;               // additive shift on r
  bool noiseless_neutral = true;
  double default_alpha = 0.8;

  std::vector<double> reference_durations(int sentence_id) const;
};

// durations = reference * (1 + mean + speaker_offset + noise), clamped > 0
std::vector<ClipRecord> synth_corpus(const SynthSpec& spec, std::uint64_t seed);

// --- prepared dataset ----------------------------------------------------

struct DatasetSample {
  std::string clip_id;
  Intensity intensity = Intensity::unspecified;
  double alpha = 0.0;
  RelativeSequence rel;
};

struct Dataset {
  std::vector<Sentence> sentences;
  Vocabulary vocab;
  PosTable pos_table;
  std::vector<std::vector<double>> references;  // per sentence, seconds
  std::vector<DatasetSample> samples;

  const Sentence& sentence(int id) const;
};

// filter -> neutral references -> relative sequences -> vocabulary
Dataset prepare_dataset(const std::vector<ClipRecord>& records,
                        double alpha_threshold);

EncodedSample encode_dataset_sample(const Dataset& ds, const DatasetSample& s,
                                    InputMode mode);

}  // namespace prosody::corpus
