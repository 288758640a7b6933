#ifndef DCLM_CORPUS_HPP
#define DCLM_CORPUS_HPP

#include "dclm/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dclm {

// Reserved word ids.
inline constexpr int kUnkId = 0;
inline constexpr int kEotId = 1;
// Reserved tag ids (part-of-speech and dialog-act vocabularies). Id 0
// tags the synthetic end-of-turn token, id 1 any tag unseen in training.
inline constexpr int kTagEotId = 0;
inline constexpr int kTagOtherId = 1;

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEotToken = "<eot>";
inline constexpr const char* kTagEot = "<eot>";
inline constexpr const char* kTagOther = "<other>";

// Tokens kept per turn before the end-of-turn marker is appended.
inline constexpr int kMaxTurnTokens = 160;

struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> pos;  // one tag per token
  std::string da;                // dialog act of the utterance
};

// Maximal span of consecutive utterances by one speaker.
struct Turn {
  std::string speaker;  // "A" or "B"
  std::vector<Utterance> utterances;
};

struct Dialog {
  std::string dialog_id;
  std::vector<Turn> turns;
};

using Corpus = std::vector<Dialog>;

// One dialog per line:
// {"dialog_id": ..., "turns": [{"speaker": ..., "utterances":
//   [{"tokens": [...], "pos": [...], "da": ...}]}]}
// Consecutive same-speaker turns are merged into one turn, with a warning
// per merge (a turn is a maximal same-speaker span).
Corpus load_corpus(const std::string& path, std::ostream* warnings = nullptr);
void save_corpus(const std::string& path, const Corpus& corpus);

class Vocab {
 public:
  // Word ids 0 and 1 are reserved for <unk> and <eot>; the rest are the
  // `cap` most frequent training tokens (ties broken alphabetically), so
  // the total size is at most cap + 2. Tag vocabularies hold every tag
  // seen, alphabetically, after their two reserved entries.
  static Vocab build(const Corpus& corpus, int cap);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int token_id(const std::string& tok) const;
  int pos_id(const std::string& tag) const;
  int da_id(const std::string& tag) const;

  const std::string& token(int id) const { return tokens_.at(id); }
  const std::string& pos_tag(int id) const { return pos_tags_.at(id); }
  const std::string& da_tag(int id) const { return da_tags_.at(id); }

  int size() const { return static_cast<int>(tokens_.size()); }
  int pos_size() const { return static_cast<int>(pos_tags_.size()); }
  int da_size() const { return static_cast<int>(da_tags_.size()); }

  // FNV-1a over all entries; identifies the vocabulary in checkpoints.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  void index();
  void refingerprint();

  std::vector<std::string> tokens_;
  std::vector<std::string> pos_tags_;
  std::vector<std::string> da_tags_;
  std::unordered_map<std::string, int> token_ids_;
  std::unordered_map<std::string, int> pos_ids_;
  std::unordered_map<std::string, int> da_ids_;
  std::uint64_t fingerprint_ = 0;
};

// Turn with ids instead of strings, truncated to kMaxTurnTokens. The
// end-of-turn marker is not stored; model runs append it.
struct EncodedTurn {
  int speaker = 0;  // 0 = A, 1 = B
  std::vector<int> tokens;
  std::vector<int> pos;           // tag id per token
  std::vector<int> da_per_token;  // dialog act id per token
  std::vector<int> utt_das;       // dialog act id per utterance, in order
};

struct EncodedDialog {
  std::string dialog_id;
  std::vector<EncodedTurn> turns;
};

struct EncodedCorpus {
  std::vector<EncodedDialog> dialogs;
  std::int64_t turn_count() const;
  std::int64_t token_count() const;  // without end-of-turn markers
};

// Maps words and tags to ids, merging consecutive same-speaker turns.
EncodedCorpus encode_corpus(const Corpus& corpus, const Vocab& vocab);

// One scoring unit: context turns [context_begin, target) plus the
// target turn, all within one dialog.
struct WindowRef {
  int dialog = 0;
  int context_begin = 0;
  int target = 0;
};

// Sliding windows of k consecutive turns, stride 1, within each dialog;
// dialogs with fewer than k turns yield none.
std::vector<WindowRef> make_windows(const EncodedCorpus& corpus, int k);

struct CorpusSplit {
  Corpus train;  // folders sw00..sw09
  Corpus valid;  // folders sw11..sw13
  Corpus test;   // folder sw10
};

// What a synthetic turn repeats: the same speaker's previous turn (two
// back), the other speaker's last turn, or nothing (i.i.d. tokens).
enum class SynthMode { SelfEcho, CrossEcho, None };

const char* synth_mode_name(SynthMode m);
SynthMode synth_mode_from_string(const std::string& name);

struct SynthConfig {
  int vocab_size = 0;      // distinct content tokens, at least 10
  int dialog_count = 0;
  int turns_per_dialog = 0;
  SynthMode mode = SynthMode::None;
  std::uint64_t seed = 0;
  int first_index = 0;  // index of the first dialog id generated
};

// Dialogs of alternating speakers with one utterance per turn. Echoed
// turns copy their source turn's tokens exactly; all other turns draw
// 4..8 tokens uniformly. A token's part of speech is a fixed function
// of the token, dialog acts are drawn from a small fixed set, and
// dialog `first_index + i` depends only on the seed and its own index.
Corpus generate_synthetic(const SynthConfig& config);

// Routes each dialog by the two-digit folder number in its id ("sw" + NN
// + conversation number). Unknown prefixes are an error.
CorpusSplit split_by_folder(const Corpus& corpus);

}  // namespace dclm

#endif  // DCLM_CORPUS_HPP
