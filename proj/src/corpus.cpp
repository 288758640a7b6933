#include "dclm/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace dclm {

using nlohmann::json;

namespace {

[[noreturn]] void line_fail(const std::string& path, std::size_t line,
                            const std::string& what) {
  std::ostringstream os;
  os << path << " line " << line << ": " << what;
  throw DataError(os.str());
}

Utterance parse_utterance(const json& j, const std::string& path,
                          std::size_t line) {
  if (!j.is_object()) line_fail(path, line, "utterance is not an object");
  Utterance u;
  if (!j.contains("tokens") || !j["tokens"].is_array()) {
    line_fail(path, line, "utterance lacks a tokens array");
  }
  if (!j.contains("pos") || !j["pos"].is_array()) {
    line_fail(path, line, "utterance lacks a pos array");
  }
  if (!j.contains("da") || !j["da"].is_string()) {
    line_fail(path, line, "utterance lacks a da string");
  }
  for (const auto& t : j["tokens"]) {
    if (!t.is_string()) line_fail(path, line, "token is not a string");
    u.tokens.push_back(t.get<std::string>());
  }
  for (const auto& t : j["pos"]) {
    if (!t.is_string()) line_fail(path, line, "pos tag is not a string");
    u.pos.push_back(t.get<std::string>());
  }
  u.da = j["da"].get<std::string>();
  if (u.tokens.size() != u.pos.size()) {
    std::ostringstream os;
    os << "tokens and pos lengths differ (" << u.tokens.size() << " vs "
       << u.pos.size() << ")";
    line_fail(path, line, os.str());
  }
  if (u.tokens.empty()) line_fail(path, line, "utterance has no tokens");
  return u;
}

}  // namespace

Corpus load_corpus(const std::string& path, std::ostream* warnings) {
  std::ifstream f(path);
  if (!f) throw DataError("corpus " + path + ": cannot open");
  Corpus corpus;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(f, raw)) {
    ++line_no;
    if (raw.empty()) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      line_fail(path, line_no, std::string("bad json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("dialog_id") ||
        !j["dialog_id"].is_string()) {
      line_fail(path, line_no, "dialog lacks a dialog_id string");
    }
    if (!j.contains("turns") || !j["turns"].is_array() || j["turns"].empty()) {
      line_fail(path, line_no, "dialog lacks a non-empty turns array");
    }
    Dialog d;
    d.dialog_id = j["dialog_id"].get<std::string>();
    for (const auto& jt : j["turns"]) {
      if (!jt.is_object() || !jt.contains("speaker") ||
          !jt["speaker"].is_string()) {
        line_fail(path, line_no, "turn lacks a speaker string");
      }
      Turn turn;
      turn.speaker = jt["speaker"].get<std::string>();
      if (turn.speaker != "A" && turn.speaker != "B") {
        line_fail(path, line_no, "speaker must be A or B, got " + turn.speaker);
      }
      if (!jt.contains("utterances") || !jt["utterances"].is_array() ||
          jt["utterances"].empty()) {
        line_fail(path, line_no, "turn lacks a non-empty utterances array");
      }
      for (const auto& ju : jt["utterances"]) {
        turn.utterances.push_back(parse_utterance(ju, path, line_no));
      }
      if (!d.turns.empty() && d.turns.back().speaker == turn.speaker) {
        if (warnings) {
          *warnings << path << " line " << line_no << ": dialog "
                    << d.dialog_id
                    << ": consecutive turns by speaker " << turn.speaker
                    << " merged\n";
        }
        for (auto& u : turn.utterances) {
          d.turns.back().utterances.push_back(std::move(u));
        }
      } else {
        d.turns.push_back(std::move(turn));
      }
    }
    corpus.push_back(std::move(d));
  }
  return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("corpus " + path + ": cannot open for writing");
  for (const auto& d : corpus) {
    json jd;
    jd["dialog_id"] = d.dialog_id;
    jd["turns"] = json::array();
    for (const auto& t : d.turns) {
      json jt;
      jt["speaker"] = t.speaker;
      jt["utterances"] = json::array();
      for (const auto& u : t.utterances) {
        json ju;
        ju["tokens"] = u.tokens;
        ju["pos"] = u.pos;
        ju["da"] = u.da;
        jt["utterances"].push_back(std::move(ju));
      }
      jd["turns"].push_back(std::move(jt));
    }
    f << jd.dump() << "\n";
  }
  if (!f) throw DataError("corpus " + path + ": write failed");
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_byte(std::uint64_t h, unsigned char ch) {
  h ^= ch;
  h *= 0x100000001b3ULL;
  return h;
}

}  // namespace

Vocab Vocab::build(const Corpus& corpus, int cap) {
  if (cap < 1) {
    throw ConfigError("vocab: cap must be positive");
  }
  std::map<std::string, std::int64_t> counts;
  std::map<std::string, int> pos_seen;
  std::map<std::string, int> da_seen;
  for (const auto& d : corpus) {
    for (const auto& t : d.turns) {
      for (const auto& u : t.utterances) {
        for (const auto& tok : u.tokens) ++counts[tok];
        for (const auto& tag : u.pos) pos_seen.emplace(tag, 0);
        da_seen.emplace(u.da, 0);
      }
    }
  }
  counts.erase(kUnkToken);
  counts.erase(kEotToken);
  pos_seen.erase(kTagEot);
  pos_seen.erase(kTagOther);
  da_seen.erase(kTagEot);
  da_seen.erase(kTagOther);

  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(),
                                                           counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });

  Vocab v;
  v.tokens_ = {kUnkToken, kEotToken};
  const std::size_t keep =
      std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(cap));
  for (std::size_t i = 0; i < keep; ++i) v.tokens_.push_back(ranked[i].first);

  v.pos_tags_ = {kTagEot, kTagOther};
  for (const auto& [tag, _] : pos_seen) v.pos_tags_.push_back(tag);
  v.da_tags_ = {kTagEot, kTagOther};
  for (const auto& [tag, _] : da_seen) v.da_tags_.push_back(tag);

  v.index();
  v.refingerprint();
  return v;
}

void Vocab::index() {
  token_ids_.clear();
  pos_ids_.clear();
  da_ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    token_ids_[tokens_[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < pos_tags_.size(); ++i) {
    pos_ids_[pos_tags_[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < da_tags_.size(); ++i) {
    da_ids_[da_tags_[i]] = static_cast<int>(i);
  }
}

void Vocab::refingerprint() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) h = fnv1a_byte(fnv1a(h, t), 0x1f);
  h = fnv1a_byte(h, 0x01);
  for (const auto& t : pos_tags_) h = fnv1a_byte(fnv1a(h, t), 0x1f);
  h = fnv1a_byte(h, 0x02);
  for (const auto& t : da_tags_) h = fnv1a_byte(fnv1a(h, t), 0x1f);
  fingerprint_ = h;
}

int Vocab::token_id(const std::string& tok) const {
  auto it = token_ids_.find(tok);
  return it == token_ids_.end() ? kUnkId : it->second;
}

int Vocab::pos_id(const std::string& tag) const {
  auto it = pos_ids_.find(tag);
  return it == pos_ids_.end() ? kTagOtherId : it->second;
}

int Vocab::da_id(const std::string& tag) const {
  auto it = da_ids_.find(tag);
  return it == da_ids_.end() ? kTagOtherId : it->second;
}

void Vocab::save(const std::string& path) const {
  json j;
  j["tokens"] = tokens_;
  j["pos_tags"] = pos_tags_;
  j["da_tags"] = da_tags_;
  std::ostringstream fp;
  fp << std::hex << fingerprint_;
  j["fingerprint"] = fp.str();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("vocab " + path + ": cannot open for writing");
  f << j.dump(2) << "\n";
  if (!f) throw DataError("vocab " + path + ": write failed");
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("vocab " + path + ": cannot open");
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw DataError("vocab " + path + ": bad json: " + e.what());
  }
  for (const char* key : {"tokens", "pos_tags", "da_tags"}) {
    if (!j.contains(key) || !j[key].is_array()) {
      throw DataError("vocab " + path + ": missing array " + key);
    }
  }
  Vocab v;
  v.tokens_ = j["tokens"].get<std::vector<std::string>>();
  v.pos_tags_ = j["pos_tags"].get<std::vector<std::string>>();
  v.da_tags_ = j["da_tags"].get<std::vector<std::string>>();
  if (v.tokens_.size() < 2 || v.tokens_[0] != kUnkToken ||
      v.tokens_[1] != kEotToken) {
    throw DataError("vocab " + path + ": reserved token entries are wrong");
  }
  if (v.pos_tags_.size() < 2 || v.da_tags_.size() < 2) {
    throw DataError("vocab " + path + ": reserved tag entries are wrong");
  }
  v.index();
  if (v.token_ids_.size() != v.tokens_.size()) {
    throw DataError("vocab " + path + ": duplicate tokens");
  }
  v.refingerprint();
  if (j.contains("fingerprint")) {
    std::ostringstream fp;
    fp << std::hex << v.fingerprint_;
    if (j["fingerprint"].get<std::string>() != fp.str()) {
      throw DataError("vocab " + path + ": fingerprint mismatch");
    }
  }
  return v;
}

std::int64_t EncodedCorpus::turn_count() const {
  std::int64_t n = 0;
  for (const auto& d : dialogs) n += static_cast<std::int64_t>(d.turns.size());
  return n;
}

std::int64_t EncodedCorpus::token_count() const {
  std::int64_t n = 0;
  for (const auto& d : dialogs) {
    for (const auto& t : d.turns) {
      n += static_cast<std::int64_t>(t.tokens.size());
    }
  }
  return n;
}

EncodedCorpus encode_corpus(const Corpus& corpus, const Vocab& vocab) {
  EncodedCorpus out;
  for (const auto& d : corpus) {
    EncodedDialog ed;
    ed.dialog_id = d.dialog_id;
    for (const auto& t : d.turns) {
      const int speaker = t.speaker == "A" ? 0 : 1;
      if (ed.turns.empty() || ed.turns.back().speaker != speaker) {
        ed.turns.emplace_back();
        ed.turns.back().speaker = speaker;
      }
      EncodedTurn& et = ed.turns.back();
      for (const auto& u : t.utterances) {
        const int da = vocab.da_id(u.da);
        et.utt_das.push_back(da);
        for (std::size_t i = 0; i < u.tokens.size(); ++i) {
          if (static_cast<int>(et.tokens.size()) >= kMaxTurnTokens) break;
          et.tokens.push_back(vocab.token_id(u.tokens[i]));
          et.pos.push_back(vocab.pos_id(u.pos[i]));
          et.da_per_token.push_back(da);
        }
      }
    }
    out.dialogs.push_back(std::move(ed));
  }
  return out;
}

CorpusSplit split_by_folder(const Corpus& corpus) {
  CorpusSplit split;
  for (const auto& d : corpus) {
    const std::string& id = d.dialog_id;
    int folder = -1;
    if (id.size() >= 4 && id.compare(0, 2, "sw") == 0 &&
        std::isdigit(static_cast<unsigned char>(id[2])) &&
        std::isdigit(static_cast<unsigned char>(id[3]))) {
      folder = (id[2] - '0') * 10 + (id[3] - '0');
    }
    if (folder >= 0 && folder <= 9) {
      split.train.push_back(d);
    } else if (folder == 10) {
      split.test.push_back(d);
    } else if (folder >= 11 && folder <= 13) {
      split.valid.push_back(d);
    } else {
      throw DataError("split: dialog_id " + id +
                      " does not start with a known folder prefix");
    }
  }
  return split;
}

const char* synth_mode_name(SynthMode m) {
  switch (m) {
    case SynthMode::SelfEcho: return "self-echo";
    case SynthMode::CrossEcho: return "cross-echo";
    case SynthMode::None: return "none";
  }
  return "?";
}

SynthMode synth_mode_from_string(const std::string& name) {
  if (name == "self-echo") return SynthMode::SelfEcho;
  if (name == "cross-echo") return SynthMode::CrossEcho;
  if (name == "none") return SynthMode::None;
  throw ConfigError("unknown dependency mode: " + name +
                    " (expected self-echo, cross-echo, or none)");
}

namespace {

// Part of speech assigned to synthetic token "t<n>": kSynthPos[n % 6].
constexpr const char* kSynthPos[6] = {"n", "v", "adj", "adv", "det", "prep"};
constexpr const char* kSynthDas[5] = {"sd", "b", "sv", "aa", "qy"};

}  // namespace

Corpus generate_synthetic(const SynthConfig& config) {
  if (config.vocab_size < 10) {
    throw ConfigError("synthetic: vocab_size must be at least 10");
  }
  if (config.dialog_count < 1 || config.turns_per_dialog < 1) {
    throw ConfigError("synthetic: need at least one dialog and one turn");
  }
  Corpus corpus;
  for (int i = 0; i < config.dialog_count; ++i) {
    const int index = config.first_index + i;
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(index)));
    Dialog d;
    d.dialog_id = std::string("synth-") + synth_mode_name(config.mode) + "-" +
                  std::to_string(index);
    for (int k = 0; k < config.turns_per_dialog; ++k) {
      Turn turn;
      turn.speaker = k % 2 == 0 ? "A" : "B";
      Utterance u;
      const int echo = config.mode == SynthMode::SelfEcho    ? k - 2
                       : config.mode == SynthMode::CrossEcho ? k - 1
                                                             : -1;
      if (echo >= 0) {
        u.tokens = d.turns[echo].utterances[0].tokens;
        u.pos = d.turns[echo].utterances[0].pos;
      } else {
        const int len = 4 + static_cast<int>(rng.below(5));
        for (int t = 0; t < len; ++t) {
          const auto word = rng.below(static_cast<std::uint64_t>(config.vocab_size));
          u.tokens.push_back("t" + std::to_string(word));
          u.pos.push_back(kSynthPos[word % 6]);
        }
      }
      u.da = kSynthDas[rng.below(5)];
      turn.utterances.push_back(std::move(u));
      d.turns.push_back(std::move(turn));
    }
    corpus.push_back(std::move(d));
  }
  return corpus;
}

std::vector<WindowRef> make_windows(const EncodedCorpus& corpus, int k) {
  if (k < 1) throw ConfigError("make_windows: k must be at least 1");
  std::vector<WindowRef> windows;
  for (std::size_t d = 0; d < corpus.dialogs.size(); ++d) {
    const int turns = static_cast<int>(corpus.dialogs[d].turns.size());
    for (int t = k - 1; t < turns; ++t) {
      WindowRef w;
      w.dialog = static_cast<int>(d);
      w.target = t;
      w.context_begin = t - (k - 1);
      windows.push_back(w);
    }
  }
  return windows;
}

}  // namespace dclm
