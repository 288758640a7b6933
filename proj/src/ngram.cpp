#include "dclm/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dclm {

namespace {

// Big-endian packing so lexicographic key order equals numeric id order.
std::string gram_key(const int* ids, int n) {
  std::string s(static_cast<std::size_t>(n) * 4, '\0');
  for (int i = 0; i < n; ++i) {
    const auto v = static_cast<std::uint32_t>(ids[i]);
    s[4 * i] = static_cast<char>(v >> 24);
    s[4 * i + 1] = static_cast<char>(v >> 16);
    s[4 * i + 2] = static_cast<char>(v >> 8);
    s[4 * i + 3] = static_cast<char>(v);
  }
  return s;
}

std::string gram_key(const std::vector<int>& ids) {
  return gram_key(ids.data(), static_cast<int>(ids.size()));
}

std::vector<int> key_ids(const std::string& key) {
  std::vector<int> ids(key.size() / 4);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
      v = (v << 8) | static_cast<unsigned char>(key[4 * i + b]);
    }
    ids[i] = static_cast<int>(v);
  }
  return ids;
}

int key_first_id(const std::string& key) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v = (v << 8) | static_cast<unsigned char>(key[b]);
  }
  return static_cast<int>(v);
}

void check_order(int order) {
  if (order < 1 || order > 9) {
    throw ConfigError("ngram: order must be between 1 and 9");
  }
}

void append_turn(std::vector<int>& stream, const EncodedTurn& turn,
                 int vocab_size) {
  for (int tok : turn.tokens) {
    if (tok < 0 || tok >= vocab_size) {
      throw DataError("ngram: token id " + std::to_string(tok) +
                      " outside the vocabulary of size " +
                      std::to_string(vocab_size));
    }
    stream.push_back(tok);
  }
  stream.push_back(kEotId);
}

void count_stream(CountTrie& trie, const std::vector<int>& stream) {
  const int order = trie.order;
  for (std::size_t i = static_cast<std::size_t>(order) - 1; i < stream.size();
       ++i) {
    for (int n = 1; n <= order; ++n) {
      ++trie.by_order[n - 1][gram_key(&stream[i + 1 - n], n)].raw;
    }
  }
}

// A non-positive estimate is as unusable as a missing one: it would zero
// out a context's backoff mass and let unseen continuations reach
// probability zero. Such estimates take the same 0.75 default as contexts
// whose count-of-count statistics vanish.
Scalar clamp_discount(Scalar d) {
  if (d <= 0) return 0.75;
  return std::min(d, Scalar(0.99));
}

Scalar pick_discount(const Discounts& d, std::int64_t adjusted) {
  if (adjusted <= 0) return 0;
  if (adjusted == 1) return d.d1;
  if (adjusted == 2) return d.d2;
  return d.d3;
}

}  // namespace

std::int64_t CountTrie::raw_count(const std::vector<int>& gram) const {
  const int n = static_cast<int>(gram.size());
  if (n < 1 || n > order) return 0;
  auto it = by_order[n - 1].find(gram_key(gram));
  return it == by_order[n - 1].end() ? 0 : it->second.raw;
}

std::int64_t CountTrie::adjusted_count(const std::vector<int>& gram) const {
  const int n = static_cast<int>(gram.size());
  if (n < 1 || n > order) return 0;
  auto it = by_order[n - 1].find(gram_key(gram));
  return it == by_order[n - 1].end() ? 0 : it->second.adjusted;
}

CountTrie train_counts(const EncodedCorpus& corpus, int vocab_size,
                       const NgramConfig& config) {
  check_order(config.order);
  if (vocab_size < 2) {
    throw ConfigError("ngram: vocab_size must cover the reserved ids");
  }
  CountTrie trie;
  trie.order = config.order;
  trie.vocab_size = vocab_size;
  trie.cross_turn = config.cross_turn_history;
  trie.by_order.resize(config.order);

  std::vector<int> stream;
  for (const auto& d : corpus.dialogs) {
    if (config.cross_turn_history) {
      stream.assign(static_cast<std::size_t>(config.order) - 1, trie.pad_id());
      for (const auto& t : d.turns) append_turn(stream, t, vocab_size);
      count_stream(trie, stream);
    } else {
      for (const auto& t : d.turns) {
        stream.assign(static_cast<std::size_t>(config.order) - 1,
                      trie.pad_id());
        append_turn(stream, t, vocab_size);
        count_stream(trie, stream);
      }
    }
  }

  for (int n = 2; n <= config.order; ++n) {
    for (const auto& [key, counts] : trie.by_order[n - 1]) {
      ++trie.by_order[n - 2][key.substr(4)].adjusted;
    }
  }
  for (int n = 1; n <= config.order; ++n) {
    for (auto& [key, counts] : trie.by_order[n - 1]) {
      if (n == config.order || key_first_id(key) == trie.pad_id()) {
        counts.adjusted = counts.raw;
      }
    }
  }
  return trie;
}

std::vector<Discounts> estimate_discounts(const CountTrie& counts) {
  std::vector<Discounts> out(counts.order);
  for (int n = 1; n <= counts.order; ++n) {
    std::int64_t cc[5] = {0, 0, 0, 0, 0};
    for (const auto& [key, c] : counts.by_order[n - 1]) {
      if (c.adjusted >= 1 && c.adjusted <= 4) ++cc[c.adjusted];
    }
    Discounts& d = out[n - 1];
    if (cc[1] > 0) {
      const Scalar y =
          static_cast<Scalar>(cc[1]) / (static_cast<Scalar>(cc[1]) + 2.0 * cc[2]);
      d.d1 = clamp_discount(1 - 2 * y * cc[2] / cc[1]);
      if (cc[2] > 0) d.d2 = clamp_discount(2 - 3 * y * cc[3] / cc[2]);
      if (cc[3] > 0) d.d3 = clamp_discount(3 - 4 * y * cc[4] / cc[3]);
    }
  }
  return out;
}

KnModel KnModel::train(const EncodedCorpus& corpus, int vocab_size,
                       const NgramConfig& config) {
  const CountTrie counts = train_counts(corpus, vocab_size, config);
  return build(counts, estimate_discounts(counts));
}

KnModel KnModel::build(const CountTrie& counts,
                       const std::vector<Discounts>& discounts) {
  check_order(counts.order);
  if (static_cast<int>(discounts.size()) != counts.order) {
    throw ConfigError("ngram: need one discount triple per order");
  }
  KnModel m;
  m.order_ = counts.order;
  m.vocab_size_ = counts.vocab_size;
  m.cross_turn_ = counts.cross_turn;
  m.discounts_ = discounts;
  m.tables_.resize(counts.order);

  {
    const Discounts& d = discounts[0];
    std::int64_t total = 0, n1 = 0, n2 = 0, n3p = 0;
    for (const auto& [key, c] : counts.by_order[0]) {
      total += c.adjusted;
      if (c.adjusted == 1) ++n1;
      else if (c.adjusted == 2) ++n2;
      else if (c.adjusted >= 3) ++n3p;
    }
    const Scalar uniform = Scalar(1) / counts.vocab_size;
    const Scalar gamma =
        total > 0 ? (d.d1 * n1 + d.d2 * n2 + d.d3 * n3p) / total : 1;
    for (int w = 0; w < counts.vocab_size; ++w) {
      Scalar p = gamma * uniform;
      if (total > 0) {
        auto it = counts.by_order[0].find(gram_key(&w, 1));
        if (it != counts.by_order[0].end()) {
          const auto a = it->second.adjusted;
          p += (a - pick_discount(d, a)) / total;
        }
      }
      m.tables_[0][gram_key(&w, 1)].logp = std::max(std::log10(p), Scalar(-99));
    }
  }

  for (int n = 2; n <= counts.order; ++n) {
    struct HistStat {
      std::int64_t total = 0, n1 = 0, n2 = 0, n3p = 0;
    };
    std::unordered_map<std::string, HistStat> hist;
    for (const auto& [key, c] : counts.by_order[n - 1]) {
      HistStat& h = hist[key.substr(0, key.size() - 4)];
      h.total += c.adjusted;
      if (c.adjusted == 1) ++h.n1;
      else if (c.adjusted == 2) ++h.n2;
      else if (c.adjusted >= 3) ++h.n3p;
    }
    const Discounts& d = discounts[n - 1];
    auto gamma_of = [&](const HistStat& h) {
      return (d.d1 * h.n1 + d.d2 * h.n2 + d.d3 * h.n3p) / h.total;
    };
    for (const auto& [hkey, h] : hist) {
      auto [it, fresh] = m.tables_[n - 2].try_emplace(hkey);
      if (fresh) it->second.logp = -99;  // pad-only context, never predicted
      it->second.has_bow = true;
      it->second.logbow = std::max(std::log10(gamma_of(h)), Scalar(-99));
    }
    for (const auto& [key, c] : counts.by_order[n - 1]) {
      const std::vector<int> ids = key_ids(key);
      const Scalar lower =
          std::pow(Scalar(10), m.log10_prob(ids.data() + 1, n - 2, ids[n - 1]));
      const HistStat& h = hist[key.substr(0, key.size() - 4)];
      const Scalar p = (c.adjusted - pick_discount(d, c.adjusted)) / h.total +
                       gamma_of(h) * lower;
      m.tables_[n - 1][key].logp = std::max(std::log10(p), Scalar(-99));
    }
  }
  return m;
}

const KnModel::Entry* KnModel::find(const int* gram, int n) const {
  const auto& table = tables_[n - 1];
  auto it = table.find(gram_key(gram, n));
  return it == table.end() ? nullptr : &it->second;
}

Scalar KnModel::log10_prob(const int* history, int len, int next) const {
  Scalar acc = 0;
  for (int n = std::min(len + 1, order_); n >= 1; --n) {
    const int* h = history + len - (n - 1);
    std::string key = gram_key(h, n - 1);
    key += gram_key(&next, 1);
    auto it = tables_[n - 1].find(key);
    if (it != tables_[n - 1].end()) return it->second.logp + acc;
    if (n >= 2) {
      const Entry* ctx = find(h, n - 1);
      if (ctx != nullptr && ctx->has_bow) acc += ctx->logbow;
    }
  }
  // Reachable only for tables that do not list the full vocabulary.
  return acc + std::log10(Scalar(1) / vocab_size_);
}

Scalar KnModel::prob(const std::vector<int>& history, int next) const {
  return std::pow(Scalar(10), logprob10(history, next));
}

Scalar KnModel::logprob(const std::vector<int>& history, int next) const {
  return logprob10(history, next) * std::numbers::ln10_v<Scalar>;
}

Scalar KnModel::logprob10(const std::vector<int>& history, int next) const {
  if (next < 0 || next >= vocab_size_) {
    throw DataError("ngram: cannot score token id " + std::to_string(next));
  }
  for (int id : history) {
    if (id < 0 || id > vocab_size_) {
      throw DataError("ngram: history id " + std::to_string(id) +
                      " outside the vocabulary and pad range");
    }
  }
  const int len = std::min<int>(static_cast<int>(history.size()), order_ - 1);
  return log10_prob(history.data() + history.size() - len, len, next);
}

std::vector<Scalar> KnModel::score_window(const EncodedDialog& dialog,
                                          const WindowRef& w) const {
  const int n_turns = static_cast<int>(dialog.turns.size());
  if (w.target < 0 || w.target >= n_turns || w.context_begin < 0 ||
      w.context_begin > w.target) {
    throw ConfigError("window does not fit the dialog");
  }
  std::vector<int> stream(static_cast<std::size_t>(order_) - 1, pad_id());
  if (cross_turn_) {
    for (int j = w.context_begin; j < w.target; ++j) {
      append_turn(stream, dialog.turns[j], vocab_size_);
    }
  }
  const std::size_t from = stream.size();
  append_turn(stream, dialog.turns[w.target], vocab_size_);

  std::vector<Scalar> out;
  out.reserve(stream.size() - from);
  for (std::size_t i = from; i < stream.size(); ++i) {
    const int len = std::min<int>(order_ - 1, static_cast<int>(i));
    out.push_back(log10_prob(&stream[i - len], len, stream[i]) *
                  std::numbers::ln10_v<Scalar>);
  }
  return out;
}

std::vector<std::vector<int>> KnModel::observed_histories() const {
  std::vector<std::vector<int>> out;
  out.push_back({});
  for (int n = 1; n < order_; ++n) {
    for (const auto& [key, e] : tables_[n - 1]) {
      if (e.has_bow) out.push_back(key_ids(key));
    }
  }
  return out;
}

namespace {

std::string format_log(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void KnModel::write_arpa(const std::string& path, const Vocab& vocab) const {
  if (vocab.size() != vocab_size_) {
    throw DataError("arpa " + path + ": vocabulary size " +
                    std::to_string(vocab.size()) + " does not match the model");
  }
  for (int w = 0; w < vocab.size(); ++w) {
    const std::string& tok = vocab.token(w);
    if (tok == "<s>" ||
        tok.find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("arpa " + path + ": token \"" + tok +
                      "\" cannot be written to the text format");
    }
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("arpa " + path + ": cannot open for writing");

  std::vector<std::vector<std::string>> keys(order_);
  f << "\\data\\\n";
  for (int n = 1; n <= order_; ++n) {
    keys[n - 1].reserve(tables_[n - 1].size());
    for (const auto& [key, e] : tables_[n - 1]) keys[n - 1].push_back(key);
    std::sort(keys[n - 1].begin(), keys[n - 1].end());
    f << "ngram " << n << "=" << keys[n - 1].size() << "\n";
  }
  for (int n = 1; n <= order_; ++n) {
    f << "\n\\" << n << "-grams:\n";
    for (const std::string& key : keys[n - 1]) {
      const Entry& e = tables_[n - 1].at(key);
      f << format_log(e.logp);
      const std::vector<int> ids = key_ids(key);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        f << (i == 0 ? '\t' : ' ')
          << (ids[i] == pad_id() ? "<s>" : vocab.token(ids[i]).c_str());
      }
      if (e.has_bow) f << '\t' << format_log(e.logbow);
      f << '\n';
    }
  }
  f << "\n\\end\\\n";
  if (!f) throw DataError("arpa " + path + ": write failed");
}

KnModel KnModel::read_arpa(const std::string& path, const Vocab& vocab,
                           bool cross_turn_history) {
  std::ifstream f(path);
  if (!f) throw DataError("arpa " + path + ": cannot open");

  auto fail = [&](std::size_t line, const std::string& what) -> void {
    std::ostringstream os;
    os << "arpa " << path << " line " << line << ": " << what;
    throw DataError(os.str());
  };

  KnModel m;
  m.vocab_size_ = vocab.size();
  m.cross_turn_ = cross_turn_history;

  std::vector<std::size_t> declared;
  std::string raw;
  std::size_t line_no = 0;
  bool in_data = false;
  int section = 0;  // current \n-grams: section, 0 = none
  bool ended = false;

  auto resolve = [&](const std::string& word, std::size_t line) -> int {
    if (word == "<s>") return m.pad_id();
    const int id = vocab.token_id(word);
    if (vocab.token(id) != word) fail(line, "unknown word " + word);
    return id;
  };

  while (std::getline(f, raw)) {
    ++line_no;
    while (!raw.empty() && (raw.back() == '\r' || raw.back() == '\n')) {
      raw.pop_back();
    }
    if (raw.empty()) continue;
    if (raw == "\\data\\") {
      in_data = true;
      continue;
    }
    if (raw == "\\end\\") {
      ended = true;
      break;
    }
    if (raw.size() > 1 && raw.front() == '\\' && raw.back() == ':') {
      const int n = std::atoi(raw.c_str() + 1);
      if (n < 1 || n > static_cast<int>(declared.size())) {
        fail(line_no, "unexpected section " + raw);
      }
      section = n;
      in_data = false;
      continue;
    }
    if (in_data) {
      int n = 0;
      std::size_t count = 0;
      if (std::sscanf(raw.c_str(), "ngram %d=%zu", &n, &count) != 2 ||
          n != static_cast<int>(declared.size()) + 1) {
        fail(line_no, "bad count line " + raw);
      }
      declared.push_back(count);
      m.tables_.emplace_back();
      continue;
    }
    if (section == 0) fail(line_no, "entry outside any section");

    std::istringstream is(raw);
    std::string field;
    std::vector<std::string> fields;
    while (is >> field) fields.push_back(field);
    if (fields.size() != static_cast<std::size_t>(section) + 1 &&
        fields.size() != static_cast<std::size_t>(section) + 2) {
      fail(line_no, "expected " + std::to_string(section) +
                        " words with a probability");
    }
    Entry e;
    char* end = nullptr;
    e.logp = std::strtod(fields[0].c_str(), &end);
    if (end == fields[0].c_str() || *end != '\0') {
      fail(line_no, "bad probability " + fields[0]);
    }
    std::vector<int> ids(section);
    for (int i = 0; i < section; ++i) ids[i] = resolve(fields[i + 1], line_no);
    if (fields.size() == static_cast<std::size_t>(section) + 2) {
      e.logbow = std::strtod(fields[section + 1].c_str(), &end);
      if (end == fields[section + 1].c_str() || *end != '\0') {
        fail(line_no, "bad backoff " + fields[section + 1]);
      }
      e.has_bow = true;
    }
    if (!m.tables_[section - 1].emplace(gram_key(ids), e).second) {
      fail(line_no, "duplicate entry");
    }
  }
  if (!ended) fail(line_no, "missing \\end\\ marker");
  if (declared.empty()) fail(line_no, "no \\data\\ section");
  m.order_ = static_cast<int>(declared.size());
  for (int n = 1; n <= m.order_; ++n) {
    if (m.tables_[n - 1].size() != declared[n - 1]) {
      std::ostringstream os;
      os << "arpa " << path << ": order " << n << " declares "
         << declared[n - 1] << " entries but has " << m.tables_[n - 1].size();
      throw DataError(os.str());
    }
  }
  return m;
}

Scalar ngram_perplexity(const KnModel& model, const EncodedCorpus& corpus,
                        int k) {
  const std::vector<WindowRef> windows = make_windows(corpus, k);
  if (windows.empty()) {
    throw DataError("ngram perplexity: no windows of " + std::to_string(k) +
                    " turns to score");
  }
  Scalar nll = 0;
  std::int64_t tokens = 0;
  for (const WindowRef& w : windows) {
    for (Scalar lp : model.score_window(corpus.dialogs[w.dialog], w)) {
      nll -= lp;
      ++tokens;
    }
  }
  return std::exp(nll / tokens);
}

}  // namespace dclm
