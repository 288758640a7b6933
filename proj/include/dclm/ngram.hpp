#ifndef DCLM_NGRAM_HPP
#define DCLM_NGRAM_HPP

#include "dclm/corpus.hpp"
#include "dclm/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dclm {

struct NgramConfig {
  int order = 5;
  // When set, the scoring history runs through <eot> into the window's
  // context turns, and training streams whole dialogs instead of single
  // turns. Off, context turns do not affect the n-gram at all.
  bool cross_turn_history = false;
};

struct GramCounts {
  std::int64_t raw = 0;
  // Continuation count (distinct left extensions), except raw for the
  // top order and for grams starting with the pad symbol.
  std::int64_t adjusted = 0;
};

// Raw and adjusted counts for every n-gram of orders 1..order seen in
// the start-padded training streams. Grams are keyed by token ids; the
// pad symbol is the id just past the vocabulary.
struct CountTrie {
  int order = 5;
  int vocab_size = 0;
  bool cross_turn = false;
  std::vector<std::unordered_map<std::string, GramCounts>> by_order;

  int pad_id() const { return vocab_size; }
  std::int64_t raw_count(const std::vector<int>& gram) const;
  std::int64_t adjusted_count(const std::vector<int>& gram) const;
};

CountTrie train_counts(const EncodedCorpus& corpus, int vocab_size,
                       const NgramConfig& config = {});

// Discount subtracted from an adjusted count of 1, 2, and 3-or-more.
struct Discounts {
  Scalar d1 = 0.75;
  Scalar d2 = 0.75;
  Scalar d3 = 0.75;
};

// Count-of-count estimates (Y = n1/(n1+2*n2); D_k = k - (k+1)*Y*
// n_{k+1}/n_k) per order, capped at 0.99. Estimates that are missing or
// non-positive fall back to 0.75 so every discount stays strictly
// positive. Index o-1 holds order o.
std::vector<Discounts> estimate_discounts(const CountTrie& counts);

// Interpolated modified Kneser-Ney over token ids, terminating in a
// uniform distribution over the vocabulary. Stored as a backoff table
// (log10 probability per seen gram, log10 backoff weight per observed
// history), which reproduces the interpolated recursion exactly and
// round-trips through the ARPA text format bit-for-bit.
class KnModel {
 public:
  static KnModel train(const EncodedCorpus& corpus, int vocab_size,
                       const NgramConfig& config = {});
  static KnModel build(const CountTrie& counts,
                       const std::vector<Discounts>& discounts);

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  int pad_id() const { return vocab_size_; }
  bool cross_turn_history() const { return cross_turn_; }
  // Empty after read_arpa; the table no longer needs them.
  const std::vector<Discounts>& discounts() const { return discounts_; }

  // P(next | history). Only the last order-1 history entries matter;
  // histories may contain the pad id, next may not.
  Scalar prob(const std::vector<int>& history, int next) const;
  Scalar logprob(const std::vector<int>& history, int next) const;

  // Natural-log probability of each target-turn token and the final
  // end-of-turn marker; context turns enter the history only when the
  // model was trained with cross_turn_history.
  std::vector<Scalar> score_window(const EncodedDialog& dialog,
                                   const WindowRef& w) const;

  // Every history with observed extensions, plus the empty history.
  std::vector<std::vector<int>> observed_histories() const;

  void write_arpa(const std::string& path, const Vocab& vocab) const;
  static KnModel read_arpa(const std::string& path, const Vocab& vocab,
                           bool cross_turn_history = false);

 private:
  struct Entry {
    Scalar logp = 0;
    Scalar logbow = 0;
    bool has_bow = false;
  };

  const Entry* find(const int* gram, int n) const;
  Scalar log10_prob(const int* history, int len, int next) const;
  Scalar logprob10(const std::vector<int>& history, int next) const;

  int order_ = 5;
  int vocab_size_ = 0;
  bool cross_turn_ = false;
  std::vector<Discounts> discounts_;
  std::vector<std::unordered_map<std::string, Entry>> tables_;
};

// exp(mean negative log probability) over the target turns of every
// k-turn window, end-of-turn markers included.
Scalar ngram_perplexity(const KnModel& model, const EncodedCorpus& corpus,
                        int k);

}  // namespace dclm

#endif  // DCLM_NGRAM_HPP
