#include "dclm/ngram.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

using namespace dclm;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("/tmp/dclm_ngram_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

Dialog dialog_of(const std::string& id,
                 const std::vector<std::vector<std::string>>& turns) {
  Dialog d;
  d.dialog_id = id;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    Turn t;
    t.speaker = i % 2 == 0 ? "A" : "B";
    Utterance u;
    u.tokens = turns[i];
    u.pos.assign(turns[i].size(), "nn");
    u.da = "sd";
    t.utterances.push_back(std::move(u));
    d.turns.push_back(std::move(t));
  }
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

Corpus synth_corpus(SynthMode mode, int vocab, int dialogs, int turns,
                    std::uint64_t seed, int first_index = 0) {
  SynthConfig cfg;
  cfg.vocab_size = vocab;
  cfg.dialog_count = dialogs;
  cfg.turns_per_dialog = turns;
  cfg.mode = mode;
  cfg.seed = seed;
  cfg.first_index = first_index;
  return generate_synthetic(cfg);
}

void check_normalized(const KnModel& m) {
  const auto hists = m.observed_histories();
  CHECK(hists.size() > 50);
  for (const auto& h : hists) {
    Scalar sum = 0;
    for (int w = 0; w < m.vocab_size(); ++w) sum += m.prob(h, w);
    CAPTURE(h.size());
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

}  // namespace

TEST_CASE("raw and continuation counts follow the stream") {
  Corpus c;
  c.push_back(dialog_of("sw0001", {{"a", "b", "a", "b"}}));
  Vocab v = Vocab::build(c, 10);
  REQUIRE(v.token_id("a") == 2);
  EncodedCorpus e = encode_corpus(c, v);
  CountTrie trie = train_counts(e, v.size());
  CHECK(trie.raw_count({2}) == 2);
  CHECK(trie.raw_count({3}) == 2);
  CHECK(trie.raw_count({kEotId}) == 1);
  CHECK(trie.raw_count({2, 3}) == 2);
  CHECK(trie.raw_count({9}) == 0);
  CHECK(trie.raw_count({trie.pad_id(), 2}) == 1);

  Corpus c2;
  c2.push_back(dialog_of("sw0002", {{"p", "x"}, {"q", "x"}, {"r", "x"}}));
  Vocab v2 = Vocab::build(c2, 10);
  EncodedCorpus e2 = encode_corpus(c2, v2);
  CountTrie t2 = train_counts(e2, v2.size());
  const int x = v2.token_id("x");
  CHECK(t2.raw_count({x}) == 3);
  CHECK(t2.adjusted_count({x}) == 3);
  CHECK(t2.adjusted_count({kEotId}) == 1);
  CHECK(t2.adjusted_count({v2.token_id("p")}) == 1);
}

TEST_CASE("probabilities match the exact-rational fixture") {
  Corpus c;
  c.push_back(dialog_of("sw0001", {{"a", "b", "a", "b", "c"},
                                   {"a", "b", "a", "b"}}));
  Vocab v = Vocab::build(c, 10);
  REQUIRE(v.size() == 5);
  REQUIRE(v.token_id("a") == 2);
  REQUIRE(v.token_id("b") == 3);
  REQUIRE(v.token_id("c") == 4);
  EncodedCorpus e = encode_corpus(c, v);
  KnModel m = KnModel::train(e, v.size());
  REQUIRE(m.pad_id() == 5);

  const auto& d = m.discounts();
  REQUIRE(d.size() == 5);
  CHECK(d[0].d1 == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(d[1].d1 == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(d[2].d1 == doctest::Approx(5.0 / 9).epsilon(1e-14));
  CHECK(d[3].d1 == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(d[4].d1 == doctest::Approx(3.0 / 11).epsilon(1e-14));
  for (const Discounts& o : d) {
    CHECK(o.d2 == 0.99);
    CHECK(o.d3 == 0.75);
  }

  // Interpolated modified Kneser-Ney values computed independently with
  // exact rational arithmetic over this corpus.
  struct Query {
    std::vector<int> h;
    int next;
    Scalar p;
  };
  const Query table[] = {
      {{5, 5, 5, 5}, 2, 0.955365639563125},
      {{5, 5, 5, 2}, 3, 0.95193017466625},
      {{5, 5, 2, 3}, 2, 0.8314243125},
      {{5, 2, 3, 2}, 3, 0.9564037},
      {{2, 3, 2, 3}, 4, 0.47775757575757577},
      {{2, 3, 2, 3}, 1, 0.47949158249158247},
      {{3, 2, 3, 4}, 1, 0.9774713804713805},
      {{2, 3, 2, 3}, 2, 0.03403703703703704},
      {{3, 4, 1, 2}, 3, 0.60367},
      {{}, 2, 0.25655555555555554},
      {{}, 0, 0.08822222222222222},
      {{3}, 2, 0.29494444444444445},
      {{3}, 0, 0.04411111111111111},
      {{4}, 1, 0.6282777777777778},
      {{2, 3}, 4, 0.2961111111111111},
      {{5, 5, 5, 5}, 0, 0.00529661966625},
  };
  for (const Query& q : table) {
    CAPTURE(q.next);
    CHECK(m.prob(q.h, q.next) == doctest::Approx(q.p).epsilon(1e-12));
  }
}

TEST_CASE("every observed history's distribution sums to one") {
  Corpus c = synth_corpus(SynthMode::None, 60, 25, 6, 5);
  Vocab v = Vocab::build(c, 70);
  REQUIRE(v.size() <= 100);
  KnModel m = KnModel::train(encode_corpus(c, v), v.size());
  check_normalized(m);
}

TEST_CASE("cross-turn counting also normalizes everywhere") {
  Corpus c = synth_corpus(SynthMode::CrossEcho, 40, 12, 5, 6);
  Vocab v = Vocab::build(c, 50);
  NgramConfig cfg;
  cfg.cross_turn_history = true;
  KnModel m = KnModel::train(encode_corpus(c, v), v.size(), cfg);
  CHECK(m.cross_turn_history());
  check_normalized(m);
}

TEST_CASE("unseen histories collapse to their longest seen suffix") {
  Corpus c;
  c.push_back(dialog_of("sw0001", {{"a", "b", "a", "b", "c"},
                                   {"a", "b", "a", "b"}}));
  Vocab v = Vocab::build(c, 10);
  EncodedCorpus e = encode_corpus(c, v);
  KnModel m = KnModel::train(e, v.size());
  CHECK(m.prob({3, 4, 1, 2}, 3) == m.prob({2}, 3));
  CHECK(m.prob({4, 1, 2}, 3) == m.prob({2}, 3));
  CHECK(m.prob({2}, 3) != m.prob({}, 3));
  CHECK(m.prob({0, 0, 0, 0}, 4) == m.prob({0}, 4));
}

TEST_CASE("an empty corpus scores everything uniformly") {
  EncodedCorpus empty;
  KnModel m = KnModel::train(empty, 10);
  CHECK(m.prob({}, 3) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(m.prob({2, 5}, 7) == doctest::Approx(0.1).epsilon(1e-15));

  Corpus test = synth_corpus(SynthMode::None, 10, 3, 4, 2);
  Vocab tv = Vocab::build(test, 20);
  KnModel uniform = KnModel::train(empty, tv.size());
  const Scalar ppl = ngram_perplexity(uniform, encode_corpus(test, tv), 1);
  CHECK(ppl == doctest::Approx(tv.size()).epsilon(1e-12));
}

TEST_CASE("a memorized sentence is scored with high confidence") {
  const std::vector<std::string> sent = {"the", "cat", "sat", "down", "again"};
  Corpus c;
  c.push_back(dialog_of("sw0001", {sent, sent, sent, sent}));
  Vocab v = Vocab::build(c, 10);
  EncodedCorpus e = encode_corpus(c, v);
  KnModel m = KnModel::train(e, v.size());
  CHECK(ngram_perplexity(m, e, 1) < 2);
}

TEST_CASE("perplexity matches the per-window scores") {
  Corpus c = synth_corpus(SynthMode::None, 20, 6, 4, 9);
  Vocab v = Vocab::build(c, 30);
  EncodedCorpus e = encode_corpus(c, v);
  KnModel m = KnModel::train(e, v.size());
  Scalar nll = 0;
  int count = 0;
  for (const WindowRef& w : make_windows(e, 2)) {
    const auto scores = m.score_window(e.dialogs[w.dialog], w);
    CHECK(scores.size() ==
          e.dialogs[w.dialog].turns[w.target].tokens.size() + 1);
    for (Scalar lp : scores) {
      nll -= lp;
      ++count;
    }
  }
  CHECK(ngram_perplexity(m, e, 2) ==
        doctest::Approx(std::exp(nll / count)).epsilon(1e-12));
  CHECK_THROWS_AS(ngram_perplexity(m, e, 9), DataError);
}

TEST_CASE("context turns matter only with cross-turn history") {
  Corpus c = synth_corpus(SynthMode::CrossEcho, 30, 30, 6, 12);
  Vocab v = Vocab::build(c, 40);
  EncodedCorpus e = encode_corpus(c, v);

  NgramConfig cross;
  cross.cross_turn_history = true;
  KnModel with = KnModel::train(e, v.size(), cross);
  KnModel without = KnModel::train(e, v.size());

  EncodedDialog d = e.dialogs[0];
  const WindowRef w{0, 0, 2};
  const auto base_with = with.score_window(d, w);
  const auto base_without = without.score_window(d, w);
  d.turns[1].tokens.back() = (d.turns[1].tokens.back() + 1) % v.size();
  CHECK(with.score_window(d, w) != base_with);
  CHECK(without.score_window(d, w) == base_without);

  // Echoed turns are nearly memorized when history crosses the boundary.
  CHECK(ngram_perplexity(with, e, 2) < 0.7 * ngram_perplexity(without, e, 2));
}

namespace {

// Dialogs over a 20-state token chain: each token follows its
// predecessor three times out of four, so bigram statistics transfer
// to unseen dialogs.
Corpus chain_corpus(int dialogs, std::uint64_t seed, int first_index) {
  Corpus c;
  for (int i = 0; i < dialogs; ++i) {
    Rng rng(seed * 1000003 + first_index + i);
    int cur = static_cast<int>(rng.below(20));
    std::vector<std::vector<std::string>> turns(4);
    for (auto& toks : turns) {
      for (int j = 0; j < 6; ++j) {
        cur = rng.below(4) != 0 ? (cur + 1) % 20
                                : static_cast<int>(rng.below(20));
        toks.push_back("w" + std::to_string(cur));
      }
    }
    c.push_back(dialog_of("sw" + std::to_string(1000 + first_index + i),
                          turns));
  }
  return c;
}

}  // namespace

TEST_CASE("more training data improves held-out perplexity") {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Corpus big_c = chain_corpus(160, seed, 0);
    Vocab v = Vocab::build(big_c, 30);
    EncodedCorpus big = encode_corpus(big_c, v);
    EncodedCorpus mid = big;
    mid.dialogs.resize(40);
    EncodedCorpus small = big;
    small.dialogs.resize(10);
    EncodedCorpus test = encode_corpus(chain_corpus(30, seed, 50000), v);

    const Scalar p_small =
        ngram_perplexity(KnModel::train(small, v.size()), test, 1);
    const Scalar p_mid =
        ngram_perplexity(KnModel::train(mid, v.size()), test, 1);
    const Scalar p_big =
        ngram_perplexity(KnModel::train(big, v.size()), test, 1);
    if (p_mid <= p_small + 1e-9 && p_big <= p_mid + 1e-9) ++improved;
  }
  CHECK(improved >= 4);
}

TEST_CASE("arpa files round-trip queries and bytes") {
  Corpus c = synth_corpus(SynthMode::SelfEcho, 25, 15, 6, 21);
  Vocab v = Vocab::build(c, 30);
  EncodedCorpus e = encode_corpus(c, v);
  KnModel m = KnModel::train(e, v.size());

  TempFile f1("model1.arpa"), f2("model2.arpa"), f3("model3.arpa");
  m.write_arpa(f1.path, v);
  m.write_arpa(f2.path, v);
  CHECK(slurp(f1.path) == slurp(f2.path));

  KnModel back = KnModel::read_arpa(f1.path, v);
  CHECK(back.order() == m.order());
  CHECK(back.vocab_size() == m.vocab_size());
  CHECK(back.discounts().empty());
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<int> h;
    const int len = static_cast<int>(rng.below(5));
    for (int j = 0; j < len; ++j) {
      h.push_back(static_cast<int>(rng.below(v.size() + 1)));
    }
    const int next = static_cast<int>(rng.below(v.size()));
    CHECK(m.logprob(h, next) == back.logprob(h, next));
  }
  back.write_arpa(f3.path, v);
  CHECK(slurp(f1.path) == slurp(f3.path));
}

TEST_CASE("malformed arpa files are rejected with line numbers") {
  auto parse = [](const std::string& text) -> std::string {
    TempFile f("bad.arpa");
    std::ofstream out(f.path, std::ios::trunc);
    out << text;
    out.close();
    Corpus c;
    c.push_back(dialog_of("sw0001", {{"a"}}));
    Vocab v = Vocab::build(c, 5);
    try {
      KnModel::read_arpa(f.path, v);
    } catch (const DataError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(parse("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\ta\n\\end\\\n") == "");
  CHECK(parse("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\ta\n")
            .find("missing") != std::string::npos);
  CHECK(parse("\\data\\\nngram 1=2\n\n\\1-grams:\n-1\ta\n\\end\\\n")
            .find("declares") != std::string::npos);
  CHECK(parse("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\tzzz\n\\end\\\n")
            .find("unknown word") != std::string::npos);
  CHECK(parse("\\data\\\nngram 1=1\n\n\\1-grams:\nxx\ta\n\\end\\\n")
            .find("line 5") != std::string::npos);
  CHECK(parse("-1\ta\n\\end\\\n").find("outside") != std::string::npos);
  CHECK(parse("\\data\\\nngram 1=1\n\n\\2-grams:\n-1\ta b\n\\end\\\n")
            .find("section") != std::string::npos);
}

TEST_CASE("vocabularies that cannot be written are rejected") {
  Corpus c;
  c.push_back(dialog_of("sw0001", {{"ok", "<s>"}}));
  Vocab v = Vocab::build(c, 5);
  EncodedCorpus e = encode_corpus(c, v);
  KnModel m = KnModel::train(e, v.size());
  TempFile f("reserved.arpa");
  CHECK_THROWS_AS(m.write_arpa(f.path, v), DataError);
}

TEST_CASE("training validates its configuration") {
  EncodedCorpus empty;
  NgramConfig cfg;
  cfg.order = 0;
  CHECK_THROWS_AS(train_counts(empty, 10, cfg), ConfigError);
  CHECK_THROWS_AS(train_counts(empty, 1), ConfigError);
  CountTrie t = train_counts(empty, 10);
  CHECK_THROWS_AS(KnModel::build(t, {}), ConfigError);
  KnModel m = KnModel::train(empty, 10);
  CHECK_THROWS_AS(m.prob({}, 10), DataError);
  CHECK_THROWS_AS(m.prob({}, -1), DataError);
  CHECK_THROWS_AS(m.prob({12}, 3), DataError);
}
