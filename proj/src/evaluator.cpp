#include "dclm/evaluator.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <utility>
#include <vector>

namespace dclm {

using nlohmann::json;

NeuralScorer::NeuralScorer(DialogModel& model, std::string id)
    : model_(model), id_(std::move(id)) {
  if (id_.empty()) {
    id_ = std::string(variant_name(model_.info().variant)) + "-k" +
          std::to_string(model_.info().k);
  }
}

std::vector<TokenScore> NeuralScorer::score(const EncodedDialog& dialog,
                                            const WindowRef& w) {
  tape_.reset();
  return model_.run_window(tape_, dialog, w, false, nullptr, true).scores;
}

std::string NeuralScorer::variant() const {
  return variant_name(model_.info().variant);
}

NgramScorer::NgramScorer(const KnModel& model, std::string id)
    : model_(model), id_(std::move(id)) {
  if (id_.empty()) id_ = "kn" + std::to_string(model_.order());
}

std::vector<TokenScore> NgramScorer::score(const EncodedDialog& dialog,
                                           const WindowRef& w) {
  const std::vector<Scalar> lps = model_.score_window(dialog, w);
  const EncodedTurn& turn = dialog.turns[w.target];
  const int len = static_cast<int>(turn.tokens.size());
  std::vector<TokenScore> out(lps.size());
  for (std::size_t i = 0; i < lps.size(); ++i) {
    TokenScore& s = out[i];
    s.logprob = lps[i];
    if (static_cast<int>(i) < len) {
      s.token = turn.tokens[i];
      s.pos = turn.pos[i];
      s.da = turn.da_per_token[i];
    } else {
      s.token = kEotId;
      s.pos = kTagEotId;
      s.da = kTagEotId;
    }
  }
  return out;
}

std::string NgramScorer::variant() const {
  return "kn" + std::to_string(model_.order());
}

EvalReport evaluate(WindowScorer& scorer, const EncodedCorpus& corpus,
                    const Vocab& vocab, int k) {
  if (scorer.k() != 0 && scorer.k() != k) {
    throw ConfigError("scorer " + scorer.id() + " was built for k = " +
                      std::to_string(scorer.k()) +
                      " but evaluation requested k = " + std::to_string(k));
  }
  const std::vector<WindowRef> windows = make_windows(corpus, k);
  if (windows.empty()) {
    throw DataError("corpus has no complete windows of " + std::to_string(k) +
                    " turns");
  }

  std::vector<TagStats> by_pos(vocab.pos_size());
  std::vector<TagStats> by_da(vocab.da_size());
  EvalReport r;
  r.model_id = scorer.id();
  r.variant = scorer.variant();
  r.k = k;
  for (const WindowRef& w : windows) {
    for (const TokenScore& s : scorer.score(corpus.dialogs[w.dialog], w)) {
      if (s.pos < 0 || s.pos >= static_cast<int>(by_pos.size()) || s.da < 0 ||
          s.da >= static_cast<int>(by_da.size())) {
        throw DataError("token score carries a tag id outside the vocabulary");
      }
      const Scalar nll = -s.logprob;
      r.overall.tokens += 1;
      r.overall.nll += nll;
      by_pos[s.pos].tokens += 1;
      by_pos[s.pos].nll += nll;
      by_da[s.da].tokens += 1;
      by_da[s.da].nll += nll;
    }
  }
  for (std::size_t i = 0; i < by_pos.size(); ++i) {
    if (by_pos[i].tokens > 0) r.per_pos[vocab.pos_tag(static_cast<int>(i))] = by_pos[i];
  }
  for (std::size_t i = 0; i < by_da.size(); ++i) {
    if (by_da[i].tokens > 0) r.per_da[vocab.da_tag(static_cast<int>(i))] = by_da[i];
  }
  return r;
}

namespace {

void check_same_partition(const std::map<std::string, TagStats>& a,
                          const std::map<std::string, TagStats>& b,
                          const std::string& which) {
  if (a.size() != b.size()) {
    throw DataError("reports do not partition the same test set: " + which +
                    " tag sets differ");
  }
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.tokens != ib->second.tokens) {
      throw DataError("reports do not partition the same test set: " + which +
                      " tag " + ia->first + " differs");
    }
  }
}

Scalar percent_change(const TagStats& a, const TagStats& b) {
  return 100 * (a.ppl() - b.ppl()) / b.ppl();
}

struct TagRow {
  const std::string* tag;
  const TagStats* stats;
};

// Most frequent first, sentinels dropped, ties by tag name.
std::vector<TagRow> top_tags(const std::map<std::string, TagStats>& part,
                             int limit) {
  std::vector<TagRow> rows;
  for (const auto& [tag, stats] : part) {
    if (tag == "<eot>") continue;
    rows.push_back({&tag, &stats});
  }
  std::sort(rows.begin(), rows.end(), [](const TagRow& x, const TagRow& y) {
    if (x.stats->tokens != y.stats->tokens) {
      return x.stats->tokens > y.stats->tokens;
    }
    return *x.tag < *y.tag;
  });
  if (static_cast<int>(rows.size()) > limit) rows.resize(limit);
  return rows;
}

json stats_to_json(const TagStats& s) {
  return {{"tokens", s.tokens}, {"nll", s.nll}, {"perplexity", s.ppl()}};
}

TagStats stats_from_json(const json& j) {
  TagStats s;
  s.tokens = j.at("tokens").get<std::int64_t>();
  s.nll = j.at("nll").get<Scalar>();
  return s;
}

}  // namespace

RelativeChange relative_change(const EvalReport& report,
                               const EvalReport& baseline) {
  if (report.overall.tokens != baseline.overall.tokens) {
    throw DataError(
        "reports do not partition the same test set: token totals differ");
  }
  check_same_partition(report.per_pos, baseline.per_pos, "POS");
  check_same_partition(report.per_da, baseline.per_da, "DA");

  RelativeChange out;
  out.overall = percent_change(report.overall, baseline.overall);
  for (const auto& [tag, stats] : report.per_pos) {
    out.per_pos[tag] = percent_change(stats, baseline.per_pos.at(tag));
  }
  for (const auto& [tag, stats] : report.per_da) {
    out.per_da[tag] = percent_change(stats, baseline.per_da.at(tag));
  }
  return out;
}

Scalar headline_gain(Scalar contextual_ppl, Scalar single_turn_ppl) {
  if (!(contextual_ppl > 0) || !(single_turn_ppl > 0)) {
    throw ConfigError("headline gain needs positive perplexities");
  }
  return 100 * (single_turn_ppl - contextual_ppl) / single_turn_ppl;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["model_id"] = report.model_id;
  j["variant"] = report.variant;
  j["k"] = report.k;
  j["overall"] = stats_to_json(report.overall);
  j["per_pos"] = json::object();
  for (const auto& [tag, stats] : report.per_pos) {
    j["per_pos"][tag] = stats_to_json(stats);
  }
  j["per_da"] = json::object();
  for (const auto& [tag, stats] : report.per_da) {
    j["per_da"][tag] = stats_to_json(stats);
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.k = j.at("k").get<int>();
    r.overall = stats_from_json(j.at("overall"));
    for (const auto& [tag, stats] : j.at("per_pos").items()) {
      r.per_pos[tag] = stats_from_json(stats);
    }
    for (const auto& [tag, stats] : j.at("per_da").items()) {
      r.per_da[tag] = stats_from_json(stats);
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string render_report(const EvalReport& report, int top_tags_n) {
  std::ostringstream os;
  os << std::fixed;
  os << "model " << report.model_id << " (" << report.variant
     << ", k=" << report.k << ")\n";
  os << "perplexity " << std::setprecision(2) << report.overall.ppl()
     << " over " << report.overall.tokens << " tokens\n";
  const auto section = [&](const char* name,
                           const std::map<std::string, TagStats>& part) {
    os << '\n' << name << std::setw(14) << "tokens" << std::setw(12) << "ppl"
       << '\n';
    for (const TagRow& row : top_tags(part, top_tags_n)) {
      os << "  " << std::left << std::setw(12) << *row.tag << std::right
         << std::setw(8) << row.stats->tokens << std::setw(12)
         << std::setprecision(2) << row.stats->ppl() << '\n';
    }
  };
  section("POS tag", report.per_pos);
  section("DA tag", report.per_da);
  return os.str();
}

std::string render_relative(const EvalReport& report,
                            const EvalReport& baseline, int top_tags_n) {
  const RelativeChange rc = relative_change(report, baseline);
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << report.model_id << " vs " << baseline.model_id << "\n";
  os << "perplexity " << report.overall.ppl() << " vs "
     << baseline.overall.ppl() << " (" << std::showpos << rc.overall
     << std::noshowpos << "%)\n";
  const auto section = [&](const char* name,
                           const std::map<std::string, TagStats>& part,
                           const std::map<std::string, Scalar>& changes) {
    os << '\n' << name << std::setw(14) << "tokens" << std::setw(12)
       << "change" << '\n';
    for (const TagRow& row : top_tags(part, top_tags_n)) {
      os << "  " << std::left << std::setw(12) << *row.tag << std::right
         << std::setw(8) << row.stats->tokens << std::setw(11) << std::showpos
         << changes.at(*row.tag) << std::noshowpos << "%\n";
    }
  };
  section("POS tag", baseline.per_pos, rc.per_pos);
  section("DA tag", baseline.per_da, rc.per_da);
  return os.str();
}

}  // namespace dclm
