#ifndef DCLM_EVALUATOR_HPP
#define DCLM_EVALUATOR_HPP

#include "dclm/corpus.hpp"
#include "dclm/models.hpp"
#include "dclm/ngram.hpp"
#include "dclm/tape.hpp"
#include "dclm/types.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dclm {

// Anything that can assign a log-probability to each token of a window's
// target turn. k() is the window span the scorer was built for; 0 means
// any span works.
class WindowScorer {
 public:
  virtual ~WindowScorer() = default;
  virtual std::vector<TokenScore> score(const EncodedDialog& dialog,
                                        const WindowRef& w) = 0;
  virtual std::string id() const = 0;
  virtual std::string variant() const = 0;
  virtual int k() const = 0;
};

class NeuralScorer : public WindowScorer {
 public:
  explicit NeuralScorer(DialogModel& model, std::string id = "");
  std::vector<TokenScore> score(const EncodedDialog& dialog,
                                const WindowRef& w) override;
  std::string id() const override { return id_; }
  std::string variant() const override;
  int k() const override { return model_.info().k; }

 private:
  DialogModel& model_;
  Tape tape_;
  std::string id_;
};

class NgramScorer : public WindowScorer {
 public:
  explicit NgramScorer(const KnModel& model, std::string id = "");
  std::vector<TokenScore> score(const EncodedDialog& dialog,
                                const WindowRef& w) override;
  std::string id() const override { return id_; }
  std::string variant() const override;
  int k() const override { return 0; }

 private:
  const KnModel& model_;
  std::string id_;
};

struct TagStats {
  std::int64_t tokens = 0;
  Scalar nll = 0;

  Scalar ppl() const { return std::exp(nll / static_cast<Scalar>(tokens)); }
};

// Last-turn scores aggregated overall and under two partitions of the
// same tokens: by the token's part-of-speech tag and by the dialog-act
// tag of the utterance containing it. The end-of-turn marker counts
// toward the totals under the "<eot>" sentinel tag in both partitions.
struct EvalReport {
  std::string model_id;
  std::string variant;
  int k = 0;
  TagStats overall;
  std::map<std::string, TagStats> per_pos;
  std::map<std::string, TagStats> per_da;
};

// Scores every complete k-turn window of the corpus in its stored order.
// Throws ConfigError when the scorer was built for a different k and
// DataError when the corpus has no complete windows.
EvalReport evaluate(WindowScorer& scorer, const EncodedCorpus& corpus,
                    const Vocab& vocab, int k);

// Percent perplexity change of `report` against `baseline`, per tag and
// overall: 100*(ppl - baseline_ppl)/baseline_ppl, negative = improvement.
// Both reports must partition the same test set (identical token counts).
struct RelativeChange {
  Scalar overall = 0;
  std::map<std::string, Scalar> per_pos;
  std::map<std::string, Scalar> per_da;
};
RelativeChange relative_change(const EvalReport& report,
                               const EvalReport& baseline);

// Percent gain of a contextual model over the single-turn baseline:
// 100*(single - contextual)/single. Inputs must be positive.
Scalar headline_gain(Scalar contextual_ppl, Scalar single_turn_ppl);

// Single JSON document carrying every field of the report.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

// Terminal summary: overall perplexity plus the top `top_tags` most
// frequent tags of each partition. Sentinel tags ("<eot>") stay in the
// totals but are not listed.
std::string render_report(const EvalReport& report, int top_tags = 5);

// Side-by-side relative-change table against a baseline report.
std::string render_relative(const EvalReport& report,
                            const EvalReport& baseline, int top_tags = 5);

}  // namespace dclm

#endif  // DCLM_EVALUATOR_HPP
