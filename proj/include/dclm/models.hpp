#ifndef DCLM_MODELS_HPP
#define DCLM_MODELS_HPP

#include "dclm/corpus.hpp"
#include "dclm/gradcheck.hpp"
#include "dclm/lstm.hpp"
#include "dclm/params.hpp"
#include "dclm/tape.hpp"
#include "dclm/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dclm {

// Seven wirings of the same LSTM language model. They differ only in the
// per-step context vector injected next to each word embedding and in
// the target turn's initial recurrent state.
enum class ModelVariant {
  SingleTurn,  // context ignored
  BoWContext,  // context = mean of context-turn word embeddings
  DRNNLM,      // recurrent state carried across turns, no context vector
  CCDCLM,      // context = previous turn's final hidden, initial state 0
  IDCLM,       // initial state from turn k-2, context from turn k-1
  ESIDCLM,     // IDCLM plus an external turn-level recurrence
  DACLM,       // context from a recurrence over true dialog-act tags
};

inline constexpr int kVariantCount = 7;

const char* variant_name(ModelVariant v);
ModelVariant variant_from_string(const std::string& name);

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 0;
  int hidden_dim = 0;
  int external_state_dim = 0;  // ESIDCLM only
  int da_vocab_size = 0;       // DACLM only
  int da_embed_dim = 0;        // DACLM only; also the DA recurrence width
  Scalar keep_prob = 1.0;
  Scalar l2_lambda = 0.0;

  void validate(ModelVariant variant) const;
  // Width of the context vector this variant injects (0 = none).
  int context_dim(ModelVariant variant) const;
};

// Everything a checkpoint needs to rebuild the wiring.
struct ModelInfo {
  ModelVariant variant = ModelVariant::SingleTurn;
  ModelConfig config;
  int k = 1;  // window size in turns
  std::uint64_t vocab_fingerprint = 0;
};

struct LstmStateValue {
  Matrix hidden;
  Matrix cell;
};

// Detached states a caller could stream into a following window.
struct ContextCarry {
  std::optional<LstmStateValue> prev_turn_last_state;
  std::optional<LstmStateValue> prev_prev_turn_last_state;
  std::optional<Matrix> external_state;
};

struct TokenScore {
  int token = 0;
  int pos = 0;
  int da = 0;
  Scalar logprob = 0;  // natural log
};

struct ForwardResult {
  Var loss;             // on-tape sum of target-turn token losses
  int token_count = 0;  // scored tokens, end-of-turn marker included
  std::vector<TokenScore> scores;  // filled when collect_scores
  ContextCarry carry;
};

// Fresh parameters for a variant: embeddings, the main cell sized for
// [embedding; context] input, the output projection, plus the external
// recurrence (ESIDCLM) or dialog-act embeddings and recurrence (DACLM).
ParameterSet build_params(const ModelInfo& info, Rng& rng);

class DialogModel {
 public:
  static DialogModel create(const ModelInfo& info, std::uint64_t seed);
  static DialogModel load(const std::string& path);
  void save(const std::string& path) const;

  const ModelInfo& info() const { return info_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Runs the window's context turns then scores the target turn. The
  // returned loss Var stays on the tape so callers can extend it (L2)
  // and run backward. In train mode, rng drives the dropout masks.
  // score_context_turns additionally scores context turns on variants
  // that run them (an off-by-default training alternative).
  ForwardResult run_window(Tape& tape, const EncodedDialog& dialog,
                           const WindowRef& w, bool train_mode, Rng* rng,
                           bool collect_scores,
                           bool score_context_turns = false);

 private:
  DialogModel(ModelInfo info, ParameterSet params);

  ModelInfo info_;
  ParameterSet params_;
};

// Finite-difference check of one variant: random parameters and a random
// short dialog (turns of 3..6 tokens), two windows, every entry of every
// parameter perturbed by +/-eps.
GradCheckResult check_variant_gradients(ModelVariant variant, int embed_dim,
                                        int hidden_dim, int vocab_size, int k,
                                        std::uint64_t seed, Scalar eps = 1e-4);

}  // namespace dclm

#endif  // DCLM_MODELS_HPP
