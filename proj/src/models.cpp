#include "dclm/models.hpp"

#include "dclm/optim.hpp"

#include <cstring>
#include <sstream>

namespace dclm {

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::SingleTurn: return "single-turn";
    case ModelVariant::BoWContext: return "bow-context";
    case ModelVariant::DRNNLM: return "drnnlm";
    case ModelVariant::CCDCLM: return "ccdclm";
    case ModelVariant::IDCLM: return "idclm";
    case ModelVariant::ESIDCLM: return "esidclm";
    case ModelVariant::DACLM: return "daclm";
  }
  return "?";
}

ModelVariant variant_from_string(const std::string& name) {
  for (int i = 0; i < kVariantCount; ++i) {
    const auto v = static_cast<ModelVariant>(i);
    if (name == variant_name(v)) return v;
  }
  throw ConfigError(
      "unknown model variant: " + name +
      " (expected one of single-turn, bow-context, drnnlm, ccdclm, idclm, "
      "esidclm, daclm)");
}

void ModelConfig::validate(ModelVariant variant) const {
  if (vocab_size < 2) {
    throw ConfigError("model config: vocab_size must cover the reserved ids");
  }
  if (embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("model config: embed_dim and hidden_dim must be positive");
  }
  if (keep_prob <= 0 || keep_prob > 1) {
    throw ConfigError("model config: keep_prob must be in (0, 1]");
  }
  if (l2_lambda < 0) {
    throw ConfigError("model config: l2_lambda must be non-negative");
  }
  if (variant == ModelVariant::ESIDCLM && external_state_dim < 1) {
    throw ConfigError("model config: esidclm needs external_state_dim");
  }
  if (variant == ModelVariant::DACLM &&
      (da_vocab_size < 2 || da_embed_dim < 1)) {
    throw ConfigError(
        "model config: daclm needs da_vocab_size and da_embed_dim");
  }
}

int ModelConfig::context_dim(ModelVariant variant) const {
  switch (variant) {
    case ModelVariant::SingleTurn:
    case ModelVariant::DRNNLM:
      return 0;
    case ModelVariant::BoWContext:
      return embed_dim;
    case ModelVariant::CCDCLM:
    case ModelVariant::IDCLM:
      return hidden_dim;
    case ModelVariant::ESIDCLM:
      return external_state_dim;
    case ModelVariant::DACLM:
      return da_embed_dim;
  }
  return 0;
}

ParameterSet build_params(const ModelInfo& info, Rng& rng) {
  info.config.validate(info.variant);
  const ModelConfig& c = info.config;
  const int in_dim = c.embed_dim + c.context_dim(info.variant);

  ParameterSet p;
  p.add("emb.w", Tensor::from_matrix(
                     uniform_init(c.vocab_size, c.embed_dim, -0.1, 0.1, rng)));
  init_lstm_params(p, "lstm", in_dim, c.hidden_dim, rng);
  p.add("out.w", Tensor::from_matrix(uniform_init(c.vocab_size, c.hidden_dim,
                                                  -0.08, 0.08, rng)));
  p.add("out.b", Tensor::zeros_vector(c.vocab_size));
  if (info.variant == ModelVariant::ESIDCLM) {
    init_lstm_params(p, "es", c.hidden_dim, c.external_state_dim, rng);
  }
  if (info.variant == ModelVariant::DACLM) {
    p.add("da_emb.w",
          Tensor::from_matrix(uniform_init(c.da_vocab_size, c.da_embed_dim,
                                           -0.1, 0.1, rng)));
    init_lstm_params(p, "da", c.da_embed_dim, c.da_embed_dim, rng);
  }
  return p;
}

namespace {

constexpr const char* kMetaName = "meta.config";
constexpr Scalar kMetaVersion = 1;

Tensor encode_meta(const ModelInfo& info) {
  Tensor t = Tensor::zeros_vector(13);
  t.value(0, 0) = kMetaVersion;
  t.value(1, 0) = static_cast<Scalar>(static_cast<int>(info.variant));
  t.value(2, 0) = static_cast<Scalar>(info.k);
  t.value(3, 0) = static_cast<Scalar>(info.config.vocab_size);
  t.value(4, 0) = static_cast<Scalar>(info.config.embed_dim);
  t.value(5, 0) = static_cast<Scalar>(info.config.hidden_dim);
  t.value(6, 0) = static_cast<Scalar>(info.config.external_state_dim);
  t.value(7, 0) = static_cast<Scalar>(info.config.da_vocab_size);
  t.value(8, 0) = static_cast<Scalar>(info.config.da_embed_dim);
  t.value(9, 0) = info.config.keep_prob;
  t.value(10, 0) = info.config.l2_lambda;
  t.value(11, 0) = static_cast<Scalar>(
      static_cast<std::uint32_t>(info.vocab_fingerprint & 0xffffffffULL));
  t.value(12, 0) =
      static_cast<Scalar>(static_cast<std::uint32_t>(info.vocab_fingerprint >> 32));
  return t;
}

ModelInfo decode_meta(const Tensor& t, const std::string& path) {
  if (t.size() != 13 || t.value(0, 0) != kMetaVersion) {
    throw DataError("model " + path + ": unsupported metadata layout");
  }
  const int vid = static_cast<int>(t.value(1, 0));
  if (vid < 0 || vid >= kVariantCount) {
    throw DataError("model " + path + ": unknown variant id " +
                    std::to_string(vid));
  }
  ModelInfo info;
  info.variant = static_cast<ModelVariant>(vid);
  info.k = static_cast<int>(t.value(2, 0));
  info.config.vocab_size = static_cast<int>(t.value(3, 0));
  info.config.embed_dim = static_cast<int>(t.value(4, 0));
  info.config.hidden_dim = static_cast<int>(t.value(5, 0));
  info.config.external_state_dim = static_cast<int>(t.value(6, 0));
  info.config.da_vocab_size = static_cast<int>(t.value(7, 0));
  info.config.da_embed_dim = static_cast<int>(t.value(8, 0));
  info.config.keep_prob = t.value(9, 0);
  info.config.l2_lambda = t.value(10, 0);
  info.vocab_fingerprint =
      static_cast<std::uint64_t>(t.value(11, 0)) |
      (static_cast<std::uint64_t>(t.value(12, 0)) << 32);
  if (info.k < 1) {
    throw DataError("model " + path + ": window size must be at least 1");
  }
  info.config.validate(info.variant);
  return info;
}

// Everything one window run needs in one place.
struct RunCtx {
  Tape& tape;
  const ModelConfig& cfg;
  int cdim;
  bool train;
  Rng* rng;
  Var emb;
  LstmVars cell;
  Var out_w;
  Var out_b;
};

Var masked(RunCtx& rc, Var x) {
  if (!rc.train || rc.cfg.keep_prob >= 1) return x;
  const int rows = rc.tape.rows(x);
  return rc.tape.mul(
      x, rc.tape.constant(dropout_mask(rows, 1, rc.cfg.keep_prob, *rc.rng)));
}

int checked_token(const RunCtx& rc, int token) {
  if (token < 0 || token >= rc.cfg.vocab_size) {
    std::ostringstream os;
    os << "window contains token id " << token
       << " outside the vocabulary of size " << rc.cfg.vocab_size;
    throw DataError(os.str());
  }
  return token;
}

Var embed_token(RunCtx& rc, int token) {
  return rc.tape.lookup(rc.emb, checked_token(rc, token));
}

struct TurnRun {
  LstmVarState final_state;
  std::optional<Var> loss;
  int tokens = 0;
};

// Feeds [<eot>, w_1..w_T] through the cell from `init`, with `ctx`
// concatenated to every step's embedding when the variant injects one.
// When `score` is set, each step also predicts the next token
// (w_1..w_T, <eot>) through the output projection.
TurnRun run_turn(RunCtx& rc, const EncodedTurn& turn, LstmVarState init,
                 std::optional<Var> ctx, bool score,
                 std::vector<TokenScore>* scores) {
  const int t_len = static_cast<int>(turn.tokens.size());
  TurnRun out;
  out.final_state = init;
  for (int t = 0; t <= t_len; ++t) {
    const int input = t == 0 ? kEotId : turn.tokens[t - 1];
    Var x = embed_token(rc, input);
    if (ctx.has_value()) x = rc.tape.concat(x, *ctx);
    x = masked(rc, x);
    out.final_state = lstm_step(rc.tape, rc.cell, x, out.final_state);
    if (!score) continue;

    const int target = checked_token(rc, t < t_len ? turn.tokens[t] : kEotId);
    Var h = masked(rc, out.final_state.h);
    Var logits = rc.tape.add(rc.tape.matmul(rc.out_w, h), rc.out_b);
    Var nll = rc.tape.softmax_cross_entropy(logits, target);
    out.loss = out.loss.has_value() ? rc.tape.add(*out.loss, nll) : nll;
    ++out.tokens;
    if (scores) {
      TokenScore s;
      s.token = target;
      s.pos = t < t_len ? turn.pos[t] : kTagEotId;
      s.da = t < t_len ? turn.da_per_token[t] : kTagEotId;
      s.logprob = -rc.tape.value(nll)(0, 0);
      scores->push_back(s);
    }
  }
  return out;
}

LstmStateValue detach(const Tape& tape, const LstmVarState& s) {
  return LstmStateValue{tape.value(s.h), tape.value(s.c)};
}

}  // namespace

DialogModel::DialogModel(ModelInfo info, ParameterSet params)
    : info_(std::move(info)), params_(std::move(params)) {}

DialogModel DialogModel::create(const ModelInfo& info, std::uint64_t seed) {
  if (info.k < 1) {
    throw ConfigError("model: window size k must be at least 1");
  }
  Rng rng(seed);
  return DialogModel(info, build_params(info, rng));
}

void DialogModel::save(const std::string& path) const {
  ParameterSet with_meta = params_;
  with_meta.add(kMetaName, encode_meta(info_));
  save_checkpoint(path, with_meta);
}

DialogModel DialogModel::load(const std::string& path) {
  ParameterSet raw = load_checkpoint(path);
  if (!raw.has(kMetaName)) {
    throw DataError("model " + path + ": checkpoint has no model metadata");
  }
  ModelInfo info = decode_meta(raw.get(kMetaName), path);

  Rng dummy(0);
  ParameterSet params = build_params(info, dummy);
  for (const auto& name : params.names()) {
    if (!raw.has(name)) {
      throw DataError("model " + path + ": checkpoint lacks parameter " + name);
    }
    Tensor& dst = params.get(name);
    Tensor& src = raw.get(name);
    if (src.shape != dst.shape) {
      throw DataError("model " + path + ": parameter " + name +
                      " has the wrong shape for this variant and config");
    }
    dst.value = std::move(src.value);
  }
  if (raw.size() != params.size() + 1) {
    throw DataError("model " + path +
                    ": checkpoint carries unexpected extra parameters");
  }
  return DialogModel(std::move(info), std::move(params));
}

ForwardResult DialogModel::run_window(Tape& tape, const EncodedDialog& dialog,
                                      const WindowRef& w, bool train_mode,
                                      Rng* rng, bool collect_scores,
                                      bool score_context_turns) {
  const int n_turns = static_cast<int>(dialog.turns.size());
  if (w.target < 0 || w.target >= n_turns || w.context_begin < 0 ||
      w.context_begin > w.target) {
    throw ConfigError("window does not fit the dialog");
  }
  const int k = w.target - w.context_begin + 1;
  if (k != info_.k) {
    std::ostringstream os;
    os << "window spans " << k << " turns but the model was built for k = "
       << info_.k;
    throw ConfigError(os.str());
  }
  if (train_mode && info_.config.keep_prob < 1 && rng == nullptr) {
    throw ConfigError("train-mode run with dropout needs a generator");
  }

  const ModelConfig& cfg = info_.config;
  RunCtx rc{tape,
            cfg,
            cfg.context_dim(info_.variant),
            train_mode,
            rng,
            tape.leaf(params_.get("emb.w")),
            bind_lstm(tape, params_, "lstm"),
            tape.leaf(params_.get("out.w")),
            tape.leaf(params_.get("out.b"))};

  // Turns of this window; context turns are all but the last.
  std::vector<const EncodedTurn*> turns;
  for (int j = w.context_begin; j <= w.target; ++j) {
    turns.push_back(&dialog.turns[j]);
  }
  const int last = k - 1;

  ForwardResult res;
  std::vector<TokenScore>* sc = collect_scores ? &res.scores : nullptr;
  const bool score_ctx = score_context_turns;

  auto zeros_ctx = [&] { return tape.constant(Matrix::Zero(rc.cdim, 1)); };

  // Collects a context turn's loss into the window loss when the
  // all-turns training objective is active.
  std::optional<Var> ctx_loss;
  int ctx_tokens = 0;
  auto run_context = [&](const EncodedTurn& turn, LstmVarState init,
                         std::optional<Var> ctx) -> LstmVarState {
    TurnRun r = run_turn(rc, turn, init, ctx, score_ctx, nullptr);
    if (r.loss.has_value()) {
      ctx_loss = ctx_loss.has_value() ? tape.add(*ctx_loss, *r.loss) : *r.loss;
      ctx_tokens += r.tokens;
    }
    return r.final_state;
  };

  TurnRun target;
  switch (info_.variant) {
    case ModelVariant::SingleTurn: {
      target = run_turn(rc, *turns[last], zero_state(tape, cfg.hidden_dim),
                        std::nullopt, true, sc);
      break;
    }
    case ModelVariant::BoWContext: {
      std::optional<Var> sum;
      int n = 0;
      for (int j = 0; j < last; ++j) {
        for (int tok : turns[j]->tokens) {
          Var e = embed_token(rc, tok);
          sum = sum.has_value() ? tape.add(*sum, e) : e;
          ++n;
        }
      }
      Var c = n > 0 ? tape.scale(*sum, Scalar(1) / n) : zeros_ctx();
      target = run_turn(rc, *turns[last], zero_state(tape, cfg.hidden_dim), c,
                        true, sc);
      break;
    }
    case ModelVariant::DRNNLM: {
      LstmVarState state = zero_state(tape, cfg.hidden_dim);
      for (int j = 0; j < last; ++j) {
        state = run_context(*turns[j], state, std::nullopt);
      }
      res.carry.prev_prev_turn_last_state = detach(tape, state);
      target = run_turn(rc, *turns[last], state, std::nullopt, true, sc);
      break;
    }
    case ModelVariant::CCDCLM: {
      std::optional<Var> prev_h;
      for (int j = 0; j < last; ++j) {
        LstmVarState fin =
            run_context(*turns[j], zero_state(tape, cfg.hidden_dim),
                        prev_h.has_value() ? *prev_h : zeros_ctx());
        prev_h = fin.h;
      }
      target = run_turn(rc, *turns[last], zero_state(tape, cfg.hidden_dim),
                        prev_h.has_value() ? *prev_h : zeros_ctx(), true, sc);
      break;
    }
    case ModelVariant::IDCLM: {
      // Every turn starts from the state of the same speaker's previous
      // turn (two back); only the target receives the previous turn's
      // final hidden state as its per-step context.
      std::vector<LstmVarState> states;
      for (int j = 0; j < last; ++j) {
        LstmVarState init = j >= 2 ? states[j - 2]
                                   : zero_state(tape, cfg.hidden_dim);
        states.push_back(run_context(*turns[j], init, zeros_ctx()));
      }
      LstmVarState init = last >= 2 ? states[last - 2]
                                    : zero_state(tape, cfg.hidden_dim);
      Var c = last >= 1 ? states[last - 1].h : zeros_ctx();
      if (last >= 2) {
        res.carry.prev_prev_turn_last_state = detach(tape, states[last - 1]);
      }
      target = run_turn(rc, *turns[last], init, c, true, sc);
      break;
    }
    case ModelVariant::ESIDCLM: {
      LstmVars es = bind_lstm(tape, params_, "es");
      LstmVarState s = zero_state(tape, cfg.external_state_dim);
      std::vector<LstmVarState> states;
      for (int j = 0; j < last; ++j) {
        LstmVarState init = j >= 2 ? states[j - 2]
                                   : zero_state(tape, cfg.hidden_dim);
        states.push_back(run_context(*turns[j], init, s.h));
        s = lstm_step(tape, es, states[j].h, s);
      }
      LstmVarState init = last >= 2 ? states[last - 2]
                                    : zero_state(tape, cfg.hidden_dim);
      if (last >= 2) {
        res.carry.prev_prev_turn_last_state = detach(tape, states[last - 1]);
      }
      target = run_turn(rc, *turns[last], init, s.h, true, sc);
      s = lstm_step(tape, es, target.final_state.h, s);
      res.carry.external_state = tape.value(s.h);
      break;
    }
    case ModelVariant::DACLM: {
      Var da_emb = tape.leaf(params_.get("da_emb.w"));
      LstmVars da = bind_lstm(tape, params_, "da");
      LstmVarState dstate = zero_state(tape, cfg.da_embed_dim);
      for (int j = 0; j < last; ++j) {
        for (int tag : turns[j]->utt_das) {
          if (tag < 0 || tag >= cfg.da_vocab_size) {
            std::ostringstream os;
            os << "window contains dialog-act id " << tag
               << " outside the tag vocabulary of size " << cfg.da_vocab_size;
            throw DataError(os.str());
          }
          dstate = lstm_step(tape, da, tape.lookup(da_emb, tag), dstate);
        }
      }
      target = run_turn(rc, *turns[last], zero_state(tape, cfg.hidden_dim),
                        dstate.h, true, sc);
      break;
    }
  }

  res.carry.prev_turn_last_state = detach(tape, target.final_state);
  res.loss = *target.loss;
  res.token_count = target.tokens;
  if (ctx_loss.has_value()) {
    res.loss = tape.add(res.loss, *ctx_loss);
    res.token_count += ctx_tokens;
  }
  return res;
}

GradCheckResult check_variant_gradients(ModelVariant variant, int embed_dim,
                                        int hidden_dim, int vocab_size, int k,
                                        std::uint64_t seed, Scalar eps) {
  ModelInfo info;
  info.variant = variant;
  info.k = k;
  info.config.vocab_size = vocab_size;
  info.config.embed_dim = embed_dim;
  info.config.hidden_dim = hidden_dim;
  info.config.external_state_dim = std::max(2, hidden_dim - 2);
  info.config.da_vocab_size = 7;
  info.config.da_embed_dim = 4;

  Rng rng(mix_seed(seed, 0xf1d0));
  EncodedDialog d;
  d.dialog_id = "fd";
  for (int t = 0; t < k + 1; ++t) {
    EncodedTurn turn;
    turn.speaker = t % 2;
    const int len = 3 + static_cast<int>(rng.below(4));
    for (int i = 0; i < len; ++i) {
      turn.tokens.push_back(
          2 + static_cast<int>(rng.below(
                  static_cast<std::uint64_t>(info.config.vocab_size - 2))));
      turn.pos.push_back(2 + static_cast<int>(rng.below(4)));
      turn.da_per_token.push_back(
          2 + static_cast<int>(
                  rng.below(static_cast<std::uint64_t>(
                      info.config.da_vocab_size - 2))));
    }
    turn.utt_das = {turn.da_per_token[0]};
    d.turns.push_back(std::move(turn));
  }
  const std::vector<WindowRef> windows = {{0, 0, k - 1}, {0, 1, k}};

  DialogModel model = DialogModel::create(info, seed);
  Tape tape;
  const auto forward = [&](bool backprop) {
    Scalar total = 0;
    for (const WindowRef& w : windows) {
      tape.reset();
      const ForwardResult fr =
          model.run_window(tape, d, w, false, nullptr, false);
      total += tape.value(fr.loss)(0, 0);
      if (backprop) tape.backward(fr.loss);
    }
    tape.reset();
    return total;
  };
  return check_gradients(
      model.params(), [&] { forward(true); }, [&] { return forward(false); },
      eps);
}

}  // namespace dclm
