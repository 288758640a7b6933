#include "dclm/trainer.hpp"

#include "dclm/tape.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace dclm {

namespace {

Scalar grad_norm(const ParameterSet& params) {
  Scalar sq = 0;
  for (const std::string& name : params.names()) {
    const Tensor& t = params.get(name);
    if (t.has_grad()) sq += t.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

Scalar window_nll(DialogModel& model, Tape& tape, const EncodedCorpus& corpus,
                  const WindowRef& w, std::int64_t& tokens) {
  tape.reset();
  const ForwardResult fr = model.run_window(tape, corpus.dialogs[w.dialog], w,
                                            false, nullptr, false);
  tokens += fr.token_count;
  return tape.value(fr.loss)(0, 0);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(adam.alpha > 0)) throw ConfigError("adam alpha must be positive");
  if (adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0)) throw ConfigError("adam eps must be positive");
  if (threads != 1) {
    throw ConfigError("this build trains on a single worker; threads must be 1");
  }
}

Scalar model_perplexity(DialogModel& model, const EncodedCorpus& corpus) {
  const std::vector<WindowRef> windows = make_windows(corpus, model.info().k);
  if (windows.empty()) {
    throw DataError("corpus has no complete windows of " +
                    std::to_string(model.info().k) + " turns");
  }
  Tape tape;
  Scalar nll = 0;
  std::int64_t tokens = 0;
  for (const WindowRef& w : windows) nll += window_nll(model, tape, corpus, w, tokens);
  return std::exp(nll / static_cast<Scalar>(tokens));
}

TrainLog train_model(DialogModel& model, const EncodedCorpus& train_corpus,
                     const EncodedCorpus& valid_corpus,
                     const TrainConfig& config) {
  config.validate();
  const ModelInfo& info = model.info();
  const std::vector<WindowRef> windows = make_windows(train_corpus, info.k);
  if (windows.empty()) {
    throw DataError("training corpus has no complete windows of " +
                    std::to_string(info.k) + " turns");
  }
  if (make_windows(valid_corpus, info.k).empty()) {
    throw DataError("validation corpus has no complete windows of " +
                    std::to_string(info.k) + " turns");
  }

  const Scalar lambda = info.config.l2_lambda;
  const int n = static_cast<int>(windows.size());
  std::vector<int> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  Adam adam(config.adam);
  Tape tape;
  TrainLog log;
  ParameterSet best;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    Scalar epoch_nll = 0;
    std::int64_t epoch_tokens = 0;

    for (int b0 = 0; b0 < n; b0 += config.batch_size) {
      const int bsz = std::min(config.batch_size, n - b0);
      model.params().zero_grads();

      Scalar batch_nll = 0;
      for (int i = b0; i < b0 + bsz; ++i) {
        const int widx = order[i];
        const WindowRef& w = windows[widx];
        Rng drop_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(widx)));
        tape.reset();
        const ForwardResult fr = model.run_window(
            tape, train_corpus.dialogs[w.dialog], w, true, &drop_rng, false);
        batch_nll += tape.value(fr.loss)(0, 0);
        epoch_tokens += fr.token_count;
        tape.backward(tape.scale(fr.loss, Scalar(1) / bsz));
      }
      epoch_nll += batch_nll;

      Scalar batch_loss = batch_nll / bsz;
      if (lambda > 0) {
        Tensor& w = model.params().get("out.w");
        Tensor& b = model.params().get("out.b");
        batch_loss += lambda * (w.value.squaredNorm() + b.value.squaredNorm());
        w.accumulate_grad(2 * lambda * w.value);
        b.accumulate_grad(2 * lambda * b.value);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training loss became non-finite at epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(b0 / config.batch_size + 1));
      }

      if (clip_gradients(model.params(), config.clip_norm) > config.clip_norm) {
        ++rec.clip_count;
      }
      const Scalar post_clip = grad_norm(model.params());
      if (!std::isfinite(post_clip)) {
        throw DivergenceError("gradient norm became non-finite at epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(b0 / config.batch_size + 1));
      }
      if (post_clip > config.clip_norm * (1 + 1e-9)) {
        throw DclmError("gradient norm exceeds the clip bound after clipping");
      }
      adam.step(model.params());
      ++rec.batch_count;
    }

    rec.train_loss = epoch_nll / static_cast<Scalar>(epoch_tokens);
    rec.valid_ppl = model_perplexity(model, valid_corpus);
    log.epochs.push_back(rec);

    if (log.best_epoch == 0 || rec.valid_ppl < log.best_valid_ppl) {
      log.best_epoch = epoch;
      log.best_valid_ppl = rec.valid_ppl;
      best = model.params();
      best.drop_grads();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  model.params() = std::move(best);
  return log;
}

void write_trainlog(const std::string& path, const TrainLog& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("trainlog " + path + ": cannot open for writing");
  for (const EpochRecord& r : log.epochs) {
    const nlohmann::json line = {{"epoch", r.epoch},
                                 {"train_loss", r.train_loss},
                                 {"valid_ppl", r.valid_ppl},
                                 {"clipped", r.clip_count},
                                 {"batches", r.batch_count}};
    f << line.dump() << '\n';
  }
  const nlohmann::json tail = {{"best_epoch", log.best_epoch},
                               {"best_valid_ppl", log.best_valid_ppl}};
  f << tail.dump() << '\n';
  if (!f) throw DataError("trainlog " + path + ": write failed");
}

}  // namespace dclm
