#ifndef DCLM_TRAINER_HPP
#define DCLM_TRAINER_HPP

#include "dclm/corpus.hpp"
#include "dclm/models.hpp"
#include "dclm/optim.hpp"
#include "dclm/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dclm {

struct TrainConfig {
  int batch_size = 16;
  int max_epochs = 15;
  // Stop after this many epochs without a validation improvement.
  int patience = 5;
  std::uint64_t seed = 0;
  Scalar clip_norm = 5.0;
  AdamConfig adam;
  // Window losses are reduced in a fixed order, so results are
  // independent of worker count; this build runs a single worker.
  int threads = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  // Mean negative log-likelihood per scored token, excluding the
  // regularization term.
  Scalar train_loss = 0;
  Scalar valid_ppl = 0;
  // Batches whose gradients were rescaled by the norm clip.
  std::int64_t clip_count = 0;
  int batch_count = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 if training never ran
  Scalar best_valid_ppl = 0;
};

// Line-delimited JSON: one object per epoch, then a summary object.
void write_trainlog(const std::string& path, const TrainLog& log);

// Mini-batch training with Adam, global-norm clipping, non-recurrent
// dropout (per the model's keep_prob), and L2 on the output layer's
// weights and biases (per the model's l2_lambda), added to the loss.
// Batch loss is the mean of per-window token NLL sums. Validation runs
// once per epoch in eval mode; the model is left holding the parameters
// of its best validation epoch. Throws DivergenceError when the training
// loss stops being finite.
TrainLog train_model(DialogModel& model, const EncodedCorpus& train_corpus,
                     const EncodedCorpus& valid_corpus,
                     const TrainConfig& config);

// Last-turn perplexity of the model over all complete windows, eval mode.
Scalar model_perplexity(DialogModel& model, const EncodedCorpus& corpus);

}  // namespace dclm

#endif  // DCLM_TRAINER_HPP
