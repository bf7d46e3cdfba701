#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phtr/config.hpp"
#include "phtr/data.hpp"
#include "phtr/decoder.hpp"
#include "phtr/encoder.hpp"
#include "phtr/lm.hpp"
#include "phtr/render.hpp"
#include "phtr/tensor.hpp"
#include "phtr/vocab.hpp"

namespace phtr {

// One optimizer update. step is the Adam step count after the update, so a
// resumed run continues the numbering of the run it extends.
struct StepRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  double loss = 0.0;
  double epsilon = 1.0;  // scheduled-sampling epsilon; 1.0 outside fine-tuning
};

// End-of-epoch summary for fine-tuning. Validation scores are greedy-decoded
// CER/WER/LER and only meaningful when has_validation is set.
struct EpochRecord {
  int64_t epoch = 0;
  int64_t step = 0;
  double epsilon = 1.0;
  double train_loss = 0.0;  // mean step loss within the epoch
  bool has_validation = false;
  double val_cer = 0.0;
  double val_wer = 0.0;
  double val_ler = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;  // fine-tuning only
};

// ceil(num_samples / batch_size); the final batch of an epoch may be short.
int64_t steps_per_epoch(int64_t num_samples, int64_t batch_size);

// Total optimizer steps the config asks for: train.steps when positive,
// otherwise train.epochs full epochs.
int64_t planned_steps(const TrainConfig& train, int64_t num_samples);

// Cross-entropy over a [len, vocab] logits matrix against the full target
// sequence. Position 0 always sees the fixed start embedding and can only
// predict BOS, so its target is replaced by PAD and ignored.
Tensor decoder_step_loss(const Tensor& logits, const std::vector<int>& target);

// Masked-image-modeling pre-training. Pages are preprocessed to the
// pre-training input size once; every batch averages per-sample MIM losses.
// Runs from the optimizer's current step count up to the planned budget, so
// calling again with a restored optimizer resumes exactly. Throws DataError
// on an empty page list and NumericError when a step loss is not finite.
TrainHistory train_encoder_mim(EncoderParams& params, AdamOptimizer& opt,
                               const std::vector<PageSample>& pages,
                               const EncoderConfig& cfg,
                               const TrainConfig& train, uint64_t seed,
                               const StepCallback& on_step = {});

// Masked-language-model pre-training over corpus lines; same batching,
// resume, and error contracts. Lines that would exceed max_seq_length once
// wrapped in BOS/EOS are rejected up front with a DataError naming the line.
TrainHistory train_lm_mlm(LmParams& params, AdamOptimizer& opt,
                          const std::vector<std::string>& lines,
                          const LmConfig& cfg, const LmTokenizer& tokenizer,
                          const TrainConfig& train, uint64_t seed,
                          const StepCallback& on_step = {});

// Inputs for joint encoder + decoder fine-tuning. The language model joins
// the optimization only when lm is non-null (the unfrozen mode): each sample
// then adds a masked-LM loss on one of its transcript lines, cycled per
// visit. The augmentation policy, when present, perturbs training pages with
// a fresh per-visit sample index; validation pages are never augmented.
struct FinetuneSetup {
  const std::vector<PageSample>* train_pages = nullptr;
  const std::vector<PageSample>* val_pages = nullptr;  // optional
  const Vocabulary* vocab = nullptr;
  LmParams* lm = nullptr;
  const LmTokenizer* lm_tokenizer = nullptr;  // required when lm is set
  const AugmentationPolicy* augment = nullptr;
};

// Teacher forcing with scheduled sampling: epsilon follows
// epsilon_schedule(epoch, total_epochs, train.ss_schedule, train.ss_floor).
// Transcripts too long for dec.max_output_length are rejected up front with
// a DataError naming the page. Validation pages, when present, are scored
// with greedy decoding at the end of every epoch.
TrainHistory finetune(EncoderParams& enc, DecoderParams& dec,
                      AdamOptimizer& opt, const FinetuneSetup& setup,
                      const ExperimentConfig& cfg,
                      const StepCallback& on_step = {},
                      const EpochCallback& on_epoch = {});

}  // namespace phtr
