#include "phtr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phtr/errors.hpp"
#include "phtr/pipeline.hpp"
#include "phtr/rng.hpp"
#include "phtr/text.hpp"

namespace phtr {

namespace {

// Disjoint randomness streams derived from the master seed: data order,
// mask/corruption choices, dropout, scheduled-sampling draws, augmentation
// indices, and the auxiliary-LM line pick.
enum : uint64_t {
  kOrderStream = 1,
  kMaskStream = 2,
  kDropoutStream = 3,
  kSamplingStream = 4,
  kAuxLineStream = 6,
};

uint64_t stream_seed(uint64_t seed, uint64_t stream) {
  return Rng::mix(seed, stream);
}

using SampleLossFn = std::function<Tensor(int64_t sample, int64_t step,
                                          int64_t slot)>;
using EpsilonFn = std::function<double(int64_t epoch)>;
using EpochDoneFn = std::function<void(int64_t epoch, int64_t step,
                                       double mean_loss)>;

// Shared step loop: deterministic per-epoch shuffle, batches of consecutive
// slots, mean-of-samples loss, one Adam update per step. Runs from the
// optimizer's current count to the planned budget so restored optimizers
// resume mid-schedule.
TrainHistory run_loop(AdamOptimizer& opt, int64_t num_samples,
                      const TrainConfig& train, uint64_t seed,
                      const std::string& phase, const StepCallback& on_step,
                      const SampleLossFn& sample_loss,
                      const EpsilonFn& epsilon_of,
                      const EpochDoneFn& epoch_done) {
  TrainHistory history;
  const int64_t per_epoch = steps_per_epoch(num_samples, train.batch_size);
  const int64_t budget = planned_steps(train, num_samples);

  std::vector<int64_t> order;
  int64_t order_epoch = -1;
  double epoch_loss_sum = 0.0;
  int64_t epoch_loss_count = 0;

  while (opt.step_count() < budget) {
    const int64_t step = opt.step_count();
    const int64_t epoch = step / per_epoch;
    if (epoch != order_epoch) {
      order.resize(static_cast<size_t>(num_samples));
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle_rng(Rng::mix(stream_seed(seed, kOrderStream),
                               static_cast<uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      order_epoch = epoch;
    }

    const int64_t lo = (step % per_epoch) * train.batch_size;
    const int64_t hi = std::min(num_samples, lo + train.batch_size);

    Tape tape;
    TapeScope scope(tape);
    Tensor total;
    for (int64_t i = lo; i < hi; ++i) {
      Tensor loss = sample_loss(order[static_cast<size_t>(i)], step, i - lo);
      total = (i == lo) ? loss : add(total, loss);
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(hi - lo));
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw NumericError(phase + " loss is not finite at step " +
                         std::to_string(step + 1));
    }
    opt.zero_grads();
    // A batch can carry no trainable signal (every masked-LM sample came
    // back empty); its loss is then a plain constant and the update is a
    // no-op, but the step still counts so resumed runs replay identically.
    if (tape.produced(loss.node().get())) tape.backward(loss);
    opt.step();

    epoch_loss_sum += loss_value;
    epoch_loss_count += 1;

    StepRecord record;
    record.step = opt.step_count();
    record.epoch = epoch;
    record.loss = loss_value;
    record.epsilon = epsilon_of ? epsilon_of(epoch) : 1.0;
    history.steps.push_back(record);
    if (on_step) on_step(record);

    const bool epoch_over = (step + 1) % per_epoch == 0;
    const bool budget_over = opt.step_count() >= budget;
    if ((epoch_over || budget_over) && epoch_done && epoch_loss_count > 0) {
      epoch_done(epoch, opt.step_count(),
                 epoch_loss_sum / static_cast<double>(epoch_loss_count));
      epoch_loss_sum = 0.0;
      epoch_loss_count = 0;
    }
  }
  return history;
}

}  // namespace

int64_t steps_per_epoch(int64_t num_samples, int64_t batch_size) {
  return (num_samples + batch_size - 1) / batch_size;
}

int64_t planned_steps(const TrainConfig& train, int64_t num_samples) {
  if (train.steps > 0) return train.steps;
  return train.epochs * steps_per_epoch(num_samples, train.batch_size);
}

Tensor decoder_step_loss(const Tensor& logits,
                         const std::vector<int>& target) {
  std::vector<int> shifted = target;
  shifted[0] = Vocabulary::kPad;
  return cross_entropy(logits, std::span<const int>(shifted),
                       Vocabulary::kPad);
}

TrainHistory train_encoder_mim(EncoderParams& params, AdamOptimizer& opt,
                               const std::vector<PageSample>& pages,
                               const EncoderConfig& cfg,
                               const TrainConfig& train, uint64_t seed,
                               const StepCallback& on_step) {
  if (pages.empty()) {
    throw DataError("encoder pre-training needs at least one page");
  }
  std::vector<Image> images;
  images.reserve(pages.size());
  for (const PageSample& page : pages) {
    images.push_back(preprocess_page(page.image, page.dpi, cfg.image_size));
  }

  const uint64_t mask_seed = stream_seed(seed, kMaskStream);
  const uint64_t dropout_seed = stream_seed(seed, kDropoutStream);
  auto sample_loss = [&](int64_t sample, int64_t step, int64_t slot) {
    const uint64_t visit =
        static_cast<uint64_t>(step * train.batch_size + slot);
    Rng dropout_rng(Rng::mix(dropout_seed, visit));
    return mim_loss(images[static_cast<size_t>(sample)], cfg.mask_ratio, cfg,
                    params, Rng::mix(mask_seed, visit), &dropout_rng)
        .loss;
  };
  return run_loop(opt, static_cast<int64_t>(pages.size()), train, seed,
                  "encoder pre-training", on_step, sample_loss, {}, {});
}

TrainHistory train_lm_mlm(LmParams& params, AdamOptimizer& opt,
                          const std::vector<std::string>& lines,
                          const LmConfig& cfg, const LmTokenizer& tokenizer,
                          const TrainConfig& train, uint64_t seed,
                          const StepCallback& on_step) {
  if (lines.empty()) {
    throw DataError("masked-LM pre-training needs a non-empty corpus");
  }
  for (size_t i = 0; i < lines.size(); ++i) {
    const int64_t wrapped =
        static_cast<int64_t>(tokenizer.encode(lines[i]).size()) + 2;
    if (wrapped > cfg.max_seq_length) {
      throw DataError("corpus line " + std::to_string(i + 1) + " needs " +
                      std::to_string(wrapped) + " tokens but lm.max_len is " +
                      std::to_string(cfg.max_seq_length));
    }
  }

  const uint64_t corrupt_seed = stream_seed(seed, kMaskStream);
  const uint64_t dropout_seed = stream_seed(seed, kDropoutStream);
  auto sample_loss = [&](int64_t sample, int64_t step, int64_t slot) {
    const uint64_t visit =
        static_cast<uint64_t>(step * train.batch_size + slot);
    Rng dropout_rng(Rng::mix(dropout_seed, visit));
    return mlm_loss(lines[static_cast<size_t>(sample)], cfg, params,
                    tokenizer, train.mlm_mask_prob,
                    Rng::mix(corrupt_seed, visit), &dropout_rng)
        .loss;
  };
  return run_loop(opt, static_cast<int64_t>(lines.size()), train, seed,
                  "masked-LM pre-training", on_step, sample_loss, {}, {});
}

TrainHistory finetune(EncoderParams& enc, DecoderParams& dec,
                      AdamOptimizer& opt, const FinetuneSetup& setup,
                      const ExperimentConfig& cfg,
                      const StepCallback& on_step,
                      const EpochCallback& on_epoch) {
  if (setup.train_pages == nullptr || setup.train_pages->empty()) {
    throw DataError("fine-tuning needs at least one training page");
  }
  if (setup.vocab == nullptr) {
    throw DataError("fine-tuning needs a vocabulary");
  }
  if (setup.lm != nullptr && setup.lm_tokenizer == nullptr) {
    throw DataError("co-training the language model needs its tokenizer");
  }
  const std::vector<PageSample>& pages = *setup.train_pages;
  const Vocabulary& vocab = *setup.vocab;

  std::vector<std::vector<int>> targets(pages.size());
  for (size_t i = 0; i < pages.size(); ++i) {
    std::vector<int> ids;
    ids.push_back(Vocabulary::kBos);
    for (int id : vocab.encode(pages[i].transcript)) ids.push_back(id);
    ids.push_back(Vocabulary::kEos);
    if (static_cast<int64_t>(ids.size()) > cfg.dec.max_output_length) {
      throw DataError("transcript of page " + std::to_string(i) + " needs " +
                      std::to_string(ids.size()) +
                      " tokens but dec.max_len is " +
                      std::to_string(cfg.dec.max_output_length));
    }
    targets[i] = std::move(ids);
  }

  const int64_t num_samples = static_cast<int64_t>(pages.size());
  const int64_t per_epoch = steps_per_epoch(num_samples, cfg.train.batch_size);
  const int64_t budget = planned_steps(cfg.train, num_samples);
  const int64_t total_epochs = std::max<int64_t>(
      1, (budget + per_epoch - 1) / per_epoch);

  auto epsilon_of = [&](int64_t epoch) {
    return epsilon_schedule(epoch, total_epochs, cfg.train.ss_schedule,
                            cfg.train.ss_floor);
  };

  const uint64_t dropout_seed = stream_seed(cfg.seed, kDropoutStream);
  const uint64_t sampling_seed = stream_seed(cfg.seed, kSamplingStream);
  const uint64_t corrupt_seed = stream_seed(cfg.seed, kMaskStream);
  const uint64_t aux_line_seed = stream_seed(cfg.seed, kAuxLineStream);

  auto sample_loss = [&](int64_t sample, int64_t step, int64_t slot) {
    const size_t index = static_cast<size_t>(sample);
    const uint64_t visit =
        static_cast<uint64_t>(step * cfg.train.batch_size + slot);
    Rng dropout_rng(Rng::mix(dropout_seed, visit));

    Image input;
    if (setup.augment != nullptr) {
      PageSample perturbed = augment(pages[index], *setup.augment,
                                     static_cast<int64_t>(visit),
                                     AugmentMode::kTrain);
      input = preprocess_page(perturbed.image, perturbed.dpi,
                              cfg.enc.finetune_image_size);
    } else {
      input = preprocess_page(pages[index].image, pages[index].dpi,
                              cfg.enc.finetune_image_size);
    }

    const VisualFeatures features = encode(input, cfg.enc, enc, &dropout_rng);
    const double epsilon = epsilon_of(step / per_epoch);
    ScheduledSamplingResult forward = scheduled_sampling_forward(
        features, targets[index], epsilon, Rng::mix(sampling_seed, visit),
        cfg.dec, dec, &dropout_rng);
    Tensor loss = decoder_step_loss(forward.logits, targets[index]);

    if (setup.lm != nullptr) {
      const std::vector<std::string> lines =
          split_lines(pages[index].transcript);
      const size_t pick = static_cast<size_t>(
          Rng::mix(aux_line_seed, visit) % lines.size());
      const int64_t wrapped = static_cast<int64_t>(
          setup.lm_tokenizer->encode(lines[pick]).size()) + 2;
      if (wrapped <= cfg.lm.max_seq_length) {
        MlmLossResult aux = mlm_loss(lines[pick], cfg.lm, *setup.lm,
                                     *setup.lm_tokenizer,
                                     cfg.train.mlm_mask_prob,
                                     Rng::mix(corrupt_seed, visit),
                                     &dropout_rng);
        if (!aux.empty_targets) loss = add(loss, aux.loss);
      }
    }
    return loss;
  };

  TrainHistory history;
  auto epoch_done = [&](int64_t epoch, int64_t step, double mean_loss) {
    EpochRecord record;
    record.epoch = epoch;
    record.step = step;
    record.epsilon = epsilon_of(epoch);
    record.train_loss = mean_loss;
    if (setup.val_pages != nullptr && !setup.val_pages->empty()) {
      const EvalReport report =
          score_pages(*setup.val_pages, enc, dec, vocab, cfg);
      record.has_validation = true;
      record.val_cer = report.cer;
      record.val_wer = report.wer;
      record.val_ler = report.ler_normalized;
    }
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  };

  TrainHistory stepped =
      run_loop(opt, num_samples, cfg.train, cfg.seed, "fine-tuning", on_step,
               sample_loss, epsilon_of, epoch_done);
  history.steps = std::move(stepped.steps);
  return history;
}

}  // namespace phtr
