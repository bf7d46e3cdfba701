#include "phtr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "phtr/errors.hpp"
#include "phtr/vocab.hpp"

namespace phtr {
namespace {

constexpr double kInitStddev = 0.02;

void check_input_length(int64_t seq_len, const DecoderConfig& cfg) {
  if (seq_len > cfg.max_output_length) {
    throw ShapeError("decoder sequence length " + std::to_string(seq_len) +
                     " exceeds max_output_length " +
                     std::to_string(cfg.max_output_length));
  }
}

void check_token_range(const std::vector<int>& ids, int64_t vocab_size) {
  for (int id : ids) {
    if (id < 0 || id >= vocab_size) {
      throw ShapeError("token id " + std::to_string(id) +
                       " outside vocabulary of size " +
                       std::to_string(vocab_size));
    }
  }
}

int argmax_row(const Tensor& logits, int64_t row) {
  std::span<const double> data = logits.data();
  int64_t vocab = logits.shape()[1];
  const double* base = data.data() + row * vocab;
  int best = 0;
  for (int64_t v = 1; v < vocab; ++v) {
    if (base[v] > base[best]) best = static_cast<int>(v);
  }
  return best;
}

}  // namespace

DecoderParams DecoderParams::init(const DecoderConfig& cfg, int64_t vocab_size,
                                  Rng& rng) {
  DecoderParams p;
  p.vocab_size = vocab_size;
  p.token_embed =
      Tensor::randn({vocab_size, cfg.hidden_size}, rng, kInitStddev, true);
  p.start_embed = Tensor::randn({1, cfg.hidden_size}, rng, kInitStddev, true);
  p.pos_embed = Tensor::randn({cfg.max_output_length, cfg.hidden_size}, rng,
                              kInitStddev, true);
  for (int64_t i = 0; i < cfg.num_layers; ++i) {
    p.blocks.push_back(
        CrossBlockParams::init(cfg.hidden_size, cfg.intermediate_size, rng));
  }
  p.final_ln = LayerNormParams::init(cfg.hidden_size);
  p.output_head =
      LinearParams::init(cfg.hidden_size, vocab_size, rng, kInitStddev);
  return p;
}

NamedTensors DecoderParams::named_parameters() const {
  NamedTensors named;
  named.emplace_back("dec.token_embed", token_embed);
  named.emplace_back("dec.start_embed", start_embed);
  named.emplace_back("dec.pos_embed", pos_embed);
  for (size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect("dec.block" + std::to_string(i), named);
  }
  final_ln.collect("dec.final_ln", named);
  output_head.collect("dec.head", named);
  return named;
}

Tensor decoder_logits(const VisualFeatures& features,
                      const std::vector<int>& input_ids,
                      const DecoderConfig& cfg, const DecoderParams& params,
                      Rng* dropout_rng) {
  int64_t seq_len = static_cast<int64_t>(input_ids.size()) + 1;
  check_input_length(seq_len, cfg);
  check_token_range(input_ids, params.vocab_size);

  Tensor x;
  if (input_ids.empty()) {
    x = params.start_embed;
  } else {
    Tensor embeds = embedding_lookup(
        params.token_embed, std::span<const int>(input_ids));
    x = concat({params.start_embed, embeds}, 0);
  }
  x = add(x, position_rows(params.pos_embed, seq_len));
  if (dropout_rng != nullptr && cfg.dropout > 0.0) {
    x = dropout(x, cfg.dropout, true, dropout_rng->next_u64());
  }

  Tensor mask = causal_mask(seq_len);
  for (const auto& block : params.blocks) {
    x = cross_transformer_block(x, features.tokens, block, cfg.num_heads,
                                &mask, cfg.dropout, dropout_rng);
  }
  x = params.final_ln.forward(x);
  return params.output_head.forward(x);
}

Tensor forward_teacher_forced(const VisualFeatures& features,
                              const std::vector<int>& target,
                              const DecoderConfig& cfg,
                              const DecoderParams& params, Rng* dropout_rng) {
  if (target.empty() || target.front() != Vocabulary::kBos) {
    throw DataError("teacher-forced target must begin with BOS");
  }
  check_input_length(static_cast<int64_t>(target.size()), cfg);
  std::vector<int> input_ids(target.begin(), target.end() - 1);
  return decoder_logits(features, input_ids, cfg, params, dropout_rng);
}

ScheduledSamplingResult scheduled_sampling_forward(
    const VisualFeatures& features, const std::vector<int>& target,
    double epsilon, uint64_t seed, const DecoderConfig& cfg,
    const DecoderParams& params, Rng* dropout_rng) {
  if (!(epsilon >= 0.0) || epsilon > 1.0) {
    throw DataError("scheduled sampling epsilon must lie in [0, 1], got " +
                    std::to_string(epsilon));
  }
  if (target.empty() || target.front() != Vocabulary::kBos) {
    throw DataError("scheduled sampling target must begin with BOS");
  }
  check_input_length(static_cast<int64_t>(target.size()), cfg);

  std::vector<int> input_ids(target.begin(), target.end() - 1);

  ScheduledSamplingResult result;
  if (input_ids.size() > 1) {
    // Prediction pass: gradient-free, no dropout, so the mixed-in tokens are
    // the argmax the model would produce under teacher forcing. At epsilon
    // 1.0 every position keeps its ground-truth token, so the pass is
    // skipped; the per-position draws below are unaffected.
    std::vector<int> predictions(input_ids.size(), 0);
    if (epsilon < 1.0) {
      TapeSuspend suspend;
      Tensor probe_logits =
          decoder_logits(features, input_ids, cfg, params, nullptr);
      for (size_t j = 1; j < input_ids.size(); ++j) {
        predictions[j] = argmax_row(probe_logits, static_cast<int64_t>(j));
      }
    }
    Rng rng(seed);
    for (size_t j = 1; j < input_ids.size(); ++j) {
      ++result.mixed_positions;
      if (rng.uniform() < epsilon) {
        ++result.ground_truth_used;
      } else {
        input_ids[j] = predictions[j];
      }
    }
  }

  result.logits = decoder_logits(features, input_ids, cfg, params, dropout_rng);
  return result;
}

double epsilon_schedule(int64_t epoch, int64_t total_epochs,
                        const std::string& schedule, double floor) {
  if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs) {
    throw UsageError("epoch " + std::to_string(epoch) +
                     " outside schedule of " + std::to_string(total_epochs) +
                     " epochs");
  }
  if (!(floor >= 0.0) || floor > 1.0) {
    throw UsageError("schedule floor must lie in [0, 1]");
  }
  if (total_epochs == 1) return 1.0;
  double progress =
      static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  if (schedule == "linear") {
    return 1.0 - (1.0 - floor) * progress;
  }
  if (schedule == "inverse_sigmoid") {
    // Logistic decay in normalized epoch, rescaled so the endpoints hit
    // exactly 1.0 and the floor.
    auto logistic = [](double t) { return 1.0 / (1.0 + std::exp(8.0 * (t - 0.5))); };
    double s0 = logistic(0.0);
    double s1 = logistic(1.0);
    double unit = (logistic(progress) - s1) / (s0 - s1);
    return floor + (1.0 - floor) * unit;
  }
  throw UsageError("unknown scheduled sampling schedule '" + schedule +
                   "' (expected linear or inverse_sigmoid)");
}

StepScorer decoder_scorer(const VisualFeatures& features,
                          const DecoderConfig& cfg,
                          const DecoderParams& params) {
  return [features, cfg, params](const std::vector<int>& prefix) {
    TapeSuspend suspend;
    Tensor logits = decoder_logits(features, prefix, cfg, params, nullptr);
    std::span<const double> data = logits.data();
    int64_t vocab = logits.shape()[1];
    int64_t last = logits.shape()[0] - 1;
    return std::vector<double>(data.begin() + last * vocab,
                               data.begin() + (last + 1) * vocab);
  };
}

namespace {

GenerationLimits decoder_limits(const DecoderConfig& cfg) {
  GenerationLimits limits;
  // The scorer's input sequence is BOS plus the generated tokens, and the
  // positional table covers max_output_length rows, so generation may emit
  // at most max_output_length - 1 tokens.
  limits.max_tokens = std::max<int64_t>(cfg.max_output_length - 1, 1);
  limits.bos_id = Vocabulary::kBos;
  limits.eos_id = Vocabulary::kEos;
  return limits;
}

}  // namespace

GeneratedSequence generate_greedy(const VisualFeatures& features,
                                  const DecoderConfig& cfg,
                                  const DecoderParams& params) {
  return generate_greedy(decoder_scorer(features, cfg, params),
                         decoder_limits(cfg));
}

GeneratedSequence generate_beam(const VisualFeatures& features,
                                const DecoderConfig& cfg,
                                const DecoderParams& params, int width,
                                double alpha) {
  return generate_beam(decoder_scorer(features, cfg, params),
                       decoder_limits(cfg), width, alpha);
}

GeneratedSequence generate_nucleus(const VisualFeatures& features,
                                   const DecoderConfig& cfg,
                                   const DecoderParams& params, double top_p,
                                   double temperature, uint64_t seed) {
  return generate_nucleus(decoder_scorer(features, cfg, params),
                          decoder_limits(cfg), top_p, temperature, seed);
}

}  // namespace phtr
