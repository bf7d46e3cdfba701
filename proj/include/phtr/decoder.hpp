#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/config.hpp"
#include "phtr/encoder.hpp"
#include "phtr/generate.hpp"
#include "phtr/nn.hpp"
#include "phtr/rng.hpp"
#include "phtr/tensor.hpp"

namespace phtr {

// Autoregressive transformer decoder over visual features. Transformer
// position 0 is fed a learned start embedding and position t >= 1 the
// embedding of the (t-1)-th target id, so the logits row at position t
// depends only on target ids before t under the causal mask.
struct DecoderParams {
  Tensor token_embed;  // [vocab, hidden]
  Tensor start_embed;  // [1, hidden]
  Tensor pos_embed;    // [max_output_length, hidden]
  std::vector<CrossBlockParams> blocks;
  LayerNormParams final_ln;
  LinearParams output_head;  // hidden -> vocab
  int64_t vocab_size = 0;

  static DecoderParams init(const DecoderConfig& cfg, int64_t vocab_size,
                            Rng& rng);
  NamedTensors named_parameters() const;  // checkpoint prefix "dec."
};

// Logits for every next-token position given the ids already placed as
// decoder inputs: returns [ids.size() + 1, vocab], where row t scores the
// token following ids[0..t-1]. The last row scores the continuation of the
// full id sequence, which is what generation consumes.
Tensor decoder_logits(const VisualFeatures& features,
                      const std::vector<int>& input_ids,
                      const DecoderConfig& cfg, const DecoderParams& params,
                      Rng* dropout_rng = nullptr);

// Teacher forcing: target must begin with BOS; returns [len(target), vocab]
// with row t depending only on target ids < t.
Tensor forward_teacher_forced(const VisualFeatures& features,
                              const std::vector<int>& target,
                              const DecoderConfig& cfg,
                              const DecoderParams& params,
                              Rng* dropout_rng = nullptr);

struct ScheduledSamplingResult {
  Tensor logits;                  // same shape as teacher forcing
  int64_t mixed_positions = 0;    // input positions subject to mixing
  int64_t ground_truth_used = 0;  // of those, how many kept the target id
};

// Two-pass scheduled sampling: a gradient-free teacher-forced pass supplies
// argmax predictions, then each non-BOS input keeps the ground-truth id with
// probability epsilon and otherwise takes the prediction for that position.
// epsilon = 1 is bit-identical to forward_teacher_forced.
ScheduledSamplingResult scheduled_sampling_forward(
    const VisualFeatures& features, const std::vector<int>& target,
    double epsilon, uint64_t seed, const DecoderConfig& cfg,
    const DecoderParams& params, Rng* dropout_rng = nullptr);

// Ground-truth-use probability for the given epoch. "linear" interpolates
// from 1.0 down to the floor at the final epoch; "inverse_sigmoid" follows a
// logistic decay rescaled to the same endpoints.
double epsilon_schedule(int64_t epoch, int64_t total_epochs,
                        const std::string& schedule, double floor);

// Wraps the decoder as a next-token scorer for the generation strategies.
// Gradients are suspended inside the scorer.
StepScorer decoder_scorer(const VisualFeatures& features,
                          const DecoderConfig& cfg,
                          const DecoderParams& params);

GeneratedSequence generate_greedy(const VisualFeatures& features,
                                  const DecoderConfig& cfg,
                                  const DecoderParams& params);
GeneratedSequence generate_beam(const VisualFeatures& features,
                                const DecoderConfig& cfg,
                                const DecoderParams& params, int width,
                                double alpha);
GeneratedSequence generate_nucleus(const VisualFeatures& features,
                                   const DecoderConfig& cfg,
                                   const DecoderParams& params, double top_p,
                                   double temperature, uint64_t seed);

}  // namespace phtr
