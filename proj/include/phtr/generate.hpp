#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace phtr {

// Scores the next token given the prefix generated so far (prefix always
// starts with BOS). Returns raw logits over the vocabulary; the strategies
// normalize as needed. Keeping the model behind this closure lets the
// strategies be tested against hand-built toy distributions.
using StepScorer =
    std::function<std::vector<double>(const std::vector<int>& prefix)>;

struct GenerationLimits {
  int64_t max_tokens = 0;  // generated tokens, EOS included
  int bos_id = 1;
  int eos_id = 2;
};

struct GeneratedSequence {
  std::vector<int> ids;             // generated tokens; ends with EOS unless truncated
  std::vector<double> confidences;  // softmax probability of each chosen token
  bool truncated = false;           // hit max_tokens before producing EOS
  double score = 0.0;               // sum of chosen-token log-probabilities;
                                    // length-normalized for beam search
};

// Argmax at each step, ties broken toward the lowest token id.
GeneratedSequence generate_greedy(const StepScorer& scorer,
                                  const GenerationLimits& limits);

// Beam search under score = logP / len^alpha. Hypotheses that choose EOS
// leave the active beam as completed candidates; at termination completed and
// still-active (truncated) hypotheses compete on the same score.
GeneratedSequence generate_beam(const StepScorer& scorer,
                                const GenerationLimits& limits, int width,
                                double alpha);

// Samples from the smallest probability prefix with cumulative mass >= top_p
// (never empty), renormalized. temperature divides the logits first.
// Confidences report the full temperature-adjusted softmax probability.
GeneratedSequence generate_nucleus(const StepScorer& scorer,
                                   const GenerationLimits& limits, double top_p,
                                   double temperature, uint64_t seed);

}  // namespace phtr
