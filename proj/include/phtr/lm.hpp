#pragma once

#include <cstdint>
#include <vector>

#include "phtr/config.hpp"
#include "phtr/nn.hpp"
#include "phtr/rng.hpp"
#include "phtr/tensor.hpp"
#include "phtr/vocab.hpp"

namespace phtr {

// Encoder-only masked language model with absolute position embeddings,
// trained to re-predict corrupted tokens and reused at inference to repair
// low-confidence decoder output.
struct LmParams {
  Tensor token_embed;  // [vocab, hidden]
  Tensor pos_embed;    // [max_seq_length, hidden]
  std::vector<BlockParams> blocks;
  LayerNormParams final_ln;
  LinearParams mlm_head;  // hidden -> vocab
  int64_t vocab_size = 0;

  static LmParams init(const LmConfig& cfg, int64_t vocab_size, Rng& rng);
  NamedTensors named_parameters() const;  // checkpoint prefix "lm."
};

// Bidirectional forward pass: [len, vocab] logits, no attention mask.
Tensor lm_forward(const std::vector<int>& ids, const LmConfig& cfg,
                  const LmParams& params, Rng* dropout_rng = nullptr);

struct CorruptionResult {
  std::vector<int> ids;                   // corrupted copy of the input
  std::vector<int64_t> target_positions;  // positions to predict
  bool resampled = false;   // first draw selected nothing, seed was remixed
};

// BERT-style corruption: every non-special position is selected independently
// with probability mask_prob; selected positions become MASK with probability
// 0.8, a random non-special token with 0.1, and stay unchanged with 0.1.
// Selecting nothing triggers one reseeded retry before an empty result is
// allowed through (flagged via resampled + empty target_positions).
CorruptionResult mlm_corrupt(const std::vector<int>& ids, double mask_prob,
                             uint64_t seed, int64_t vocab_size);

struct MlmLossResult {
  Tensor loss;
  bool empty_targets = false;  // corruption selected nothing; loss is 0
  int64_t num_targets = 0;
};

// Wraps text in BOS/EOS, corrupts, and scores cross-entropy over the selected
// positions only.
MlmLossResult mlm_loss(const std::string& text, const LmConfig& cfg,
                       const LmParams& params, const LmTokenizer& tokenizer,
                       double mask_prob, uint64_t seed,
                       Rng* dropout_rng = nullptr);

// Masks every token whose decoder confidence falls below the threshold,
// re-predicts the masked positions with the LM, and substitutes the argmax
// symbols; repeats per line up to max_rounds or until a round changes
// nothing. Newlines are never touched and tokens at or above the threshold
// pass through verbatim. Lines whose LM encoding would exceed
// max_seq_length are left unrefined. confidences must align one-to-one with
// the text's codepoints (newlines included).
std::string refine(const std::string& text,
                   const std::vector<double>& confidences, double threshold,
                   int64_t max_rounds, const LmConfig& cfg,
                   const LmParams& params, const LmTokenizer& tokenizer,
                   int64_t* lm_calls = nullptr);

}  // namespace phtr
