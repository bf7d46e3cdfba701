#include "phtr/lm.hpp"

#include <algorithm>
#include <span>
#include <string>

#include "phtr/errors.hpp"
#include "phtr/text.hpp"

namespace phtr {
namespace {

constexpr double kInitStddev = 0.02;
constexpr int kFirstSymbolId = LmTokenizer::kUnk + 1;

void check_sequence_length(int64_t len, const LmConfig& cfg) {
  if (len > cfg.max_seq_length) {
    throw ShapeError("sequence length " + std::to_string(len) +
                     " exceeds max_seq_length " +
                     std::to_string(cfg.max_seq_length));
  }
}

CorruptionResult corrupt_once(const std::vector<int>& ids, double mask_prob,
                              uint64_t seed, int64_t vocab_size) {
  CorruptionResult result;
  result.ids = ids;
  Rng rng(seed);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < kFirstSymbolId) continue;
    if (rng.uniform() >= mask_prob) continue;
    result.target_positions.push_back(static_cast<int64_t>(i));
    double branch = rng.uniform();
    if (branch < 0.8) {
      result.ids[i] = LmTokenizer::kMask;
    } else if (branch < 0.9) {
      result.ids[i] =
          kFirstSymbolId +
          static_cast<int>(rng.uniform_int(
              static_cast<uint64_t>(vocab_size - kFirstSymbolId)));
    }
  }
  return result;
}

int argmax_symbol(const Tensor& logits, int64_t row) {
  std::span<const double> data = logits.data();
  int64_t vocab = logits.shape()[1];
  const double* base = data.data() + row * vocab;
  int best = kFirstSymbolId;
  for (int64_t v = kFirstSymbolId + 1; v < vocab; ++v) {
    if (base[v] > base[best]) best = static_cast<int>(v);
  }
  return best;
}

}  // namespace

LmParams LmParams::init(const LmConfig& cfg, int64_t vocab_size, Rng& rng) {
  LmParams p;
  p.vocab_size = vocab_size;
  p.token_embed =
      Tensor::randn({vocab_size, cfg.hidden_size}, rng, kInitStddev, true);
  p.pos_embed = Tensor::randn({cfg.max_seq_length, cfg.hidden_size}, rng,
                              kInitStddev, true);
  for (int64_t i = 0; i < cfg.num_layers; ++i) {
    p.blocks.push_back(
        BlockParams::init(cfg.hidden_size, 4 * cfg.hidden_size, rng));
  }
  p.final_ln = LayerNormParams::init(cfg.hidden_size);
  p.mlm_head =
      LinearParams::init(cfg.hidden_size, vocab_size, rng, kInitStddev);
  return p;
}

NamedTensors LmParams::named_parameters() const {
  NamedTensors named;
  named.emplace_back("lm.token_embed", token_embed);
  named.emplace_back("lm.pos_embed", pos_embed);
  for (size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect("lm.block" + std::to_string(i), named);
  }
  final_ln.collect("lm.final_ln", named);
  mlm_head.collect("lm.head", named);
  return named;
}

Tensor lm_forward(const std::vector<int>& ids, const LmConfig& cfg,
                  const LmParams& params, Rng* dropout_rng) {
  if (ids.empty()) throw DataError("language model input is empty");
  check_sequence_length(static_cast<int64_t>(ids.size()), cfg);
  for (int id : ids) {
    if (id < 0 || id >= params.vocab_size) {
      throw ShapeError("token id " + std::to_string(id) +
                       " outside vocabulary of size " +
                       std::to_string(params.vocab_size));
    }
  }

  Tensor x = embedding_lookup(params.token_embed, std::span<const int>(ids));
  x = add(x, position_rows(params.pos_embed,
                           static_cast<int64_t>(ids.size())));
  if (dropout_rng != nullptr && cfg.dropout > 0.0) {
    x = dropout(x, cfg.dropout, true, dropout_rng->next_u64());
  }
  for (const auto& block : params.blocks) {
    x = transformer_block(x, block, cfg.num_heads, nullptr, cfg.dropout,
                          dropout_rng);
  }
  x = params.final_ln.forward(x);
  return params.mlm_head.forward(x);
}

CorruptionResult mlm_corrupt(const std::vector<int>& ids, double mask_prob,
                             uint64_t seed, int64_t vocab_size) {
  if (!(mask_prob > 0.0) || !(mask_prob < 1.0)) {
    throw DataError("mask probability must lie in (0, 1), got " +
                    std::to_string(mask_prob));
  }
  if (vocab_size <= kFirstSymbolId) {
    throw DataError("vocabulary has no maskable symbols");
  }
  CorruptionResult result = corrupt_once(ids, mask_prob, seed, vocab_size);
  if (result.target_positions.empty()) {
    result = corrupt_once(ids, mask_prob, Rng::mix(seed, 1), vocab_size);
    result.resampled = true;
  }
  return result;
}

MlmLossResult mlm_loss(const std::string& text, const LmConfig& cfg,
                       const LmParams& params, const LmTokenizer& tokenizer,
                       double mask_prob, uint64_t seed, Rng* dropout_rng) {
  std::vector<int> ids;
  ids.push_back(LmTokenizer::kBos);
  for (int id : tokenizer.encode(text)) ids.push_back(id);
  ids.push_back(LmTokenizer::kEos);
  check_sequence_length(static_cast<int64_t>(ids.size()), cfg);

  CorruptionResult corruption =
      mlm_corrupt(ids, mask_prob, seed, params.vocab_size);

  MlmLossResult result;
  result.num_targets = static_cast<int64_t>(corruption.target_positions.size());
  if (corruption.target_positions.empty()) {
    result.loss = Tensor::scalar(0.0);
    result.empty_targets = true;
    return result;
  }

  std::vector<int> targets(ids.size(), LmTokenizer::kPad);
  for (int64_t pos : corruption.target_positions) {
    targets[static_cast<size_t>(pos)] = ids[static_cast<size_t>(pos)];
  }
  Tensor logits = lm_forward(corruption.ids, cfg, params, dropout_rng);
  result.loss = cross_entropy(logits, std::span<const int>(targets),
                              LmTokenizer::kPad);
  return result;
}

std::string refine(const std::string& text,
                   const std::vector<double>& confidences, double threshold,
                   int64_t max_rounds, const LmConfig& cfg,
                   const LmParams& params, const LmTokenizer& tokenizer,
                   int64_t* lm_calls) {
  std::vector<std::string> tokens = utf8_codepoints(text);
  if (tokens.size() != confidences.size()) {
    throw DataError("confidence count " + std::to_string(confidences.size()) +
                    " does not match token count " +
                    std::to_string(tokens.size()));
  }
  if (lm_calls != nullptr) *lm_calls = 0;

  size_t line_start = 0;
  for (size_t i = 0; i <= tokens.size(); ++i) {
    bool at_break = (i == tokens.size()) || tokens[i] == "\n";
    if (!at_break) continue;

    std::vector<size_t> low;
    for (size_t j = line_start; j < i; ++j) {
      if (confidences[j] < threshold) low.push_back(j);
    }
    if (!low.empty() && max_rounds > 0) {
      int64_t lm_len = static_cast<int64_t>(i - line_start) + 2;
      if (lm_len <= cfg.max_seq_length) {
        for (int64_t round = 0; round < max_rounds; ++round) {
          std::vector<int> ids;
          ids.reserve(static_cast<size_t>(lm_len));
          ids.push_back(LmTokenizer::kBos);
          size_t next_low = 0;
          for (size_t j = line_start; j < i; ++j) {
            if (next_low < low.size() && low[next_low] == j) {
              ids.push_back(LmTokenizer::kMask);
              ++next_low;
            } else {
              ids.push_back(tokenizer.encode(tokens[j]).front());
            }
          }
          ids.push_back(LmTokenizer::kEos);

          Tensor logits;
          {
            TapeSuspend suspend;
            logits = lm_forward(ids, cfg, params, nullptr);
          }
          if (lm_calls != nullptr) ++(*lm_calls);

          bool changed = false;
          for (size_t j : low) {
            int64_t row = 1 + static_cast<int64_t>(j - line_start);
            const std::string& symbol =
                tokenizer.symbol_of(argmax_symbol(logits, row));
            if (tokens[j] != symbol) {
              tokens[j] = symbol;
              changed = true;
            }
          }
          if (!changed) break;
        }
      }
    }
    line_start = i + 1;
  }

  std::string out;
  for (const std::string& token : tokens) out += token;
  return out;
}

}  // namespace phtr
