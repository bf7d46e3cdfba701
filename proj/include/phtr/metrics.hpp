#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/errors.hpp"
#include "phtr/image.hpp"

namespace phtr {

struct EvalPair {
  std::string ground_truth;
  std::string prediction;
};

// Minimum insertions + deletions + substitutions, by dynamic programming.
int64_t levenshtein_tokens(const std::vector<std::string>& a,
                           const std::vector<std::string>& b);

// Codepoint-level distance on raw strings.
int64_t levenshtein(const std::string& a, const std::string& b);

// Character tokens for CER: UTF-8 codepoints with "\r\n" normalized to the
// single separator "\n".
std::vector<std::string> char_tokens(const std::string& text);

// Word tokens for WER: whitespace-separated, with punctuation codepoints
// split into standalone tokens ("hi, there" -> ["hi", ",", "there"]). The
// punctuation set is is_metric_punctuation (see docs/evaluation.md).
std::vector<std::string> word_tokens(const std::string& text);

// Sum of distances over sum of ground-truth lengths. Zero total ground-truth
// length -> DataError.
double cer(const std::vector<EvalPair>& pairs);
double wer(const std::vector<EvalPair>& pairs);

enum class LerMode {
  kNormalized,  // mean over lines of distance / max(1, gt line length)
  kLiteral,     // mean over lines of raw distance
};

// Lines pair positionally; the shorter side is padded with empty lines.
// Normalized mode feeds LRR; literal mode reports the raw mean distance.
double ler(const std::vector<EvalPair>& pairs,
           LerMode mode = LerMode::kNormalized);

// |intersection| / |union|; 1.0 when both masks are empty.
double iou(const Mask& a, const Mask& b);

struct MaskPair {
  Mask prediction;
  Mask ground_truth;
};

// Mean over IoU thresholds 0.50, 0.55, ..., 0.95 of the per-threshold
// precision, where precision is the fraction of samples with iou >= t
// weighted by ground-truth ink pixel count.
double map_over_thresholds(const std::vector<MaskPair>& pairs);

// max(0, 100 - 100 * rate)
double error_to_recognition(double rate);

struct SampleScores {
  double cer = 0.0;
  double wer = 0.0;
  double ler = 0.0;
};

struct EvalReport {
  double cer = 0.0;
  double wer = 0.0;
  double ler_normalized = 0.0;
  double ler_literal = 0.0;
  double crr = 0.0;
  double wrr = 0.0;
  double lrr = 0.0;
  int64_t num_images = 0;  // K
  int64_t num_lines = 0;   // N
  std::vector<SampleScores> per_sample;
};

EvalReport evaluate(const std::vector<EvalPair>& pairs);

}  // namespace phtr
