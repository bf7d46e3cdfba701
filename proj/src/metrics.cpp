#include "phtr/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "phtr/text.hpp"

namespace phtr {

int64_t levenshtein_tokens(const std::vector<std::string>& a,
                           const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0) return static_cast<int64_t>(m);
  if (m == 0) return static_cast<int64_t>(n);
  std::vector<int64_t> prev(m + 1), curr(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    curr[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, sub});
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

int64_t levenshtein(const std::string& a, const std::string& b) {
  return levenshtein_tokens(utf8_codepoints(a), utf8_codepoints(b));
}

std::vector<std::string> char_tokens(const std::string& text) {
  std::string normalized;
  normalized.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    }
    normalized.push_back(text[i]);
  }
  return utf8_codepoints(normalized);
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (const auto& cp : utf8_codepoints(text)) {
    if (cp == " " || cp == "\t" || cp == "\n" || cp == "\r") {
      flush();
    } else if (is_metric_punctuation(cp)) {
      flush();
      tokens.push_back(cp);
    } else {
      current += cp;
    }
  }
  flush();
  return tokens;
}

double cer(const std::vector<EvalPair>& pairs) {
  int64_t total_dist = 0, total_len = 0;
  for (const auto& p : pairs) {
    const auto gt = char_tokens(p.ground_truth);
    total_dist += levenshtein_tokens(char_tokens(p.prediction), gt);
    total_len += static_cast<int64_t>(gt.size());
  }
  if (total_len == 0) {
    throw DataError("cer: total ground-truth length is zero");
  }
  return static_cast<double>(total_dist) / static_cast<double>(total_len);
}

double wer(const std::vector<EvalPair>& pairs) {
  int64_t total_dist = 0, total_words = 0;
  for (const auto& p : pairs) {
    const auto gt = word_tokens(p.ground_truth);
    total_dist += levenshtein_tokens(word_tokens(p.prediction), gt);
    total_words += static_cast<int64_t>(gt.size());
  }
  if (total_words == 0) {
    throw DataError("wer: ground truth contains no words");
  }
  return static_cast<double>(total_dist) / static_cast<double>(total_words);
}

namespace {

// Positionally paired lines, shorter side padded with empty lines.
std::vector<std::pair<std::string, std::string>> paired_lines(
    const EvalPair& p) {
  auto gt = split_lines(p.ground_truth);
  auto pred = split_lines(p.prediction);
  const size_t n = std::max(gt.size(), pred.size());
  gt.resize(n);
  pred.resize(n);
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < n; ++i) out.emplace_back(gt[i], pred[i]);
  return out;
}

}  // namespace

double ler(const std::vector<EvalPair>& pairs, LerMode mode) {
  double total = 0.0;
  int64_t lines = 0;
  for (const auto& p : pairs) {
    for (const auto& [gt_line, pred_line] : paired_lines(p)) {
      const auto gt = utf8_codepoints(gt_line);
      const int64_t d = levenshtein_tokens(utf8_codepoints(pred_line), gt);
      if (mode == LerMode::kNormalized) {
        total += static_cast<double>(d) /
                 static_cast<double>(std::max<int64_t>(
                     1, static_cast<int64_t>(gt.size())));
      } else {
        total += static_cast<double>(d);
      }
      ++lines;
    }
  }
  if (lines == 0) throw DataError("ler: no lines to score");
  return total / static_cast<double>(lines);
}

double iou(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("iou: mask shapes differ");
  }
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double map_over_thresholds(const std::vector<MaskPair>& pairs) {
  if (pairs.empty()) throw DataError("map_over_thresholds: no mask pairs");
  std::vector<double> ious;
  std::vector<double> weights;
  double total_weight = 0.0;
  for (const auto& p : pairs) {
    ious.push_back(iou(p.prediction, p.ground_truth));
    // Weight by ground-truth ink so blank pages cannot dominate the score.
    weights.push_back(static_cast<double>(p.ground_truth.count()));
    total_weight += weights.back();
  }
  if (total_weight == 0.0) {
    // All-blank ground truth: fall back to uniform sample weights.
    std::fill(weights.begin(), weights.end(), 1.0);
    total_weight = static_cast<double>(weights.size());
  }
  double sum_precision = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double t = static_cast<double>(50 + 5 * k) / 100.0;
    double passing = 0.0;
    for (size_t i = 0; i < ious.size(); ++i) {
      if (ious[i] >= t) passing += weights[i];
    }
    sum_precision += passing / total_weight;
  }
  return sum_precision / 10.0;
}

double error_to_recognition(double rate) {
  if (rate < 0.0) throw DataError("error_to_recognition: negative rate");
  return std::max(0.0, 100.0 - 100.0 * rate);
}

EvalReport evaluate(const std::vector<EvalPair>& pairs) {
  EvalReport r;
  r.num_images = static_cast<int64_t>(pairs.size());
  r.cer = cer(pairs);
  r.wer = wer(pairs);
  r.ler_normalized = ler(pairs, LerMode::kNormalized);
  r.ler_literal = ler(pairs, LerMode::kLiteral);
  r.crr = error_to_recognition(r.cer);
  r.wrr = error_to_recognition(r.wer);
  r.lrr = error_to_recognition(r.ler_normalized);
  for (const auto& p : pairs) {
    r.num_lines += static_cast<int64_t>(paired_lines(p).size());
    SampleScores s;
    s.cer = cer({p});
    s.wer = wer({p});
    s.ler = ler({p});
    r.per_sample.push_back(s);
  }
  return r;
}

}  // namespace phtr
