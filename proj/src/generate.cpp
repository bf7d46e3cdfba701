#include "phtr/generate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "phtr/errors.hpp"
#include "phtr/rng.hpp"

namespace phtr {
namespace {

std::vector<double> softmax_vec(const std::vector<double>& logits) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double v : logits) max_logit = std::max(max_logit, v);
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

int argmax_lowest(const std::vector<double>& values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void check_limits(const GenerationLimits& limits) {
  if (limits.max_tokens < 1) {
    throw UsageError("generation limit must allow at least one token");
  }
}

struct Hypothesis {
  std::vector<int> ids;
  std::vector<double> confidences;
  double log_prob = 0.0;
  bool finished = false;
};

double normalized_score(const Hypothesis& hyp, double alpha) {
  double length = static_cast<double>(std::max<size_t>(hyp.ids.size(), 1));
  return hyp.log_prob / std::pow(length, alpha);
}

}  // namespace

GeneratedSequence generate_greedy(const StepScorer& scorer,
                                  const GenerationLimits& limits) {
  check_limits(limits);
  GeneratedSequence out;
  std::vector<int> prefix = {limits.bos_id};
  for (int64_t step = 0; step < limits.max_tokens; ++step) {
    std::vector<double> probs = softmax_vec(scorer(prefix));
    int chosen = argmax_lowest(probs);
    out.ids.push_back(chosen);
    out.confidences.push_back(probs[chosen]);
    out.score += std::log(probs[chosen]);
    if (chosen == limits.eos_id) return out;
    prefix.push_back(chosen);
  }
  out.truncated = true;
  return out;
}

GeneratedSequence generate_beam(const StepScorer& scorer,
                                const GenerationLimits& limits, int width,
                                double alpha) {
  check_limits(limits);
  if (width < 1) throw UsageError("beam width must be at least 1");

  std::vector<Hypothesis> active = {Hypothesis{}};
  std::vector<Hypothesis> completed;

  for (int64_t step = 0; step < limits.max_tokens && !active.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& hyp : active) {
      std::vector<int> prefix;
      prefix.reserve(hyp.ids.size() + 1);
      prefix.push_back(limits.bos_id);
      prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
      std::vector<double> probs = softmax_vec(scorer(prefix));
      for (int token = 0; token < static_cast<int>(probs.size()); ++token) {
        Hypothesis next = hyp;
        next.ids.push_back(token);
        next.confidences.push_back(probs[token]);
        next.log_prob += std::log(probs[token]);
        next.finished = (token == limits.eos_id);
        candidates.push_back(std::move(next));
      }
    }
    // All candidates share the same length, so raw log-probability ordering
    // matches the normalized one; ties resolve toward lexicographically
    // smaller token sequences for determinism.
    std::sort(candidates.begin(), candidates.end(),
              [](const Hypothesis& a, const Hypothesis& b) {
                if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                return a.ids < b.ids;
              });
    if (candidates.size() > static_cast<size_t>(width)) {
      candidates.resize(static_cast<size_t>(width));
    }
    active.clear();
    for (Hypothesis& cand : candidates) {
      if (cand.finished) {
        completed.push_back(std::move(cand));
      } else {
        active.push_back(std::move(cand));
      }
    }
  }

  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  auto consider = [&](const Hypothesis& hyp) {
    double score = normalized_score(hyp, alpha);
    if (best == nullptr || score > best_score ||
        (score == best_score && hyp.finished && !best->finished) ||
        (score == best_score && hyp.finished == best->finished &&
         hyp.ids < best->ids)) {
      best = &hyp;
      best_score = score;
    }
  };
  for (const Hypothesis& hyp : completed) consider(hyp);
  for (const Hypothesis& hyp : active) consider(hyp);
  if (best == nullptr) throw NumericError("beam search produced no hypothesis");

  GeneratedSequence out;
  out.ids = best->ids;
  out.confidences = best->confidences;
  out.truncated = !best->finished;
  out.score = best_score;
  return out;
}

GeneratedSequence generate_nucleus(const StepScorer& scorer,
                                   const GenerationLimits& limits, double top_p,
                                   double temperature, uint64_t seed) {
  check_limits(limits);
  if (!(top_p > 0.0) || top_p > 1.0) {
    throw UsageError("top_p must lie in (0, 1], got " + std::to_string(top_p));
  }
  if (!(temperature > 0.0)) {
    throw UsageError("temperature must be positive, got " +
                     std::to_string(temperature));
  }

  Rng rng(seed);
  GeneratedSequence out;
  std::vector<int> prefix = {limits.bos_id};
  for (int64_t step = 0; step < limits.max_tokens; ++step) {
    std::vector<double> logits = scorer(prefix);
    for (double& v : logits) v /= temperature;
    std::vector<double> probs = softmax_vec(logits);

    std::vector<int> order(probs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (probs[a] != probs[b]) return probs[a] > probs[b];
      return a < b;
    });

    size_t nucleus_size = order.size();
    double cumulative = 0.0;
    for (size_t i = 0; i < order.size(); ++i) {
      cumulative += probs[order[i]];
      if (cumulative >= top_p) {
        nucleus_size = i + 1;
        break;
      }
    }
    double nucleus_mass = 0.0;
    for (size_t i = 0; i < nucleus_size; ++i) nucleus_mass += probs[order[i]];

    double u = rng.uniform() * nucleus_mass;
    int chosen = order[nucleus_size - 1];
    double cdf = 0.0;
    for (size_t i = 0; i < nucleus_size; ++i) {
      cdf += probs[order[i]];
      if (u < cdf) {
        chosen = order[i];
        break;
      }
    }

    out.ids.push_back(chosen);
    out.confidences.push_back(probs[chosen]);
    out.score += std::log(probs[chosen]);
    if (chosen == limits.eos_id) return out;
    prefix.push_back(chosen);
  }
  out.truncated = true;
  return out;
}

}  // namespace phtr
