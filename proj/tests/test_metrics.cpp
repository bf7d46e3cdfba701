#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "edit_script_oracle.hpp"
#include "phtr/metrics.hpp"
#include "phtr/rng.hpp"
#include "phtr/text.hpp"

using namespace phtr;

namespace {

std::string random_string(Rng& rng, int max_len, const std::string& alphabet) {
  const int len = static_cast<int>(rng.uniform_int(max_len + 1));
  std::string s;
  for (int i = 0; i < len; ++i) {
    s.push_back(alphabet[rng.uniform_int(alphabet.size())]);
  }
  return s;
}

Mask rect_mask(int64_t h, int64_t w, int64_t y0, int64_t x0, int64_t y1,
               int64_t x1) {
  Mask m(h, w);
  for (int64_t y = y0; y < y1; ++y) {
    for (int64_t x = x0; x < x1; ++x) m.at(y, x) = 1;
  }
  return m;
}

}  // namespace

TEST_CASE("levenshtein matches hand examples and the edit-script oracle") {
  CHECK(levenshtein("abc", "abc") == 0);
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("abc", "") == 3);
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(edit_distance_exhaustive("kitten", "sitting") == 3);

  Rng rng(2024);
  for (int i = 0; i < 500; ++i) {
    const std::string a = random_string(rng, 6, "abc");
    const std::string b = random_string(rng, 6, "abc");
    CHECK(levenshtein(a, b) == edit_distance_exhaustive(a, b));
  }
}

TEST_CASE("levenshtein is a metric on short random strings") {
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const std::string a = random_string(rng, 6, "xyz");
    const std::string b = random_string(rng, 6, "xyz");
    const std::string c = random_string(rng, 6, "xyz");
    const int64_t ab = levenshtein(a, b);
    CHECK(ab == levenshtein(b, a));
    CHECK((ab == 0) == (a == b));
    CHECK(ab <= levenshtein(a, c) + levenshtein(c, b));
  }
}

TEST_CASE("char tokens count codepoints with crlf folded to newline") {
  auto t = char_tokens("ab\r\ncd");
  CHECK(t.size() == 5);
  CHECK(t[2] == "\n");
  auto urdu = char_tokens("سلام");
  CHECK(urdu.size() == 4);
}

TEST_CASE("cer follows distance over ground-truth length") {
  CHECK(cer({{"hello\nworld", "hello\nworld"}}) == 0.0);
  CHECK(error_to_recognition(cer({{"same", "same"}})) == 100.0);

  const double quarter = cer({{"abcd", "abcX"}});
  CHECK(quarter == doctest::Approx(0.25));
  CHECK(error_to_recognition(quarter) == doctest::Approx(75.0));

  CHECK_THROWS_AS(cer({{"", ""}}), DataError);

  // Pooled CER equals the length-weighted mean of per-pair CERs.
  Rng rng(11);
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 20; ++i) {
    std::string gt = random_string(rng, 12, "abcde ");
    if (gt.empty()) gt = "a";
    pairs.push_back({gt, random_string(rng, 12, "abcde ")});
  }
  double weighted = 0.0, total_len = 0.0;
  for (const auto& p : pairs) {
    const double len = static_cast<double>(char_tokens(p.ground_truth).size());
    weighted += cer({p}) * len;
    total_len += len;
  }
  CHECK(cer(pairs) == doctest::Approx(weighted / total_len));

  // Order of pairs is irrelevant.
  std::vector<EvalPair> shuffled = pairs;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(cer(pairs) == doctest::Approx(cer(shuffled)));
}

TEST_CASE("wer treats punctuation as standalone words") {
  CHECK(word_tokens("hi, there") ==
        std::vector<std::string>{"hi", ",", "there"});
  CHECK(word_tokens("a،b") == std::vector<std::string>{"a", "،", "b"});
  CHECK(word_tokens("end۔") == std::vector<std::string>{"end", "۔"});
  CHECK(word_tokens("x।y ॥") ==
        std::vector<std::string>{"x", "।", "y", "॥"});

  CHECK(wer({{"hi, there", "hi, there"}}) == 0.0);
  CHECK(wer({{"a b c", "a x c"}}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(wer({{"  ", "words here"}}), DataError);

  // Idempotence: tokenizing rejoined tokens reproduces the tokens.
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    std::string text = random_string(rng, 16, "ab ,.!-");
    auto tokens = word_tokens(text);
    std::string rejoined;
    for (size_t k = 0; k < tokens.size(); ++k) {
      if (k) rejoined += " ";
      rejoined += tokens[k];
    }
    CHECK(word_tokens(rejoined) == tokens);
  }
}

TEST_CASE("ler pairs lines positionally in both modes") {
  CHECK(ler({{"one\ntwo", "one\ntwo"}}, LerMode::kNormalized) == 0.0);
  CHECK(ler({{"one\ntwo", "one\ntwo"}}, LerMode::kLiteral) == 0.0);

  // Per-line normalized errors 0.2 and 0.4 average to 0.3.
  CHECK(ler({{"abcde\nfghij", "abcdX\nfghXX"}}, LerMode::kNormalized) ==
        doctest::Approx(0.3));

  // Literal distances 3 and 5 average to 4.
  CHECK(ler({{"abc\nabcde", "xyz\nvwxyz"}}, LerMode::kLiteral) ==
        doctest::Approx(4.0));

  // Missing prediction lines pad as empty.
  CHECK(ler({{"ab\ncd", "ab"}}, LerMode::kNormalized) == doctest::Approx(0.5));
  CHECK(ler({{"ab", "ab\ncd"}}, LerMode::kLiteral) == doctest::Approx(1.0));

  CHECK_THROWS_AS(ler({}, LerMode::kNormalized), DataError);
}

TEST_CASE("iou covers the boundary cases") {
  Mask a = rect_mask(10, 10, 0, 0, 4, 4);
  CHECK(iou(a, a) == 1.0);

  Mask b = rect_mask(10, 10, 5, 5, 9, 9);
  CHECK(iou(a, b) == 0.0);
  CHECK(iou(b, a) == 0.0);

  // Equal-area 2x4 rectangles overlapping on half their area: I=4, U=12.
  Mask r1 = rect_mask(8, 8, 0, 0, 2, 4);
  Mask r2 = rect_mask(8, 8, 0, 2, 2, 6);
  CHECK(iou(r1, r2) == doctest::Approx(1.0 / 3.0));

  Mask empty1(5, 5), empty2(5, 5);
  CHECK(iou(empty1, empty2) == 1.0);

  CHECK_THROWS_AS(iou(Mask(3, 3), Mask(3, 4)), ShapeError);

  Rng rng(15);
  Mask x(6, 6), y(6, 6);
  for (auto& bit : x.bits) bit = rng.bernoulli(0.5) ? 1 : 0;
  for (auto& bit : y.bits) bit = rng.bernoulli(0.5) ? 1 : 0;
  const double v = iou(x, y);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  CHECK(iou(x, y) == iou(y, x));
}

TEST_CASE("map counts passing thresholds from 0.50 to 0.95") {
  Mask gt = rect_mask(10, 10, 0, 0, 2, 5);  // 10 ink pixels
  CHECK(map_over_thresholds({{gt, gt}}) == 1.0);

  Mask far = rect_mask(10, 10, 5, 0, 7, 5);
  CHECK(map_over_thresholds({{far, gt}}) == 0.0);

  // Prediction covering 8 of 10 ground-truth pixels: IoU exactly 0.80,
  // which clears thresholds 0.50 through 0.80 -> 7 of 10 -> 0.7.
  Mask eight = rect_mask(10, 10, 0, 0, 2, 4);
  CHECK(iou(eight, gt) == doctest::Approx(0.8));
  CHECK(map_over_thresholds({{eight, gt}}) == doctest::Approx(0.7));

  // 7 of 10 pixels: IoU exactly 0.70 clears 0.50-0.70 -> 5 of 10 -> 0.5.
  Mask seven = rect_mask(10, 10, 0, 0, 1, 5);
  seven.at(1, 0) = 1;
  seven.at(1, 1) = 1;
  CHECK(iou(seven, gt) == doctest::Approx(0.7));
  CHECK(map_over_thresholds({{seven, gt}}) == doctest::Approx(0.5));

  // Ground-truth ink weighting: a 30-pixel perfect page and a 10-pixel
  // failed page give per-threshold precision 30/40.
  Mask big_gt = rect_mask(10, 10, 0, 0, 3, 10);
  CHECK(map_over_thresholds({{big_gt, big_gt}, {far, gt}}) ==
        doctest::Approx(0.75));

  CHECK_THROWS_AS(map_over_thresholds({}), DataError);

  // Deleting predicted pixels never raises the score.
  Rng rng(17);
  Mask pred = rect_mask(12, 12, 2, 2, 9, 9);
  Mask truth = rect_mask(12, 12, 2, 2, 9, 9);
  double prev = map_over_thresholds({{pred, truth}});
  for (int round = 0; round < 6; ++round) {
    for (auto& bit : pred.bits) {
      if (bit && rng.bernoulli(0.15)) bit = 0;
    }
    const double now = map_over_thresholds({{pred, truth}});
    CHECK(now <= prev + 1e-12);
    prev = now;
  }
}

TEST_CASE("recognition rates clamp at zero") {
  CHECK(error_to_recognition(0.0) == 100.0);
  CHECK(std::abs(error_to_recognition(0.0376) - 96.24) < 1e-9);
  CHECK(error_to_recognition(1.5) == 0.0);
  CHECK_THROWS_AS(error_to_recognition(-0.1), DataError);
}

TEST_CASE("evaluate assembles a full report") {
  std::vector<EvalPair> pairs = {
      {"the cat\nsat here", "the cat\nsat here"},
      {"abcd", "abcX"},
  };
  EvalReport r = evaluate(pairs);
  CHECK(r.num_images == 2);
  CHECK(r.num_lines == 3);
  CHECK(r.per_sample.size() == 2);
  CHECK(r.per_sample[0].cer == 0.0);
  CHECK(r.per_sample[1].cer == doctest::Approx(0.25));
  CHECK(r.cer == doctest::Approx(1.0 / 20.0));
  CHECK(r.crr == doctest::Approx(100.0 * (1.0 - 1.0 / 20.0)));
  CHECK(r.wrr <= 100.0);
  CHECK(r.lrr <= 100.0);
  CHECK(r.ler_literal >= 0.0);
}
