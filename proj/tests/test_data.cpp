#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "phtr/data.hpp"
#include "phtr/errors.hpp"
#include "phtr/render.hpp"
#include "phtr/sha256.hpp"
#include "temp_dir.hpp"

using namespace phtr;

namespace {

const std::vector<std::string> kCorpus = {
    "the cat", "a dog ran", "big red", "sun is up", "we go now", "old map",
};

std::string image_digest(const Image& img) {
  return Sha256::of_bytes(img.pixels.data(), img.pixels.size() * sizeof(double));
}

double mean_abs(const Image& img) {
  double acc = 0.0;
  for (double v : img.pixels) acc += std::abs(v);
  return acc / static_cast<double>(img.numel());
}

PageSample small_sample() {
  PageSample s;
  s.image = Image(24, 24, 1.0);
  for (int64_t y = 8; y < 16; ++y) {
    for (int64_t x = 4; x < 20; ++x) s.image.at(y, x) = 0.1;
  }
  s.text_mask = Mask(24, 24);
  for (int64_t y = 8; y < 16; ++y) {
    for (int64_t x = 4; x < 20; ++x) s.text_mask.at(y, x) = 1;
  }
  s.transcript = "x";
  s.style_id = 0;
  s.dpi = 300;
  return s;
}

}  // namespace

TEST_CASE("rendering is deterministic and produces ink") {
  const PageSample a = render_paragraph("the cat\nbig red", 3, 96, 77);
  const PageSample b = render_paragraph("the cat\nbig red", 3, 96, 77);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(a.text_mask.bits == b.text_mask.bits);
  CHECK(a.transcript == "the cat\nbig red");
  CHECK(a.style_id == 3);
  CHECK(a.dpi == 300);

  CHECK(a.text_mask.count() > 50);
  double lo = 1.0;
  double hi = 0.0;
  for (double v : a.image.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi == 1.0);
  CHECK(lo < 0.35);

  for (int64_t y = 0; y < 96; ++y) {
    for (int64_t x = 0; x < 96; ++x) {
      if (a.text_mask.at(y, x)) {
        CHECK(a.image.at(y, x) < 0.7);
      }
    }
  }

  const PageSample c = render_paragraph("the cat\nbig red", 3, 96, 78);
  CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("ten styles render the same text pairwise differently") {
  std::vector<std::string> digests;
  for (int64_t s = 0; s < 10; ++s) {
    digests.push_back(
        image_digest(render_paragraph("the cat\nbig red", s, 96, 5).image));
  }
  for (size_t i = 0; i < digests.size(); ++i) {
    for (size_t j = i + 1; j < digests.size(); ++j) {
      CHECK(digests[i] != digests[j]);
    }
  }
}

TEST_CASE("every supported glyph leaves ink") {
  for (const std::string& sym : glyph_alphabet()) {
    CHECK(glyph_supported(sym));
    if (sym == " ") continue;
    const PageSample page = render_paragraph(sym, 0, 64, 1);
    CHECK(page.text_mask.count() > 0);
  }
  CHECK(glyph_supported(" "));
  CHECK_FALSE(glyph_supported("A"));
  CHECK_FALSE(glyph_supported("é"));
}

TEST_CASE("render rejects bad inputs and names the offending line") {
  CHECK_THROWS_AS(render_paragraph("", 0, 96, 1), DataError);
  CHECK_THROWS_AS(render_paragraph("ok", 0, 16, 1), DataError);
  CHECK_THROWS_AS(render_paragraph("Hi", 0, 96, 1), DataError);

  try {
    render_paragraph("abc\nmmmmmmmmmmmmmmmmmmmmmmmm", 0, 96, 1);
    FAIL("expected horizontal overflow");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  try {
    render_paragraph("a\nb\nc\nd\ne", 0, 96, 1);
    FAIL("expected vertical overflow");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
}

TEST_CASE("trailing newline normalizes away in the transcript") {
  const PageSample page = render_paragraph("ab\ncd\n", 1, 96, 9);
  CHECK(page.transcript == "ab\ncd");
}

TEST_CASE("style parameters are deterministic and in range") {
  for (int64_t id = 0; id < 10; ++id) {
    const StrokeStyle a = style_from_id(id);
    const StrokeStyle b = style_from_id(id);
    CHECK(a.slant == b.slant);
    CHECK(a.thickness == b.thickness);
    CHECK(a.thickness >= 0.06);
    CHECK(a.thickness <= 0.11);
    CHECK(a.darkness >= 0.7);
    CHECK(a.darkness <= 1.0);
    CHECK(a.spacing >= 0.9);
    CHECK(a.spacing <= 1.08);
  }
}

TEST_CASE("elastic distortion is identity at alpha zero and stays in range") {
  Image img(20, 20);
  Rng rng(11);
  for (double& v : img.pixels) v = rng.uniform();

  const Image same = elastic_distort(img, 0.0, 4.0, 123);
  CHECK(same.pixels == img.pixels);

  const Image warped = elastic_distort(img, 30.0, 4.0, 123);
  double lo = 1e9;
  double hi = -1e9;
  for (double v : warped.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const auto [in_lo, in_hi] =
      std::minmax_element(img.pixels.begin(), img.pixels.end());
  CHECK(lo >= *in_lo - 1e-12);
  CHECK(hi <= *in_hi + 1e-12);

  const Image again = elastic_distort(img, 30.0, 4.0, 123);
  CHECK(again.pixels == warped.pixels);
}

TEST_CASE("mean elastic displacement grows with alpha") {
  double prev = -1.0;
  for (double alpha : {0.0, 5.0, 20.0, 60.0}) {
    const DisplacementField f = elastic_field(32, 32, alpha, 4.0, 99);
    const double mean = 0.5 * (mean_abs(f.dx) + mean_abs(f.dy));
    CHECK(mean > prev);
    prev = mean;
  }
  CHECK_THROWS_AS(elastic_field(8, 8, -1.0, 4.0, 1), DataError);
  CHECK_THROWS_AS(elastic_field(8, 8, 1.0, 0.0, 1), DataError);

  Image img(8, 8);
  const DisplacementField wrong = elastic_field(9, 8, 1.0, 2.0, 1);
  CHECK_THROWS_AS(warp_with_field(img, wrong), ShapeError);
}

TEST_CASE("perspective warp with zero shifts is the identity") {
  Image img(17, 23);
  Rng rng(4);
  for (double& v : img.pixels) v = rng.uniform();

  const std::array<double, 8> zero = {};
  CHECK(perspective_warp(img, zero).pixels == img.pixels);

  std::array<double, 8> shift = {};
  shift[0] = 0.05;
  shift[1] = 0.03;
  CHECK(perspective_warp(img, shift).pixels != img.pixels);
}

TEST_CASE("brightness and contrast apply the affine pixel map") {
  Image img(2, 2);
  img.pixels = {0.0, 0.25, 0.5, 1.0};
  const Image same = brightness_contrast(img, 0.0, 1.0);
  CHECK(same.pixels == img.pixels);

  const Image mapped = brightness_contrast(img, 0.1, 1.2);
  CHECK(mapped.pixels[2] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(mapped.pixels[1] == doctest::Approx(1.2 * (0.25 - 0.5) + 0.6).epsilon(1e-12));
  CHECK(mapped.pixels[3] == 1.0);

  const Image clamped = brightness_contrast(img, -0.9, 1.0);
  CHECK(clamped.pixels[0] == 0.0);
}

TEST_CASE("augmentation honors probabilities, seeds, and eval mode") {
  const PageSample base = small_sample();
  AugmentationPolicy off;
  off.prob_resolution = off.prob_perspective = off.prob_elastic = 0.0;
  off.prob_brightness = off.prob_contrast = 0.0;
  off.master_seed = 7;

  const PageSample same = augment(base, off, 0, AugmentMode::kTrain);
  CHECK(same.image.pixels == base.image.pixels);
  CHECK(same.text_mask.bits == base.text_mask.bits);
  CHECK(same.transcript == base.transcript);

  AugmentationPolicy on;
  on.master_seed = 7;
  const PageSample a = augment(base, on, 3, AugmentMode::kTrain);
  const PageSample b = augment(base, on, 3, AugmentMode::kTrain);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(a.text_mask.bits == b.text_mask.bits);
  CHECK(a.transcript == base.transcript);

  CHECK_THROWS_AS(augment(base, on, 3, AugmentMode::kEval), UsageError);

  AugmentationPolicy bad;
  bad.prob_elastic = 1.5;
  CHECK_THROWS_AS(augment(base, bad, 0, AugmentMode::kTrain), DataError);
}

TEST_CASE("each transform fires near its configured frequency") {
  const PageSample base = small_sample();
  AugmentationPolicy policy;
  policy.master_seed = 4242;
  const int n = 10000;
  int counts[5] = {};
  for (int i = 0; i < n; ++i) {
    AppliedTransforms fired;
    augment(base, policy, i, AugmentMode::kTrain, &fired);
    counts[0] += fired.resolution;
    counts[1] += fired.perspective;
    counts[2] += fired.elastic;
    counts[3] += fired.brightness;
    counts[4] += fired.contrast;
  }
  for (int c : counts) {
    CHECK(std::abs(c / static_cast<double>(n) - 0.2) <= 0.015);
  }
}

TEST_CASE("geometric transforms move mask and ink through the same path") {
  PageSample page = render_paragraph("the cat", 2, 96, 31);
  for (int64_t i = 0; i < page.image.numel(); ++i) {
    page.image.pixels[static_cast<size_t>(i)] =
        page.text_mask.bits[static_cast<size_t>(i)] ? 0.0 : 1.0;
  }

  AugmentationPolicy geo;
  geo.prob_resolution = geo.prob_perspective = geo.prob_elastic = 1.0;
  geo.prob_brightness = geo.prob_contrast = 0.0;
  geo.master_seed = 55;

  const PageSample out = augment(page, geo, 12, AugmentMode::kTrain);
  int64_t inter = 0;
  int64_t uni = 0;
  for (int64_t i = 0; i < out.image.numel(); ++i) {
    const bool ink = out.image.pixels[static_cast<size_t>(i)] <= 0.5;
    const bool mask = out.text_mask.bits[static_cast<size_t>(i)] != 0;
    inter += (ink && mask) ? 1 : 0;
    uni += (ink || mask) ? 1 : 0;
  }
  CHECK(uni > 0);
  CHECK(inter == uni);
}

TEST_CASE("preprocessing halves only above 200 dpi") {
  const PageSample page = render_paragraph("we go now", 1, 96, 13);
  const Image at300 = preprocess_page(page.image, 300, 64);
  const Image manual = resize_square(downsample_halve(page.image), 64);
  CHECK(at300.pixels == manual.pixels);

  const Image at200 = preprocess_page(page.image, 200, 64);
  const Image direct = resize_square(page.image, 64);
  CHECK(at200.pixels == direct.pixels);
  CHECK(at300.pixels != at200.pixels);
}

TEST_CASE("dataset split sizes follow floor plus largest remainder") {
  const SplitConfig standard;
  const SplitIndices s500 = split_dataset(500, standard, 1);
  CHECK(s500.train.size() == 350);
  CHECK(s500.test.size() == 100);
  CHECK(s500.validation.size() == 50);

  const SplitIndices s10 = split_dataset(10, standard, 1);
  CHECK(s10.train.size() == 7);
  CHECK(s10.test.size() == 2);
  CHECK(s10.validation.size() == 1);

  const SplitIndices s7 = split_dataset(7, standard, 1);
  CHECK(s7.train.size() == 5);
  CHECK(s7.test.size() == 1);
  CHECK(s7.validation.size() == 1);

  SplitConfig heldout;
  heldout.train = 6.0 / 7.0;
  heldout.test = 0.0;
  heldout.validation = 1.0 / 7.0;
  const SplitIndices s350 = split_dataset(350, heldout, 1);
  CHECK(s350.train.size() == 300);
  CHECK(s350.test.empty());
  CHECK(s350.validation.size() == 50);
}

TEST_CASE("dataset split is a deterministic partition") {
  const SplitConfig ratios;
  const SplitIndices a = split_dataset(53, ratios, 9);
  const SplitIndices b = split_dataset(53, ratios, 9);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.validation == b.validation);

  std::vector<int64_t> all;
  all.insert(all.end(), a.train.begin(), a.train.end());
  all.insert(all.end(), a.test.begin(), a.test.end());
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  std::sort(all.begin(), all.end());
  std::vector<int64_t> expected(53);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(all == expected);

  const SplitIndices c = split_dataset(53, ratios, 10);
  CHECK(a.train != c.train);

  CHECK_THROWS_AS(split_dataset(0, ratios, 1), DataError);
  SplitConfig bad;
  bad.train = 0.9;
  bad.test = 0.2;
  bad.validation = 0.1;
  CHECK_THROWS_AS(split_dataset(10, bad, 1), DataError);
}

TEST_CASE("page composition is deterministic and style-balanced") {
  RenderConfig cfg;
  cfg.pages = 20;
  cfg.styles = 10;
  cfg.canvas = 96;
  cfg.lines_min = 2;
  cfg.lines_max = 4;

  const std::vector<PageSample> a = compose_pages(kCorpus, cfg, 42);
  const std::vector<PageSample> b = compose_pages(kCorpus, cfg, 42);
  REQUIRE(a.size() == 20);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.pixels == b[i].image.pixels);
    CHECK(a[i].transcript == b[i].transcript);
    CHECK(a[i].style_id == static_cast<int64_t>(i % 10));
    const int64_t newlines =
        std::count(a[i].transcript.begin(), a[i].transcript.end(), '\n');
    CHECK(newlines >= 1);
    CHECK(newlines <= 3);
  }

  CHECK_THROWS_AS(compose_pages({}, cfg, 42), DataError);
}

TEST_CASE("dataset directory round-trips samples and checksums") {
  RenderConfig cfg;
  cfg.pages = 6;
  cfg.styles = 3;
  cfg.canvas = 96;
  cfg.lines_min = 2;
  cfg.lines_max = 3;
  const std::vector<PageSample> pages = compose_pages(kCorpus, cfg, 17);

  std::vector<DatasetEntry> entries;
  for (size_t i = 0; i < pages.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "page_%05zu", i);
    entries.push_back({id, pages[i]});
  }

  TempDir tmp;
  const std::string dir = tmp.str("split");
  write_dataset_split(dir, entries);

  const std::vector<DatasetEntry> loaded = load_dataset_split(dir);
  REQUIRE(loaded.size() == entries.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == entries[i].id);
    CHECK(loaded[i].sample.transcript == entries[i].sample.transcript);
    CHECK(loaded[i].sample.style_id == entries[i].sample.style_id);
    CHECK(loaded[i].sample.dpi == entries[i].sample.dpi);
    CHECK(loaded[i].sample.text_mask.bits == entries[i].sample.text_mask.bits);
    CHECK(loaded[i].sample.image.height == 96);
  }

  const std::string rewritten = tmp.str("rewritten");
  write_dataset_split(rewritten, loaded);
  CHECK(manifest_sha256(dir) == manifest_sha256(rewritten));

  std::vector<DatasetEntry> dup = {entries[0], entries[0]};
  CHECK_THROWS_AS(write_dataset_split(tmp.str("dup"), dup), DataError);
  CHECK_THROWS_AS(load_dataset_split(tmp.str("nothing")), DataError);

  std::ofstream corrupt(dir + "/page_00000.pgm",
                        std::ios::binary | std::ios::app);
  corrupt << "x";
  corrupt.close();
  CHECK_THROWS_AS(load_dataset_split(dir), DataError);
}

TEST_CASE("render and split pipeline reproduces byte-identical datasets") {
  RenderConfig cfg;
  cfg.pages = 8;
  cfg.styles = 4;
  cfg.canvas = 96;
  cfg.lines_min = 2;
  cfg.lines_max = 3;

  TempDir tmp;
  for (const char* run : {"run_a", "run_b"}) {
    const std::vector<PageSample> pages = compose_pages(kCorpus, cfg, 2026);
    const SplitIndices split =
        split_dataset(static_cast<int64_t>(pages.size()), SplitConfig{}, 2026);
    std::vector<DatasetEntry> train;
    for (int64_t idx : split.train) {
      char id[16];
      std::snprintf(id, sizeof(id), "page_%05lld",
                    static_cast<long long>(idx));
      train.push_back({id, pages[static_cast<size_t>(idx)]});
    }
    write_dataset_split(tmp.str(run), train);
  }
  CHECK(manifest_sha256(tmp.str("run_a")) == manifest_sha256(tmp.str("run_b")));
}
