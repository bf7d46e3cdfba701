#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "phtr/config.hpp"
#include "phtr/image.hpp"
#include "phtr/render.hpp"

namespace phtr {

// Training-time augmentation parameters. Five independent transforms, each
// gated by its own probability; geometric ones are applied identically to the
// ink mask. All randomness derives from (master_seed, sample_index).
struct AugmentationPolicy {
  double prob_resolution = 0.2;
  double prob_perspective = 0.2;
  double prob_elastic = 0.2;
  double prob_brightness = 0.2;
  double prob_contrast = 0.2;
  double perspective_max_shift = 0.08;  // corner displacement, fraction of side
  double elastic_alpha = 40.0;          // displacement scale
  double elastic_sigma = 4.0;           // smoothing std, pixels
  double brightness_delta = 0.2;        // b drawn from [-delta, delta]
  double contrast_lo = 0.8;             // c drawn from [lo, hi]
  double contrast_hi = 1.2;
  double resolution_lo = 1.2;           // down-up scale factor range
  double resolution_hi = 2.0;
  uint64_t master_seed = 0;

  void validate() const;  // throws DataError on out-of-range parameters
};

enum class AugmentMode { kTrain, kEval };

// Which transforms fired for one sample; used for frequency audits.
struct AppliedTransforms {
  bool resolution = false;
  bool perspective = false;
  bool elastic = false;
  bool brightness = false;
  bool contrast = false;
};

// Applies the five transforms, each with its policy probability, seeded by
// (master_seed, sample_index). Geometric transforms warp image and mask
// through the same sampled parameters; the transcript is never touched.
// Throws UsageError in eval mode and DataError on invalid policies.
PageSample augment(const PageSample& sample, const AugmentationPolicy& policy,
                   int64_t sample_index, AugmentMode mode,
                   AppliedTransforms* applied = nullptr);

// Smoothed random displacement field (dx, dy in pixels), already scaled by
// alpha. alpha = 0 yields all-zero fields.
struct DisplacementField {
  Image dx;
  Image dy;
};
DisplacementField elastic_field(int64_t height, int64_t width, double alpha,
                                double sigma, uint64_t seed);
Image warp_with_field(const Image& img, const DisplacementField& field);
Image elastic_distort(const Image& img, double alpha, double sigma,
                      uint64_t seed);

// Corner displacements as fractions of the image side, in order
// top-left, top-right, bottom-right, bottom-left; each entry (dx, dy).
Image perspective_warp(const Image& img,
                       const std::array<double, 8>& corner_shift);

// Maps pixels v -> clamp(c * (v - 0.5) + 0.5 + b, 0, 1).
Image brightness_contrast(const Image& img, double b, double c);

// Halves resolution when the source dpi tag is above 200, then pads to a
// square and resizes to the encoder input size.
Image preprocess_page(const Image& img, int64_t dpi, int64_t target);

// Deterministic shuffle split with floor-then-largest-remainder sizing, ties
// resolved in (train, test, validation) order. Indices are sorted within each
// split. Throws DataError on an empty dataset or invalid ratios.
struct SplitIndices {
  std::vector<int64_t> train;
  std::vector<int64_t> test;
  std::vector<int64_t> validation;
};
SplitIndices split_dataset(int64_t count, const SplitConfig& ratios,
                           uint64_t seed);

// Renders a deterministic corpus-sampled page set: per page, a round-robin
// style, a line count in [lines_min, lines_max], and uniformly drawn corpus
// lines. Throws DataError when a sampled page cannot fit its lines.
std::vector<PageSample> compose_pages(const std::vector<std::string>& corpus,
                                      const RenderConfig& cfg, uint64_t seed);

// On-disk split layout: <dir>/page_00000.pgm, page_00000_mask.pgm,
// page_00000.txt, plus manifest.jsonl sorted by id with per-image sha256.
struct DatasetEntry {
  std::string id;
  PageSample sample;
};
void write_dataset_split(const std::string& dir,
                         const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> load_dataset_split(const std::string& dir);
std::string manifest_sha256(const std::string& dir);

}  // namespace phtr
