#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/errors.hpp"

namespace phtr {

struct EncoderConfig {
  int64_t image_size = 96;
  int64_t finetune_image_size = 96;
  int64_t patch_size = 8;
  int64_t hidden_size = 64;
  int64_t num_layers = 2;
  int64_t num_heads = 4;
  int64_t intermediate_size = 256;
  int64_t encoder_stride = 8;
  // Present for generality; the pipeline is grayscale, so only 1 is accepted.
  int64_t num_channels = 1;
  double dropout = 0.0;
  double mask_ratio = 0.4;

  int64_t num_patches() const {
    const int64_t side = image_size / patch_size;
    return side * side;
  }
};

struct DecoderConfig {
  int64_t num_layers = 4;
  int64_t hidden_size = 64;
  int64_t num_heads = 4;
  int64_t intermediate_size = 256;
  int64_t max_output_length = 160;
  double dropout = 0.0;
};

struct LmConfig {
  int64_t num_layers = 2;
  int64_t hidden_size = 64;
  int64_t num_heads = 4;
  int64_t max_seq_length = 160;
  double dropout = 0.0;
  // 0 means "derive from the corpus alphabet"; the paper preset pins 50026.
  int64_t vocab_size = 0;
};

struct TrainConfig {
  double lr = 1e-3;
  int64_t batch_size = 4;
  int64_t epochs = 10;
  int64_t steps = 0;  // 0: drive by epochs; otherwise a hard step budget
  std::string ss_schedule = "linear";  // or "inverse_sigmoid"
  double ss_floor = 0.5;
  double mlm_mask_prob = 0.15;
  bool freeze_lm = true;
  bool augment = false;
};

struct DecodeConfig {
  std::string strategy = "greedy";  // greedy | beam | nucleus
  int64_t beam_width = 4;
  double length_norm_alpha = 0.7;
  double top_p = 0.9;
  double temperature = 1.0;
};

struct RefineConfig {
  double threshold = 0.5;
  int64_t max_rounds = 2;
};

struct RenderConfig {
  int64_t pages = 500;
  int64_t styles = 10;
  int64_t canvas = 192;
  int64_t dpi = 300;
  int64_t lines_min = 2;
  int64_t lines_max = 4;
};

struct SplitConfig {
  double train = 0.70;
  double test = 0.20;
  double validation = 0.10;
};

struct ExperimentConfig {
  std::string scale = "desk";  // desk | paper
  uint64_t seed = 42;
  std::string precision = "f64";  // checkpoint storage dtype: f64 | f32

  std::string dataset_dir = "data";
  std::string checkpoint_dir = "ckpt";
  std::string report_dir = "reports";
  std::string corpus_path = "assets/corpus.txt";

  EncoderConfig enc;
  DecoderConfig dec;
  LmConfig lm;
  TrainConfig train;
  DecodeConfig decode;
  RefineConfig refine;
  RenderConfig render;
  SplitConfig split;

  // Throws UsageError when any structural invariant is violated
  // (divisibility, ranges, unknown enum strings).
  void validate() const;
};

// Applies the named preset over the defaults. "desk" is the tiny CPU-scale
// configuration; "paper" instantiates the published architecture constants.
ExperimentConfig config_for_scale(const std::string& scale);

// Flat "key = value" file, '#' comments, blank lines ignored. Unknown keys
// are rejected. Keys and types are listed in docs/config_schema.md.
void apply_config_file(ExperimentConfig& cfg, const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                       const std::string& value);

// Every known key with its current value, for hashing and `report`.
std::vector<std::pair<std::string, std::string>> config_items(
    const ExperimentConfig& cfg);

// Hard assertion of the published architecture constants; throws
// std::logic_error naming the first mismatch. Called whenever scale=paper
// is instantiated.
void assert_paper_constants(const ExperimentConfig& cfg);

}  // namespace phtr
