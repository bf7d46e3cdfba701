#pragma once

#include <cstdint>
#include <string>

#include "phtr/config.hpp"
#include "phtr/metrics.hpp"

namespace phtr {

// Filesystem-facing implementations of the CLI subcommands. Every command
// appends one JSON line to <report_dir>/run_manifest.jsonl recording the
// command name, seed, config hash, content hashes of its inputs and outputs,
// headline metrics, and wall-clock seconds. Commands report failure by
// throwing: UsageError for bad invocations, DataError for missing or
// malformed files, NumericError for non-finite results. The CLI driver maps
// those to exit codes 1, 2, and 3.

struct RenderOutcome {
  std::string dataset_dir;
  int64_t train_pages = 0;
  int64_t test_pages = 0;
  int64_t validation_pages = 0;
  std::string train_manifest_sha256;
};

// Renders cfg.render.pages synthetic pages from the corpus file, splits them
// per cfg.split, and writes train/test/validation dataset directories.
RenderOutcome cmd_render(const ExperimentConfig& cfg);

struct PretrainOutcome {
  std::string checkpoint_path;
  int64_t steps_run = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

// Masked-image-modeling pre-training of the encoder on the train split.
// resume restores parameters and optimizer state from the existing
// checkpoint and extends the run to the configured budget.
PretrainOutcome cmd_pretrain_encoder(const ExperimentConfig& cfg, bool resume);

// Masked-language-model pre-training of the refiner on the corpus file.
PretrainOutcome cmd_pretrain_lm(const ExperimentConfig& cfg, bool resume);

struct TrainOutcome {
  std::string checkpoint_path;
  int64_t steps_run = 0;
  double final_train_loss = 0.0;
  bool has_validation = false;
  double val_cer = 0.0;
  double val_wer = 0.0;
  double val_ler = 0.0;
};

// Joint encoder + decoder fine-tuning from the pre-trained checkpoints.
// cold_start initializes the encoder instead and trains without a language
// model; resume continues a previous fine-tuning run from its joint
// checkpoint. The language model joins the optimizer only when
// cfg.train.freeze_lm is false.
TrainOutcome cmd_train(const ExperimentConfig& cfg, bool resume,
                       bool cold_start);

struct InferOutcome {
  std::string output_dir;
  int64_t transcribed = 0;
  int64_t failed = 0;
};

// Transcribes one image file or every image of a dataset directory with the
// configured decode strategy, writing <id>.txt predictions plus a
// transcriptions.json with per-codepoint confidences. Unreadable images are
// recorded as per-file errors and the batch continues. refine_output runs
// the masked-LM refiner over low-confidence tokens.
InferOutcome cmd_infer(const ExperimentConfig& cfg,
                       const std::string& input_path,
                       const std::string& output_dir, bool refine_output);

struct EvalOutcome {
  std::string report_path;
  std::string table;
  EvalReport report;
};

// Scores a predictions directory against a ground-truth dataset directory,
// pairing <id>.txt files. split_label names the output files
// (eval_<label>.json / .txt) and the table row.
EvalOutcome cmd_eval(const ExperimentConfig& cfg,
                     const std::string& predictions_dir,
                     const std::string& ground_truth_dir,
                     const std::string& split_label);

// Collects eval_validation / eval_test results and the run manifest into a
// single human-readable report; returns the report path.
std::string cmd_report(const ExperimentConfig& cfg);

}  // namespace phtr
