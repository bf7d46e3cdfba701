#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "phtr/commands.hpp"
#include "phtr/config.hpp"
#include "phtr/errors.hpp"

namespace {

void print_pretrain(const char* what, const phtr::PretrainOutcome& out) {
  std::cout << what << ": " << out.steps_run << " step(s)";
  if (out.steps_run > 0) {
    std::cout << ", loss " << out.first_loss << " -> " << out.final_loss;
  }
  std::cout << "\ncheckpoint: " << out.checkpoint_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation-free paragraph handwriting recognition"};
  app.require_subcommand(1);

  std::string scale = "desk";
  std::string config_path;
  uint64_t seed = 0;
  app.add_option("--scale", scale, "Preset: desk (tiny, CPU) or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  auto* config_opt =
      app.add_option("--config", config_path, "Key-value config file");
  auto* seed_opt = app.add_option("--seed", seed, "Master random seed");

  CLI::App* render = app.add_subcommand(
      "render", "Render a synthetic paragraph dataset from the corpus");
  render->fallthrough();

  bool enc_resume = false;
  CLI::App* pretrain_encoder = app.add_subcommand(
      "pretrain-encoder", "Masked-image-modeling encoder pre-training");
  pretrain_encoder->fallthrough();
  pretrain_encoder->add_flag("--resume", enc_resume,
                             "Continue from the existing checkpoint");

  bool lm_resume = false;
  CLI::App* pretrain_lm = app.add_subcommand(
      "pretrain-lm", "Masked-language-model refiner pre-training");
  pretrain_lm->fallthrough();
  pretrain_lm->add_flag("--resume", lm_resume,
                        "Continue from the existing checkpoint");

  bool train_resume = false;
  bool cold_start = false;
  CLI::App* train = app.add_subcommand(
      "train", "Joint encoder + decoder fine-tuning");
  train->fallthrough();
  train->add_flag("--resume", train_resume,
                  "Continue from the joint checkpoint");
  train->add_flag("--cold-start", cold_start,
                  "Initialize fresh weights instead of loading pre-trained "
                  "checkpoints");

  std::string infer_input;
  std::string infer_out;
  bool refine_output = false;
  std::string decode_strategy;
  int64_t beam_width = 0;
  double alpha = 0.0;
  double top_p = 0.0;
  double temperature = 0.0;
  CLI::App* infer = app.add_subcommand(
      "infer", "Transcribe an image file or dataset directory");
  infer->fallthrough();
  infer->add_option("input", infer_input, "Image file or dataset directory")
      ->required();
  infer->add_option("--out", infer_out, "Output directory for predictions")
      ->required();
  infer->add_flag("--refine", refine_output,
                  "Run the masked-LM refiner over low-confidence tokens");
  auto* decode_opt =
      infer->add_option("--decode", decode_strategy,
                        "Decoding strategy: greedy, beam, or nucleus")
          ->check(CLI::IsMember({"greedy", "beam", "nucleus"}));
  auto* beam_opt =
      infer->add_option("--beam-width", beam_width, "Beam search width");
  auto* alpha_opt = infer->add_option(
      "--alpha", alpha, "Beam length-normalization exponent");
  auto* top_p_opt =
      infer->add_option("--top-p", top_p, "Nucleus probability mass");
  auto* temperature_opt = infer->add_option("--temperature", temperature,
                                            "Nucleus softmax temperature");

  std::string predictions_dir;
  std::string ground_truth_dir;
  std::string split_label = "validation";
  CLI::App* eval = app.add_subcommand(
      "eval", "Score a predictions directory against ground truth");
  eval->fallthrough();
  eval->add_option("predictions", predictions_dir, "Predictions directory")
      ->required();
  eval->add_option("ground_truth", ground_truth_dir,
                   "Ground-truth dataset directory")
      ->required();
  eval->add_option("--split", split_label,
                   "Row label for the report (e.g. validation, test)");

  CLI::App* report = app.add_subcommand(
      "report", "Assemble evaluation results and the run log into a report");
  report->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    phtr::ExperimentConfig cfg = phtr::config_for_scale(scale);
    if (config_opt->count() > 0) phtr::apply_config_file(cfg, config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (decode_opt->count() > 0) cfg.decode.strategy = decode_strategy;
    if (beam_opt->count() > 0) cfg.decode.beam_width = beam_width;
    if (alpha_opt->count() > 0) cfg.decode.length_norm_alpha = alpha;
    if (top_p_opt->count() > 0) cfg.decode.top_p = top_p;
    if (temperature_opt->count() > 0) cfg.decode.temperature = temperature;

    if (render->parsed()) {
      const phtr::RenderOutcome out = phtr::cmd_render(cfg);
      std::cout << "rendered "
                << out.train_pages + out.test_pages + out.validation_pages
                << " page(s) into '" << out.dataset_dir
                << "' (train/test/validation = " << out.train_pages << "/"
                << out.test_pages << "/" << out.validation_pages << ")\n";
    } else if (pretrain_encoder->parsed()) {
      print_pretrain("pretrain-encoder",
                     phtr::cmd_pretrain_encoder(cfg, enc_resume));
    } else if (pretrain_lm->parsed()) {
      print_pretrain("pretrain-lm", phtr::cmd_pretrain_lm(cfg, lm_resume));
    } else if (train->parsed()) {
      const phtr::TrainOutcome out =
          phtr::cmd_train(cfg, train_resume, cold_start);
      std::cout << "train: " << out.steps_run << " step(s), final loss "
                << out.final_train_loss << "\n";
      if (out.has_validation) {
        std::cout << "validation: CER " << out.val_cer << ", WER "
                  << out.val_wer << ", LER " << out.val_ler << "\n";
      }
      std::cout << "checkpoint: " << out.checkpoint_path << "\n";
    } else if (infer->parsed()) {
      const phtr::InferOutcome out =
          phtr::cmd_infer(cfg, infer_input, infer_out, refine_output);
      std::cout << "transcribed " << out.transcribed << " image(s)";
      if (out.failed > 0) std::cout << ", " << out.failed << " failed";
      std::cout << " -> '" << out.output_dir << "'\n";
      if (out.transcribed == 0) {
        std::cerr << "no image could be transcribed; see "
                  << out.output_dir << "/transcriptions.json\n";
        return 2;
      }
    } else if (eval->parsed()) {
      const phtr::EvalOutcome out =
          phtr::cmd_eval(cfg, predictions_dir, ground_truth_dir, split_label);
      std::cout << out.table;
    } else if (report->parsed()) {
      std::cout << "report: " << phtr::cmd_report(cfg) << "\n";
    }
    return 0;
  } catch (const phtr::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const phtr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const phtr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const phtr::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
