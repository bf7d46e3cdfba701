#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "phtr/checkpoint.hpp"
#include "phtr/commands.hpp"
#include "phtr/config.hpp"
#include "phtr/data.hpp"
#include "phtr/errors.hpp"

using namespace phtr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_root(const std::string& name) {
  const fs::path root = fs::temp_directory_path() / "phtr_cli_tests" / name;
  fs::remove_all(root);
  fs::create_directories(root);
  return root;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return text;
}

std::vector<std::string> file_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Small everything: 32px images (16 patches), single-layer towers, a
// six-page three-style dataset. Each case works in its own scratch root.
ExperimentConfig tiny_config(const fs::path& root) {
  ExperimentConfig cfg = config_for_scale("desk");
  cfg.seed = 11;
  cfg.dataset_dir = (root / "data").string();
  cfg.checkpoint_dir = (root / "ckpt").string();
  cfg.report_dir = (root / "reports").string();
  cfg.corpus_path = (root / "corpus.txt").string();
  cfg.enc.image_size = 32;
  cfg.enc.finetune_image_size = 32;
  cfg.enc.hidden_size = 16;
  cfg.enc.num_layers = 1;
  cfg.enc.num_heads = 2;
  cfg.enc.intermediate_size = 32;
  cfg.dec.hidden_size = 16;
  cfg.dec.num_layers = 1;
  cfg.dec.num_heads = 2;
  cfg.dec.intermediate_size = 32;
  cfg.dec.max_output_length = 48;
  cfg.lm.hidden_size = 16;
  cfg.lm.num_layers = 1;
  cfg.lm.num_heads = 2;
  cfg.lm.max_seq_length = 48;
  cfg.train.lr = 1e-3;
  cfg.train.batch_size = 2;
  cfg.train.epochs = 1;
  cfg.render.pages = 6;
  cfg.render.styles = 3;
  cfg.render.canvas = 64;
  cfg.render.lines_min = 1;
  cfg.render.lines_max = 2;
  write_file(cfg.corpus_path,
             "the cat\nquick fox\nred pen\nblue sky\nold map\nwe ran\n");
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("render splits pages and reproduces manifests under one seed") {
  const fs::path root = fresh_root("render");
  ExperimentConfig cfg = tiny_config(root);

  const RenderOutcome first = cmd_render(cfg);
  CHECK(first.train_pages == 4);
  CHECK(first.test_pages == 1);
  CHECK(first.validation_pages == 1);
  CHECK(first.dataset_dir == cfg.dataset_dir);
  CHECK(first.train_manifest_sha256.size() == 64);

  const std::vector<DatasetEntry> train =
      load_dataset_split((fs::path(cfg.dataset_dir) / "train").string());
  REQUIRE(train.size() == 4);
  for (const DatasetEntry& page : train) {
    CHECK(!page.sample.transcript.empty());
    CHECK(page.sample.image.width == 64);
  }

  ExperimentConfig again = cfg;
  again.dataset_dir = (root / "data_again").string();
  const RenderOutcome second = cmd_render(again);
  CHECK(second.train_manifest_sha256 == first.train_manifest_sha256);
}

TEST_CASE("encoder pre-training resumes from its checkpoint") {
  const fs::path root = fresh_root("pretrain_encoder");
  ExperimentConfig cfg = tiny_config(root);
  cmd_render(cfg);

  const PretrainOutcome first = cmd_pretrain_encoder(cfg, false);
  CHECK(first.steps_run == 2);
  CHECK(fs::exists(first.checkpoint_path));
  CHECK(std::isfinite(first.final_loss));

  cfg.train.epochs = 2;
  const PretrainOutcome second = cmd_pretrain_encoder(cfg, true);
  CHECK(second.steps_run == 2);

  const std::vector<std::string> csv =
      file_lines(fs::path(cfg.report_dir) / "pretrain_encoder_loss.csv");
  REQUIRE(csv.size() == 5);
  CHECK(csv[0] == "step,epoch,loss");
  CHECK(csv[1].rfind("1,0,", 0) == 0);
  CHECK(csv[4].rfind("4,1,", 0) == 0);
}

TEST_CASE("lm pre-training saves the tokenizer beside the checkpoint") {
  const fs::path root = fresh_root("pretrain_lm");
  ExperimentConfig cfg = tiny_config(root);

  const PretrainOutcome first = cmd_pretrain_lm(cfg, false);
  CHECK(first.steps_run == 3);
  CHECK(fs::exists(first.checkpoint_path));
  CHECK(fs::exists(fs::path(cfg.checkpoint_dir) / "lm_vocab.txt"));

  cfg.train.epochs = 2;
  const PretrainOutcome second = cmd_pretrain_lm(cfg, true);
  CHECK(second.steps_run == 3);
  const std::vector<std::string> csv =
      file_lines(fs::path(cfg.report_dir) / "pretrain_lm_loss.csv");
  REQUIRE(csv.size() == 7);
  CHECK(csv[6].rfind("6,1,", 0) == 0);
}

TEST_CASE("fine-tuning needs the encoder checkpoint unless cold-started") {
  const fs::path root = fresh_root("train_requires");
  ExperimentConfig cfg = tiny_config(root);
  cmd_render(cfg);

  CHECK_THROWS_AS(cmd_train(cfg, false, false), DataError);

  cfg.train.freeze_lm = false;
  CHECK_THROWS_AS(cmd_train(cfg, false, true), UsageError);
  cfg.train.freeze_lm = true;

  const TrainOutcome out = cmd_train(cfg, false, true);
  CHECK(out.steps_run == 2);
  CHECK(out.has_validation);
  CHECK(fs::exists(out.checkpoint_path));
  CHECK(fs::exists(fs::path(cfg.checkpoint_dir) / "vocab.txt"));
}

TEST_CASE("fine-tuning resume continues the step counter") {
  const fs::path root = fresh_root("train_resume");
  ExperimentConfig cfg = tiny_config(root);
  cmd_render(cfg);
  cmd_pretrain_encoder(cfg, false);
  cmd_pretrain_lm(cfg, false);

  const TrainOutcome first = cmd_train(cfg, false, false);
  CHECK(first.steps_run == 2);

  cfg.train.epochs = 2;
  const TrainOutcome second = cmd_train(cfg, true, false);
  CHECK(second.steps_run == 2);

  const std::vector<std::string> csv =
      file_lines(fs::path(cfg.report_dir) / "train_loss.csv");
  REQUIRE(csv.size() == 5);
  CHECK(csv[0] == "step,epoch,epsilon,loss");
  CHECK(csv[3].rfind("3,1,", 0) == 0);

  const std::map<std::string, Tensor> stored =
      load_checkpoint(second.checkpoint_path);
  REQUIRE(stored.count("step") == 1);
  CHECK(stored.at("step").item() == doctest::Approx(4.0));
}

TEST_CASE("checkpoints reject a mismatched architecture by tensor name") {
  const fs::path root = fresh_root("train_mismatch");
  ExperimentConfig cfg = tiny_config(root);
  cmd_render(cfg);
  cmd_pretrain_encoder(cfg, false);

  ExperimentConfig wider = cfg;
  wider.enc.hidden_size = 32;
  wider.enc.intermediate_size = 64;
  wider.dec.hidden_size = 32;
  wider.dec.intermediate_size = 64;
  try {
    cmd_train(wider, false, false);
    FAIL("dimension mismatch was accepted");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("enc.") != std::string::npos);
    CHECK(what.find("expects") != std::string::npos);
  }
}

TEST_CASE("inference writes per-page transcripts plus a json summary") {
  const fs::path root = fresh_root("infer");
  ExperimentConfig cfg = tiny_config(root);
  cmd_render(cfg);
  const TrainOutcome trained = cmd_train(cfg, false, true);
  REQUIRE(fs::exists(trained.checkpoint_path));

  const std::string out_dir = (root / "pred").string();
  const InferOutcome out = cmd_infer(
      cfg, (fs::path(cfg.dataset_dir) / "test").string(), out_dir, false);
  CHECK(out.transcribed == 1);
  CHECK(out.failed == 0);

  const nlohmann::json summary = nlohmann::json::parse(
      read_file(fs::path(out_dir) / "transcriptions.json"));
  REQUIRE(summary.is_array());
  REQUIRE(summary.size() == 1);
  const nlohmann::json& entry = summary[0];
  CHECK(entry.contains("id"));
  CHECK(entry.contains("text"));
  CHECK(entry.contains("confidences"));
  CHECK(entry.contains("truncated"));
  const std::string id = entry["id"].get<std::string>();
  CHECK(fs::exists(fs::path(out_dir) / (id + ".txt")));
  CHECK(read_file(fs::path(out_dir) / (id + ".txt")) ==
        entry["text"].get<std::string>());

  CHECK_THROWS_AS(
      cmd_infer(cfg, (root / "missing").string(), out_dir, false), DataError);
  CHECK_THROWS_AS(
      cmd_infer(cfg, (fs::path(cfg.dataset_dir) / "test").string(), out_dir,
                true),
      UsageError);
}

TEST_CASE("eval pairs transcripts by id and flags missing predictions") {
  const fs::path root = fresh_root("eval");
  ExperimentConfig cfg = tiny_config(root);
  cfg.render.pages = 10;
  cmd_render(cfg);

  const fs::path gt_dir = fs::path(cfg.dataset_dir) / "test";
  const fs::path pred_dir = root / "pred";
  fs::create_directories(pred_dir);
  std::vector<std::string> ids;
  for (const auto& item : fs::directory_iterator(gt_dir)) {
    if (item.path().extension() == ".txt") {
      fs::copy_file(item.path(), pred_dir / item.path().filename());
      ids.push_back(item.path().stem().string());
    }
  }
  REQUIRE(ids.size() == 2);

  const EvalOutcome perfect =
      cmd_eval(cfg, pred_dir.string(), gt_dir.string(), "test");
  CHECK(perfect.report.cer == 0.0);
  CHECK(perfect.report.crr == doctest::Approx(100.0));
  CHECK(perfect.table.find("test") != std::string::npos);
  CHECK(fs::exists(perfect.report_path));
  const nlohmann::json body = nlohmann::json::parse(
      read_file(fs::path(cfg.report_dir) / "eval_test.json"));
  CHECK(body["num_images"].get<int>() == 2);
  CHECK(body["per_sample"].size() == 2);

  CHECK_THROWS_AS(cmd_eval(cfg, pred_dir.string(), gt_dir.string(), "Test!"),
                  UsageError);
  fs::remove(pred_dir / (ids.front() + ".txt"));
  try {
    cmd_eval(cfg, pred_dir.string(), gt_dir.string(), "test");
    FAIL("missing prediction was accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(ids.front()) != std::string::npos);
  }
}

TEST_CASE("report collects eval tables and the command log") {
  const fs::path root = fresh_root("report");
  ExperimentConfig cfg = tiny_config(root);
  CHECK_THROWS_AS(cmd_report(cfg), DataError);

  cmd_render(cfg);
  const fs::path gt_dir = fs::path(cfg.dataset_dir) / "validation";
  const fs::path pred_dir = root / "pred";
  fs::create_directories(pred_dir);
  for (const auto& item : fs::directory_iterator(gt_dir)) {
    if (item.path().extension() == ".txt") {
      fs::copy_file(item.path(), pred_dir / item.path().filename());
    }
  }
  cmd_eval(cfg, pred_dir.string(), gt_dir.string(), "validation");

  const std::string path = cmd_report(cfg);
  const std::string text = read_file(path);
  CHECK(text.find("Recognition rates") != std::string::npos);
  CHECK(text.find("validation") != std::string::npos);
  CHECK(text.find("render") != std::string::npos);
  CHECK(text.find("eval") != std::string::npos);
}

TEST_CASE("every command appends one parseable run-manifest line") {
  const fs::path root = fresh_root("manifest");
  ExperimentConfig cfg = tiny_config(root);
  cmd_render(cfg);
  cmd_pretrain_encoder(cfg, false);

  const std::vector<std::string> lines =
      file_lines(fs::path(cfg.report_dir) / "run_manifest.jsonl");
  REQUIRE(lines.size() == 2);
  const nlohmann::json render_line = nlohmann::json::parse(lines[0]);
  CHECK(render_line["command"] == "render");
  CHECK(render_line["scale"] == "desk");
  CHECK(render_line["seed"].get<uint64_t>() == 11);
  CHECK(render_line["config_sha256"].get<std::string>().size() == 64);
  CHECK(render_line["wall_clock_s"].is_number());
  const nlohmann::json pretrain_line = nlohmann::json::parse(lines[1]);
  CHECK(pretrain_line["command"] == "pretrain-encoder");
  CHECK(pretrain_line["config_sha256"] == render_line["config_sha256"]);
}
