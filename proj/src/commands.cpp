#include "phtr/commands.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "phtr/checkpoint.hpp"
#include "phtr/data.hpp"
#include "phtr/errors.hpp"
#include "phtr/lm.hpp"
#include "phtr/pipeline.hpp"
#include "phtr/rng.hpp"
#include "phtr/sha256.hpp"
#include "phtr/text.hpp"
#include "phtr/train.hpp"

namespace phtr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Parameter-initialization streams, one per component, so the components
// draw independent weights from the one master seed.
enum : uint64_t {
  kEncInitStream = 101,
  kDecInitStream = 102,
  kLmInitStream = 103,
};

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(now - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string config_sha256(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, value] : config_items(cfg)) {
    os << key << " = " << value << "\n";
  }
  return Sha256::of_string(os.str());
}

void append_manifest(const ExperimentConfig& cfg, const std::string& command,
                     const json& inputs, const json& outputs,
                     const json& metrics, double wall_seconds) {
  fs::create_directories(cfg.report_dir);
  json line;
  line["command"] = command;
  line["scale"] = cfg.scale;
  line["seed"] = cfg.seed;
  line["config_sha256"] = config_sha256(cfg);
  line["inputs"] = inputs;
  line["outputs"] = outputs;
  line["metrics"] = metrics;
  line["wall_clock_s"] = std::round(wall_seconds * 1000.0) / 1000.0;
  const fs::path path = fs::path(cfg.report_dir) / "run_manifest.jsonl";
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) {
    throw DataError("cannot append run manifest '" + path.string() + "'");
  }
  out << line.dump() << "\n";
}

CheckpointDtype checkpoint_dtype(const ExperimentConfig& cfg) {
  return cfg.precision == "f32" ? CheckpointDtype::kF32
                                : CheckpointDtype::kF64;
}

std::vector<std::string> corpus_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) {
    throw DataError("corpus file '" + path + "' has no usable lines");
  }
  return lines;
}

std::string page_id(int64_t index) {
  std::ostringstream os;
  os << "page_" << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void copy_values(Tensor& dst, const Tensor& src) {
  auto out = dst.mutable_data();
  const auto in = src.data();
  std::copy(in.begin(), in.end(), out.begin());
}

// Copies stored tensors into live parameters, by name, with shape checks.
void load_parameters(const std::map<std::string, Tensor>& stored,
                     std::vector<std::pair<std::string, Tensor>> params,
                     const std::string& path) {
  for (auto& [name, tensor] : params) {
    const auto it = stored.find(name);
    if (it == stored.end()) {
      throw DataError("checkpoint '" + path + "' is missing tensor '" + name +
                      "'");
    }
    if (it->second.shape() != tensor.shape()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      shape_string(it->second.shape()) +
                      " but the configuration expects " +
                      shape_string(tensor.shape()));
    }
    copy_values(tensor, it->second);
  }
}

void load_optimizer(const std::map<std::string, Tensor>& stored,
                    AdamOptimizer& opt, const std::string& path) {
  for (auto& [name, tensor] : opt.state_tensors()) {
    if (name == "step") continue;
    const auto it = stored.find(name);
    if (it == stored.end()) {
      throw DataError("checkpoint '" + path +
                      "' is missing optimizer state '" + name + "'");
    }
    if (it->second.shape() != tensor.shape()) {
      throw DataError("optimizer state '" + name + "' has shape " +
                      shape_string(it->second.shape()) +
                      " but the configuration expects " +
                      shape_string(tensor.shape()));
    }
    copy_values(tensor, it->second);
  }
  const auto it = stored.find("step");
  if (it == stored.end()) {
    throw DataError("checkpoint '" + path +
                    "' is missing the optimizer step counter");
  }
  opt.set_step_count(static_cast<int64_t>(it->second.item()));
}

void save_bundle(const std::string& path,
                 std::vector<std::pair<std::string, Tensor>> tensors,
                 AdamOptimizer& opt, CheckpointDtype dtype) {
  for (auto& state : opt.state_tensors()) tensors.push_back(state);
  fs::create_directories(fs::path(path).parent_path());
  save_checkpoint(path, tensors, dtype);
}

std::vector<PageSample> split_pages(const std::string& dir) {
  std::vector<PageSample> pages;
  for (DatasetEntry& entry : load_dataset_split(dir)) {
    pages.push_back(std::move(entry.sample));
  }
  return pages;
}

bool split_present(const std::string& dir) {
  return fs::exists(fs::path(dir) / "manifest.jsonl");
}

int64_t lm_vocab_rows(const LmConfig& cfg, const LmTokenizer& tokenizer) {
  const int64_t effective =
      cfg.vocab_size > 0 ? cfg.vocab_size : tokenizer.size();
  if (tokenizer.size() > effective) {
    throw DataError("lm.vocab_size " + std::to_string(cfg.vocab_size) +
                    " is smaller than the tokenizer alphabet (" +
                    std::to_string(tokenizer.size()) + " symbols)");
  }
  return effective;
}

bool has_prefix(const std::map<std::string, Tensor>& stored,
                const std::string& prefix) {
  const auto it = stored.lower_bound(prefix);
  return it != stored.end() && it->first.rfind(prefix, 0) == 0;
}

std::string loss_csv_value(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

// Fresh runs start a new curve; resumed runs extend the existing one, so
// the header is only written when the file does not already hold one.
std::ofstream open_csv(const fs::path& path, const std::string& header,
                       bool append) {
  const bool extend = append && fs::exists(path) && fs::file_size(path) > 0;
  std::ofstream csv(path, extend ? std::ios::binary | std::ios::app
                                 : std::ios::binary);
  if (!extend) csv << header << "\n";
  return csv;
}

struct RateRow {
  std::string label;
  double crr = 0.0;
  double wrr = 0.0;
  double lrr = 0.0;
};

std::string rates_table(const std::vector<RateRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "Split" << std::right << std::setw(9)
     << "CRR" << std::setw(9) << "WRR" << std::setw(9) << "LRR" << "\n";
  os << std::fixed << std::setprecision(2);
  for (const RateRow& row : rows) {
    os << std::left << std::setw(14) << row.label << std::right
       << std::setw(9) << row.crr << std::setw(9) << row.wrr << std::setw(9)
       << row.lrr << "\n";
  }
  return os.str();
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

// The trained model bundle as read back from the joint checkpoint.
struct LoadedPipeline {
  EncoderParams enc;
  DecoderParams dec;
  Vocabulary vocab;
  bool has_lm = false;
  LmParams lm;
  LmTokenizer lm_tokenizer;
};

LoadedPipeline load_pipeline(const ExperimentConfig& cfg) {
  const fs::path ckdir(cfg.checkpoint_dir);
  const std::string joint_path = (ckdir / "pipeline.ckpt").string();
  const std::string vocab_path = (ckdir / "vocab.txt").string();
  if (!fs::exists(joint_path)) {
    throw DataError("joint checkpoint '" + joint_path +
                    "' not found; run train first");
  }
  const std::map<std::string, Tensor> stored = load_checkpoint(joint_path);

  LoadedPipeline p;
  p.vocab = Vocabulary::load(vocab_path);
  Rng enc_rng(Rng::mix(cfg.seed, kEncInitStream));
  Rng dec_rng(Rng::mix(cfg.seed, kDecInitStream));
  p.enc = EncoderParams::init(cfg.enc, cfg.render.styles, enc_rng);
  p.dec = DecoderParams::init(cfg.dec, p.vocab.size(), dec_rng);
  load_parameters(stored, p.enc.named_parameters(), joint_path);
  load_parameters(stored, p.dec.named_parameters(), joint_path);

  if (has_prefix(stored, "lm.")) {
    const std::string lm_vocab_path = (ckdir / "lm_vocab.txt").string();
    p.lm_tokenizer = LmTokenizer::load(lm_vocab_path);
    Rng lm_rng(Rng::mix(cfg.seed, kLmInitStream));
    p.lm = LmParams::init(cfg.lm, lm_vocab_rows(cfg.lm, p.lm_tokenizer),
                          lm_rng);
    load_parameters(stored, p.lm.named_parameters(), joint_path);
    p.has_lm = true;
  }
  return p;
}

}  // namespace

RenderOutcome cmd_render(const ExperimentConfig& cfg) {
  cfg.validate();
  const WallClock clock;
  const std::vector<std::string> corpus = corpus_lines(cfg.corpus_path);
  const std::vector<PageSample> pages =
      compose_pages(corpus, cfg.render, cfg.seed);
  const SplitIndices split =
      split_dataset(static_cast<int64_t>(pages.size()), cfg.split, cfg.seed);

  const fs::path root(cfg.dataset_dir);
  fs::create_directories(root);
  auto write_split = [&](const char* name,
                         const std::vector<int64_t>& indices) {
    std::vector<DatasetEntry> entries;
    entries.reserve(indices.size());
    for (int64_t index : indices) {
      entries.push_back({page_id(index), pages[static_cast<size_t>(index)]});
    }
    const std::string dir = (root / name).string();
    fs::create_directories(dir);
    write_dataset_split(dir, entries);
    return dir;
  };
  const std::string train_dir = write_split("train", split.train);
  const std::string test_dir = write_split("test", split.test);
  const std::string val_dir = write_split("validation", split.validation);

  RenderOutcome outcome;
  outcome.dataset_dir = cfg.dataset_dir;
  outcome.train_pages = static_cast<int64_t>(split.train.size());
  outcome.test_pages = static_cast<int64_t>(split.test.size());
  outcome.validation_pages = static_cast<int64_t>(split.validation.size());
  outcome.train_manifest_sha256 = manifest_sha256(train_dir);

  json inputs;
  inputs["corpus"] = cfg.corpus_path;
  inputs["corpus_sha256"] = Sha256::of_file(cfg.corpus_path);
  json outputs;
  outputs["dataset_dir"] = cfg.dataset_dir;
  outputs["train_manifest_sha256"] = outcome.train_manifest_sha256;
  outputs["test_manifest_sha256"] = manifest_sha256(test_dir);
  outputs["validation_manifest_sha256"] = manifest_sha256(val_dir);
  json metrics;
  metrics["pages"] = static_cast<int64_t>(pages.size());
  metrics["train_pages"] = outcome.train_pages;
  metrics["test_pages"] = outcome.test_pages;
  metrics["validation_pages"] = outcome.validation_pages;
  append_manifest(cfg, "render", inputs, outputs, metrics, clock.seconds());
  return outcome;
}

PretrainOutcome cmd_pretrain_encoder(const ExperimentConfig& cfg,
                                     bool resume) {
  cfg.validate();
  const WallClock clock;
  const std::string train_dir =
      (fs::path(cfg.dataset_dir) / "train").string();
  const std::vector<PageSample> pages = split_pages(train_dir);

  Rng init_rng(Rng::mix(cfg.seed, kEncInitStream));
  EncoderParams params =
      EncoderParams::init(cfg.enc, cfg.render.styles, init_rng);
  const std::string path =
      (fs::path(cfg.checkpoint_dir) / "encoder.ckpt").string();
  AdamOptimizer opt(params.named_parameters(), AdamConfig{cfg.train.lr});
  if (resume) {
    const std::map<std::string, Tensor> stored = load_checkpoint(path);
    load_parameters(stored, params.named_parameters(), path);
    load_optimizer(stored, opt, path);
  }

  fs::create_directories(cfg.report_dir);
  const fs::path csv_path =
      fs::path(cfg.report_dir) / "pretrain_encoder_loss.csv";
  std::ofstream csv = open_csv(csv_path, "step,epoch,loss", resume);
  const TrainHistory history = train_encoder_mim(
      params, opt, pages, cfg.enc, cfg.train, cfg.seed,
      [&](const StepRecord& r) {
        csv << r.step << "," << r.epoch << "," << loss_csv_value(r.loss)
            << "\n";
      });
  csv.close();
  save_bundle(path, params.named_parameters(), opt, checkpoint_dtype(cfg));

  PretrainOutcome outcome;
  outcome.checkpoint_path = path;
  outcome.steps_run = static_cast<int64_t>(history.steps.size());
  if (!history.steps.empty()) {
    outcome.first_loss = history.steps.front().loss;
    outcome.final_loss = history.steps.back().loss;
  }

  json inputs;
  inputs["train_manifest_sha256"] = manifest_sha256(train_dir);
  inputs["resume"] = resume;
  json outputs;
  outputs["checkpoint"] = path;
  outputs["checkpoint_sha256"] = Sha256::of_file(path);
  outputs["loss_csv"] = csv_path.string();
  json metrics;
  metrics["steps_run"] = outcome.steps_run;
  metrics["first_loss"] = outcome.first_loss;
  metrics["final_loss"] = outcome.final_loss;
  metrics["optimizer_step"] = opt.step_count();
  append_manifest(cfg, "pretrain-encoder", inputs, outputs, metrics,
                  clock.seconds());
  return outcome;
}

PretrainOutcome cmd_pretrain_lm(const ExperimentConfig& cfg, bool resume) {
  cfg.validate();
  const WallClock clock;
  const std::vector<std::string> lines = corpus_lines(cfg.corpus_path);

  const fs::path ckdir(cfg.checkpoint_dir);
  const std::string path = (ckdir / "lm.ckpt").string();
  const std::string vocab_path = (ckdir / "lm_vocab.txt").string();

  LmTokenizer tokenizer;
  if (resume) {
    tokenizer = LmTokenizer::load(vocab_path);
  } else {
    std::string joined;
    for (const std::string& line : lines) {
      joined += line;
      joined += '\n';
    }
    tokenizer = LmTokenizer::from_corpus(joined);
  }

  Rng init_rng(Rng::mix(cfg.seed, kLmInitStream));
  LmParams params =
      LmParams::init(cfg.lm, lm_vocab_rows(cfg.lm, tokenizer), init_rng);
  AdamOptimizer opt(params.named_parameters(), AdamConfig{cfg.train.lr});
  if (resume) {
    const std::map<std::string, Tensor> stored = load_checkpoint(path);
    load_parameters(stored, params.named_parameters(), path);
    load_optimizer(stored, opt, path);
  }

  fs::create_directories(cfg.report_dir);
  const fs::path csv_path = fs::path(cfg.report_dir) / "pretrain_lm_loss.csv";
  std::ofstream csv = open_csv(csv_path, "step,epoch,loss", resume);
  const TrainHistory history = train_lm_mlm(
      params, opt, lines, cfg.lm, tokenizer, cfg.train, cfg.seed,
      [&](const StepRecord& r) {
        csv << r.step << "," << r.epoch << "," << loss_csv_value(r.loss)
            << "\n";
      });
  csv.close();

  fs::create_directories(ckdir);
  tokenizer.save(vocab_path);
  save_bundle(path, params.named_parameters(), opt, checkpoint_dtype(cfg));

  PretrainOutcome outcome;
  outcome.checkpoint_path = path;
  outcome.steps_run = static_cast<int64_t>(history.steps.size());
  if (!history.steps.empty()) {
    outcome.first_loss = history.steps.front().loss;
    outcome.final_loss = history.steps.back().loss;
  }

  json inputs;
  inputs["corpus"] = cfg.corpus_path;
  inputs["corpus_sha256"] = Sha256::of_file(cfg.corpus_path);
  inputs["resume"] = resume;
  json outputs;
  outputs["checkpoint"] = path;
  outputs["checkpoint_sha256"] = Sha256::of_file(path);
  outputs["tokenizer"] = vocab_path;
  outputs["loss_csv"] = csv_path.string();
  json metrics;
  metrics["steps_run"] = outcome.steps_run;
  metrics["first_loss"] = outcome.first_loss;
  metrics["final_loss"] = outcome.final_loss;
  metrics["optimizer_step"] = opt.step_count();
  metrics["tokenizer_symbols"] = tokenizer.size();
  append_manifest(cfg, "pretrain-lm", inputs, outputs, metrics,
                  clock.seconds());
  return outcome;
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, bool resume,
                       bool cold_start) {
  cfg.validate();
  const WallClock clock;
  const fs::path root(cfg.dataset_dir);
  const std::string train_dir = (root / "train").string();
  const std::vector<PageSample> train_pages = split_pages(train_dir);
  std::vector<PageSample> val_pages;
  if (split_present((root / "validation").string())) {
    val_pages = split_pages((root / "validation").string());
  }

  const fs::path ckdir(cfg.checkpoint_dir);
  const std::string joint_path = (ckdir / "pipeline.ckpt").string();
  const std::string vocab_path = (ckdir / "vocab.txt").string();
  const std::string enc_path = (ckdir / "encoder.ckpt").string();
  const std::string lm_path = (ckdir / "lm.ckpt").string();
  const std::string lm_vocab_path = (ckdir / "lm_vocab.txt").string();

  Vocabulary vocab;
  if (resume) {
    vocab = Vocabulary::load(vocab_path);
  } else {
    std::string all_text;
    auto absorb = [&](const std::vector<PageSample>& pages) {
      for (const PageSample& page : pages) {
        all_text += page.transcript;
        all_text += '\n';
      }
    };
    absorb(train_pages);
    absorb(val_pages);
    if (split_present((root / "test").string())) {
      absorb(split_pages((root / "test").string()));
    }
    vocab = Vocabulary::from_corpus(all_text);
  }

  Rng enc_rng(Rng::mix(cfg.seed, kEncInitStream));
  Rng dec_rng(Rng::mix(cfg.seed, kDecInitStream));
  Rng lm_rng(Rng::mix(cfg.seed, kLmInitStream));
  EncoderParams enc = EncoderParams::init(cfg.enc, cfg.render.styles, enc_rng);
  DecoderParams dec = DecoderParams::init(cfg.dec, vocab.size(), dec_rng);
  bool has_lm = false;
  LmParams lm;
  LmTokenizer lm_tokenizer;

  std::map<std::string, Tensor> stored;
  if (resume) {
    if (!fs::exists(joint_path)) {
      throw DataError("joint checkpoint '" + joint_path +
                      "' not found; cannot resume");
    }
    stored = load_checkpoint(joint_path);
    load_parameters(stored, enc.named_parameters(), joint_path);
    load_parameters(stored, dec.named_parameters(), joint_path);
    if (has_prefix(stored, "lm.")) {
      lm_tokenizer = LmTokenizer::load(lm_vocab_path);
      lm = LmParams::init(cfg.lm, lm_vocab_rows(cfg.lm, lm_tokenizer),
                          lm_rng);
      load_parameters(stored, lm.named_parameters(), joint_path);
      has_lm = true;
    }
  } else if (!cold_start) {
    if (!fs::exists(enc_path)) {
      throw DataError("encoder checkpoint '" + enc_path +
                      "' not found; run pretrain-encoder or pass "
                      "--cold-start");
    }
    const std::map<std::string, Tensor> enc_stored =
        load_checkpoint(enc_path);
    load_parameters(enc_stored, enc.named_parameters(), enc_path);
    if (fs::exists(lm_path)) {
      lm_tokenizer = LmTokenizer::load(lm_vocab_path);
      lm = LmParams::init(cfg.lm, lm_vocab_rows(cfg.lm, lm_tokenizer),
                          lm_rng);
      const std::map<std::string, Tensor> lm_stored =
          load_checkpoint(lm_path);
      load_parameters(lm_stored, lm.named_parameters(), lm_path);
      has_lm = true;
    }
  }
  if (!cfg.train.freeze_lm && !has_lm) {
    throw UsageError(
        "train.freeze_lm=false needs a language-model checkpoint; run "
        "pretrain-lm first");
  }

  std::vector<std::pair<std::string, Tensor>> opt_params =
      enc.named_parameters();
  for (auto& p : dec.named_parameters()) opt_params.push_back(p);
  if (has_lm && !cfg.train.freeze_lm) {
    for (auto& p : lm.named_parameters()) opt_params.push_back(p);
  }
  AdamOptimizer opt(opt_params, AdamConfig{cfg.train.lr});
  if (resume) load_optimizer(stored, opt, joint_path);

  AugmentationPolicy policy;
  policy.master_seed = cfg.seed;

  FinetuneSetup setup;
  setup.train_pages = &train_pages;
  setup.val_pages = val_pages.empty() ? nullptr : &val_pages;
  setup.vocab = &vocab;
  if (has_lm && !cfg.train.freeze_lm) {
    setup.lm = &lm;
    setup.lm_tokenizer = &lm_tokenizer;
  }
  if (cfg.train.augment) setup.augment = &policy;

  fs::create_directories(cfg.report_dir);
  const fs::path step_csv_path = fs::path(cfg.report_dir) / "train_loss.csv";
  const fs::path epoch_csv_path =
      fs::path(cfg.report_dir) / "train_epochs.csv";
  std::ofstream step_csv =
      open_csv(step_csv_path, "step,epoch,epsilon,loss", resume);
  std::ofstream epoch_csv = open_csv(
      epoch_csv_path, "epoch,step,epsilon,train_loss,val_cer,val_wer,val_ler",
      resume);

  const TrainHistory history = finetune(
      enc, dec, opt, setup, cfg,
      [&](const StepRecord& r) {
        step_csv << r.step << "," << r.epoch << ","
                 << loss_csv_value(r.epsilon) << "," << loss_csv_value(r.loss)
                 << "\n";
      },
      [&](const EpochRecord& r) {
        epoch_csv << r.epoch << "," << r.step << ","
                  << loss_csv_value(r.epsilon) << ","
                  << loss_csv_value(r.train_loss) << ",";
        if (r.has_validation) {
          epoch_csv << loss_csv_value(r.val_cer) << ","
                    << loss_csv_value(r.val_wer) << ","
                    << loss_csv_value(r.val_ler);
        } else {
          epoch_csv << ",,";
        }
        epoch_csv << "\n";
      });
  step_csv.close();
  epoch_csv.close();

  fs::create_directories(ckdir);
  vocab.save(vocab_path);
  std::vector<std::pair<std::string, Tensor>> bundle =
      enc.named_parameters();
  for (auto& p : dec.named_parameters()) bundle.push_back(p);
  if (has_lm) {
    for (auto& p : lm.named_parameters()) bundle.push_back(p);
  }
  save_bundle(joint_path, bundle, opt, checkpoint_dtype(cfg));

  TrainOutcome outcome;
  outcome.checkpoint_path = joint_path;
  outcome.steps_run = static_cast<int64_t>(history.steps.size());
  if (!history.steps.empty()) {
    outcome.final_train_loss = history.steps.back().loss;
  }
  if (!history.epochs.empty() && history.epochs.back().has_validation) {
    const EpochRecord& last = history.epochs.back();
    outcome.has_validation = true;
    outcome.val_cer = last.val_cer;
    outcome.val_wer = last.val_wer;
    outcome.val_ler = last.val_ler;
  }

  json inputs;
  inputs["train_manifest_sha256"] = manifest_sha256(train_dir);
  inputs["train_pages"] = static_cast<int64_t>(train_pages.size());
  inputs["validation_pages"] = static_cast<int64_t>(val_pages.size());
  inputs["resume"] = resume;
  inputs["cold_start"] = cold_start;
  inputs["language_model"] = has_lm;
  json outputs;
  outputs["checkpoint"] = joint_path;
  outputs["checkpoint_sha256"] = Sha256::of_file(joint_path);
  outputs["vocabulary"] = vocab_path;
  outputs["step_csv"] = step_csv_path.string();
  outputs["epoch_csv"] = epoch_csv_path.string();
  json metrics;
  metrics["steps_run"] = outcome.steps_run;
  metrics["final_train_loss"] = outcome.final_train_loss;
  metrics["optimizer_step"] = opt.step_count();
  if (outcome.has_validation) {
    metrics["val_cer"] = outcome.val_cer;
    metrics["val_wer"] = outcome.val_wer;
    metrics["val_ler"] = outcome.val_ler;
  }
  append_manifest(cfg, "train", inputs, outputs, metrics, clock.seconds());
  return outcome;
}

InferOutcome cmd_infer(const ExperimentConfig& cfg,
                       const std::string& input_path,
                       const std::string& output_dir, bool refine_output) {
  cfg.validate();
  const WallClock clock;
  const LoadedPipeline pipeline = load_pipeline(cfg);
  if (refine_output && !pipeline.has_lm) {
    throw UsageError(
        "--refine needs a language model in the joint checkpoint; run "
        "pretrain-lm before train");
  }

  struct Job {
    std::string id;
    std::string image_path;
    int64_t dpi;
  };
  std::vector<Job> jobs;
  if (fs::is_directory(input_path)) {
    const fs::path manifest = fs::path(input_path) / "manifest.jsonl";
    if (fs::exists(manifest)) {
      std::ifstream in(manifest, std::ios::binary);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
          j = json::parse(line);
        } catch (const json::exception& e) {
          throw DataError(std::string("malformed manifest line: ") +
                          e.what());
        }
        jobs.push_back(
            {j.at("id").get<std::string>(),
             (fs::path(input_path) / j.at("image").get<std::string>())
                 .string(),
             j.at("dpi").get<int64_t>()});
      }
    } else {
      for (const auto& entry : fs::directory_iterator(input_path)) {
        const fs::path& p = entry.path();
        if (p.extension() != ".pgm") continue;
        const std::string stem = p.stem().string();
        if (stem.size() >= 5 && stem.substr(stem.size() - 5) == "_mask") {
          continue;
        }
        jobs.push_back({stem, p.string(), cfg.render.dpi});
      }
      std::sort(jobs.begin(), jobs.end(),
                [](const Job& a, const Job& b) { return a.id < b.id; });
    }
  } else if (fs::exists(input_path)) {
    jobs.push_back({fs::path(input_path).stem().string(), input_path,
                    cfg.render.dpi});
  } else {
    throw DataError("input path '" + input_path + "' does not exist");
  }
  if (jobs.empty()) {
    throw DataError("no images found in '" + input_path + "'");
  }

  fs::create_directories(output_dir);
  json results = json::array();
  InferOutcome outcome;
  outcome.output_dir = output_dir;
  uint64_t ordinal = 0;
  for (const Job& job : jobs) {
    json entry;
    entry["id"] = job.id;
    try {
      const Image image = read_pgm(job.image_path);
      const Transcription t =
          transcribe_page(image, job.dpi, pipeline.enc, pipeline.dec,
                          pipeline.vocab, cfg, ordinal);
      entry["text"] = t.text;
      entry["confidences"] = t.confidences;
      entry["truncated"] = t.truncated;
      entry["score"] = t.score;
      std::string final_text = t.text;
      if (refine_output) {
        int64_t lm_calls = 0;
        final_text = refine(t.text, t.confidences, cfg.refine.threshold,
                            cfg.refine.max_rounds, cfg.lm, pipeline.lm,
                            pipeline.lm_tokenizer, &lm_calls);
        entry["refined_text"] = final_text;
        entry["lm_calls"] = lm_calls;
      }
      write_text_file(fs::path(output_dir) / (job.id + ".txt"), final_text);
      outcome.transcribed += 1;
    } catch (const DataError& e) {
      entry["error"] = e.what();
      outcome.failed += 1;
    } catch (const ShapeError& e) {
      entry["error"] = e.what();
      outcome.failed += 1;
    }
    results.push_back(entry);
    ordinal += 1;
  }

  const fs::path json_path = fs::path(output_dir) / "transcriptions.json";
  write_text_file(json_path, results.dump(2) + "\n");

  json inputs;
  inputs["input"] = input_path;
  inputs["checkpoint_sha256"] = Sha256::of_file(
      (fs::path(cfg.checkpoint_dir) / "pipeline.ckpt").string());
  inputs["refine"] = refine_output;
  json outputs;
  outputs["output_dir"] = output_dir;
  outputs["transcriptions_sha256"] = Sha256::of_file(json_path.string());
  json metrics;
  metrics["transcribed"] = outcome.transcribed;
  metrics["failed"] = outcome.failed;
  append_manifest(cfg, "infer", inputs, outputs, metrics, clock.seconds());
  return outcome;
}

EvalOutcome cmd_eval(const ExperimentConfig& cfg,
                     const std::string& predictions_dir,
                     const std::string& ground_truth_dir,
                     const std::string& split_label) {
  cfg.validate();
  const WallClock clock;
  for (char c : split_label) {
    if (!(std::islower(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_')) {
      throw UsageError("split label '" + split_label +
                       "' must be lowercase letters, digits, or underscores");
    }
  }
  if (split_label.empty()) throw UsageError("split label must be non-empty");

  auto txt_ids = [](const std::string& dir) {
    std::set<std::string> ids;
    if (!fs::is_directory(dir)) {
      throw DataError("'" + dir + "' is not a directory");
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".txt") {
        ids.insert(entry.path().stem().string());
      }
    }
    return ids;
  };
  const std::set<std::string> gt_ids = txt_ids(ground_truth_dir);
  if (gt_ids.empty()) {
    throw DataError("ground-truth directory '" + ground_truth_dir +
                    "' has no .txt transcripts");
  }
  const std::set<std::string> pred_ids = txt_ids(predictions_dir);
  if (pred_ids.empty()) {
    throw DataError("predictions directory '" + predictions_dir +
                    "' has no .txt transcripts");
  }
  std::vector<std::string> missing;
  for (const std::string& id : gt_ids) {
    if (pred_ids.count(id) == 0) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string list;
    const size_t shown = std::min<size_t>(missing.size(), 10);
    for (size_t i = 0; i < shown; ++i) {
      if (i > 0) list += ", ";
      list += missing[i];
    }
    if (missing.size() > shown) {
      list += ", and " + std::to_string(missing.size() - shown) + " more";
    }
    throw DataError("predictions missing for ids: " + list);
  }

  std::vector<EvalPair> pairs;
  std::vector<std::string> ids(gt_ids.begin(), gt_ids.end());
  pairs.reserve(ids.size());
  for (const std::string& id : ids) {
    pairs.push_back(
        {read_text_file(fs::path(ground_truth_dir) / (id + ".txt")),
         read_text_file(fs::path(predictions_dir) / (id + ".txt"))});
  }
  const EvalReport report = evaluate(pairs);
  for (double v : {report.cer, report.wer, report.ler_normalized,
                   report.ler_literal, report.crr, report.wrr, report.lrr}) {
    if (std::isnan(v)) {
      throw NumericError("evaluation produced NaN for split '" +
                         split_label + "'");
    }
  }

  json out;
  out["split"] = split_label;
  out["num_images"] = report.num_images;
  out["num_lines"] = report.num_lines;
  out["cer"] = report.cer;
  out["wer"] = report.wer;
  out["ler_normalized"] = report.ler_normalized;
  out["ler_literal"] = report.ler_literal;
  out["crr"] = report.crr;
  out["wrr"] = report.wrr;
  out["lrr"] = report.lrr;
  json per_sample = json::array();
  for (size_t i = 0; i < report.per_sample.size(); ++i) {
    json s;
    s["id"] = ids[i];
    s["cer"] = report.per_sample[i].cer;
    s["wer"] = report.per_sample[i].wer;
    s["ler"] = report.per_sample[i].ler;
    per_sample.push_back(s);
  }
  out["per_sample"] = per_sample;

  fs::create_directories(cfg.report_dir);
  const fs::path json_path =
      fs::path(cfg.report_dir) / ("eval_" + split_label + ".json");
  write_text_file(json_path, out.dump(2) + "\n");
  const std::string table =
      rates_table({{split_label, report.crr, report.wrr, report.lrr}});
  const fs::path table_path =
      fs::path(cfg.report_dir) / ("eval_" + split_label + ".txt");
  write_text_file(table_path, table);

  EvalOutcome outcome;
  outcome.report_path = json_path.string();
  outcome.table = table;
  outcome.report = report;

  json inputs;
  inputs["predictions_dir"] = predictions_dir;
  inputs["ground_truth_dir"] = ground_truth_dir;
  json outputs;
  outputs["report_json"] = json_path.string();
  outputs["report_table"] = table_path.string();
  json metrics;
  metrics["cer"] = report.cer;
  metrics["wer"] = report.wer;
  metrics["ler_normalized"] = report.ler_normalized;
  metrics["crr"] = report.crr;
  metrics["wrr"] = report.wrr;
  metrics["lrr"] = report.lrr;
  metrics["num_images"] = report.num_images;
  append_manifest(cfg, "eval", inputs, outputs, metrics, clock.seconds());
  return outcome;
}

std::string cmd_report(const ExperimentConfig& cfg) {
  cfg.validate();
  const WallClock clock;
  const fs::path report_dir(cfg.report_dir);

  std::vector<RateRow> rows;
  for (const std::string& label : {std::string("validation"),
                                   std::string("test")}) {
    const fs::path path = report_dir / ("eval_" + label + ".json");
    if (!fs::exists(path)) continue;
    json j;
    try {
      j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
      throw DataError("malformed '" + path.string() + "': " + e.what());
    }
    rows.push_back({label, j.at("crr").get<double>(),
                    j.at("wrr").get<double>(), j.at("lrr").get<double>()});
  }

  struct CommandStat {
    int64_t runs = 0;
    double seconds = 0.0;
  };
  std::map<std::string, CommandStat> stats;
  const fs::path manifest_path = report_dir / "run_manifest.jsonl";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(std::string("malformed run manifest line: ") +
                        e.what());
      }
      CommandStat& stat = stats[j.at("command").get<std::string>()];
      stat.runs += 1;
      stat.seconds += j.at("wall_clock_s").get<double>();
    }
  }

  if (rows.empty() && stats.empty()) {
    throw DataError("nothing to report in '" + cfg.report_dir +
                    "'; run eval or any other command first");
  }

  std::ostringstream os;
  os << "Recognition rates\n";
  if (rows.empty()) {
    os << "  (no evaluation results yet)\n";
  } else {
    std::istringstream table(rates_table(rows));
    std::string line;
    while (std::getline(table, line)) os << "  " << line << "\n";
  }
  os << "\nRun log\n";
  if (stats.empty()) {
    os << "  (no commands recorded yet)\n";
  } else {
    for (const auto& [command, stat] : stats) {
      os << "  " << std::left << std::setw(18) << command << std::right
         << std::setw(4) << stat.runs << (stat.runs == 1 ? " run " : " runs")
         << std::fixed << std::setprecision(3) << std::setw(12)
         << stat.seconds << " s\n";
    }
  }

  const fs::path path = report_dir / "report.txt";
  write_text_file(path, os.str());

  json inputs;
  inputs["report_dir"] = cfg.report_dir;
  json outputs;
  outputs["report"] = path.string();
  json metrics;
  metrics["eval_splits"] = static_cast<int64_t>(rows.size());
  append_manifest(cfg, "report", inputs, outputs, metrics, clock.seconds());
  return path.string();
}

}  // namespace phtr
