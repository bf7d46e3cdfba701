#include "phtr/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace phtr {

namespace {

struct KeyBinding {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects an integer, got '" + v +
                     "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a number, got '" + v +
                     "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "' expects true/false, got '" + v +
                   "'");
}

std::string fmt_real(double d) {
  std::ostringstream os;
  os << d;
  return os.str();
}

#define BIND_INT(key, field)                                            \
  {key, [](ExperimentConfig& c, const std::string& v) {                 \
     c.field = parse_int(key, v);                                       \
   },                                                                   \
   [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define BIND_REAL(key, field)                                           \
  {key, [](ExperimentConfig& c, const std::string& v) {                 \
     c.field = parse_real(key, v);                                      \
   },                                                                   \
   [](const ExperimentConfig& c) { return fmt_real(c.field); }}
#define BIND_STR(key, field)                                            \
  {key, [](ExperimentConfig& c, const std::string& v) { c.field = v; }, \
   [](const ExperimentConfig& c) { return c.field; }}
#define BIND_BOOL(key, field)                                           \
  {key, [](ExperimentConfig& c, const std::string& v) {                 \
     c.field = parse_bool(key, v);                                      \
   },                                                                   \
   [](const ExperimentConfig& c) {                                      \
     return c.field ? std::string("true") : std::string("false");       \
   }}

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> kBindings = {
      {"seed",
       [](ExperimentConfig& c, const std::string& v) {
         c.seed = static_cast<uint64_t>(parse_int("seed", v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      BIND_STR("precision", precision),
      BIND_STR("dataset_dir", dataset_dir),
      BIND_STR("checkpoint_dir", checkpoint_dir),
      BIND_STR("report_dir", report_dir),
      BIND_STR("corpus", corpus_path),
      BIND_INT("enc.image_size", enc.image_size),
      BIND_INT("enc.finetune_image_size", enc.finetune_image_size),
      BIND_INT("enc.patch_size", enc.patch_size),
      BIND_INT("enc.hidden", enc.hidden_size),
      BIND_INT("enc.layers", enc.num_layers),
      BIND_INT("enc.heads", enc.num_heads),
      BIND_INT("enc.intermediate", enc.intermediate_size),
      BIND_INT("enc.stride", enc.encoder_stride),
      BIND_INT("enc.channels", enc.num_channels),
      BIND_REAL("enc.dropout", enc.dropout),
      BIND_REAL("enc.mask_ratio", enc.mask_ratio),
      BIND_INT("dec.layers", dec.num_layers),
      BIND_INT("dec.hidden", dec.hidden_size),
      BIND_INT("dec.heads", dec.num_heads),
      BIND_INT("dec.intermediate", dec.intermediate_size),
      BIND_INT("dec.max_len", dec.max_output_length),
      BIND_REAL("dec.dropout", dec.dropout),
      BIND_INT("lm.layers", lm.num_layers),
      BIND_INT("lm.hidden", lm.hidden_size),
      BIND_INT("lm.heads", lm.num_heads),
      BIND_INT("lm.max_len", lm.max_seq_length),
      BIND_REAL("lm.dropout", lm.dropout),
      BIND_INT("lm.vocab_size", lm.vocab_size),
      BIND_REAL("train.lr", train.lr),
      BIND_INT("train.batch", train.batch_size),
      BIND_INT("train.epochs", train.epochs),
      BIND_INT("train.steps", train.steps),
      BIND_STR("train.ss_schedule", train.ss_schedule),
      BIND_REAL("train.ss_floor", train.ss_floor),
      BIND_REAL("train.mlm_mask_prob", train.mlm_mask_prob),
      BIND_BOOL("train.freeze_lm", train.freeze_lm),
      BIND_BOOL("train.augment", train.augment),
      BIND_STR("decode.strategy", decode.strategy),
      BIND_INT("decode.beam_width", decode.beam_width),
      BIND_REAL("decode.alpha", decode.length_norm_alpha),
      BIND_REAL("decode.top_p", decode.top_p),
      BIND_REAL("decode.temperature", decode.temperature),
      BIND_REAL("refine.threshold", refine.threshold),
      BIND_INT("refine.max_rounds", refine.max_rounds),
      BIND_INT("render.pages", render.pages),
      BIND_INT("render.styles", render.styles),
      BIND_INT("render.canvas", render.canvas),
      BIND_INT("render.dpi", render.dpi),
      BIND_INT("render.lines_min", render.lines_min),
      BIND_INT("render.lines_max", render.lines_max),
      BIND_REAL("split.train", split.train),
      BIND_REAL("split.test", split.test),
      BIND_REAL("split.validation", split.validation),
  };
  return kBindings;
}

#undef BIND_INT
#undef BIND_REAL
#undef BIND_STR
#undef BIND_BOOL

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError("config: " + msg);
}

}  // namespace

ExperimentConfig config_for_scale(const std::string& scale) {
  ExperimentConfig cfg;  // defaults are the desk preset
  if (scale == "desk") {
    cfg.scale = "desk";
  } else if (scale == "paper") {
    cfg.scale = "paper";
    cfg.enc.image_size = 224;
    cfg.enc.finetune_image_size = 448;
    cfg.enc.patch_size = 16;
    cfg.enc.hidden_size = 768;
    cfg.enc.num_layers = 12;
    cfg.enc.num_heads = 12;
    cfg.enc.intermediate_size = 3072;
    cfg.enc.encoder_stride = 16;
    cfg.enc.dropout = 0.1;
    cfg.dec.hidden_size = 768;
    cfg.dec.num_heads = 12;
    cfg.dec.intermediate_size = 3072;
    cfg.dec.max_output_length = 512;
    cfg.dec.dropout = 0.1;
    cfg.lm.num_layers = 6;
    cfg.lm.hidden_size = 768;
    cfg.lm.num_heads = 12;
    cfg.lm.max_seq_length = 512;
    cfg.lm.dropout = 0.10;
    cfg.lm.vocab_size = 50026;
    cfg.render.pages = 500;
    cfg.render.canvas = 896;
    assert_paper_constants(cfg);
  } else {
    throw UsageError("unknown scale '" + scale + "' (expected desk or paper)");
  }
  return cfg;
}

void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                       const std::string& value) {
  for (const auto& b : bindings()) {
    if (b.name == key) {
      b.set(cfg, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "scale") {
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": scale is selected by the --scale flag, not the "
                       "config file");
    }
    apply_config_line(cfg, key, value);
  }
}

std::vector<std::pair<std::string, std::string>> config_items(
    const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("scale", cfg.scale);
  for (const auto& b : bindings()) out.emplace_back(b.name, b.get(cfg));
  return out;
}

void ExperimentConfig::validate() const {
  require(scale == "desk" || scale == "paper", "scale must be desk or paper");
  require(precision == "f64" || precision == "f32",
          "precision must be f64 or f32");
  require(enc.image_size > 0 && enc.patch_size > 0,
          "encoder sizes must be positive");
  require(enc.image_size % enc.patch_size == 0,
          "enc.image_size must be divisible by enc.patch_size");
  require(enc.finetune_image_size % enc.patch_size == 0,
          "enc.finetune_image_size must be divisible by enc.patch_size");
  require(enc.encoder_stride == enc.patch_size,
          "enc.stride must equal enc.patch_size (non-overlapping patches)");
  require(enc.num_channels == 1,
          "enc.channels: only single-channel grayscale input is supported");
  require(enc.hidden_size % enc.num_heads == 0,
          "enc.hidden must be divisible by enc.heads");
  require(enc.dropout >= 0.0 && enc.dropout < 1.0, "enc.dropout in [0,1)");
  require(enc.mask_ratio > 0.0 && enc.mask_ratio < 1.0,
          "enc.mask_ratio in (0,1)");
  require(dec.hidden_size == enc.hidden_size,
          "dec.hidden must equal enc.hidden (cross-attention width)");
  require(dec.hidden_size % dec.num_heads == 0,
          "dec.hidden must be divisible by dec.heads");
  require(dec.max_output_length >= 1, "dec.max_len must be >= 1");
  require(dec.dropout >= 0.0 && dec.dropout < 1.0, "dec.dropout in [0,1)");
  require(lm.hidden_size % lm.num_heads == 0,
          "lm.hidden must be divisible by lm.heads");
  require(lm.max_seq_length >= 1, "lm.max_len must be >= 1");
  require(lm.dropout >= 0.0 && lm.dropout < 1.0, "lm.dropout in [0,1)");
  require(lm.vocab_size >= 0, "lm.vocab_size must be >= 0");
  require(train.lr > 0.0, "train.lr must be positive");
  require(train.batch_size >= 1, "train.batch must be >= 1");
  require(train.epochs >= 1, "train.epochs must be >= 1");
  require(train.steps >= 0, "train.steps must be >= 0");
  require(train.ss_schedule == "linear" ||
              train.ss_schedule == "inverse_sigmoid",
          "train.ss_schedule must be linear or inverse_sigmoid");
  require(train.ss_floor >= 0.0 && train.ss_floor <= 1.0,
          "train.ss_floor in [0,1]");
  require(train.mlm_mask_prob > 0.0 && train.mlm_mask_prob < 1.0,
          "train.mlm_mask_prob in (0,1)");
  require(decode.strategy == "greedy" || decode.strategy == "beam" ||
              decode.strategy == "nucleus",
          "decode.strategy must be greedy, beam, or nucleus");
  require(decode.beam_width >= 1, "decode.beam_width must be >= 1");
  require(decode.top_p > 0.0 && decode.top_p <= 1.0, "decode.top_p in (0,1]");
  require(decode.temperature > 0.0, "decode.temperature must be positive");
  require(refine.threshold >= 0.0 && refine.threshold <= 1.0,
          "refine.threshold in [0,1]");
  require(refine.max_rounds >= 0, "refine.max_rounds must be >= 0");
  require(render.pages >= 0, "render.pages must be >= 0");
  require(render.styles >= 1, "render.styles must be >= 1");
  require(render.canvas >= 32, "render.canvas must be >= 32");
  require(render.dpi >= 1, "render.dpi must be >= 1");
  require(render.lines_min >= 1 && render.lines_max >= render.lines_min,
          "render line count range is degenerate");
  require(split.train > 0.0 && split.test >= 0.0 && split.validation >= 0.0,
          "split ratios must be non-negative with train > 0");
  require(std::abs(split.train + split.test + split.validation - 1.0) < 1e-9,
          "split ratios must sum to 1");
}

void assert_paper_constants(const ExperimentConfig& cfg) {
  auto expect = [](int64_t got, int64_t want, const char* what) {
    if (got != want) {
      throw std::logic_error(std::string("paper preset violates published "
                                         "constant: ") +
                             what + " is " + std::to_string(got) +
                             ", expected " + std::to_string(want));
    }
  };
  expect(cfg.enc.num_layers, 12, "encoder layers");
  expect(cfg.enc.hidden_size, 768, "encoder hidden size");
  expect(cfg.enc.num_heads, 12, "encoder heads");
  expect(cfg.enc.intermediate_size, 3072, "encoder intermediate size");
  expect(cfg.enc.patch_size, 16, "patch size");
  expect(cfg.enc.encoder_stride, 16, "encoder stride");
  expect(cfg.enc.image_size, 224, "pre-training image size");
  expect(cfg.enc.finetune_image_size, 448, "fine-tuning image size");
  expect(cfg.lm.num_layers, 6, "LM layers");
  expect(cfg.lm.hidden_size, 768, "LM hidden size");
  expect(cfg.lm.num_heads, 12, "LM heads");
  expect(cfg.lm.max_seq_length, 512, "LM max sequence length");
  expect(cfg.lm.vocab_size, 50026, "LM vocabulary size");
  if (std::abs(cfg.lm.dropout - 0.10) > 1e-12) {
    throw std::logic_error("paper preset violates published constant: LM "
                           "dropout is not 0.10");
  }
}

}  // namespace phtr
