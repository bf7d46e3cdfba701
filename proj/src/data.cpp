#include "phtr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "phtr/errors.hpp"
#include "phtr/rng.hpp"
#include "phtr/sha256.hpp"

namespace phtr {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void smooth_separable(Image& field, double sigma) {
  const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = w;
    norm += w;
  }
  for (double& w : kernel) w /= norm;

  const int64_t h = field.height;
  const int64_t w = field.width;
  Image tmp(h, w);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int64_t k = -radius; k <= radius; ++k) {
        const int64_t xs = std::clamp<int64_t>(x + k, 0, w - 1);
        acc += kernel[static_cast<size_t>(k + radius)] * field.at(y, xs);
      }
      tmp.at(y, x) = acc;
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int64_t k = -radius; k <= radius; ++k) {
        const int64_t ys = std::clamp<int64_t>(y + k, 0, h - 1);
        acc += kernel[static_cast<size_t>(k + radius)] * tmp.at(ys, x);
      }
      field.at(y, x) = acc;
    }
  }
}

// Solves the 8x8 linear system for a homography by Gaussian elimination with
// partial pivoting.
std::array<double, 8> solve_homography(const std::array<double, 8>& dst_x,
                                       const std::array<double, 8>& src_u) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = dst_x[static_cast<size_t>(2 * i)];
    const double y = dst_x[static_cast<size_t>(2 * i + 1)];
    const double u = src_u[static_cast<size_t>(2 * i)];
    const double v = src_u[static_cast<size_t>(2 * i + 1)];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1.0;
    r0[6] = -x * u; r0[7] = -y * u; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1.0;
    r1[6] = -x * v; r1[7] = -y * v; r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 8; ++row) {
      if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
    }
    if (std::abs(a[pivot][col]) < 1e-12) {
      throw DataError("degenerate perspective corner configuration");
    }
    std::swap_ranges(a[col], a[col] + 9, a[pivot]);
    for (int row = 0; row < 8; ++row) {
      if (row == col) continue;
      const double factor = a[row][col] / a[col][col];
      for (int k = col; k < 9; ++k) a[row][k] -= factor * a[col][k];
    }
  }
  std::array<double, 8> p;
  for (int i = 0; i < 8; ++i) p[static_cast<size_t>(i)] = a[i][8] / a[i][i];
  return p;
}

Image resolution_down_up(const Image& img, double factor) {
  const int64_t dh = std::max<int64_t>(2, std::llround(img.height / factor));
  const int64_t dw = std::max<int64_t>(2, std::llround(img.width / factor));
  return resize_bilinear(resize_bilinear(img, dh, dw), img.height, img.width);
}

Image mask_to_field(const Mask& mask) {
  Image field(mask.height, mask.width);
  for (size_t i = 0; i < mask.bits.size(); ++i) {
    field.pixels[i] = mask.bits[i] ? 1.0 : 0.0;
  }
  return field;
}

Mask field_to_mask(const Image& field) {
  Mask mask(field.height, field.width);
  for (size_t i = 0; i < field.pixels.size(); ++i) {
    mask.bits[i] = field.pixels[i] >= 0.5 ? 1 : 0;
  }
  return mask;
}

std::string entry_image_name(const std::string& id) { return id + ".pgm"; }
std::string entry_mask_name(const std::string& id) { return id + "_mask.pgm"; }
std::string entry_text_name(const std::string& id) { return id + ".txt"; }

}  // namespace

void AugmentationPolicy::validate() const {
  const double probs[] = {prob_resolution, prob_perspective, prob_elastic,
                          prob_brightness, prob_contrast};
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DataError("augmentation probability must lie in [0, 1]");
    }
  }
  if (!(perspective_max_shift >= 0.0 && perspective_max_shift <= 0.45)) {
    throw DataError("perspective corner shift must lie in [0, 0.45]");
  }
  if (!(elastic_alpha >= 0.0)) throw DataError("elastic alpha must be >= 0");
  if (!(elastic_sigma > 0.0)) throw DataError("elastic sigma must be > 0");
  if (!(brightness_delta >= 0.0)) {
    throw DataError("brightness delta must be >= 0");
  }
  if (!(contrast_lo > 0.0 && contrast_lo <= contrast_hi)) {
    throw DataError("contrast range must satisfy 0 < lo <= hi");
  }
  if (!(resolution_lo >= 1.0 && resolution_lo <= resolution_hi)) {
    throw DataError("resolution scale range must satisfy 1 <= lo <= hi");
  }
}

DisplacementField elastic_field(int64_t height, int64_t width, double alpha,
                                double sigma, uint64_t seed) {
  if (alpha < 0.0) throw DataError("elastic alpha must be >= 0");
  if (!(sigma > 0.0)) throw DataError("elastic sigma must be > 0");
  DisplacementField field{Image(height, width), Image(height, width)};
  if (alpha == 0.0) return field;
  Rng rng(seed);
  for (double& v : field.dx.pixels) v = rng.uniform(-1.0, 1.0);
  for (double& v : field.dy.pixels) v = rng.uniform(-1.0, 1.0);
  smooth_separable(field.dx, sigma);
  smooth_separable(field.dy, sigma);
  for (double& v : field.dx.pixels) v *= alpha;
  for (double& v : field.dy.pixels) v *= alpha;
  return field;
}

Image warp_with_field(const Image& img, const DisplacementField& field) {
  if (field.dx.height != img.height || field.dx.width != img.width ||
      field.dy.height != img.height || field.dy.width != img.width) {
    throw ShapeError("displacement field does not match image dimensions");
  }
  Image out(img.height, img.width);
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      out.at(y, x) = bilinear_sample(img, x + field.dx.at(y, x),
                                     y + field.dy.at(y, x));
    }
  }
  return out;
}

Image elastic_distort(const Image& img, double alpha, double sigma,
                      uint64_t seed) {
  return warp_with_field(img,
                         elastic_field(img.height, img.width, alpha, sigma, seed));
}

Image perspective_warp(const Image& img,
                       const std::array<double, 8>& corner_shift) {
  const double w = static_cast<double>(img.width);
  const double h = static_cast<double>(img.height);
  const std::array<double, 8> dst = {0.0, 0.0, w, 0.0, w, h, 0.0, h};
  std::array<double, 8> src = dst;
  for (int i = 0; i < 4; ++i) {
    src[static_cast<size_t>(2 * i)] += corner_shift[static_cast<size_t>(2 * i)] * w;
    src[static_cast<size_t>(2 * i + 1)] += corner_shift[static_cast<size_t>(2 * i + 1)] * h;
  }
  const std::array<double, 8> p = solve_homography(dst, src);

  Image out(img.height, img.width);
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      const double dx = x + 0.5;
      const double dy = y + 0.5;
      const double den = p[6] * dx + p[7] * dy + 1.0;
      const double u = (p[0] * dx + p[1] * dy + p[2]) / den;
      const double v = (p[3] * dx + p[4] * dy + p[5]) / den;
      out.at(y, x) = bilinear_sample(img, u - 0.5, v - 0.5);
    }
  }
  return out;
}

Image brightness_contrast(const Image& img, double b, double c) {
  Image out(img.height, img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    out.pixels[i] = std::clamp(c * (img.pixels[i] - 0.5) + 0.5 + b, 0.0, 1.0);
  }
  return out;
}

PageSample augment(const PageSample& sample, const AugmentationPolicy& policy,
                   int64_t sample_index, AugmentMode mode,
                   AppliedTransforms* applied) {
  policy.validate();
  if (mode == AugmentMode::kEval) {
    throw UsageError("augmentation is restricted to training mode");
  }

  Rng rng(Rng::mix(policy.master_seed, static_cast<uint64_t>(sample_index)));
  AppliedTransforms fired;
  fired.resolution = rng.uniform() < policy.prob_resolution;
  fired.perspective = rng.uniform() < policy.prob_perspective;
  fired.elastic = rng.uniform() < policy.prob_elastic;
  fired.brightness = rng.uniform() < policy.prob_brightness;
  fired.contrast = rng.uniform() < policy.prob_contrast;

  const double factor = rng.uniform(policy.resolution_lo, policy.resolution_hi);
  std::array<double, 8> shifts;
  for (double& s : shifts) {
    s = rng.uniform(-policy.perspective_max_shift, policy.perspective_max_shift);
  }
  const uint64_t elastic_seed = rng.next_u64();
  const double b = rng.uniform(-policy.brightness_delta, policy.brightness_delta);
  const double c = rng.uniform(policy.contrast_lo, policy.contrast_hi);

  PageSample out = sample;
  const bool has_mask = sample.text_mask.height > 0;
  Image mask_field = has_mask ? mask_to_field(sample.text_mask) : Image();

  if (fired.resolution) {
    out.image = resolution_down_up(out.image, factor);
    if (has_mask) mask_field = resolution_down_up(mask_field, factor);
  }
  if (fired.perspective) {
    out.image = perspective_warp(out.image, shifts);
    if (has_mask) mask_field = perspective_warp(mask_field, shifts);
  }
  if (fired.elastic) {
    const DisplacementField field = elastic_field(
        out.image.height, out.image.width, policy.elastic_alpha,
        policy.elastic_sigma, elastic_seed);
    out.image = warp_with_field(out.image, field);
    if (has_mask) mask_field = warp_with_field(mask_field, field);
  }
  if (fired.brightness || fired.contrast) {
    out.image = brightness_contrast(out.image, fired.brightness ? b : 0.0,
                                    fired.contrast ? c : 1.0);
  }
  if (has_mask) out.text_mask = field_to_mask(mask_field);

  if (applied != nullptr) *applied = fired;
  return out;
}

Image preprocess_page(const Image& img, int64_t dpi, int64_t target) {
  if (dpi > 200) {
    return resize_square(downsample_halve(img), target);
  }
  return resize_square(img, target);
}

SplitIndices split_dataset(int64_t count, const SplitConfig& ratios,
                           uint64_t seed) {
  if (count <= 0) throw DataError("cannot split an empty dataset");
  const double parts[3] = {ratios.train, ratios.test, ratios.validation};
  double sum = 0.0;
  for (double r : parts) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw DataError("split ratios must lie in [0, 1]");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1");
  }

  int64_t sizes[3];
  double remainders[3];
  int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = count * parts[i];
    sizes[i] = static_cast<int64_t>(std::floor(exact + 1e-12));
    remainders[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3,
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (int64_t extra = count - assigned, i = 0; extra > 0; --extra, ++i) {
    ++sizes[order[i % 3]];
  }

  std::vector<int64_t> indices(static_cast<size_t>(count));
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(seed);
  rng.shuffle(indices);

  SplitIndices split;
  auto take = [&](std::vector<int64_t>& dst, int64_t offset, int64_t n) {
    dst.assign(indices.begin() + offset, indices.begin() + offset + n);
    std::sort(dst.begin(), dst.end());
  };
  take(split.train, 0, sizes[0]);
  take(split.test, sizes[0], sizes[1]);
  take(split.validation, sizes[0] + sizes[1], sizes[2]);
  return split;
}

std::vector<PageSample> compose_pages(const std::vector<std::string>& corpus,
                                      const RenderConfig& cfg, uint64_t seed) {
  if (corpus.empty()) throw DataError("corpus has no lines to render");
  if (cfg.lines_min < 1 || cfg.lines_min > cfg.lines_max) {
    throw DataError("line count range must satisfy 1 <= min <= max");
  }
  if (cfg.styles < 1) throw DataError("need at least one style");

  std::vector<PageSample> pages;
  pages.reserve(static_cast<size_t>(cfg.pages));
  for (int64_t i = 0; i < cfg.pages; ++i) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
    const int64_t style = i % cfg.styles;
    const int64_t n_lines =
        cfg.lines_min + static_cast<int64_t>(rng.uniform_int(
                            static_cast<uint64_t>(cfg.lines_max - cfg.lines_min + 1)));
    std::string text;
    for (int64_t l = 0; l < n_lines; ++l) {
      if (l > 0) text += '\n';
      text += corpus[static_cast<size_t>(rng.uniform_int(corpus.size()))];
    }
    pages.push_back(
        render_paragraph(text, style, cfg.canvas, rng.next_u64(), cfg.dpi));
  }
  return pages;
}

void write_dataset_split(const std::string& dir,
                         const std::vector<DatasetEntry>& entries) {
  fs::create_directories(dir);
  std::vector<const DatasetEntry*> sorted;
  sorted.reserve(entries.size());
  for (const DatasetEntry& e : entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const DatasetEntry* a, const DatasetEntry* b) {
              return a->id < b->id;
            });
  for (size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1]->id == sorted[i]->id) {
      throw DataError("duplicate dataset entry id '" + sorted[i]->id + "'");
    }
  }

  const fs::path root(dir);
  std::ofstream manifest(root / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw DataError("cannot write manifest in '" + dir + "'");
  for (const DatasetEntry* e : sorted) {
    if (e->id.empty()) throw DataError("dataset entry id must be non-empty");
    const std::string image_name = entry_image_name(e->id);
    write_pgm((root / image_name).string(), e->sample.image);
    write_mask_pgm((root / entry_mask_name(e->id)).string(),
                   e->sample.text_mask);
    std::ofstream txt(root / entry_text_name(e->id), std::ios::binary);
    txt << e->sample.transcript;
    txt.close();

    json line;
    line["id"] = e->id;
    line["image"] = image_name;
    line["mask"] = entry_mask_name(e->id);
    line["transcript"] = entry_text_name(e->id);
    line["style_id"] = e->sample.style_id;
    line["dpi"] = e->sample.dpi;
    line["sha256"] = Sha256::of_file((root / image_name).string());
    manifest << line.dump() << "\n";
  }
}

std::vector<DatasetEntry> load_dataset_split(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream manifest(root / "manifest.jsonl", std::ios::binary);
  if (!manifest) {
    throw DataError("missing manifest.jsonl in '" + dir + "'");
  }
  std::vector<DatasetEntry> entries;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed manifest line: ") + e.what());
    }
    DatasetEntry entry;
    entry.id = j.at("id").get<std::string>();
    entry.sample.style_id = j.at("style_id").get<int64_t>();
    entry.sample.dpi = j.at("dpi").get<int64_t>();
    const std::string image_path = (root / j.at("image").get<std::string>()).string();
    entry.sample.image = read_pgm(image_path);
    entry.sample.text_mask =
        read_mask_pgm((root / j.at("mask").get<std::string>()).string());
    std::ifstream txt(root / j.at("transcript").get<std::string>(),
                      std::ios::binary);
    if (!txt) throw DataError("missing transcript for '" + entry.id + "'");
    std::ostringstream buf;
    buf << txt.rdbuf();
    entry.sample.transcript = buf.str();
    const std::string digest = Sha256::of_file(image_path);
    if (digest != j.at("sha256").get<std::string>()) {
      throw DataError("image checksum mismatch for '" + entry.id + "'");
    }
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) {
    throw DataError("manifest in '" + dir + "' lists no entries");
  }
  return entries;
}

std::string manifest_sha256(const std::string& dir) {
  return Sha256::of_file((fs::path(dir) / "manifest.jsonl").string());
}

}  // namespace phtr
