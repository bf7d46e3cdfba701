#include "phtr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace phtr {

double bilinear_sample(const Image& img, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int64_t x0 = static_cast<int64_t>(std::floor(cx));
  const int64_t y0 = static_cast<int64_t>(std::floor(cy));
  const int64_t x1 = std::min(x0 + 1, img.width - 1);
  const int64_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = cx - static_cast<double>(x0);
  const double fy = cy - static_cast<double>(y0);
  const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
  const double bot = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

Image resize_bilinear(const Image& img, int64_t out_h, int64_t out_w) {
  if (out_h < 1 || out_w < 1) {
    throw DataError("resize target must be positive");
  }
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (int64_t x = 0; x < out_w; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      out.at(y, x) = bilinear_sample(img, src_x, src_y);
    }
  }
  return out;
}

Image downsample_halve(const Image& img) {
  if (img.height < 2 || img.width < 2) {
    throw DataError("downsample_halve needs both dimensions >= 2, got " +
                    std::to_string(img.height) + "x" +
                    std::to_string(img.width));
  }
  const int64_t out_h = (img.height + 1) / 2;
  const int64_t out_w = (img.width + 1) / 2;
  return resize_bilinear(img, out_h, out_w);
}

Image resize_square(const Image& img, int64_t target, double background) {
  if (target < 8) {
    throw DataError("resize target must be >= 8, got " +
                    std::to_string(target));
  }
  const int64_t side = std::max(img.height, img.width);
  if (img.height == img.width) {
    return resize_bilinear(img, target, target);
  }
  Image padded(side, side, background);
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      padded.at(y, x) = img.at(y, x);
    }
  }
  return resize_bilinear(padded, target, target);
}

Mask resize_square_mask(const Mask& mask, int64_t target) {
  Image field(mask.height, mask.width);
  for (int64_t i = 0; i < mask.height * mask.width; ++i) {
    field.pixels[static_cast<size_t>(i)] = mask.bits[static_cast<size_t>(i)] ? 1.0 : 0.0;
  }
  Image resized = resize_square(field, target, 0.0);
  Mask out(target, target);
  for (int64_t i = 0; i < target * target; ++i) {
    out.bits[static_cast<size_t>(i)] = resized.pixels[static_cast<size_t>(i)] >= 0.5 ? 1 : 0;
  }
  return out;
}

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width));
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.at(y, x), 0.0, 1.0);
      row[static_cast<size_t>(x)] =
          static_cast<uint8_t>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw DataError("short write to " + path);
}

namespace {

// Reads one whitespace-delimited PGM header token, skipping # comments.
std::string next_pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  if (next_pgm_token(f) != "P5") {
    throw DataError(path + " is not a binary PGM (P5) file");
  }
  int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(next_pgm_token(f));
    h = std::stoll(next_pgm_token(f));
    maxval = std::stoll(next_pgm_token(f));
  } catch (const std::exception&) {
    throw DataError(path + ": malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval != 255) {
    throw DataError(path + ": unsupported PGM geometry or maxval");
  }
  Image img(h, w);
  std::vector<uint8_t> raw(static_cast<size_t>(w * h));
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw DataError(path + ": truncated PGM payload");
  }
  for (size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = static_cast<double>(raw[i]) / 255.0;
  }
  return img;
}

void write_mask_pgm(const std::string& path, const Mask& mask) {
  Image img(mask.height, mask.width);
  for (size_t i = 0; i < mask.bits.size(); ++i) {
    img.pixels[i] = mask.bits[i] ? 1.0 : 0.0;
  }
  write_pgm(path, img);
}

Mask read_mask_pgm(const std::string& path) {
  Image img = read_pgm(path);
  Mask mask(img.height, img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    mask.bits[i] = img.pixels[i] >= 0.5 ? 1 : 0;
  }
  return mask;
}

}  // namespace phtr
