#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/image.hpp"

namespace phtr {

// One synthetic page: grayscale image (1 = paper, 0 = ink), its transcript,
// the exact ink mask, the writing style that produced it, and the source
// resolution tag used by preprocessing.
struct PageSample {
  Image image;
  std::string transcript;
  Mask text_mask;
  int64_t style_id = 0;
  int64_t dpi = 300;
};

// Deterministic per-style handwriting parameters. Ten ids give ten visibly
// different hands; the mapping is fixed so datasets are reproducible.
struct StrokeStyle {
  double slant = 0.0;       // shear of stroke tops, in glyph widths
  double thickness = 0.0;   // stroke radius as a fraction of glyph height
  double jitter = 0.0;      // control-point displacement, fraction of height
  double wobble_amp = 0.0;  // baseline wave amplitude, fraction of height
  double wobble_freq = 0.0; // baseline wave cycles per glyph cell
  double spacing = 1.0;     // advance multiplier
  double darkness = 1.0;    // peak ink darkness in (0, 1]
};

StrokeStyle style_from_id(int64_t style_id);

// Symbols the stroke font can draw: a-z, 0-9, space, and . , ! ? ' - : ;
const std::vector<std::string>& glyph_alphabet();
bool glyph_supported(const std::string& codepoint);

// Renders multi-line text onto a square canvas. Deterministic in
// (text, style_id, canvas, seed). The mask marks pixels whose ink coverage
// reaches 0.5. Throws DataError when a line does not fit, naming the first
// offending line, or on unsupported symbols.
PageSample render_paragraph(const std::string& text, int64_t style_id,
                            int64_t canvas, uint64_t seed, int64_t dpi = 300);

}  // namespace phtr
