#include "phtr/render.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "phtr/errors.hpp"
#include "phtr/rng.hpp"
#include "phtr/text.hpp"

namespace phtr {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Layout proportions relative to the canvas side. Glyph coordinates live in
// x [0, 1] (times the per-glyph advance) and y [0, 1.2], with the baseline at
// y = 1 and descenders reaching 1.2.
constexpr double kMarginFrac = 0.06;
constexpr double kGlyphHeightFrac = 0.135;
constexpr double kAspect = 0.6;
constexpr double kPitchFactor = 1.6;
constexpr double kVerticalSlack = 0.3;

struct Pt {
  double x = 0.0;
  double y = 0.0;
};

using Stroke = std::vector<Pt>;

struct GlyphDef {
  std::vector<Stroke> strokes;
  double advance = 0.9;
};

// Angles are in degrees with y growing downward: 0 points right, 90 down,
// 180 left, 270 up. Sampling every 15 degrees keeps arcs smooth at the
// stroke widths used here.
void append_arc(Stroke& stroke, double cx, double cy, double rx, double ry,
                double a0, double a1) {
  const double span = a1 - a0;
  const int steps = std::max(2, static_cast<int>(std::ceil(std::abs(span) / 15.0)));
  for (int i = 0; i <= steps; ++i) {
    const double a = (a0 + span * i / steps) * kPi / 180.0;
    stroke.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

Stroke arc(double cx, double cy, double rx, double ry, double a0, double a1) {
  Stroke s;
  append_arc(s, cx, cy, rx, ry, a0, a1);
  return s;
}

Stroke circle(double cx, double cy, double r) {
  return arc(cx, cy, r, r, 0.0, 360.0);
}

Stroke dot(double cx, double cy) { return circle(cx, cy, 0.045); }

Stroke line(std::initializer_list<Pt> pts) { return Stroke(pts); }

std::map<std::string, GlyphDef> build_glyph_table() {
  std::map<std::string, GlyphDef> g;

  g["a"] = {{circle(0.42, 0.72, 0.26), line({{0.68, 0.48}, {0.68, 1.0}})}, 0.9};
  g["b"] = {{line({{0.22, 0.05}, {0.22, 1.0}}), circle(0.48, 0.74, 0.25)}, 0.9};
  g["c"] = {{arc(0.5, 0.72, 0.27, 0.27, 50.0, 310.0)}, 0.85};
  g["d"] = {{line({{0.74, 0.05}, {0.74, 1.0}}), circle(0.46, 0.74, 0.25)}, 0.9};
  g["e"] = {{line({{0.2, 0.7}, {0.72, 0.7}}),
             arc(0.46, 0.74, 0.26, 0.26, 360.0, 60.0)},
            0.9};
  g["f"] = {{arc(0.6, 0.25, 0.15, 0.15, 180.0, 290.0),
             line({{0.45, 0.25}, {0.45, 1.0}}), line({{0.28, 0.5}, {0.68, 0.5}})},
            0.75};
  g["g"] = {{circle(0.44, 0.7, 0.24), line({{0.68, 0.46}, {0.68, 1.05}}),
             arc(0.53, 1.05, 0.15, 0.15, 0.0, 100.0)},
            0.9};
  g["h"] = {{line({{0.22, 0.05}, {0.22, 1.0}}),
             arc(0.46, 0.78, 0.24, 0.24, 180.0, 360.0),
             line({{0.7, 0.78}, {0.7, 1.0}})},
            0.9};
  g["i"] = {{line({{0.5, 0.45}, {0.5, 1.0}}), dot(0.5, 0.25)}, 0.5};
  g["j"] = {{line({{0.56, 0.45}, {0.56, 1.05}}),
             arc(0.41, 1.05, 0.15, 0.15, 0.0, 100.0), dot(0.56, 0.25)},
            0.6};
  g["k"] = {{line({{0.24, 0.05}, {0.24, 1.0}}), line({{0.64, 0.45}, {0.24, 0.78}}),
             line({{0.42, 0.63}, {0.68, 1.0}})},
            0.9};
  g["l"] = {{line({{0.5, 0.05}, {0.5, 1.0}})}, 0.5};
  g["m"] = {{line({{0.16, 0.45}, {0.16, 1.0}}),
             arc(0.31, 0.64, 0.15, 0.19, 180.0, 360.0),
             line({{0.46, 0.64}, {0.46, 1.0}}),
             arc(0.61, 0.64, 0.15, 0.19, 180.0, 360.0),
             line({{0.76, 0.64}, {0.76, 1.0}})},
            1.05};
  g["n"] = {{line({{0.26, 0.45}, {0.26, 1.0}}),
             arc(0.47, 0.68, 0.21, 0.23, 180.0, 360.0),
             line({{0.68, 0.68}, {0.68, 1.0}})},
            0.9};
  g["o"] = {{circle(0.47, 0.72, 0.26)}, 0.9};
  g["p"] = {{line({{0.24, 0.48}, {0.24, 1.2}}), circle(0.5, 0.72, 0.25)}, 0.9};
  g["q"] = {{circle(0.44, 0.72, 0.25), line({{0.69, 0.48}, {0.69, 1.2}})}, 0.9};
  g["r"] = {{line({{0.28, 0.45}, {0.28, 1.0}}),
             arc(0.5, 0.69, 0.22, 0.24, 180.0, 320.0)},
            0.75};
  g["s"] = {{line({{0.66, 0.52}, {0.48, 0.45}, {0.32, 0.55}, {0.42, 0.7},
                   {0.58, 0.78}, {0.66, 0.9}, {0.48, 1.0}, {0.3, 0.93}})},
            0.85};
  g["t"] = {{line({{0.44, 0.12}, {0.44, 0.88}, {0.5, 0.98}, {0.66, 0.96}}),
             line({{0.24, 0.45}, {0.66, 0.45}})},
            0.75};
  g["u"] = {{line({{0.26, 0.45}, {0.26, 0.78}}),
             arc(0.47, 0.78, 0.21, 0.22, 180.0, 0.0),
             line({{0.68, 0.45}, {0.68, 1.0}})},
            0.9};
  g["v"] = {{line({{0.24, 0.45}, {0.47, 1.0}, {0.7, 0.45}})}, 0.9};
  g["w"] = {{line({{0.14, 0.45}, {0.3, 1.0}, {0.47, 0.62}, {0.64, 1.0},
                   {0.8, 0.45}})},
            1.05};
  g["x"] = {{line({{0.26, 0.45}, {0.68, 1.0}}), line({{0.68, 0.45}, {0.26, 1.0}})},
            0.9};
  g["y"] = {{line({{0.26, 0.45}, {0.5, 0.95}}), line({{0.72, 0.45}, {0.34, 1.2}})},
            0.9};
  g["z"] = {{line({{0.26, 0.45}, {0.68, 0.45}, {0.26, 1.0}, {0.7, 1.0}})}, 0.9};

  g["0"] = {{arc(0.48, 0.55, 0.24, 0.45, 0.0, 360.0)}, 0.9};
  g["1"] = {{line({{0.34, 0.32}, {0.52, 0.1}, {0.52, 1.0}}),
             line({{0.32, 1.0}, {0.7, 1.0}})},
            0.7};
  {
    Stroke two;
    append_arc(two, 0.47, 0.36, 0.24, 0.24, 200.0, 360.0);
    two.push_back({0.24, 1.0});
    two.push_back({0.72, 1.0});
    g["2"] = {{two}, 0.9};
  }
  g["3"] = {{arc(0.46, 0.33, 0.21, 0.21, 210.0, 450.0),
             arc(0.46, 0.77, 0.23, 0.23, 270.0, 510.0)},
            0.9};
  g["4"] = {{line({{0.6, 0.12}, {0.24, 0.66}, {0.76, 0.66}}),
             line({{0.6, 0.12}, {0.6, 1.0}})},
            0.9};
  g["5"] = {{line({{0.68, 0.12}, {0.3, 0.12}, {0.28, 0.48}}),
             arc(0.46, 0.72, 0.26, 0.26, 230.0, 450.0)},
            0.9};
  g["6"] = {{line({{0.62, 0.12}, {0.4, 0.32}, {0.27, 0.58}, {0.23, 0.75}}),
             circle(0.47, 0.74, 0.24)},
            0.9};
  g["7"] = {{line({{0.24, 0.12}, {0.72, 0.12}, {0.4, 1.0}}),
             line({{0.34, 0.52}, {0.62, 0.52}})},
            0.9};
  g["8"] = {{circle(0.48, 0.33, 0.2), circle(0.48, 0.76, 0.235)}, 0.9};
  g["9"] = {{circle(0.49, 0.38, 0.23), line({{0.72, 0.38}, {0.67, 0.72}, {0.52, 1.0}})},
            0.9};

  g["."] = {{dot(0.5, 0.95)}, 0.5};
  g[","] = {{line({{0.54, 0.88}, {0.52, 1.0}, {0.42, 1.14}})}, 0.5};
  g["!"] = {{line({{0.5, 0.1}, {0.5, 0.72}}), dot(0.5, 0.95)}, 0.5};
  {
    Stroke hook;
    append_arc(hook, 0.48, 0.33, 0.21, 0.21, 180.0, 450.0);
    hook.push_back({0.48, 0.72});
    g["?"] = {{hook, dot(0.48, 0.95)}, 0.9};
  }
  g["'"] = {{line({{0.52, 0.1}, {0.46, 0.3}})}, 0.5};
  g["-"] = {{line({{0.28, 0.62}, {0.68, 0.62}})}, 0.8};
  g[":"] = {{dot(0.5, 0.58), dot(0.5, 0.95)}, 0.5};
  g[";"] = {{dot(0.52, 0.58), line({{0.54, 0.88}, {0.52, 1.0}, {0.42, 1.14}})}, 0.5};

  return g;
}

const std::map<std::string, GlyphDef>& glyph_table() {
  static const std::map<std::string, GlyphDef> table = build_glyph_table();
  return table;
}

constexpr double kSpaceAdvance = 0.72;

double point_segment_distance(double px, double py, const Pt& a, const Pt& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double cx = a.x + t * dx;
  const double cy = a.y + t * dy;
  return std::hypot(px - cx, py - cy);
}

void draw_segment(std::vector<double>& coverage, int64_t canvas, const Pt& a,
                  const Pt& b, double radius) {
  const double pad = radius + 1.0;
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a.x, b.x) - pad)));
  const int64_t x1 = std::min<int64_t>(canvas - 1, static_cast<int64_t>(std::ceil(std::max(a.x, b.x) + pad)));
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a.y, b.y) - pad)));
  const int64_t y1 = std::min<int64_t>(canvas - 1, static_cast<int64_t>(std::ceil(std::max(a.y, b.y) + pad)));
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      const double d = point_segment_distance(x + 0.5, y + 0.5, a, b);
      const double cov = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      double& cell = coverage[static_cast<size_t>(y * canvas + x)];
      cell = std::max(cell, cov);
    }
  }
}

}  // namespace

StrokeStyle style_from_id(int64_t style_id) {
  Rng rng(Rng::mix(0x7374797065621ULL, static_cast<uint64_t>(style_id)));
  StrokeStyle s;
  s.slant = rng.uniform(-0.18, 0.3);
  s.thickness = rng.uniform(0.06, 0.11);
  s.jitter = rng.uniform(0.01, 0.035);
  s.wobble_amp = rng.uniform(0.01, 0.04);
  s.wobble_freq = rng.uniform(0.2, 0.9);
  s.spacing = rng.uniform(0.9, 1.08);
  s.darkness = rng.uniform(0.7, 1.0);
  return s;
}

const std::vector<std::string>& glyph_alphabet() {
  static const std::vector<std::string> symbols = [] {
    std::vector<std::string> out;
    out.push_back(" ");
    for (const auto& [name, def] : glyph_table()) out.push_back(name);
    return out;
  }();
  return symbols;
}

bool glyph_supported(const std::string& codepoint) {
  if (codepoint == " ") return true;
  return glyph_table().count(codepoint) > 0;
}

PageSample render_paragraph(const std::string& text, int64_t style_id,
                            int64_t canvas, uint64_t seed, int64_t dpi) {
  if (canvas < 32) throw DataError("render canvas must be at least 32 pixels");
  if (text.empty()) throw DataError("cannot render empty text");
  const std::vector<std::string> lines = split_lines(text);

  const StrokeStyle style = style_from_id(style_id);
  const double margin = canvas * kMarginFrac;
  const double glyph_h = canvas * kGlyphHeightFrac;
  const double pitch = glyph_h * kPitchFactor;
  const double radius = style.thickness * glyph_h;
  const double usable_right = canvas - margin;

  std::vector<double> coverage(static_cast<size_t>(canvas * canvas), 0.0);
  Rng rng(seed);

  for (size_t li = 0; li < lines.size(); ++li) {
    const double baseline = margin + glyph_h + static_cast<double>(li) * pitch;
    if (baseline + kVerticalSlack * glyph_h > canvas - margin) {
      std::ostringstream msg;
      msg << "line " << (li + 1) << " does not fit vertically on a " << canvas
          << "px canvas: '" << lines[li] << "'";
      throw DataError(msg.str());
    }
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    double pen_x = margin;
    const std::vector<std::string> symbols = utf8_codepoints(lines[li]);
    for (const std::string& sym : symbols) {
      if (sym == " ") {
        pen_x += kSpaceAdvance * kAspect * glyph_h * style.spacing;
        continue;
      }
      const auto it = glyph_table().find(sym);
      if (it == glyph_table().end()) {
        throw DataError("unsupported symbol '" + sym + "' in line " +
                        std::to_string(li + 1));
      }
      const GlyphDef& def = it->second;
      const double advance = def.advance * kAspect * glyph_h * style.spacing;
      if (pen_x + advance > usable_right) {
        std::ostringstream msg;
        msg << "line " << (li + 1) << " does not fit on a " << canvas
            << "px canvas at style " << style_id << ": '" << lines[li] << "'";
        throw DataError(msg.str());
      }
      const double wobble =
          style.wobble_amp * glyph_h *
          std::sin(phase + style.wobble_freq * pen_x / glyph_h);
      for (const Stroke& stroke : def.strokes) {
        Stroke mapped;
        mapped.reserve(stroke.size());
        for (const Pt& p : stroke) {
          const double jx = rng.uniform(-style.jitter, style.jitter) * glyph_h;
          const double jy = rng.uniform(-style.jitter, style.jitter) * glyph_h;
          const double gx = p.x + style.slant * (1.0 - p.y);
          mapped.push_back({pen_x + gx * kAspect * glyph_h + jx,
                            baseline - glyph_h * (1.0 - p.y) + wobble + jy});
        }
        for (size_t i = 0; i + 1 < mapped.size(); ++i) {
          draw_segment(coverage, canvas, mapped[i], mapped[i + 1], radius);
        }
        if (mapped.size() == 1) {
          draw_segment(coverage, canvas, mapped[0], mapped[0], radius);
        }
      }
      pen_x += advance;
    }
  }

  PageSample sample;
  sample.style_id = style_id;
  sample.dpi = dpi;
  sample.transcript = join_lines(lines);
  sample.image = Image(canvas, canvas, 1.0);
  sample.text_mask = Mask(canvas, canvas);
  for (int64_t y = 0; y < canvas; ++y) {
    for (int64_t x = 0; x < canvas; ++x) {
      const double cov = coverage[static_cast<size_t>(y * canvas + x)];
      sample.image.at(y, x) = 1.0 - style.darkness * cov;
      sample.text_mask.at(y, x) = cov >= 0.5 ? 1 : 0;
    }
  }
  return sample;
}

}  // namespace phtr
