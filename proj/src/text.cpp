#include "phtr/text.hpp"

#include <unordered_set>

namespace phtr {

std::vector<std::string> utf8_codepoints(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    const unsigned char lead = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if ((lead & 0x80) == 0x00) {
      len = 1;
    } else if ((lead & 0xe0) == 0xc0) {
      len = 2;
    } else if ((lead & 0xf0) == 0xe0) {
      len = 3;
    } else if ((lead & 0xf8) == 0xf0) {
      len = 4;
    }
    if (i + len > text.size()) len = 1;
    // Continuation bytes must look like 10xxxxxx, else treat lead as a lone
    // byte so malformed input degrades instead of shifting the whole split.
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty() || lines.empty()) lines.push_back(current);
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

bool is_metric_punctuation(const std::string& cp) {
  static const std::unordered_set<std::string> kSet = {
      // ASCII Po/Ps/Pe/Pd/Pc
      "!", "\"", "#", "%", "&", "'", "(", ")", "*", ",", "-", ".", "/", ":",
      ";", "?", "@", "[", "\\", "]", "_", "{", "}",
      // Urdu / Arabic-script marks
      "،",  // arabic comma
      "؛",  // arabic semicolon
      "؟",  // arabic question mark
      "۔",  // arabic full stop
      "٫",  // arabic decimal separator
      "٬",  // arabic thousands separator
      // Devanagari danda / double danda
      "।", "॥",
      // General punctuation commonly found in OCR corpora
      "–", "—", "‘", "’", "“", "”", "…",
  };
  return kSet.count(cp) > 0;
}

}  // namespace phtr
