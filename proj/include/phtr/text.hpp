#pragma once

#include <string>
#include <vector>

namespace phtr {

// Splits UTF-8 text into codepoint strings. Invalid bytes pass through as
// single-byte units rather than aborting, so metrics stay total.
std::vector<std::string> utf8_codepoints(const std::string& text);

// Splits into lines on '\n'; a trailing newline does not create an empty
// final line. "a\nb" and "a\nb\n" both give {"a", "b"}.
std::vector<std::string> split_lines(const std::string& text);

std::string join_lines(const std::vector<std::string>& lines);

// True for codepoints the word-level metrics treat as standalone tokens.
// The exhaustive set is documented in docs/evaluation.md.
bool is_metric_punctuation(const std::string& codepoint);

}  // namespace phtr
