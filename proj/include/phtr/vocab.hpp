#pragma once

#include <map>
#include <string>
#include <vector>

#include "phtr/errors.hpp"

namespace phtr {

// Character-level decoder vocabulary. Symbols are UTF-8 codepoints; the
// newline character is the NEWLINE token, realizing line breaks as ordinary
// output tokens. Fixed id layout: PAD=0, BOS=1, EOS=2, NEWLINE=3, then the
// remaining symbols sorted.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kNewline = 3;

  // Deduplicates, drops '\n' (already NEWLINE), sorts.
  static Vocabulary from_symbols(const std::vector<std::string>& symbols);
  static Vocabulary from_corpus(const std::string& text);

  int size() const { return static_cast<int>(id_to_symbol_.size()); }

  // Unknown symbol -> DataError; '\n' encodes to NEWLINE.
  std::vector<int> encode(const std::string& text) const;

  // Rejects PAD/BOS/EOS ids (generation strips them first); NEWLINE decodes
  // to '\n'. encode(decode(ids)) == ids on anything this accepts.
  std::string decode(const std::vector<int>& ids) const;

  bool is_special(int id) const { return id >= 0 && id < 4; }
  bool contains(const std::string& symbol) const {
    return symbol_to_id_.count(symbol) > 0;
  }
  int id_of(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;

  // One symbol per line: "<pad>", "<bos>", "<eos>", "<newline>" header, then
  // plain symbols with space written as "<space>".
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_symbol_;
  std::map<std::string, int> symbol_to_id_;
};

// Character-level masked-LM tokenizer. Same file shape as Vocabulary but a
// different special header: PAD=0, BOS=1, EOS=2, MASK=3, UNK=4, then sorted
// symbols. Out-of-alphabet codepoints encode to UNK, so encoding is total.
class LmTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kMask = 3;
  static constexpr int kUnk = 4;

  static LmTokenizer from_symbols(const std::vector<std::string>& symbols);
  static LmTokenizer from_corpus(const std::string& text);

  int size() const { return static_cast<int>(id_to_symbol_.size()); }

  std::vector<int> encode(const std::string& line) const;

  // UNK decodes to U+FFFD; other specials are rejected.
  std::string decode(const std::vector<int>& ids) const;

  bool is_special(int id) const { return id >= 0 && id < 5; }
  int id_of(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;

  void save(const std::string& path) const;
  static LmTokenizer load(const std::string& path);

 private:
  std::vector<std::string> id_to_symbol_;
  std::map<std::string, int> symbol_to_id_;
};

}  // namespace phtr
