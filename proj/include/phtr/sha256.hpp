#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phtr {

// Minimal SHA-256 (FIPS 180-4) used for manifest and run-log content hashes.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  // Finalizes and returns the lowercase hex digest. The object is spent.
  std::string hex_digest();

  static std::string of_bytes(const void* data, size_t len);
  static std::string of_string(const std::string& s);
  static std::string of_file(const std::string& path);  // throws DataError

 private:
  void process_block(const uint8_t* block);

  uint32_t h_[8];
  uint64_t total_len_ = 0;
  uint8_t buf_[64];
  size_t buf_len_ = 0;
};

}  // namespace phtr
