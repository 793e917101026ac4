#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace facegen {

// Streaming SHA-256, used for content-addressed image files and export
// bundle integrity hashes.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, std::size_t size);
  std::string hex_digest();  // finalizes; further updates are invalid

  static std::string of(const void* data, std::size_t size);
  static std::string of(const std::string& s) { return of(s.data(), s.size()); }
  static std::string of_file(const std::string& path);

 private:
  void process_block(const std::uint8_t* block);
  std::uint32_t state_[8];
  std::uint8_t buffer_[64];
  std::size_t buffered_ = 0;
  std::uint64_t total_bits_ = 0;
  bool finalized_ = false;
};

std::string base64_encode(const std::uint8_t* data, std::size_t size);
std::string base64_encode(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace facegen
