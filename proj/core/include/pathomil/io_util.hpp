#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pathomil {

// Reads a whole file into memory. Throws FormatError if unreadable.
std::vector<uint8_t> read_file(const std::string& path);

// Writes bytes atomically: a sibling temp file is written and fsynced, then
// renamed over the destination, so readers never observe partial content.
void write_file_atomic(const std::string& path, const void* data, size_t size);
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

// Little-endian scalar append/decode helpers shared by the binary formats.
void put_u16le(std::vector<uint8_t>& out, uint16_t v);
void put_u32le(std::vector<uint8_t>& out, uint32_t v);
void put_u64le(std::vector<uint8_t>& out, uint64_t v);
void put_f32le(std::vector<uint8_t>& out, float v);

// Cursor-based reads; all throw FormatError naming the byte offset on
// truncation.
struct ByteReader {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;

  void require(size_t n, const char* what) const;
  uint8_t u8(const char* what);
  uint16_t u16le(const char* what);
  uint32_t u32le(const char* what);
  uint64_t u64le(const char* what);
  float f32le(const char* what);
  std::string bytes(size_t n, const char* what);
};

}  // namespace pathomil
