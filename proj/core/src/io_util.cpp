#include "pathomil/io_util.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pathomil/errors.hpp"

namespace pathomil {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open file for reading: " + path);
  }
  in.seekg(0, std::ios::end);
  std::streampos end = in.tellg();
  if (end < 0) {
    throw FormatError("cannot determine size of file: " + path);
  }
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(end));
  if (!bytes.empty()) {
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!in) {
      throw FormatError("short read from file: " + path);
    }
  }
  return bytes;
}

void write_file_atomic(const std::string& path, const void* data, size_t size) {
  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw FormatError("cannot open file for writing: " + tmp.string());
    }
    if (size > 0) {
      out.write(reinterpret_cast<const char*>(data),
                static_cast<std::streamsize>(size));
    }
    out.flush();
    if (!out) {
      throw FormatError("short write to file: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    throw FormatError("cannot move " + tmp.string() + " into place: " +
                      ec.message());
  }
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_f32le(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32le(out, bits);
}

void ByteReader::require(size_t n, const char* what) const {
  if (pos + n > size) {
    throw FormatError(std::string("truncated input reading ") + what +
                      " at byte offset " + std::to_string(pos) + ": need " +
                      std::to_string(n) + " bytes, have " +
                      std::to_string(size - pos));
  }
}

uint8_t ByteReader::u8(const char* what) {
  require(1, what);
  return data[pos++];
}

uint16_t ByteReader::u16le(const char* what) {
  require(2, what);
  uint16_t v = static_cast<uint16_t>(data[pos]) |
               static_cast<uint16_t>(data[pos + 1]) << 8;
  pos += 2;
  return v;
}

uint32_t ByteReader::u32le(const char* what) {
  require(4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
  }
  pos += 4;
  return v;
}

uint64_t ByteReader::u64le(const char* what) {
  require(8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
  }
  pos += 8;
  return v;
}

float ByteReader::f32le(const char* what) {
  uint32_t bits = u32le(what);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string ByteReader::bytes(size_t n, const char* what) {
  require(n, what);
  std::string s(reinterpret_cast<const char*>(data + pos), n);
  pos += n;
  return s;
}

}  // namespace pathomil
