#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace streamsfm {

// Little-endian primitive IO shared by the wire protocol and binary
// snapshots. Byte order is explicit so the formats are stable across hosts.

inline void WriteBytes(std::ostream& out, const void* data, size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void ReadBytes(std::istream& in, void* data, size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw std::runtime_error("unexpected end of stream");
  }
}

inline void WriteU8(std::ostream& out, uint8_t v) { WriteBytes(out, &v, 1); }

inline void WriteU32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  WriteBytes(out, b, 4);
}

inline void WriteU64(std::ostream& out, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  WriteBytes(out, b, 8);
}

inline void WriteF32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  WriteU32(out, bits);
}

inline void WriteF64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  WriteU64(out, bits);
}

inline uint8_t ReadU8(std::istream& in) {
  uint8_t v;
  ReadBytes(in, &v, 1);
  return v;
}

inline uint32_t ReadU32(std::istream& in) {
  uint8_t b[4];
  ReadBytes(in, b, 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t ReadU64(std::istream& in) {
  uint8_t b[8];
  ReadBytes(in, b, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float ReadF32(std::istream& in) {
  const uint32_t bits = ReadU32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double ReadF64(std::istream& in) {
  const uint64_t bits = ReadU64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace streamsfm
