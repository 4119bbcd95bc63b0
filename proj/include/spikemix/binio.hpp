#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "spikemix/error.hpp"

// Little-endian primitives for the checkpoint and folded-model files. Writes
// go byte by byte so the files are identical across hosts.
namespace spikemix::binio {

inline void put_u8(std::ostream& os, uint8_t v) { os.put(static_cast<char>(v)); }

inline void put_u32(std::ostream& os, uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::ostream& os, uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  __builtin_memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint8_t get_u8(std::istream& is, const char* what) {
  int c = is.get();
  if (c == EOF) throw IoError(std::string("truncated file while reading ") + what);
  return static_cast<uint8_t>(c);
}

inline uint32_t get_u32(std::istream& is, const char* what) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(get_u8(is, what)) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& is, const char* what) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(get_u8(is, what)) << (8 * i);
  return v;
}

inline float get_f32(std::istream& is, const char* what) {
  uint32_t bits = get_u32(is, what);
  float v;
  __builtin_memcpy(&v, &bits, 4);
  return v;
}

inline std::string get_string(std::istream& is, const char* what, uint32_t max_len = 1u << 20) {
  uint32_t n = get_u32(is, what);
  if (n > max_len) throw IoError(std::string("corrupted length while reading ") + what);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<uint32_t>(is.gcount()) != n) throw IoError(std::string("truncated file while reading ") + what);
  return s;
}

}  // namespace spikemix::binio
