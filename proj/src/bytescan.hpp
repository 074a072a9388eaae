#pragma once

#include <cstdint>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace occlab::detail {

// Bitmask of positions i < n (n <= 64, buffer padded to a multiple of 16)
// where p[i] == v.
inline std::uint64_t match_bytes(const std::uint8_t* p, std::uint8_t v, std::uint32_t n) {
  std::uint64_t mask = 0;
#if defined(__SSE2__)
  const __m128i needle = _mm_set1_epi8(static_cast<char>(v));
  if (n <= 16) {
    const __m128i chunk = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p));
    const auto bits = static_cast<std::uint32_t>(_mm_movemask_epi8(_mm_cmpeq_epi8(chunk, needle)));
    return bits & ((1u << n) - 1);
  }
  for (std::uint32_t i = 0; i < n; i += 16) {
    const __m128i chunk = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p + i));
    const auto bits = static_cast<std::uint32_t>(_mm_movemask_epi8(_mm_cmpeq_epi8(chunk, needle)));
    mask |= std::uint64_t{bits} << i;
  }
#else
  for (std::uint32_t i = 0; i < n; ++i) mask |= std::uint64_t{p[i] == v} << i;
#endif
  return n == 64 ? mask : mask & ((std::uint64_t{1} << n) - 1);
}

inline std::uint32_t padded16(std::uint32_t n) { return (n + 15) & ~15u; }

// Nonzero 8-bit digest of a line, used to skip full tag compares.
inline std::uint8_t fingerprint(std::uint64_t line) {
  const auto h = static_cast<std::uint8_t>((line * 0x9e3779b97f4a7c15ull) >> 56);
  return h == 0 ? 1 : h;
}

}  // namespace occlab::detail
