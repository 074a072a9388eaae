#pragma once

// Byte-oriented AES-128 used as an independent oracle. Shares no code or
// tables with the library: the S-box is rebuilt from GF(2^8) inversion and the
// affine map, and rounds run on a 4x4 state with explicit MixColumns.

#include <array>
#include <cstdint>

namespace refaes {

using Block = std::array<std::uint8_t, 16>;

inline std::uint8_t gmul(std::uint8_t a, std::uint8_t b) {
  std::uint8_t p = 0;
  while (b) {
    if (b & 1) p ^= a;
    const bool hi = a & 0x80;
    a = static_cast<std::uint8_t>(a << 1);
    if (hi) a ^= 0x1b;
    b >>= 1;
  }
  return p;
}

// a^254 = a^-1 in GF(2^8), with 0 -> 0.
inline std::uint8_t ginv(std::uint8_t a) {
  std::uint8_t r = 1;
  std::uint8_t base = a;
  for (int e = 254; e; e >>= 1) {
    if (e & 1) r = gmul(r, base);
    base = gmul(base, base);
  }
  return a ? r : 0;
}

inline std::uint8_t rotl8(std::uint8_t x, int s) { return static_cast<std::uint8_t>((x << s) | (x >> (8 - s))); }

inline std::array<std::uint8_t, 256> make_sbox() {
  std::array<std::uint8_t, 256> s{};
  for (int i = 0; i < 256; ++i) {
    const std::uint8_t b = ginv(static_cast<std::uint8_t>(i));
    s[i] = static_cast<std::uint8_t>(b ^ rotl8(b, 1) ^ rotl8(b, 2) ^ rotl8(b, 3) ^ rotl8(b, 4) ^ 0x63);
  }
  return s;
}

inline const std::array<std::uint8_t, 256>& sbox() {
  static const auto s = make_sbox();
  return s;
}

inline std::array<Block, 11> expand_key(const Block& key) {
  std::array<std::uint8_t, 176> w{};
  for (int i = 0; i < 16; ++i) w[i] = key[i];
  std::uint8_t rcon = 1;
  for (int i = 16; i < 176; i += 4) {
    std::uint8_t t[4] = {w[i - 4], w[i - 3], w[i - 2], w[i - 1]};
    if (i % 16 == 0) {
      const std::uint8_t first = t[0];
      t[0] = static_cast<std::uint8_t>(sbox()[t[1]] ^ rcon);
      t[1] = sbox()[t[2]];
      t[2] = sbox()[t[3]];
      t[3] = sbox()[first];
      rcon = gmul(rcon, 2);
    }
    for (int j = 0; j < 4; ++j) w[i + j] = static_cast<std::uint8_t>(w[i - 16 + j] ^ t[j]);
  }
  std::array<Block, 11> rk{};
  for (int r = 0; r < 11; ++r) {
    for (int j = 0; j < 16; ++j) rk[r][j] = w[16 * r + j];
  }
  return rk;
}

inline Block encrypt(const Block& key, const Block& in) {
  const auto rk = expand_key(key);
  // state[row][col], column-major input order.
  std::uint8_t st[4][4];
  for (int c = 0; c < 4; ++c) {
    for (int r = 0; r < 4; ++r) st[r][c] = static_cast<std::uint8_t>(in[4 * c + r] ^ rk[0][4 * c + r]);
  }
  for (int round = 1; round <= 10; ++round) {
    for (auto& row : st) {
      for (auto& b : row) b = sbox()[b];
    }
    for (int r = 1; r < 4; ++r) {
      std::uint8_t tmp[4];
      for (int c = 0; c < 4; ++c) tmp[c] = st[r][(c + r) % 4];
      for (int c = 0; c < 4; ++c) st[r][c] = tmp[c];
    }
    if (round != 10) {
      for (int c = 0; c < 4; ++c) {
        const std::uint8_t a0 = st[0][c], a1 = st[1][c], a2 = st[2][c], a3 = st[3][c];
        st[0][c] = static_cast<std::uint8_t>(gmul(a0, 2) ^ gmul(a1, 3) ^ a2 ^ a3);
        st[1][c] = static_cast<std::uint8_t>(a0 ^ gmul(a1, 2) ^ gmul(a2, 3) ^ a3);
        st[2][c] = static_cast<std::uint8_t>(a0 ^ a1 ^ gmul(a2, 2) ^ gmul(a3, 3));
        st[3][c] = static_cast<std::uint8_t>(gmul(a0, 3) ^ a1 ^ a2 ^ gmul(a3, 2));
      }
    }
    for (int c = 0; c < 4; ++c) {
      for (int r = 0; r < 4; ++r) st[r][c] ^= rk[round][4 * c + r];
    }
  }
  Block out{};
  for (int c = 0; c < 4; ++c) {
    for (int r = 0; r < 4; ++r) out[4 * c + r] = st[r][c];
  }
  return out;
}

}  // namespace refaes
