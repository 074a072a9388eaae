#include "occlab/aes_victim.hpp"

#include <algorithm>
#include <bit>

#include "occlab/error.hpp"

namespace occlab {

namespace {

constexpr std::array<std::uint8_t, 256> kSbox = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
};

constexpr std::uint8_t xtime(std::uint8_t b) {
  return static_cast<std::uint8_t>((b << 1) ^ ((b & 0x80) ? 0x1b : 0x00));
}

constexpr std::array<std::array<std::uint32_t, 256>, 4> make_ttables() {
  std::array<std::array<std::uint32_t, 256>, 4> t{};
  for (unsigned x = 0; x < 256; ++x) {
    const std::uint8_t s = kSbox[x];
    const std::uint8_t s2 = xtime(s);
    const auto s3 = static_cast<std::uint8_t>(s2 ^ s);
    const std::uint32_t w = (std::uint32_t{s2} << 24) | (std::uint32_t{s} << 16) | (std::uint32_t{s} << 8) | s3;
    for (unsigned k = 0; k < 4; ++k) t[k][x] = std::rotr(w, static_cast<int>(8 * k));
  }
  return t;
}

constexpr auto kTTables = make_ttables();

std::uint32_t load_be(const Block& b, std::size_t word) {
  return (std::uint32_t{b[4 * word]} << 24) | (std::uint32_t{b[4 * word + 1]} << 16) |
         (std::uint32_t{b[4 * word + 2]} << 8) | b[4 * word + 3];
}

void store_be(Block& b, std::size_t word, std::uint32_t v) {
  b[4 * word] = static_cast<std::uint8_t>(v >> 24);
  b[4 * word + 1] = static_cast<std::uint8_t>(v >> 16);
  b[4 * word + 2] = static_cast<std::uint8_t>(v >> 8);
  b[4 * word + 3] = static_cast<std::uint8_t>(v);
}

// Table reads go through `on_read(address)` so the same code serves the
// simulated victim and the hierarchy-free reference.
template <typename OnRead>
Block encrypt_tables(const AesKey& key, const TTableLayout& layout, const Block& plaintext, OnRead&& on_read) {
  auto te = [&](unsigned t, std::uint32_t word, int shift) {
    const auto idx = static_cast<std::uint8_t>(word >> shift);
    on_read(layout.entry(t, idx));
    return kTTables[t][idx];
  };
  auto sb = [&](std::uint32_t word, int shift) {
    const auto idx = static_cast<std::uint8_t>(word >> shift);
    on_read(layout.sbox_entry(idx));
    return std::uint32_t{kSbox[idx]};
  };

  std::uint32_t s[4];
  for (std::size_t i = 0; i < 4; ++i) s[i] = load_be(plaintext, i) ^ load_be(key.round_keys[0], i);

  for (std::size_t round = 1; round < 10; ++round) {
    std::uint32_t t[4];
    for (std::size_t c = 0; c < 4; ++c) {
      t[c] = te(0, s[c], 24) ^ te(1, s[(c + 1) % 4], 16) ^ te(2, s[(c + 2) % 4], 8) ^ te(3, s[(c + 3) % 4], 0) ^
             load_be(key.round_keys[round], c);
    }
    std::copy(std::begin(t), std::end(t), std::begin(s));
  }

  Block out{};
  for (std::size_t c = 0; c < 4; ++c) {
    const std::uint32_t w = (sb(s[c], 24) << 24) | (sb(s[(c + 1) % 4], 16) << 16) | (sb(s[(c + 2) % 4], 8) << 8) |
                            sb(s[(c + 3) % 4], 0);
    store_be(out, c, w ^ load_be(key.round_keys[10], c));
  }
  return out;
}

}  // namespace

AesKey AesKey::expand(const Block& key) {
  AesKey k;
  k.bytes = key;
  std::array<std::uint8_t, 176> w{};
  std::copy(key.begin(), key.end(), w.begin());
  std::uint8_t rcon = 0x01;
  for (std::size_t i = 16; i < 176; i += 4) {
    std::uint8_t t[4] = {w[i - 4], w[i - 3], w[i - 2], w[i - 1]};
    if (i % 16 == 0) {
      const std::uint8_t first = t[0];
      t[0] = static_cast<std::uint8_t>(kSbox[t[1]] ^ rcon);
      t[1] = kSbox[t[2]];
      t[2] = kSbox[t[3]];
      t[3] = kSbox[first];
      rcon = xtime(rcon);
    }
    for (std::size_t j = 0; j < 4; ++j) w[i + j] = static_cast<std::uint8_t>(w[i + j - 16] ^ t[j]);
  }
  for (std::size_t r = 0; r < 11; ++r) std::copy_n(w.begin() + 16 * r, 16, k.round_keys[r].begin());
  return k;
}

TTableLayout TTableLayout::contiguous(Address base) {
  TTableLayout layout;
  for (std::uint32_t t = 0; t < 4; ++t) layout.table_base[t] = Address{base.value + t * 1024ull};
  layout.sbox_base = Address{base.value + 4096};
  return layout;
}

void TTableLayout::validate(std::uint32_t line_size) const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::InvalidArgument, "invalid T-table layout: " + msg); };
  if (entry_size != 4 || entries_per_table != 256) bad("tables must be 256 entries of 4 bytes");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const Address& a : table_base) ranges.emplace_back(a.value, a.value + 1024);
  ranges.emplace_back(sbox_base.value, sbox_base.value + 256);
  for (const auto& [lo, hi] : ranges) {
    if (lo % line_size != 0) bad("table base not line-aligned");
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second) bad("tables overlap");
  }
}

std::vector<LineId> TTableLayout::lines(std::uint32_t line_size) const {
  std::vector<LineId> out;
  for (const Address& a : table_base) {
    for (std::uint64_t off = 0; off < 1024; off += line_size) out.push_back((a.value + off) / line_size);
  }
  for (std::uint64_t off = 0; off < 256; off += line_size) out.push_back((sbox_base.value + off) / line_size);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::pair<std::uint64_t, std::uint64_t> TTableLayout::span() const {
  std::uint64_t lo = sbox_base.value;
  std::uint64_t hi = sbox_base.value + 256;
  for (const Address& a : table_base) {
    lo = std::min(lo, a.value);
    hi = std::max(hi, a.value + 1024);
  }
  return {lo, hi};
}

const std::array<std::uint8_t, 256>& aes_sbox() { return kSbox; }

const std::array<std::uint32_t, 256>& aes_ttable(unsigned t) { return kTTables.at(t); }

void ttable_init(Hierarchy& h, const TTableLayout& layout) {
  layout.validate(h.geometry().line_size);
  for (std::uint32_t t = 0; t < 4; ++t) {
    for (unsigned i = 0; i < 256; ++i) h.access(layout.entry(t, static_cast<std::uint8_t>(i)), Actor::Victim, true);
  }
  for (unsigned i = 0; i < 256; ++i) h.access(layout.sbox_entry(static_cast<std::uint8_t>(i)), Actor::Victim, true);
}

Block encrypt_one(Hierarchy& h, const AesKey& key, const TTableLayout& layout, const Block& plaintext) {
  return encrypt_tables(key, layout, plaintext, [&h](Address a) { h.access(a, Actor::Victim, false); });
}

Block aes_encrypt(const AesKey& key, const Block& plaintext) {
  static const TTableLayout layout = TTableLayout::contiguous();
  return encrypt_tables(key, layout, plaintext, [](Address) {});
}

std::vector<LineId> first_round_lines(const Block& key, const Block& plaintext, const TTableLayout& layout,
                                      std::uint32_t line_size) {
  std::vector<LineId> out;
  out.reserve(16);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto idx = static_cast<std::uint8_t>(plaintext[i] ^ key[i]);
    out.push_back(layout.entry(static_cast<std::uint32_t>(i % 4), idx).value / line_size);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace occlab
