#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "occlab/cache.hpp"
#include "occlab/hex.hpp"

namespace occlab {

struct AesKey {
  Block bytes{};
  std::array<Block, 11> round_keys{};

  /// Runs the standard AES-128 key schedule (outside the simulated hierarchy).
  static AesKey expand(const Block& key);
};

/// Where the victim's lookup tables live in the simulated address space:
/// four 1 KB T-tables for rounds 1-9 and a 256-byte S-box for round 10.
struct TTableLayout {
  static constexpr std::uint64_t kDefaultBase = 0x1000'0000;

  std::array<Address, 4> table_base{};
  Address sbox_base{};
  std::uint32_t entry_size = 4;
  std::uint32_t entries_per_table = 256;

  static TTableLayout contiguous(Address base = Address{kDefaultBase});

  /// Line alignment and non-overlap; throws Error(InvalidArgument).
  void validate(std::uint32_t line_size) const;

  Address entry(std::uint32_t table, std::uint8_t index) const {
    return Address{table_base[table].value + std::uint64_t{index} * entry_size};
  }
  Address sbox_entry(std::uint8_t index) const { return Address{sbox_base.value + index}; }

  /// Every line any table occupies (T0..T3 then S-box), ascending.
  std::vector<LineId> lines(std::uint32_t line_size) const;
  /// Lowest and one-past-highest byte address covered by the tables.
  std::pair<std::uint64_t, std::uint64_t> span() const;
};

const std::array<std::uint8_t, 256>& aes_sbox();
/// T-table `t` in 0..3, OpenSSL Te0..Te3 word layout.
const std::array<std::uint32_t, 256>& aes_ttable(unsigned t);

/// Writes every table entry through the hierarchy as VICTIM.
void ttable_init(Hierarchy& h, const TTableLayout& layout);

/// One AES-128 encryption whose 160 table reads go through the hierarchy as VICTIM.
Block encrypt_one(Hierarchy& h, const AesKey& key, const TTableLayout& layout, const Block& plaintext);

/// Same table-driven computation without touching any hierarchy.
Block aes_encrypt(const AesKey& key, const Block& plaintext);

/// Lines of T_{i mod 4}[p_i ^ k_i] over the 16 first-round lookups, ascending.
std::vector<LineId> first_round_lines(const Block& key, const Block& plaintext, const TTableLayout& layout,
                                      std::uint32_t line_size);

}  // namespace occlab
