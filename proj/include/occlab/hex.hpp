#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace occlab {

using Block = std::array<std::uint8_t, 16>;

/// Parses exactly 32 hex digits (optional 0x prefix), big-endian as written.
std::optional<Block> parse_block_hex(std::string_view text);

/// 32 lowercase hex digits.
std::string to_hex(const Block& block);

}  // namespace occlab
