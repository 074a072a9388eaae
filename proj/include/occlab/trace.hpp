#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occlab/cache.hpp"
#include "occlab/hex.hpp"

namespace occlab {

/// One attacker observation.
struct TraceRecord {
  std::uint64_t trace_idx = 0;
  Block plaintext{};
  Block ciphertext{};
  double occupancy_pct = 0.0;
  Cycles timing = 0;
  std::string key_id;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using TraceSet = std::vector<TraceRecord>;

struct TraceFileHeader {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string design;
  std::string geometry;
  double occupancy_pct = 0.0;
  std::string key_id;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const TraceFileHeader&, const TraceFileHeader&) = default;
};

}  // namespace occlab
