#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "occlab/aes_victim.hpp"
#include "occlab/cache.hpp"
#include "occlab/rng.hpp"
#include "occlab/trace.hpp"

namespace occlab {

/// Attacker-owned and noise address regions, disjoint from the victim tables.
inline constexpr std::uint64_t kAttackerBufferBase = 0x40'0000'0000ull;
inline constexpr std::uint64_t kNoiseRegionBase = 0x80'0000'0000ull;

struct AttackerBuffer {
  Address base{};
  std::uint64_t lines = 0;
  std::uint32_t line_size = 64;

  Address line_address(std::uint64_t i) const { return Address{base.value + i * line_size}; }
};

/// Running cursor into the noise region so every prime pass streams fresh lines.
struct NoiseStream {
  std::uint64_t next_address = kNoiseRegionBase;
};

struct PrimeReport {
  std::uint64_t noise_lines = 0;
  /// T-table lines still resident after streaming, dropped by the harness.
  std::uint64_t fallback_invalidations = 0;
};

struct OccupyPolicy {
  std::uint32_t max_passes = 32;
  /// A convergence pass with at most this fraction of misses ends the fill.
  double settle_fraction = 1.0 / 32;
};

struct OccupyReport {
  std::uint32_t passes = 0;
  std::uint64_t last_pass_misses = 0;
};

struct MeasureBreakdown {
  std::uint64_t l1_hits = 0;
  std::uint64_t llc_hits = 0;
  std::uint64_t misses = 0;
  Cycles timing = 0;
};

/// Buffer lines for occupancy X of an LLC of `llc_size` bytes (X% of the LLC, rounded up to lines).
std::uint64_t buffer_lines_for(double occupancy_pct, const CacheGeometry& geometry);

/// Step 2: streams at least twice the LLC capacity of distinct NOISE lines,
/// then drops any T-table line that survived.
PrimeReport prime_flush(Hierarchy& h, const TTableLayout& layout, NoiseStream& noise);

/// Step 3: first touch in random order, then descending passes until one
/// misses on at most settle_fraction of the buffer.
AttackerBuffer occupy(Hierarchy& h, double occupancy_pct, Rng& rng, const OccupyPolicy& policy = {},
                      OccupyReport* report = nullptr);

/// Step 5: sum of access latencies over the buffer in allocation order.
Cycles measure(Hierarchy& h, const AttackerBuffer& buffer);
MeasureBreakdown measure_detailed(Hierarchy& h, const AttackerBuffer& buffer);

enum class PlaintextMode : std::uint8_t { Fixed, Random };

struct ExperimentConfig {
  double occupancy_pct = 75.0;
  std::uint64_t n_traces = 1;
  PlaintextMode plaintext_mode = PlaintextMode::Random;
  Block fixed_plaintext{};
  Block victim_key{};
  std::string key_id = "k";
  std::uint32_t noise_avg_m = 1;
  std::uint64_t rng_seed = 0;
  LlcDesign design = LlcDesign::SetAssoc;
  CacheGeometry geometry{};
  LatencyModel latency{};
  MirageParams mirage{};
  OccupyPolicy occupy{};
  bool reuse_hierarchy = false;
  std::uint32_t jobs = 1;

  void validate() const;
  TraceFileHeader header() const;
};

struct ExperimentStats {
  std::uint64_t prime_fallback_invalidations = 0;
  std::uint64_t sae_events = 0;
  std::uint64_t global_evictions = 0;
  std::uint64_t victim_reads = 0;
  std::uint64_t encryptions = 0;
};

struct ExperimentResult {
  TraceSet traces;
  ExperimentStats stats;
};

/// Called after every completed trace with (completed, total).
using ProgressFn = std::function<void(std::uint64_t, std::uint64_t)>;

/// Steps 1-5 per trace. Output order is by trace_idx for any `jobs`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});

}  // namespace occlab
