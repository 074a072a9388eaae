#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occlab/detail/huge_alloc.hpp"

namespace occlab {

using LineId = std::uint64_t;
using Cycles = std::uint64_t;

enum class Actor : std::uint8_t { Victim = 0, Attacker = 1, Noise = 2 };
inline constexpr std::size_t kActorCount = 3;

enum class Level : std::uint8_t { L1D, LLC, Memory };

enum class LlcDesign : std::uint8_t { SetAssoc, Mirage, MiragePlus };

const char* to_string(Actor actor);
const char* to_string(Level level);
const char* to_string(LlcDesign design);
std::optional<LlcDesign> parse_design(std::string_view text);

struct Address {
  std::uint64_t value = 0;
  friend bool operator==(Address, Address) = default;
};

struct CacheGeometry {
  std::uint32_t line_size = 64;
  std::uint64_t l1d_size = 32 * 1024;
  std::uint32_t l1d_ways = 8;
  std::uint64_t llc_size = 16ull << 20;
  std::uint32_t llc_ways = 16;

  /// Throws Error(InvalidArgument) describing the first violated invariant.
  void validate() const;

  std::uint64_t l1d_lines() const { return l1d_size / line_size; }
  std::uint64_t l1d_sets() const { return l1d_lines() / l1d_ways; }
  std::uint64_t llc_lines() const { return llc_size / line_size; }
  std::uint64_t llc_sets() const { return llc_lines() / llc_ways; }
  LineId line_of(Address addr) const { return addr.value / line_size; }
  Address address_of(LineId line) const { return Address{line * line_size}; }

  /// Stable one-line description, e.g. `line=64;l1d=32768/8;llc=16777216/16`.
  std::string summary() const;

  friend bool operator==(const CacheGeometry&, const CacheGeometry&) = default;
};

struct LatencyModel {
  Cycles l1_hit = 4;
  Cycles llc_hit = 40;
  Cycles memory = 200;

  void validate() const;
  Cycles of(Level level) const {
    switch (level) {
      case Level::L1D: return l1_hit;
      case Level::LLC: return llc_hit;
      case Level::Memory: break;
    }
    return memory;
  }

  friend bool operator==(const LatencyModel&, const LatencyModel&) = default;
};

struct EvictedLine {
  LineId line = 0;
  Actor owner = Actor::Noise;
  friend bool operator==(const EvictedLine&, const EvictedLine&) = default;
};

struct AccessOutcome {
  Level level_hit = Level::Memory;
  Cycles latency = 0;
  bool llc_install_occurred = false;
  // At most one LLC line leaves per access in every design.
  std::optional<EvictedLine> llc_evicted;

  friend bool operator==(const AccessOutcome&, const AccessOutcome&) = default;
};

/// Set-associative array with true LRU and per-line owner tags. Backs the L1d
/// and the SETASSOC LLC.
class LruCache {
 public:
  static constexpr std::uint32_t kNoWay = ~0u;

  LruCache(std::uint64_t sets, std::uint32_t ways);

  std::uint64_t sets() const { return sets_; }
  std::uint32_t ways() const { return ways_; }
  std::uint64_t capacity() const { return sets_ * ways_; }

  static constexpr std::uint32_t kMaxWays = 16;

  /// Looks the line up and, on a hit, makes it MRU.
  bool touch(LineId line);
  bool contains(LineId line) const { return find(line) != kNoWay; }
  /// Installs a line known to be absent; returns the LRU victim if the set was full.
  std::optional<EvictedLine> install(LineId line, Actor owner);
  bool invalidate(LineId line);
  void clear();

  std::uint64_t valid_lines() const { return valid_; }
  std::uint64_t owned_lines(Actor actor) const { return owned_[static_cast<std::size_t>(actor)]; }
  void for_each_valid(const std::function<void(LineId, Actor)>& fn) const;

 private:
  static constexpr std::uint64_t kValid = 1ull << 63;

  std::uint32_t find(LineId line) const;
  std::size_t set_of(LineId line) const { return static_cast<std::size_t>(line & set_mask_); }
  void to_front(std::size_t set, std::uint32_t way);
  void to_back(std::size_t set, std::uint32_t way);

  std::uint64_t sets_;
  std::uint32_t ways_;
  std::uint64_t set_mask_;
  detail::BigVector<std::uint64_t> tags_;
  // Per set: 16 tag digests (0 = invalid way), and the ways from MRU to LRU
  // packed as nibbles with invalid ways at the LRU end.
  detail::BigVector<std::uint8_t> digests_;
  detail::BigVector<std::uint64_t> recency_;
  detail::BigVector<Actor> owners_;
  std::uint64_t valid_ = 0;
  std::array<std::uint64_t, kActorCount> owned_{};
};

struct LlcResult {
  bool hit = false;
  std::optional<EvictedLine> evicted;
};

/// Install/lookup interface shared by every LLC design.
class LastLevelCache {
 public:
  virtual ~LastLevelCache() = default;

  virtual LlcResult access(LineId line, Actor actor) = 0;
  virtual bool contains(LineId line) const = 0;
  virtual bool invalidate(LineId line) = 0;
  virtual void flush() = 0;

  virtual std::uint64_t capacity_lines() const = 0;
  virtual std::uint64_t valid_lines() const = 0;
  virtual std::uint64_t owned_lines(Actor actor) const = 0;
  virtual void for_each_valid(const std::function<void(LineId, Actor)>& fn) const = 0;

  /// Full-scan structural check; one message per violation.
  virtual std::vector<std::string> check_invariants() const = 0;
};

class SetAssocLlc final : public LastLevelCache {
 public:
  explicit SetAssocLlc(const CacheGeometry& geometry);

  LlcResult access(LineId line, Actor actor) override;
  bool contains(LineId line) const override { return array_.contains(line); }
  bool invalidate(LineId line) override { return array_.invalidate(line); }
  void flush() override { array_.clear(); }

  std::uint64_t capacity_lines() const override { return array_.capacity(); }
  std::uint64_t valid_lines() const override { return array_.valid_lines(); }
  std::uint64_t owned_lines(Actor actor) const override { return array_.owned_lines(actor); }
  void for_each_valid(const std::function<void(LineId, Actor)>& fn) const override {
    array_.for_each_valid(fn);
  }
  std::vector<std::string> check_invariants() const override;

 private:
  LruCache array_;
};

class MirageCache;

/// Optional knobs for the randomized designs; defaults are the standard provisioning.
struct MirageParams {
  std::uint32_t base_ways_per_skew = 8;
  std::uint32_t extra_ways_per_skew = 6;
};

/// Inclusive L1d + LLC. Single owner, strictly sequential.
class Hierarchy {
 public:
  Hierarchy(const CacheGeometry& geometry, const LatencyModel& latency, LlcDesign design,
            std::uint64_t rng_seed, const MirageParams& mirage = {});
  ~Hierarchy();
  Hierarchy(Hierarchy&&) noexcept;
  Hierarchy& operator=(Hierarchy&&) noexcept;

  AccessOutcome access(Address addr, Actor actor, bool is_write = false);
  void flush_all();
  bool resident(Address addr, Level level) const;
  /// Fraction of LLC line capacity owned by the actor.
  double occupancy(Actor actor) const;

  /// Drops a line from both levels. Maintenance hook for the experiment
  /// harness; the attacker model never calls it.
  bool invalidate(Address addr);

  /// Inclusion, LLC structure and actor conservation; one message per violation.
  std::vector<std::string> check_invariants() const;

  const CacheGeometry& geometry() const { return geometry_; }
  const LatencyModel& latency() const { return latency_; }
  LlcDesign design() const { return design_; }
  LastLevelCache& llc() { return *llc_; }
  const LastLevelCache& llc() const { return *llc_; }
  const LruCache& l1d() const { return l1d_; }
  /// Non-null for MIRAGE and MIRAGE_PLUS.
  MirageCache* mirage() { return mirage_; }
  const MirageCache* mirage() const { return mirage_; }

  std::uint64_t accesses(Actor actor) const { return accesses_[static_cast<std::size_t>(actor)]; }

 private:
  CacheGeometry geometry_;
  LatencyModel latency_;
  LlcDesign design_;
  LruCache l1d_;
  std::unique_ptr<LastLevelCache> llc_;
  MirageCache* mirage_ = nullptr;
  std::array<std::uint64_t, kActorCount> accesses_{};
};

}  // namespace occlab
