#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "occlab/cache.hpp"
#include "occlab/rng.hpp"

namespace occlab {

enum class GleSeedMode : std::uint8_t { Deterministic, Randomized };

struct MirageConfig {
  std::uint32_t num_skews = 2;
  std::uint32_t base_ways_per_skew = 8;
  std::uint32_t extra_ways_per_skew = 6;
  std::array<std::uint64_t, 2> index_key{};
  GleSeedMode gle_seed_mode = GleSeedMode::Deterministic;
  std::uint64_t gle_rng_seed = 0;
  /// Data-store entries, i.e. LLC line capacity.
  std::uint64_t data_entries = (16ull << 20) / 64;

  std::uint32_t ways_per_skew() const { return base_ways_per_skew + extra_ways_per_skew; }
  std::uint64_t sets_per_skew() const { return data_entries / (std::uint64_t{num_skews} * base_ways_per_skew); }
  std::uint64_t tag_entries() const { return sets_per_skew() * num_skews * ways_per_skew(); }

  void validate() const;
};

/// Maps a line to a set within one skew. Swappable so a real block cipher can
/// stand in for the default mixer.
class SkewIndexer {
 public:
  virtual ~SkewIndexer() = default;
  virtual std::uint64_t index(LineId line, std::uint32_t skew) const = 0;
};

/// Keyed xor-rotate-multiply mixer, one 64-bit key per skew.
class KeyedMixIndexer final : public SkewIndexer {
 public:
  KeyedMixIndexer(std::array<std::uint64_t, 2> keys, std::uint64_t sets_per_skew);
  std::uint64_t index(LineId line, std::uint32_t skew) const override { return mix(line, skew); }

  std::uint64_t mix(LineId line, std::uint32_t skew) const {
    const std::uint64_t key = keys_[skew];
    std::uint64_t x = line ^ key;
    x = std::rotl(x, 17) * 0x9e3779b97f4a7c15ull;
    x ^= std::rotl(x, 29) ^ std::rotr(key, 11);
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 31;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 29;
    return x & mask_;
  }

 private:
  std::array<std::uint64_t, 2> keys_;
  std::uint64_t mask_;
};

/// Set index of `line` in `skew` under the config's index keys.
std::uint64_t mirage_index(const MirageConfig& cfg, LineId line, std::uint32_t skew);

struct InstallOutcome {
  bool was_hit = false;
  std::uint32_t chosen_skew = 0;
  bool sae_occurred = false;
  std::optional<EvictedLine> global_evicted;
  // Set only together with sae_occurred.
  std::optional<EvictedLine> sae_evicted;
};

/// MIRAGE-style LLC: skewed keyed tag store with extra invalid ways per set,
/// decoupled data store, random global eviction when the data store is full.
class MirageCache final : public LastLevelCache {
 public:
  static constexpr std::uint32_t kNone = ~0u;
  /// GLE stream seed used in Deterministic mode.
  static constexpr std::uint64_t kFixedGleSeed = 0x5eed0f6e0a11ull;

  MirageCache(const MirageConfig& cfg, std::uint64_t rng_seed,
              std::unique_ptr<SkewIndexer> indexer = nullptr);

  const MirageConfig& config() const { return cfg_; }

  InstallOutcome lookup_or_install(LineId line, Actor actor);
  /// Evicts one data entry chosen by the GLE stream. Requires a full data store.
  EvictedLine global_evict();
  /// Only legal before the first install.
  void seed_gle(GleSeedMode mode, std::uint64_t seed);

  LlcResult access(LineId line, Actor actor) override;
  bool contains(LineId line) const override;
  bool invalidate(LineId line) override;
  void flush() override;

  std::uint64_t capacity_lines() const override { return cfg_.data_entries; }
  std::uint64_t valid_lines() const override { return valid_data_; }
  std::uint64_t owned_lines(Actor actor) const override { return owned_[static_cast<std::size_t>(actor)]; }
  void for_each_valid(const std::function<void(LineId, Actor)>& fn) const override;
  std::vector<std::string> check_invariants() const override;

  bool data_store_full() const { return valid_data_ == cfg_.data_entries; }
  std::uint64_t sae_count() const { return sae_count_; }
  std::uint64_t global_eviction_count() const { return gle_count_; }
  std::uint64_t install_count() const { return installs_; }
  /// Data-store slot index of the most recent global eviction victim.
  std::uint32_t last_gle_slot() const { return last_gle_slot_; }
  std::uint32_t valid_tags_in(std::uint32_t skew, std::uint64_t set) const;

 private:
  std::size_t tag_slot(std::uint32_t skew, std::uint64_t set, std::uint32_t way) const {
    return static_cast<std::size_t>((skew * sets_ + set) * ways_ + way);
  }
  std::uint64_t set_of(LineId line, std::uint32_t skew) const {
    if (indexer_) [[unlikely]] return indexer_->index(line, skew);
    return mixer_.mix(line, skew);
  }
  struct MissResult {
    std::uint32_t skew = 0;
    bool sae = false;
    bool evicted = false;
    EvictedLine victim;
  };

  std::uint32_t find_tag(LineId line, std::uint64_t* sets) const;
  MissResult install_miss(LineId line, Actor actor, const std::uint64_t* sets);
  std::uint64_t invalid_ways(std::uint32_t skew, std::uint64_t set) const;
  void release(std::size_t tag, std::uint32_t slot);
  void reset_free_list();

  static constexpr std::uint64_t kValid = 1ull << 63;

  MirageConfig cfg_;
  // Custom indexer if one was supplied; otherwise the keyed mixer runs inline.
  std::unique_ptr<SkewIndexer> indexer_;
  KeyedMixIndexer mixer_;
  std::uint64_t sets_;
  std::uint32_t ways_;

  detail::BigVector<std::uint64_t> tags_;
  // One padded byte row per (skew, set): tag digests, 0 for an invalid way.
  std::size_t digest_stride_ = 16;
  detail::BigVector<std::uint8_t> digests_;
  detail::BigVector<std::uint32_t> data_ptr_;
  detail::BigVector<std::uint32_t> reverse_ptr_;
  detail::BigVector<Actor> owner_;
  std::vector<std::uint32_t> scan_order_;
  std::vector<std::uint32_t> free_;

  Rng rng_;
  Rng gle_rng_;
  std::uint64_t valid_data_ = 0;
  std::array<std::uint64_t, kActorCount> owned_{};
  std::uint64_t installs_ = 0;
  std::uint64_t sae_count_ = 0;
  std::uint64_t gle_count_ = 0;
  std::uint32_t last_gle_slot_ = kNone;
};

}  // namespace occlab
