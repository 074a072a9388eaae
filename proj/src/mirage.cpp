#include "occlab/mirage.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

#include "bytescan.hpp"
#include "occlab/error.hpp"

namespace occlab {

void MirageConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::InvalidArgument, "invalid mirage config: " + msg); };
  if (num_skews != 2) bad("num_skews must be 2");
  if (base_ways_per_skew == 0) bad("base_ways_per_skew must be positive");
  if (extra_ways_per_skew == 0) bad("extra_ways_per_skew must be positive (tags must be over-provisioned)");
  if (data_entries == 0 || data_entries % (std::uint64_t{num_skews} * base_ways_per_skew) != 0) {
    bad("data_entries must be a multiple of num_skews * base_ways_per_skew");
  }
  if (ways_per_skew() > 64) bad("at most 64 tag ways per skew");
  if (!std::has_single_bit(sets_per_skew())) bad("sets per skew must be a power of two");
  if (data_entries > 0xffffffffull || tag_entries() > 0xffffffffull) bad("store too large");
}

KeyedMixIndexer::KeyedMixIndexer(std::array<std::uint64_t, 2> keys, std::uint64_t sets_per_skew)
    : keys_(keys), mask_(sets_per_skew - 1) {}

std::uint64_t mirage_index(const MirageConfig& cfg, LineId line, std::uint32_t skew) {
  if (skew >= cfg.num_skews) fail(ErrorKind::InvalidArgument, "skew out of range");
  return KeyedMixIndexer(cfg.index_key, cfg.sets_per_skew()).index(line, skew);
}

// ---------------------------------------------------------------------------

namespace {

const MirageConfig& validated(const MirageConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

MirageCache::MirageCache(const MirageConfig& cfg, std::uint64_t rng_seed, std::unique_ptr<SkewIndexer> indexer)
    : cfg_(validated(cfg)),
      indexer_(std::move(indexer)),
      mixer_(cfg_.index_key, cfg_.sets_per_skew()),
      rng_(rng_seed) {
  sets_ = cfg_.sets_per_skew();
  ways_ = cfg_.ways_per_skew();
  digest_stride_ = detail::padded16(ways_);
  tags_.assign(cfg_.tag_entries(), 0);
  digests_.assign(cfg_.tag_entries() / ways_ * digest_stride_, 0);
  data_ptr_.assign(cfg_.tag_entries(), kNone);
  reverse_ptr_.assign(cfg_.data_entries, kNone);
  owner_.assign(cfg_.data_entries, Actor::Noise);
  seed_gle(cfg_.gle_seed_mode, cfg_.gle_rng_seed);
}

void MirageCache::seed_gle(GleSeedMode mode, std::uint64_t seed) {
  if (installs_ != 0) fail(ErrorKind::ContractViolation, "seed_gle after first install");
  cfg_.gle_seed_mode = mode;
  cfg_.gle_rng_seed = seed;
  scan_order_.resize(cfg_.data_entries);
  std::iota(scan_order_.begin(), scan_order_.end(), 0u);
  if (mode == GleSeedMode::Deterministic) {
    gle_rng_.seed(kFixedGleSeed);
  } else {
    gle_rng_.seed(derive_seed(seed, 0x91e));
    Rng order_rng(derive_seed(seed, 0x5ca));
    shuffle(std::span<std::uint32_t>(scan_order_), order_rng);
  }
  reset_free_list();
}

void MirageCache::reset_free_list() {
  // Popped from the back, so the first scan-order slot is claimed first.
  free_.assign(scan_order_.rbegin(), scan_order_.rend());
}

std::uint32_t MirageCache::find_tag(LineId line, std::uint64_t* sets) const {
  const std::uint64_t tag = line | kValid;
  const std::uint8_t fp = detail::fingerprint(line);
  sets[0] = set_of(line, 0);
  sets[1] = set_of(line, 1);
  for (std::uint32_t s = 0; s < 2; ++s) {
    const std::size_t row = s * sets_ + sets[s];
    std::uint64_t candidates = detail::match_bytes(&digests_[row * digest_stride_], fp, ways_);
    while (candidates) {
      const std::size_t t = row * ways_ + static_cast<std::size_t>(std::countr_zero(candidates));
      if (tags_[t] == tag) return static_cast<std::uint32_t>(t);
      candidates &= candidates - 1;
    }
  }
  return kNone;
}

std::uint64_t MirageCache::invalid_ways(std::uint32_t skew, std::uint64_t set) const {
  return detail::match_bytes(&digests_[(skew * sets_ + set) * digest_stride_], 0, ways_);
}

std::uint32_t MirageCache::valid_tags_in(std::uint32_t skew, std::uint64_t set) const {
  return ways_ - static_cast<std::uint32_t>(std::popcount(invalid_ways(skew, set)));
}

void MirageCache::release(std::size_t tag, std::uint32_t slot) {
  tags_[tag] = 0;
  digests_[tag / ways_ * digest_stride_ + tag % ways_] = 0;
  data_ptr_[tag] = kNone;
  reverse_ptr_[slot] = kNone;
  --owned_[static_cast<std::size_t>(owner_[slot])];
  --valid_data_;
  free_.push_back(slot);
}

EvictedLine MirageCache::global_evict() {
  if (!data_store_full()) fail(ErrorKind::ContractViolation, "global_evict on a data store that is not full");
  const auto slot = static_cast<std::uint32_t>(bounded(gle_rng_, cfg_.data_entries));
  const std::uint32_t tag = reverse_ptr_[slot];
  const EvictedLine victim{tags_[tag] & ~kValid, owner_[slot]};
  release(tag, slot);
  ++gle_count_;
  last_gle_slot_ = slot;
  return victim;
}

InstallOutcome MirageCache::lookup_or_install(LineId line, Actor actor) {
  std::uint64_t sets[2];
  InstallOutcome out;
  if (find_tag(line, sets) != kNone) {
    out.was_hit = true;
    return out;
  }
  const MissResult miss = install_miss(line, actor, sets);
  out.chosen_skew = miss.skew;
  out.sae_occurred = miss.sae;
  if (miss.sae) {
    out.sae_evicted = miss.victim;
  } else if (miss.evicted) {
    out.global_evicted = miss.victim;
  }
  return out;
}

MirageCache::MissResult MirageCache::install_miss(LineId line, Actor actor, const std::uint64_t* sets) {
  MissResult out;
  ++installs_;
  std::uint64_t invalid[2] = {invalid_ways(0, sets[0]), invalid_ways(1, sets[1])};
  const int free0 = std::popcount(invalid[0]);
  const int free1 = std::popcount(invalid[1]);
  std::uint32_t skew;
  if (free0 != free1) {
    skew = free0 > free1 ? 0 : 1;
  } else {
    skew = coin(rng_) ? 1 : 0;
  }
  out.skew = skew;
  const std::size_t row = skew * sets_ + sets[skew];
  const std::size_t base = row * ways_;

  if (invalid[skew] == 0) {
    const std::size_t tag = base + bounded(rng_, ways_);
    const std::uint32_t slot = data_ptr_[tag];
    out.sae = out.evicted = true;
    out.victim = EvictedLine{tags_[tag] & ~kValid, owner_[slot]};
    release(tag, slot);
    ++sae_count_;
    invalid[skew] = invalid_ways(skew, sets[skew]);
  } else if (data_store_full()) {
    out.evicted = true;
    out.victim = global_evict();
    // The victim may have sat in this very set.
    invalid[skew] = invalid_ways(skew, sets[skew]);
  }

  const auto way = static_cast<std::size_t>(std::countr_zero(invalid[skew]));
  const std::size_t tag = base + way;
  const std::uint32_t slot = free_.back();
  free_.pop_back();
  tags_[tag] = line | kValid;
  digests_[row * digest_stride_ + way] = detail::fingerprint(line);
  data_ptr_[tag] = slot;
  reverse_ptr_[slot] = static_cast<std::uint32_t>(tag);
  owner_[slot] = actor;
  ++owned_[static_cast<std::size_t>(actor)];
  ++valid_data_;
  return out;
}

LlcResult MirageCache::access(LineId line, Actor actor) {
  std::uint64_t sets[2];
  if (find_tag(line, sets) != kNone) return {true, std::nullopt};
  const MissResult miss = install_miss(line, actor, sets);
  if (!miss.evicted) return {false, std::nullopt};
  return {false, miss.victim};
}

bool MirageCache::contains(LineId line) const {
  std::uint64_t sets[2];
  return find_tag(line, sets) != kNone;
}

bool MirageCache::invalidate(LineId line) {
  std::uint64_t sets[2];
  const std::uint32_t tag = find_tag(line, sets);
  if (tag == kNone) return false;
  release(tag, data_ptr_[tag]);
  return true;
}

void MirageCache::flush() {
  std::fill(tags_.begin(), tags_.end(), 0);
  std::fill(digests_.begin(), digests_.end(), 0);
  std::fill(data_ptr_.begin(), data_ptr_.end(), kNone);
  std::fill(reverse_ptr_.begin(), reverse_ptr_.end(), kNone);
  valid_data_ = 0;
  owned_ = {};
  reset_free_list();
}

void MirageCache::for_each_valid(const std::function<void(LineId, Actor)>& fn) const {
  for (std::size_t slot = 0; slot < reverse_ptr_.size(); ++slot) {
    if (reverse_ptr_[slot] != kNone) fn(tags_[reverse_ptr_[slot]] & ~kValid, owner_[slot]);
  }
}

std::vector<std::string> MirageCache::check_invariants() const {
  std::vector<std::string> problems;
  auto report = [&](std::string msg) {
    if (problems.size() < 32) problems.push_back("mirage: " + std::move(msg));
  };

  std::vector<LineId> lines;
  for (std::uint32_t s = 0; s < cfg_.num_skews; ++s) {
    for (std::uint64_t set = 0; set < sets_; ++set) {
      for (std::uint32_t w = 0; w < ways_; ++w) {
        const std::size_t t = tag_slot(s, set, w);
        const std::uint8_t digest = digests_[(s * sets_ + set) * digest_stride_ + w];
        if (tags_[t] == 0) {
          if (data_ptr_[t] != kNone) report("invalid tag " + std::to_string(t) + " holds a data pointer");
          if (digest != 0) report("invalid tag " + std::to_string(t) + " keeps a digest");
          continue;
        }
        const LineId line = tags_[t] & ~kValid;
        if (digest != detail::fingerprint(line)) report("digest of tag " + std::to_string(t) + " is stale");
        lines.push_back(line);
        if (set_of(line, s) != set) report("tag " + std::to_string(t) + " sits in the wrong set");
        const std::uint32_t p = data_ptr_[t];
        if (p >= cfg_.data_entries || reverse_ptr_[p] != t) {
          report("forward pointer of tag " + std::to_string(t) + " not inverted by reverse pointer");
        }
      }
    }
  }

  std::uint64_t valid = 0;
  std::array<std::uint64_t, kActorCount> per_actor{};
  for (std::size_t slot = 0; slot < reverse_ptr_.size(); ++slot) {
    const std::uint32_t t = reverse_ptr_[slot];
    if (t == kNone) continue;
    ++valid;
    ++per_actor[static_cast<std::size_t>(owner_[slot])];
    if (t >= tags_.size() || tags_[t] == 0 || data_ptr_[t] != slot) {
      report("reverse pointer of slot " + std::to_string(slot) + " names a tag that does not point back");
    }
  }
  if (valid != lines.size()) report("valid tags != valid data entries");
  if (valid != valid_data_) report("valid-data counter out of sync");
  if (valid + free_.size() != cfg_.data_entries) report("free list does not cover the invalid slots");
  for (std::size_t a = 0; a < kActorCount; ++a) {
    if (per_actor[a] != owned_[a]) report(std::string("owner counter out of sync for ") + to_string(static_cast<Actor>(a)));
  }
  std::sort(lines.begin(), lines.end());
  if (std::adjacent_find(lines.begin(), lines.end()) != lines.end()) report("a line is tagged twice");
  return problems;
}

}  // namespace occlab
