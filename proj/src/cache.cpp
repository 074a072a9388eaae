#include "occlab/cache.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <sstream>

#include "bytescan.hpp"
#include "occlab/error.hpp"
#include "occlab/mirage.hpp"
#include "occlab/rng.hpp"

namespace occlab {

const char* to_string(Actor actor) {
  switch (actor) {
    case Actor::Victim: return "VICTIM";
    case Actor::Attacker: return "ATTACKER";
    case Actor::Noise: return "NOISE";
  }
  return "?";
}

const char* to_string(Level level) {
  switch (level) {
    case Level::L1D: return "L1D";
    case Level::LLC: return "LLC";
    case Level::Memory: return "MEMORY";
  }
  return "?";
}

const char* to_string(LlcDesign design) {
  switch (design) {
    case LlcDesign::SetAssoc: return "setassoc";
    case LlcDesign::Mirage: return "mirage";
    case LlcDesign::MiragePlus: return "mirage_plus";
  }
  return "?";
}

std::optional<LlcDesign> parse_design(std::string_view text) {
  if (text == "setassoc") return LlcDesign::SetAssoc;
  if (text == "mirage") return LlcDesign::Mirage;
  if (text == "mirage_plus") return LlcDesign::MiragePlus;
  return std::nullopt;
}

void CacheGeometry::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::InvalidArgument, "invalid geometry: " + msg); };
  if (!std::has_single_bit(line_size) || line_size < 16) bad("line_size must be a power of two >= 16");
  if (!std::has_single_bit(l1d_size)) bad("l1d_size must be a power of two");
  if (!std::has_single_bit(llc_size)) bad("llc_size must be a power of two");
  if (l1d_size < line_size || llc_size < line_size) bad("cache smaller than one line");
  if (l1d_size >= llc_size) bad("l1d_size must be smaller than llc_size");
  if (l1d_ways == 0 || l1d_lines() % l1d_ways != 0) bad("l1d_ways must divide the L1d line count");
  if (llc_ways == 0 || llc_lines() % llc_ways != 0) bad("llc_ways must divide the LLC line count");
  if (l1d_ways > LruCache::kMaxWays || llc_ways > LruCache::kMaxWays) bad("at most 16 ways per set");
  if (!std::has_single_bit(l1d_sets()) || !std::has_single_bit(llc_sets())) bad("set counts must be powers of two");
}

std::string CacheGeometry::summary() const {
  std::ostringstream out;
  out << "line=" << line_size << ";l1d=" << l1d_size << '/' << l1d_ways << ";llc=" << llc_size << '/'
      << llc_ways;
  return out.str();
}

void LatencyModel::validate() const {
  if (l1_hit == 0 || !(l1_hit < llc_hit && llc_hit < memory)) {
    fail(ErrorKind::InvalidArgument, "invalid latency model: need 0 < l1_hit < llc_hit < memory");
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kNibbleOnes = 0x1111111111111111ull;

// Mask of the lowest `n` nibbles.
constexpr std::uint64_t nibbles(std::uint32_t n) { return n >= 16 ? ~0ull : (1ull << (4 * n)) - 1; }

// Recency position of `way` in a packed row.
std::uint32_t position(std::uint64_t row, std::uint32_t way) {
  const std::uint64_t v = row ^ (way * kNibbleOnes);
  const std::uint64_t zero = (v - kNibbleOnes) & ~v & (kNibbleOnes << 3);
  return static_cast<std::uint32_t>(std::countr_zero(zero)) / 4;
}

}  // namespace

LruCache::LruCache(std::uint64_t sets, std::uint32_t ways)
    : sets_(sets),
      ways_(ways),
      set_mask_(sets - 1),
      tags_(sets * ways, 0),
      digests_(sets * 16, 0),
      recency_(sets, 0),
      owners_(sets * ways, Actor::Noise) {
  if (ways == 0 || ways > kMaxWays || !std::has_single_bit(sets)) {
    fail(ErrorKind::InvalidArgument, "LRU array needs 1..16 ways and a power-of-two set count");
  }
  clear();
}

std::uint32_t LruCache::find(LineId line) const {
  const std::size_t set = set_of(line);
  std::uint64_t candidates = detail::match_bytes(&digests_[set * 16], detail::fingerprint(line), ways_);
  const std::uint64_t tag = line | kValid;
  while (candidates) {
    const auto way = static_cast<std::uint32_t>(std::countr_zero(candidates));
    if (tags_[set * ways_ + way] == tag) return way;
    candidates &= candidates - 1;
  }
  return kNoWay;
}

void LruCache::to_front(std::size_t set, std::uint32_t way) {
  std::uint64_t& row = recency_[set];
  const std::uint32_t p = position(row, way);
  row = (row & ~nibbles(p + 1)) | ((row & nibbles(p)) << 4) | way;
}

void LruCache::to_back(std::size_t set, std::uint32_t way) {
  std::uint64_t& row = recency_[set];
  const std::uint32_t p = position(row, way);
  const std::uint64_t after = row & nibbles(ways_) & ~nibbles(p + 1);
  row = (row & ~nibbles(ways_)) | (row & nibbles(p)) | (after >> 4) | (std::uint64_t{way} << (4 * (ways_ - 1)));
}

bool LruCache::touch(LineId line) {
  const std::uint32_t way = find(line);
  if (way == kNoWay) return false;
  to_front(set_of(line), way);
  return true;
}

std::optional<EvictedLine> LruCache::install(LineId line, Actor owner) {
  const std::size_t set = set_of(line);
  const auto way = static_cast<std::uint32_t>((recency_[set] >> (4 * (ways_ - 1))) & 0xf);
  const std::size_t i = set * ways_ + way;
  std::optional<EvictedLine> evicted;
  if (tags_[i] != 0) {
    evicted = EvictedLine{tags_[i] & ~kValid, owners_[i]};
    --owned_[static_cast<std::size_t>(owners_[i])];
    --valid_;
  }
  tags_[i] = line | kValid;
  digests_[set * 16 + way] = detail::fingerprint(line);
  owners_[i] = owner;
  ++owned_[static_cast<std::size_t>(owner)];
  ++valid_;
  recency_[set] = (recency_[set] & ~nibbles(ways_)) | ((recency_[set] << 4) & nibbles(ways_)) | way;
  return evicted;
}

bool LruCache::invalidate(LineId line) {
  const std::uint32_t way = find(line);
  if (way == kNoWay) return false;
  const std::size_t set = set_of(line);
  const std::size_t i = set * ways_ + way;
  tags_[i] = 0;
  digests_[set * 16 + way] = 0;
  --owned_[static_cast<std::size_t>(owners_[i])];
  --valid_;
  to_back(set, way);
  return true;
}

void LruCache::clear() {
  std::fill(tags_.begin(), tags_.end(), 0);
  std::fill(digests_.begin(), digests_.end(), 0);
  // Unused high nibbles hold 0xf, which never names a way when ways < 16.
  std::uint64_t row = ~nibbles(ways_);
  for (std::uint32_t w = 0; w < ways_; ++w) row |= std::uint64_t{w} << (4 * w);
  std::fill(recency_.begin(), recency_.end(), row);
  valid_ = 0;
  owned_ = {};
}

void LruCache::for_each_valid(const std::function<void(LineId, Actor)>& fn) const {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (tags_[i] != 0) fn(tags_[i] & ~kValid, owners_[i]);
  }
}

// ---------------------------------------------------------------------------

SetAssocLlc::SetAssocLlc(const CacheGeometry& geometry) : array_(geometry.llc_sets(), geometry.llc_ways) {}

LlcResult SetAssocLlc::access(LineId line, Actor actor) {
  if (array_.touch(line)) return {true, std::nullopt};
  return {false, array_.install(line, actor)};
}

std::vector<std::string> SetAssocLlc::check_invariants() const {
  std::vector<std::string> problems;
  std::uint64_t counted = 0;
  std::array<std::uint64_t, kActorCount> per_actor{};
  array_.for_each_valid([&](LineId, Actor owner) {
    ++counted;
    ++per_actor[static_cast<std::size_t>(owner)];
  });
  if (counted != array_.valid_lines()) problems.push_back("setassoc: valid-line counter out of sync");
  for (std::size_t a = 0; a < kActorCount; ++a) {
    if (per_actor[a] != array_.owned_lines(static_cast<Actor>(a))) {
      problems.push_back(std::string("setassoc: owner counter out of sync for ") +
                         to_string(static_cast<Actor>(a)));
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------

namespace {

std::unique_ptr<LastLevelCache> make_llc(const CacheGeometry& geometry, LlcDesign design, std::uint64_t seed,
                                         const MirageParams& params, MirageCache** mirage) {
  if (design == LlcDesign::SetAssoc) return std::make_unique<SetAssocLlc>(geometry);

  MirageConfig cfg;
  cfg.base_ways_per_skew = params.base_ways_per_skew;
  cfg.extra_ways_per_skew = params.extra_ways_per_skew;
  cfg.data_entries = geometry.llc_lines();
  cfg.index_key = {derive_seed(seed, 1), derive_seed(seed, 2)};
  if (design == LlcDesign::MiragePlus) {
    cfg.gle_seed_mode = GleSeedMode::Randomized;
    cfg.gle_rng_seed = derive_seed(seed, 4);
  }
  auto llc = std::make_unique<MirageCache>(cfg, derive_seed(seed, 3));
  *mirage = llc.get();
  return llc;
}

const CacheGeometry& checked(const CacheGeometry& geometry, const LatencyModel& latency) {
  geometry.validate();
  latency.validate();
  return geometry;
}

}  // namespace

Hierarchy::Hierarchy(const CacheGeometry& geometry, const LatencyModel& latency, LlcDesign design,
                     std::uint64_t rng_seed, const MirageParams& mirage)
    : geometry_(checked(geometry, latency)),
      latency_(latency),
      design_(design),
      l1d_(geometry.l1d_sets(), geometry.l1d_ways),
      llc_(make_llc(geometry, design, rng_seed, mirage, &mirage_)) {}

Hierarchy::~Hierarchy() = default;
Hierarchy::Hierarchy(Hierarchy&&) noexcept = default;
Hierarchy& Hierarchy::operator=(Hierarchy&&) noexcept = default;

AccessOutcome Hierarchy::access(Address addr, Actor actor, bool /*is_write*/) {
  const LineId line = geometry_.line_of(addr);
  ++accesses_[static_cast<std::size_t>(actor)];
  if (l1d_.touch(line)) return {Level::L1D, latency_.l1_hit, false, std::nullopt};

  LlcResult llc = llc_->access(line, actor);
  if (llc.evicted) l1d_.invalidate(llc.evicted->line);
  l1d_.install(line, actor);
  if (llc.hit) return {Level::LLC, latency_.llc_hit, false, std::nullopt};
  return {Level::Memory, latency_.memory, true, llc.evicted};
}

void Hierarchy::flush_all() {
  l1d_.clear();
  llc_->flush();
}

bool Hierarchy::resident(Address addr, Level level) const {
  const LineId line = geometry_.line_of(addr);
  switch (level) {
    case Level::L1D: return l1d_.contains(line);
    case Level::LLC: return llc_->contains(line);
    case Level::Memory: break;
  }
  return true;
}

double Hierarchy::occupancy(Actor actor) const {
  return static_cast<double>(llc_->owned_lines(actor)) / static_cast<double>(llc_->capacity_lines());
}

bool Hierarchy::invalidate(Address addr) {
  const LineId line = geometry_.line_of(addr);
  l1d_.invalidate(line);
  return llc_->invalidate(line);
}

std::vector<std::string> Hierarchy::check_invariants() const {
  std::vector<std::string> problems = llc_->check_invariants();
  l1d_.for_each_valid([&](LineId line, Actor) {
    if (!llc_->contains(line)) problems.push_back("inclusion: L1d line " + std::to_string(line) + " missing from LLC");
  });
  std::uint64_t owned = 0;
  for (std::size_t a = 0; a < kActorCount; ++a) owned += llc_->owned_lines(static_cast<Actor>(a));
  if (owned != llc_->valid_lines()) problems.push_back("actor conservation: owned lines != valid LLC lines");
  if (llc_->valid_lines() > llc_->capacity_lines()) problems.push_back("capacity: LLC over-full");
  return problems;
}

}  // namespace occlab
