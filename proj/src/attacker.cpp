#include "occlab/attacker.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

#include "occlab/error.hpp"
#include "occlab/mirage.hpp"

namespace occlab {

namespace {

// Stream labels for per-trace seed derivation.
constexpr std::uint64_t kHierarchyStream = 0x68696572;
constexpr std::uint64_t kOccupyStream = 0x6f636375;
constexpr std::uint64_t kPlaintextStream = 0x70747874;

Block random_block(Rng& rng) {
  Block b{};
  for (std::size_t i = 0; i < 16; i += 8) {
    const std::uint64_t x = rng();
    for (std::size_t j = 0; j < 8; ++j) b[i + j] = static_cast<std::uint8_t>(x >> (8 * j));
  }
  return b;
}

// Runs `n` accesses in order.
template <typename AddrAt, typename OnAccess>
void walk(Hierarchy& h, std::uint64_t n, Actor actor, AddrAt&& addr_at, OnAccess&& on_access) {
  for (std::uint64_t i = 0; i < n; ++i) on_access(h.access(addr_at(i), actor));
}

}  // namespace

std::uint64_t buffer_lines_for(double occupancy_pct, const CacheGeometry& geometry) {
  if (!(occupancy_pct > 0.0 && occupancy_pct <= 100.0)) {
    fail(ErrorKind::InvalidArgument, "occupancy must be in (0, 100]");
  }
  const double exact = static_cast<double>(geometry.llc_lines()) * occupancy_pct / 100.0;
  return static_cast<std::uint64_t>(std::ceil(exact - 1e-9));
}

PrimeReport prime_flush(Hierarchy& h, const TTableLayout& layout, NoiseStream& noise) {
  const CacheGeometry& g = h.geometry();
  PrimeReport report;
  report.noise_lines = 2 * g.llc_lines();
  const std::uint64_t start = noise.next_address;
  walk(h, report.noise_lines, Actor::Noise, [&](std::uint64_t i) { return Address{start + i * g.line_size}; },
       [](const AccessOutcome&) {});
  noise.next_address = start + report.noise_lines * g.line_size;
  for (LineId line : layout.lines(g.line_size)) {
    const Address a = g.address_of(line);
    if (h.resident(a, Level::LLC) || h.resident(a, Level::L1D)) {
      h.invalidate(a);
      ++report.fallback_invalidations;
    }
  }
  return report;
}

AttackerBuffer occupy(Hierarchy& h, double occupancy_pct, Rng& rng, const OccupyPolicy& policy,
                      OccupyReport* report) {
  const CacheGeometry& g = h.geometry();
  AttackerBuffer buf{Address{kAttackerBufferBase}, buffer_lines_for(occupancy_pct, g), g.line_size};
  const std::uint32_t max_passes = std::max<std::uint32_t>(policy.max_passes, 2);
  const auto settled = static_cast<std::uint64_t>(policy.settle_fraction * static_cast<double>(buf.lines));

  std::vector<std::uint32_t> order(buf.lines);
  std::iota(order.begin(), order.end(), 0u);
  shuffle(std::span<std::uint32_t>(order), rng);
  walk(h, buf.lines, Actor::Attacker, [&](std::uint64_t i) { return buf.line_address(order[i]); },
       [](const AccessOutcome&) {});
  std::uint32_t passes = 1;

  // Descending passes until one comes back nearly all hits; the last one
  // leaves the buffer head in the L1d.
  std::uint64_t misses = 0;
  do {
    misses = 0;
    walk(h, buf.lines, Actor::Attacker, [&](std::uint64_t i) { return buf.line_address(buf.lines - 1 - i); },
         [&misses](const AccessOutcome& o) { misses += o.level_hit == Level::Memory; });
    ++passes;
  } while (misses > settled && passes < max_passes);

  if (report) *report = {passes, misses};
  return buf;
}

MeasureBreakdown measure_detailed(Hierarchy& h, const AttackerBuffer& buffer) {
  MeasureBreakdown m;
  walk(h, buffer.lines, Actor::Attacker, [&](std::uint64_t i) { return buffer.line_address(i); },
       [&m](const AccessOutcome& o) {
         m.timing += o.latency;
         switch (o.level_hit) {
           case Level::L1D: ++m.l1_hits; break;
           case Level::LLC: ++m.llc_hits; break;
           case Level::Memory: ++m.misses; break;
         }
       });
  return m;
}

Cycles measure(Hierarchy& h, const AttackerBuffer& buffer) { return measure_detailed(h, buffer).timing; }

void ExperimentConfig::validate() const {
  geometry.validate();
  latency.validate();
  buffer_lines_for(occupancy_pct, geometry);
  if (n_traces == 0) fail(ErrorKind::InvalidArgument, "n_traces must be >= 1");
  if (noise_avg_m == 0) fail(ErrorKind::InvalidArgument, "noise averaging needs m >= 1");
  if (jobs == 0) fail(ErrorKind::InvalidArgument, "jobs must be >= 1");
  if (key_id.empty() || key_id.find_first_of(",\r\n") != std::string::npos) {
    fail(ErrorKind::InvalidArgument, "key_id must be non-empty and free of commas and newlines");
  }
  if (design != LlcDesign::SetAssoc) {
    MirageConfig m;
    m.base_ways_per_skew = mirage.base_ways_per_skew;
    m.extra_ways_per_skew = mirage.extra_ways_per_skew;
    m.data_entries = geometry.llc_lines();
    m.validate();
  }
}

TraceFileHeader ExperimentConfig::header() const {
  TraceFileHeader h;
  h.design = to_string(design);
  h.geometry = geometry.summary();
  h.occupancy_pct = occupancy_pct;
  h.key_id = key_id;
  h.rng_seed = rng_seed;
  return h;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const TTableLayout layout = TTableLayout::contiguous();
  layout.validate(cfg.geometry.line_size);
  const AesKey key = AesKey::expand(cfg.victim_key);

  ExperimentResult result;
  result.traces.resize(cfg.n_traces);

  std::mutex mu;
  std::uint64_t completed = 0;
  auto report_progress = [&] {
    std::lock_guard lock(mu);
    ++completed;
    if (progress) progress(completed, cfg.n_traces);
  };

  auto collect_counters = [](const Hierarchy& h, ExperimentStats& stats) {
    if (const MirageCache* m = h.mirage()) {
      stats.sae_events += m->sae_count();
      stats.global_evictions += m->global_eviction_count();
    }
  };

  auto run_trace = [&](std::uint64_t idx, Hierarchy* shared, NoiseStream& noise, ExperimentStats& stats) {
    const std::uint64_t trace_seed = derive_seed(cfg.rng_seed, idx);
    Block plaintext = cfg.fixed_plaintext;
    if (cfg.plaintext_mode == PlaintextMode::Random) {
      Rng pt_rng(derive_seed(trace_seed, kPlaintextStream));
      plaintext = random_block(pt_rng);
    }

    std::optional<Hierarchy> fresh;
    Hierarchy* h = shared;
    if (h == nullptr) {
      fresh.emplace(cfg.geometry, cfg.latency, cfg.design, derive_seed(trace_seed, kHierarchyStream), cfg.mirage);
      h = &*fresh;
      noise = NoiseStream{};
      ttable_init(*h, layout);
    }

    Rng occupy_rng(derive_seed(trace_seed, kOccupyStream));
    Cycles total = 0;
    Block ciphertext{};
    for (std::uint32_t rep = 0; rep < cfg.noise_avg_m; ++rep) {
      stats.prime_fallback_invalidations += prime_flush(*h, layout, noise).fallback_invalidations;
      const AttackerBuffer buf = occupy(*h, cfg.occupancy_pct, occupy_rng, cfg.occupy);
      const std::uint64_t before = h->accesses(Actor::Victim);
      ciphertext = encrypt_one(*h, key, layout, plaintext);
      stats.victim_reads += h->accesses(Actor::Victim) - before;
      ++stats.encryptions;
      total += measure(*h, buf);
    }
    if (fresh) collect_counters(*fresh, stats);

    TraceRecord& rec = result.traces[idx];
    rec.trace_idx = idx;
    rec.plaintext = plaintext;
    rec.ciphertext = ciphertext;
    rec.occupancy_pct = cfg.occupancy_pct;
    rec.timing = (total + cfg.noise_avg_m / 2) / cfg.noise_avg_m;
    rec.key_id = cfg.key_id;
    report_progress();
  };

  if (cfg.reuse_hierarchy) {
    Hierarchy h(cfg.geometry, cfg.latency, cfg.design, derive_seed(cfg.rng_seed, kHierarchyStream), cfg.mirage);
    ttable_init(h, layout);
    NoiseStream noise;
    for (std::uint64_t i = 0; i < cfg.n_traces; ++i) run_trace(i, &h, noise, result.stats);
    collect_counters(h, result.stats);
    return result;
  }

  const auto workers = static_cast<std::uint32_t>(std::min<std::uint64_t>(cfg.jobs, cfg.n_traces));
  if (workers <= 1) {
    NoiseStream noise;
    for (std::uint64_t i = 0; i < cfg.n_traces; ++i) run_trace(i, nullptr, noise, result.stats);
    return result;
  }

  std::atomic<std::uint64_t> next{0};
  std::vector<ExperimentStats> per_worker(workers);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::uint32_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        NoiseStream noise;
        for (std::uint64_t i = next++; i < cfg.n_traces; i = next++) run_trace(i, nullptr, noise, per_worker[w]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const ExperimentStats& s : per_worker) {
    result.stats.prime_fallback_invalidations += s.prime_fallback_invalidations;
    result.stats.sae_events += s.sae_events;
    result.stats.global_evictions += s.global_evictions;
    result.stats.victim_reads += s.victim_reads;
    result.stats.encryptions += s.encryptions;
  }
  return result;
}

}  // namespace occlab
