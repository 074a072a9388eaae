#include <gtest/gtest.h>

#include <set>

#include "occlab/attacker.hpp"
#include "occlab/error.hpp"
#include "occlab/mirage.hpp"
#include "ref_aes.hpp"

using namespace occlab;

namespace {

const LlcDesign kDesigns[] = {LlcDesign::SetAssoc, LlcDesign::Mirage, LlcDesign::MiragePlus};

CacheGeometry small_geometry() {
  CacheGeometry g;
  g.l1d_size = 4 * 1024;
  g.l1d_ways = 4;
  g.llc_size = 256 * 1024;
  g.llc_ways = 8;
  return g;
}

ExperimentConfig small_experiment(LlcDesign design) {
  ExperimentConfig cfg;
  cfg.design = design;
  cfg.geometry = small_geometry();
  cfg.n_traces = 24;
  cfg.plaintext_mode = PlaintextMode::Random;
  cfg.victim_key = *parse_block_hex("7766554433221100ffeeddccbbaa9988");
  cfg.rng_seed = 99;
  return cfg;
}

std::uint64_t resident_table_lines(const Hierarchy& h, const TTableLayout& layout) {
  std::uint64_t n = 0;
  for (LineId l : layout.lines(h.geometry().line_size)) {
    const Address a = h.geometry().address_of(l);
    n += h.resident(a, Level::LLC) || h.resident(a, Level::L1D);
  }
  return n;
}

}  // namespace

TEST(BufferLines, Arithmetic) {
  const CacheGeometry g;
  EXPECT_EQ(buffer_lines_for(50, g), 131072u);
  EXPECT_EQ(buffer_lines_for(75, g), 196608u);
  EXPECT_EQ(buffer_lines_for(100, g), 262144u);
  EXPECT_EQ(buffer_lines_for(0.001, g), 3u);  // 2.62 lines rounds up
  EXPECT_THROW(buffer_lines_for(0, g), Error);
  EXPECT_THROW(buffer_lines_for(100.5, g), Error);
  EXPECT_THROW(buffer_lines_for(-5, g), Error);
}

TEST(AddressRegions, AttackerAndNoiseAvoidTables) {
  const TTableLayout layout = TTableLayout::contiguous();
  const auto [lo, hi] = layout.span();
  EXPECT_LT(hi, kAttackerBufferBase);
  EXPECT_GT(lo, 0u);
  const CacheGeometry g;
  EXPECT_LE(kAttackerBufferBase + buffer_lines_for(100, g) * g.line_size, kNoiseRegionBase);
}

TEST(PrimeFlush, NoTableLineSurvives) {
  const TTableLayout layout = TTableLayout::contiguous();
  for (LlcDesign d : kDesigns) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Hierarchy h(small_geometry(), {}, d, seed);
      ttable_init(h, layout);
      ASSERT_EQ(resident_table_lines(h, layout), layout.lines(64).size());
      NoiseStream noise;
      const PrimeReport r = prime_flush(h, layout, noise);
      EXPECT_EQ(r.noise_lines, 2 * h.geometry().llc_lines());
      EXPECT_EQ(resident_table_lines(h, layout), 0u);
      const AccessOutcome o = h.access(layout.entry(2, 0x40), Actor::Victim);
      EXPECT_EQ(o.level_hit, Level::Memory);
      EXPECT_TRUE(o.llc_install_occurred);
      EXPECT_TRUE(h.check_invariants().empty());
    }
  }
}

TEST(PrimeFlush, SetAssocStreamEvictsEveryPriorLine) {
  const TTableLayout layout = TTableLayout::contiguous();
  Hierarchy h(small_geometry(), {}, LlcDesign::SetAssoc, 0);
  ttable_init(h, layout);
  std::vector<LineId> prior;
  h.llc().for_each_valid([&](LineId l, Actor) { prior.push_back(l); });
  NoiseStream noise;
  const PrimeReport r = prime_flush(h, layout, noise);
  EXPECT_EQ(r.fallback_invalidations, 0u);
  for (LineId l : prior) EXPECT_FALSE(h.resident(h.geometry().address_of(l), Level::LLC));
  EXPECT_EQ(h.occupancy(Actor::Noise), 1.0);
  EXPECT_EQ(h.occupancy(Actor::Victim), 0.0);
}

TEST(PrimeFlush, NoiseStreamAdvances) {
  Hierarchy h(small_geometry(), {}, LlcDesign::SetAssoc, 0);
  const TTableLayout layout = TTableLayout::contiguous();
  NoiseStream noise;
  prime_flush(h, layout, noise);
  const std::uint64_t after_one = noise.next_address;
  EXPECT_EQ(after_one, kNoiseRegionBase + 2 * h.geometry().llc_lines() * 64);
  prime_flush(h, layout, noise);
  EXPECT_EQ(noise.next_address, after_one + 2 * h.geometry().llc_lines() * 64);
}

TEST(Occupy, SetAssocHalf) {
  const CacheGeometry g;
  Hierarchy h(g, {}, LlcDesign::SetAssoc, 1);
  const TTableLayout layout = TTableLayout::contiguous();
  ttable_init(h, layout);
  NoiseStream noise;
  prime_flush(h, layout, noise);
  Rng rng(1);
  OccupyReport report;
  const AttackerBuffer buf = occupy(h, 50, rng, {}, &report);
  EXPECT_EQ(buf.lines, 131072u);
  EXPECT_GE(report.passes, 2u);
  EXPECT_NEAR(h.occupancy(Actor::Attacker), 0.50, 0.02);
  std::uint64_t swept = 0;
  for (std::uint64_t i = 0; i < buf.lines; ++i) swept += h.resident(buf.line_address(i), Level::LLC);
  EXPECT_EQ(static_cast<double>(swept) / static_cast<double>(g.llc_lines()), h.occupancy(Actor::Attacker));
  // The L1d holds the head of the buffer.
  for (std::uint64_t i = 0; i < g.l1d_lines(); ++i) ASSERT_TRUE(h.resident(buf.line_address(i), Level::L1D));
}

TEST(Occupy, MirageFull) {
  const CacheGeometry g;
  for (LlcDesign d : {LlcDesign::Mirage, LlcDesign::MiragePlus}) {
    Hierarchy h(g, {}, d, 2);
    const TTableLayout layout = TTableLayout::contiguous();
    ttable_init(h, layout);
    NoiseStream noise;
    prime_flush(h, layout, noise);
    Rng rng(2);
    occupy(h, 100, rng);
    EXPECT_GE(h.occupancy(Actor::Attacker), 0.95);
    EXPECT_LE(h.occupancy(Actor::Attacker), 1.0);
  }
}

TEST(Occupy, RejectsBadPercent) {
  Hierarchy h(small_geometry(), {}, LlcDesign::SetAssoc, 1);
  Rng rng(1);
  EXPECT_THROW(occupy(h, 0, rng), Error);
  EXPECT_THROW(occupy(h, 150, rng), Error);
}

TEST(Measure, QuietVictimClosedForm) {
  const CacheGeometry g;
  const LatencyModel lat;
  Hierarchy h(g, lat, LlcDesign::SetAssoc, 3);
  const TTableLayout layout = TTableLayout::contiguous();
  ttable_init(h, layout);
  NoiseStream noise;
  prime_flush(h, layout, noise);
  Rng rng(3);
  const AttackerBuffer buf = occupy(h, 50, rng);
  const Cycles expected = g.l1d_lines() * lat.l1_hit + (buf.lines - g.l1d_lines()) * lat.llc_hit;
  const MeasureBreakdown m = measure_detailed(h, buf);
  EXPECT_EQ(m.timing, expected);
  EXPECT_EQ(m.misses, 0u);
  EXPECT_EQ(m.l1_hits, g.l1d_lines());
}

TEST(Measure, EvictedLinesCostMemoryLatency) {
  const CacheGeometry g;
  const LatencyModel lat;
  for (std::uint64_t k : {1u, 7u, 300u}) {
    Hierarchy h(g, lat, LlcDesign::SetAssoc, 4);
    const TTableLayout layout = TTableLayout::contiguous();
    ttable_init(h, layout);
    NoiseStream noise;
    prime_flush(h, layout, noise);
    Rng rng(4);
    const AttackerBuffer buf = occupy(h, 50, rng);
    const Cycles quiet = g.l1d_lines() * lat.l1_hit + (buf.lines - g.l1d_lines()) * lat.llc_hit;
    for (std::uint64_t i = 0; i < k; ++i) h.invalidate(buf.line_address(2000 + 97 * i));
    EXPECT_EQ(measure(h, buf), quiet + k * (lat.memory - lat.llc_hit));
  }
}

TEST(Measure, DecompositionAndDeterminism) {
  const LatencyModel lat;
  const TTableLayout layout = TTableLayout::contiguous();
  const AesKey key = AesKey::expand(*parse_block_hex("ffeeddccbbaa99887766554433221100"));
  for (LlcDesign d : kDesigns) {
    Cycles first = 0;
    for (int run = 0; run < 2; ++run) {
      Hierarchy h(small_geometry(), lat, d, 5);
      ttable_init(h, layout);
      NoiseStream noise;
      prime_flush(h, layout, noise);
      Rng rng(5);
      const AttackerBuffer buf = occupy(h, 75, rng);
      encrypt_one(h, key, layout, *parse_block_hex("a7d960e3eac4b884fdcde51438edb007"));
      const MeasureBreakdown m = measure_detailed(h, buf);
      EXPECT_EQ(m.l1_hits + m.llc_hits + m.misses, buf.lines);
      EXPECT_EQ(m.timing, m.l1_hits * lat.l1_hit + m.llc_hits * lat.llc_hit + m.misses * lat.memory);
      if (run == 0) first = m.timing;
      else EXPECT_EQ(m.timing, first);
    }
  }
}

TEST(Channel, ColdVictimRaisesTiming) {
  // Full occupancy of a set-associative LLC: every victim install displaces an
  // attacker line.
  CacheGeometry g;
  g.llc_size = 1 << 20;
  const TTableLayout layout = TTableLayout::contiguous();
  const AesKey key = AesKey::expand(*parse_block_hex("000102030405060708090a0b0c0d0e0f"));
  Rng pt_rng(6);
  double with_victim = 0;
  double without = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    Block p{};
    for (auto& b : p) b = static_cast<std::uint8_t>(pt_rng());
    for (int run = 0; run < 2; ++run) {
      Hierarchy h(g, {}, LlcDesign::SetAssoc, static_cast<std::uint64_t>(i));
      ttable_init(h, layout);
      NoiseStream noise;
      prime_flush(h, layout, noise);
      Rng rng(static_cast<std::uint64_t>(i));
      const AttackerBuffer buf = occupy(h, 100, rng);
      if (run == 0) encrypt_one(h, key, layout, p);
      (run == 0 ? with_victim : without) += static_cast<double>(measure(h, buf));
    }
  }
  EXPECT_GT(with_victim / n, without / n);
  // Each of the distinct victim lines costs at least one attacker miss.
  EXPECT_GE(with_victim / n - without / n, 20.0 * (200 - 40));
}

TEST(Experiment, SingleFixedTrace) {
  ExperimentConfig cfg = small_experiment(LlcDesign::Mirage);
  cfg.n_traces = 1;
  cfg.plaintext_mode = PlaintextMode::Fixed;
  cfg.fixed_plaintext = *parse_block_hex("a7d960e3eac4b884fdcde51438edb007");
  cfg.key_id = "K1";
  const ExperimentResult r = run_experiment(cfg);
  ASSERT_EQ(r.traces.size(), 1u);
  const TraceRecord& t = r.traces[0];
  EXPECT_EQ(t.trace_idx, 0u);
  EXPECT_EQ(to_hex(t.plaintext), "a7d960e3eac4b884fdcde51438edb007");
  refaes::Block k{}, p{};
  std::copy(cfg.victim_key.begin(), cfg.victim_key.end(), k.begin());
  std::copy(t.plaintext.begin(), t.plaintext.end(), p.begin());
  const auto c = refaes::encrypt(k, p);
  EXPECT_TRUE(std::equal(c.begin(), c.end(), t.ciphertext.begin()));
  EXPECT_GT(t.timing, 0u);
  EXPECT_EQ(t.key_id, "K1");
  EXPECT_EQ(t.occupancy_pct, 75.0);
  EXPECT_EQ(r.stats.encryptions, 1u);
  EXPECT_EQ(r.stats.victim_reads, 160u);
}

TEST(Experiment, DeterministicAndJobsInvariant) {
  for (LlcDesign d : kDesigns) {
    ExperimentConfig cfg = small_experiment(d);
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    EXPECT_EQ(a.traces, b.traces);
    cfg.jobs = 3;
    const ExperimentResult c = run_experiment(cfg);
    EXPECT_EQ(a.traces, c.traces);
    EXPECT_EQ(a.stats.global_evictions, c.stats.global_evictions);
    EXPECT_EQ(a.stats.victim_reads, 160u * cfg.n_traces);
    for (std::uint64_t i = 0; i < a.traces.size(); ++i) {
      EXPECT_EQ(a.traces[i].trace_idx, i);
      EXPECT_EQ(a.traces[i].ciphertext, aes_encrypt(AesKey::expand(cfg.victim_key), a.traces[i].plaintext));
    }
    cfg.rng_seed = 100;
    EXPECT_NE(run_experiment(cfg).traces, a.traces);
  }
}

TEST(Experiment, RandomPlaintextsVary) {
  const ExperimentResult r = run_experiment(small_experiment(LlcDesign::SetAssoc));
  std::set<Block> distinct;
  for (const auto& t : r.traces) distinct.insert(t.plaintext);
  EXPECT_EQ(distinct.size(), r.traces.size());
}

TEST(Experiment, NoiseAveragingRepeatsSteps) {
  ExperimentConfig cfg = small_experiment(LlcDesign::Mirage);
  cfg.n_traces = 5;
  cfg.noise_avg_m = 3;
  const ExperimentResult r = run_experiment(cfg);
  EXPECT_EQ(r.stats.encryptions, 15u);
  EXPECT_EQ(r.stats.victim_reads, 15u * 160);
  for (const auto& t : r.traces) EXPECT_GT(t.timing, 0u);
}

TEST(Experiment, ReuseHierarchyMode) {
  ExperimentConfig cfg = small_experiment(LlcDesign::MiragePlus);
  cfg.reuse_hierarchy = true;
  const ExperimentResult a = run_experiment(cfg);
  EXPECT_EQ(a.traces, run_experiment(cfg).traces);
  EXPECT_EQ(a.traces.size(), cfg.n_traces);
  EXPECT_EQ(a.stats.encryptions, cfg.n_traces);
}

TEST(Experiment, ProgressReportsEveryTrace) {
  ExperimentConfig cfg = small_experiment(LlcDesign::SetAssoc);
  cfg.jobs = 2;
  std::uint64_t calls = 0;
  std::uint64_t last = 0;
  run_experiment(cfg, [&](std::uint64_t done, std::uint64_t total) {
    ++calls;
    EXPECT_EQ(total, cfg.n_traces);
    EXPECT_GT(done, last);
    last = done;
  });
  EXPECT_EQ(calls, cfg.n_traces);
  EXPECT_EQ(last, cfg.n_traces);
}

TEST(Experiment, ValidateRejectsBadConfigs) {
  ExperimentConfig cfg = small_experiment(LlcDesign::SetAssoc);
  EXPECT_NO_THROW(cfg.validate());
  auto rejects = [](ExperimentConfig c) { EXPECT_THROW(c.validate(), Error); };
  ExperimentConfig c = cfg;
  c.n_traces = 0;
  rejects(c);
  c = cfg;
  c.noise_avg_m = 0;
  rejects(c);
  c = cfg;
  c.jobs = 0;
  rejects(c);
  c = cfg;
  c.occupancy_pct = 0;
  rejects(c);
  c = cfg;
  c.key_id = "a,b";
  rejects(c);
  c = cfg;
  c.geometry.llc_ways = 17;
  rejects(c);
  c = cfg;
  c.design = LlcDesign::Mirage;
  c.mirage.extra_ways_per_skew = 0;
  rejects(c);
}

TEST(Experiment, HeaderDescribesRun) {
  ExperimentConfig cfg = small_experiment(LlcDesign::MiragePlus);
  cfg.key_id = "K2";
  const TraceFileHeader h = cfg.header();
  EXPECT_EQ(h.design, "mirage_plus");
  EXPECT_EQ(h.geometry, cfg.geometry.summary());
  EXPECT_EQ(h.occupancy_pct, 75.0);
  EXPECT_EQ(h.key_id, "K2");
  EXPECT_EQ(h.rng_seed, 99u);
  EXPECT_EQ(h.format_version, 1);
}
