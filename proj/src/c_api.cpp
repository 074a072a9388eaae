#include "occlab/occlab.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <new>
#include <numbers>
#include <numeric>
#include <string>

#include "occlab/config.hpp"
#include "occlab/error.hpp"
#include "occlab/stats.hpp"
#include "occlab/trace_io.hpp"

struct occlab_config {
  occlab::RunConfig run;
};

struct occlab_traces {
  occlab::TraceFileHeader header;
  occlab::TraceSet records;
};

struct occlab_ranking {
  occlab::KeyScores scores;
};

namespace {

thread_local std::string g_last_error;

occlab_status status_of(occlab::ErrorKind kind) {
  switch (kind) {
    case occlab::ErrorKind::InvalidArgument: return OCCLAB_E_INVALID_ARGUMENT;
    case occlab::ErrorKind::Config: return OCCLAB_E_CONFIG;
    case occlab::ErrorKind::Io: return OCCLAB_E_IO;
    case occlab::ErrorKind::Format: return OCCLAB_E_FORMAT;
    case occlab::ErrorKind::ContractViolation: return OCCLAB_E_CONTRACT;
    case occlab::ErrorKind::Runtime: break;
  }
  return OCCLAB_E_RUNTIME;
}

occlab_status set_error(occlab_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `fn`, turning any exception into a status code plus message.
template <typename Fn>
occlab_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return OCCLAB_OK;
  } catch (const occlab::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(OCCLAB_E_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return set_error(OCCLAB_E_RUNTIME, e.what());
  } catch (...) {
    return set_error(OCCLAB_E_RUNTIME, "unknown error");
  }
}

#define OCCLAB_REQUIRE(cond, what) \
  do {                             \
    if (!(cond)) return set_error(OCCLAB_E_INVALID_ARGUMENT, what); \
  } while (0)

double standard_normal(occlab::Rng& rng) {
  // Box-Muller on two 53-bit uniforms in (0, 1].
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) / 9007199254740992.0;
  const double u2 = static_cast<double>(rng() >> 11) / 9007199254740992.0;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

extern "C" {

const char* occlab_last_error(void) { return g_last_error.c_str(); }

const char* occlab_status_name(occlab_status status) {
  switch (status) {
    case OCCLAB_OK: return "ok";
    case OCCLAB_E_INVALID_ARGUMENT: return "invalid argument";
    case OCCLAB_E_CONFIG: return "config error";
    case OCCLAB_E_IO: return "I/O error";
    case OCCLAB_E_FORMAT: return "format error";
    case OCCLAB_E_MISMATCH: return "incomparable inputs";
    case OCCLAB_E_CONTRACT: return "contract violation";
    case OCCLAB_E_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

const char* occlab_version(void) { return "1.0.0"; }

occlab_status occlab_config_new(occlab_config** out) {
  OCCLAB_REQUIRE(out, "out is NULL");
  return guarded([&] { *out = new occlab_config{}; });
}

void occlab_config_free(occlab_config* config) { delete config; }

occlab_status occlab_config_load_file(occlab_config* config, const char* path) {
  OCCLAB_REQUIRE(config && path, "config or path is NULL");
  return guarded([&] { occlab::apply_config_file(config->run, path); });
}

occlab_status occlab_config_set(occlab_config* config, const char* key, const char* value, const char* origin) {
  OCCLAB_REQUIRE(config && key && value, "config, key or value is NULL");
  return guarded([&] { config->run.set(key, value, origin ? origin : key); });
}

occlab_status occlab_config_validate(const occlab_config* config) {
  OCCLAB_REQUIRE(config, "config is NULL");
  return guarded([&] { config->run.validate(); });
}

int occlab_config_has_seed(const occlab_config* config) { return config && config->run.seed_given ? 1 : 0; }

occlab_status occlab_collect(const occlab_config* config, occlab_progress_fn progress, void* user,
                             occlab_collect_stats* stats) {
  OCCLAB_REQUIRE(config, "config is NULL");
  const occlab_status valid = occlab_config_validate(config);
  if (valid != OCCLAB_OK) return valid;
  return guarded([&] {
    const occlab::RunConfig& run = config->run;
    occlab::ProgressFn report;
    if (progress) report = [&](std::uint64_t done, std::uint64_t total) { progress(done, total, user); };
    const occlab::ExperimentResult result = occlab::run_experiment(run.experiment, report);
    occlab::write_csv(run.output_path, run.experiment.header(), result.traces);
    if (stats) {
      stats->traces = result.traces.size();
      stats->prime_fallback_invalidations = result.stats.prime_fallback_invalidations;
      stats->sae_events = result.stats.sae_events;
      stats->global_evictions = result.stats.global_evictions;
      stats->victim_reads = result.stats.victim_reads;
      stats->encryptions = result.stats.encryptions;
    }
  });
}

occlab_status occlab_traces_read(const char* path, occlab_traces** out) {
  OCCLAB_REQUIRE(path && out, "path or out is NULL");
  return guarded([&] {
    auto [header, records] = occlab::read_csv(std::string(path));
    *out = new occlab_traces{std::move(header), std::move(records)};
  });
}

void occlab_traces_free(occlab_traces* traces) { delete traces; }

uint64_t occlab_traces_count(const occlab_traces* traces) { return traces ? traces->records.size() : 0; }

occlab_status occlab_traces_header(const occlab_traces* traces, occlab_trace_header* out) {
  OCCLAB_REQUIRE(traces && out, "traces or out is NULL");
  out->format_version = traces->header.format_version;
  out->design = traces->header.design.c_str();
  out->geometry = traces->header.geometry.c_str();
  out->occupancy_pct = traces->header.occupancy_pct;
  out->key_id = traces->header.key_id.c_str();
  out->rng_seed = traces->header.rng_seed;
  return OCCLAB_OK;
}

occlab_status occlab_traces_timings(const occlab_traces* traces, double* out, size_t capacity) {
  OCCLAB_REQUIRE(traces && (out || capacity == 0), "traces or out is NULL");
  const std::size_t n = std::min(capacity, traces->records.size());
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(traces->records[i].timing);
  return OCCLAB_OK;
}

occlab_status occlab_assess(const occlab_traces* a, const occlab_traces* b, double threshold,
                            occlab_assessment* out) {
  OCCLAB_REQUIRE(a && b && out, "traces or out is NULL");
  if (a->header.geometry != b->header.geometry) {
    return set_error(OCCLAB_E_MISMATCH, "geometry headers differ: '" + a->header.geometry + "' vs '" +
                                            b->header.geometry + "'");
  }
  if (a->header.design != b->header.design) {
    return set_error(OCCLAB_E_MISMATCH,
                     "design headers differ: '" + a->header.design + "' vs '" + b->header.design + "'");
  }
  return guarded([&] {
    const occlab::LeakageReport r = occlab::leakage_assess(a->records, b->records, threshold);
    out->t_statistic = r.welch.t_statistic;
    out->dof = r.welch.dof;
    out->p_value = r.welch.p_value;
    out->leaks = r.leaks ? 1 : 0;
  });
}

occlab_status occlab_recover(const occlab_traces* traces, uint64_t prefix, occlab_ranking** out) {
  OCCLAB_REQUIRE(traces && out, "traces or out is NULL");
  OCCLAB_REQUIRE(prefix <= traces->records.size(), "prefix exceeds the trace count");
  return guarded([&] {
    const std::size_t n = prefix == 0 ? traces->records.size() : static_cast<std::size_t>(prefix);
    const std::span<const occlab::TraceRecord> view(traces->records.data(), n);
    const occlab::TTableLayout layout = occlab::TTableLayout::contiguous();
    *out = new occlab_ranking{occlab::score_key_bytes(view, layout, 64)};
  });
}

void occlab_ranking_free(occlab_ranking* ranking) { delete ranking; }

occlab_status occlab_ranking_top(const occlab_ranking* ranking, int byte, int n, uint8_t* candidates,
                                 double* scores) {
  OCCLAB_REQUIRE(ranking && candidates, "ranking or candidates is NULL");
  OCCLAB_REQUIRE(byte >= 0 && byte < 16, "byte must be in 0..15");
  OCCLAB_REQUIRE(n >= 0 && n <= 256, "n must be in 0..256");
  const auto& row = ranking->scores.scores[static_cast<std::size_t>(byte)];
  std::array<int, 256> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return row[x] > row[y]; });
  for (int i = 0; i < n; ++i) {
    candidates[i] = static_cast<uint8_t>(order[i]);
    if (scores) scores[i] = row[order[i]];
  }
  return OCCLAB_OK;
}

occlab_status occlab_ranking_ge(const occlab_ranking* ranking, const uint8_t true_key[16], double ranks[16],
                                double* ge_bits) {
  OCCLAB_REQUIRE(ranking && true_key, "ranking or key is NULL");
  return guarded([&] {
    occlab::Block key{};
    std::copy(true_key, true_key + 16, key.begin());
    const occlab::KeyRanking r = occlab::guessing_entropy(ranking->scores.scores, key);
    if (ranks) std::copy(r.rank_of_true.begin(), r.rank_of_true.end(), ranks);
    if (ge_bits) *ge_bits = r.ge_bits;
  });
}

occlab_status occlab_kde(const occlab_traces* traces, double bandwidth, size_t grid_points, double* grid,
                         double* density, double* bandwidth_used) {
  OCCLAB_REQUIRE(traces && grid && density, "traces or output buffers are NULL");
  return guarded([&] {
    const std::vector<double> t = occlab::timings_of(traces->records);
    const std::optional<double> h = bandwidth > 0.0 ? std::optional<double>(bandwidth) : std::nullopt;
    const occlab::KdeCurve curve = occlab::kde(t, h, grid_points);
    std::copy(curve.grid.begin(), curve.grid.end(), grid);
    std::copy(curve.density.begin(), curve.density.end(), density);
    if (bandwidth_used) *bandwidth_used = curve.bandwidth;
  });
}

occlab_status occlab_synthetic_pair(const char* path_a, const char* path_b, uint64_t n, double shift,
                                    uint64_t seed) {
  OCCLAB_REQUIRE(path_a && path_b, "path is NULL");
  OCCLAB_REQUIRE(n >= 2, "need at least two records per file");
  return guarded([&] {
    const occlab::AesKey key = occlab::AesKey::expand(occlab::Block{});
    const char* paths[2] = {path_a, path_b};
    for (int side = 0; side < 2; ++side) {
      occlab::Rng rng(occlab::derive_seed(seed, static_cast<std::uint64_t>(side)));
      occlab::TraceFileHeader header;
      header.design = "synthetic";
      header.geometry = "synthetic";
      header.occupancy_pct = 100.0;
      header.key_id = side == 0 ? "a" : "b";
      header.rng_seed = seed;
      occlab::TraceSet set(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        occlab::TraceRecord& r = set[i];
        r.trace_idx = i;
        for (auto& byte : r.plaintext) byte = static_cast<std::uint8_t>(rng());
        r.ciphertext = occlab::aes_encrypt(key, r.plaintext);
        r.occupancy_pct = header.occupancy_pct;
        const double x = 100000.0 + (side == 1 ? shift : 0.0) + 50.0 * standard_normal(rng);
        r.timing = static_cast<occlab::Cycles>(std::llround(std::max(1.0, x)));
        r.key_id = header.key_id;
      }
      occlab::write_csv(std::string(paths[side]), header, set);
    }
  });
}

occlab_status occlab_parse_key(const char* hex, uint8_t out[16]) {
  OCCLAB_REQUIRE(hex && out, "hex or out is NULL");
  const auto block = occlab::parse_block_hex(hex);
  if (!block) return set_error(OCCLAB_E_INVALID_ARGUMENT, std::string("not 32 hex digits: '") + hex + "'");
  std::copy(block->begin(), block->end(), out);
  return OCCLAB_OK;
}

}  // extern "C"
