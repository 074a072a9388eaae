// occlab command-line front end. Talks to the library only through occlab.h.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "occlab/occlab.h"

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2 };

int exit_code(occlab_status s) {
  switch (s) {
    case OCCLAB_OK: return kOk;
    case OCCLAB_E_INVALID_ARGUMENT:
    case OCCLAB_E_CONFIG:
    case OCCLAB_E_FORMAT:
    case OCCLAB_E_MISMATCH: return kUsage;
    case OCCLAB_E_IO:
    case OCCLAB_E_CONTRACT:
    case OCCLAB_E_RUNTIME: break;
  }
  return kRuntime;
}

int report(occlab_status s) {
  std::fprintf(stderr, "occlab: %s: %s\n", occlab_status_name(s), occlab_last_error());
  return exit_code(s);
}

struct TracesDeleter {
  void operator()(occlab_traces* t) const { occlab_traces_free(t); }
};
using Traces = std::unique_ptr<occlab_traces, TracesDeleter>;

struct RankingDeleter {
  void operator()(occlab_ranking* r) const { occlab_ranking_free(r); }
};
using Ranking = std::unique_ptr<occlab_ranking, RankingDeleter>;

struct ConfigDeleter {
  void operator()(occlab_config* c) const { occlab_config_free(c); }
};
using Config = std::unique_ptr<occlab_config, ConfigDeleter>;

occlab_status load(const std::string& path, Traces& out) {
  occlab_traces* raw = nullptr;
  const occlab_status s = occlab_traces_read(path.c_str(), &raw);
  out.reset(raw);
  return s;
}

// ---- collect ----

struct CollectArgs {
  std::string config_path;
  // --set key=value entries, applied after the named flags.
  std::vector<std::pair<std::string, std::string>> sets;
  std::optional<std::string> design, key, plaintext, out, key_id;
  std::optional<std::uint64_t> traces, seed, l1d_kb, llc_mb, noise_avg;
  std::optional<double> occupancy;
  std::optional<unsigned> jobs;
  bool random_plaintext = false;
  bool quiet = false;
};

void progress_line(std::uint64_t done, std::uint64_t total, void*) {
  if (done % 100 == 0 || done == total) {
    std::fprintf(stderr, "collected %llu/%llu traces\n", static_cast<unsigned long long>(done),
                 static_cast<unsigned long long>(total));
  }
}

int run_collect(const CollectArgs& a) {
  occlab_config* raw = nullptr;
  occlab_status s = occlab_config_new(&raw);
  if (s != OCCLAB_OK) return report(s);
  Config cfg(raw);

  if (!a.config_path.empty()) {
    s = occlab_config_load_file(cfg.get(), a.config_path.c_str());
    if (s != OCCLAB_OK) return report(s);
  }

  std::vector<std::tuple<std::string, std::string, std::string>> overrides;
  auto add = [&](const char* key, const std::string& value, const char* flag) { overrides.emplace_back(key, value, flag); };
  if (a.design) add("design", *a.design, "--design");
  if (a.key) add("key", *a.key, "--key");
  if (a.key_id) add("key_id", *a.key_id, "--key-id");
  if (a.plaintext) add("plaintext", *a.plaintext, "--plaintext-fixed");
  if (a.random_plaintext) add("plaintext", "random", "--plaintext-random");
  if (a.traces) add("traces", std::to_string(*a.traces), "--traces");
  if (a.occupancy) add("occupancy", CLI::detail::to_string(*a.occupancy), "--occupancy");
  if (a.seed) add("seed", std::to_string(*a.seed), "--seed");
  if (a.l1d_kb) add("l1d.size_kb", std::to_string(*a.l1d_kb), "--l1d-kb");
  if (a.llc_mb) add("llc.size_mb", std::to_string(*a.llc_mb), "--llc-mb");
  if (a.noise_avg) add("noise_avg", std::to_string(*a.noise_avg), "--noise-avg");
  if (a.jobs) add("jobs", std::to_string(*a.jobs), "--jobs");
  if (a.out) add("out", *a.out, "--out");
  for (const auto& [key, value] : a.sets) overrides.emplace_back(key, value, "--set " + key);

  for (const auto& [key, value, origin] : overrides) {
    s = occlab_config_set(cfg.get(), key.c_str(), value.c_str(), origin.c_str());
    if (s != OCCLAB_OK) return report(s);
  }
  if (!occlab_config_has_seed(cfg.get())) {
    if (const char* env = std::getenv("OCCLAB_SEED")) {
      s = occlab_config_set(cfg.get(), "seed", env, "OCCLAB_SEED");
      if (s != OCCLAB_OK) return report(s);
    }
  }

  occlab_collect_stats stats{};
  s = occlab_collect(cfg.get(), a.quiet ? nullptr : progress_line, nullptr, &stats);
  if (s != OCCLAB_OK) return report(s);
  std::printf("traces=%llu encryptions=%llu prime_fallbacks=%llu sae=%llu global_evictions=%llu\n",
              static_cast<unsigned long long>(stats.traces), static_cast<unsigned long long>(stats.encryptions),
              static_cast<unsigned long long>(stats.prime_fallback_invalidations),
              static_cast<unsigned long long>(stats.sae_events),
              static_cast<unsigned long long>(stats.global_evictions));
  return kOk;
}

// ---- assess ----

int run_assess(const std::string& p1, const std::string& p2, double threshold) {
  Traces a, b;
  occlab_status s = load(p1, a);
  if (s != OCCLAB_OK) return report(s);
  s = load(p2, b);
  if (s != OCCLAB_OK) return report(s);
  occlab_assessment r{};
  s = occlab_assess(a.get(), b.get(), threshold, &r);
  if (s != OCCLAB_OK) return report(s);
  const char* verdict = r.leaks ? "LEAKS" : "NO-EVIDENCE";
  std::printf("runs: %s (%llu traces) vs %s (%llu traces)\n", p1.c_str(),
              static_cast<unsigned long long>(occlab_traces_count(a.get())), p2.c_str(),
              static_cast<unsigned long long>(occlab_traces_count(b.get())));
  std::printf("t-statistic: %.6f\ndof: %.3f\np-value: %.6g\nthreshold: %g\nverdict: %s\n", r.t_statistic, r.dof,
              r.p_value, threshold, verdict);
  std::printf("t=%.10g p=%.10g verdict=%s\n", r.t_statistic, r.p_value, verdict);
  return kOk;
}

// ---- recover ----

int run_recover(const std::string& path, const std::optional<std::string>& true_key_hex, int top) {
  std::uint8_t key[16];
  if (true_key_hex) {
    const occlab_status s = occlab_parse_key(true_key_hex->c_str(), key);
    if (s != OCCLAB_OK) return report(s);
  }
  Traces traces;
  occlab_status s = load(path, traces);
  if (s != OCCLAB_OK) return report(s);

  occlab_ranking* raw = nullptr;
  s = occlab_recover(traces.get(), 0, &raw);
  if (s != OCCLAB_OK) return report(s);
  Ranking ranking(raw);

  const std::uint64_t n = occlab_traces_count(traces.get());
  std::printf("traces: %llu\n", static_cast<unsigned long long>(n));
  std::vector<std::uint8_t> cand(static_cast<std::size_t>(top));
  std::vector<double> score(static_cast<std::size_t>(top));
  for (int b = 0; b < 16; ++b) {
    occlab_ranking_top(ranking.get(), b, top, cand.data(), score.data());
    std::printf("byte %2d:", b);
    for (int i = 0; i < top; ++i) std::printf(" %02x(%.3f)", cand[static_cast<std::size_t>(i)], score[static_cast<std::size_t>(i)]);
    std::printf("\n");
  }
  if (!true_key_hex) return kOk;

  double ranks[16];
  double ge = 0.0;
  s = occlab_ranking_ge(ranking.get(), key, ranks, &ge);
  if (s != OCCLAB_OK) return report(s);
  std::printf("true-key ranks:");
  for (double r : ranks) std::printf(" %g", r);
  std::printf("\nge_bits: %.4f\n", ge);

  for (int pct : {10, 25, 50, 100}) {
    const std::uint64_t prefix = n * static_cast<std::uint64_t>(pct) / 100;
    occlab_ranking* partial = nullptr;
    s = occlab_recover(traces.get(), prefix == 0 ? 1 : prefix, &partial);
    if (s != OCCLAB_OK) {
      std::printf("checkpoint %d%% traces=%llu skipped: %s\n", pct, static_cast<unsigned long long>(prefix),
                  occlab_last_error());
      continue;
    }
    Ranking hold(partial);
    double g = 0.0;
    occlab_ranking_ge(partial, key, nullptr, &g);
    std::printf("checkpoint %d%% traces=%llu ge_bits=%.4f\n", pct, static_cast<unsigned long long>(prefix), g);
  }
  return kOk;
}

// ---- kde ----

int run_kde(const std::string& path, double bandwidth, std::size_t grid, const std::string& out_path) {
  Traces traces;
  occlab_status s = load(path, traces);
  if (s != OCCLAB_OK) return report(s);
  std::vector<double> x(grid), d(grid);
  double used = 0.0;
  s = occlab_kde(traces.get(), bandwidth, grid, x.data(), d.data(), &used);
  if (s != OCCLAB_OK) return report(s);

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::fprintf(stderr, "occlab: cannot write '%s'\n", out_path.c_str());
    return kRuntime;
  }
  out << "grid,density\n";
  char line[96];
  for (std::size_t i = 0; i < grid; ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", x[i], d[i]);
    out << line;
  }
  out.flush();
  if (!out) {
    std::fprintf(stderr, "occlab: write to '%s' failed\n", out_path.c_str());
    return kRuntime;
  }
  std::printf("bandwidth=%.6g points=%zu out=%s\n", used, grid, out_path.c_str());
  return kOk;
}

// ---- selftest ----

int run_selftest(const std::string& dir, std::uint64_t seed, std::uint64_t n) {
  const std::string shifted_a = dir + "/selftest_shift_a.csv";
  const std::string shifted_b = dir + "/selftest_shift_b.csv";
  const std::string null_a = dir + "/selftest_null_a.csv";
  const std::string null_b = dir + "/selftest_null_b.csv";
  occlab_status s = occlab_synthetic_pair(shifted_a.c_str(), shifted_b.c_str(), n, 10.0, seed);
  if (s != OCCLAB_OK) return report(s);
  s = occlab_synthetic_pair(null_a.c_str(), null_b.c_str(), n, 0.0, seed + 1);
  if (s != OCCLAB_OK) return report(s);

  bool ok = true;
  auto check = [&](const std::string& p1, const std::string& p2, bool expect_leak, const char* name) {
    Traces a, b;
    if (load(p1, a) != OCCLAB_OK || load(p2, b) != OCCLAB_OK) {
      std::printf("%s: FAIL (%s)\n", name, occlab_last_error());
      ok = false;
      return;
    }
    occlab_assessment r{};
    if (occlab_assess(a.get(), b.get(), 4.5, &r) != OCCLAB_OK) {
      std::printf("%s: FAIL (%s)\n", name, occlab_last_error());
      ok = false;
      return;
    }
    const bool pass = (r.leaks != 0) == expect_leak;
    ok = ok && pass;
    std::printf("%s: %s t=%.6f p=%.6g verdict=%s\n", name, pass ? "PASS" : "FAIL", r.t_statistic, r.p_value,
                r.leaks ? "LEAKS" : "NO-EVIDENCE");
  };
  check(shifted_a, shifted_b, true, "shifted pair");
  check(null_a, null_b, false, "null pair");
  check(shifted_a, shifted_a, false, "same file");
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cache-occupancy channel simulator: collect traces, test for leakage, rank key bytes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", occlab_version());

  CollectArgs ca;
  auto* collect = app.add_subcommand("collect", "run the attack loop and write a trace CSV");
  collect->add_option("--config", ca.config_path, "key = value config file")->check(CLI::ExistingFile);
  collect->add_option("--design", ca.design, "setassoc | mirage | mirage_plus");
  collect->add_option("--key", ca.key, "victim AES key, 32 hex digits");
  collect->add_option("--key-id", ca.key_id, "label stored with every record");
  auto* fixed = collect->add_option("--plaintext-fixed", ca.plaintext, "one plaintext for every trace");
  collect->add_flag("--plaintext-random", ca.random_plaintext, "fresh random plaintext per trace")->excludes(fixed);
  collect->add_option("--traces", ca.traces, "number of traces");
  collect->add_option("--occupancy", ca.occupancy, "attacker buffer as a percentage of the LLC");
  collect->add_option("--seed", ca.seed, "experiment seed (falls back to OCCLAB_SEED)");
  collect->add_option("--l1d-kb", ca.l1d_kb, "L1d size in KB");
  collect->add_option("--llc-mb", ca.llc_mb, "LLC size in MB");
  collect->add_option("--noise-avg", ca.noise_avg, "encryptions averaged per trace");
  collect->add_option("--jobs", ca.jobs, "worker threads");
  collect->add_option("--out", ca.out, "output CSV path");
  collect->add_option_function<std::vector<std::string>>(
      "--set",
      [&](const std::vector<std::string>& items) {
        for (const std::string& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + item + "'");
          ca.sets.emplace_back(item.substr(0, eq), item.substr(eq + 1));
        }
      },
      "extra config entries as key=value");
  collect->add_flag("--quiet", ca.quiet, "no progress lines");

  std::string a1, a2;
  double threshold = 4.5;
  auto* assess = app.add_subcommand("assess", "Welch's t-test between two trace files");
  assess->add_option("t1", a1, "first trace file")->required();
  assess->add_option("t2", a2, "second trace file")->required();
  assess->add_option("--threshold", threshold, "|t| above this is reported as LEAKS")->check(CLI::PositiveNumber);

  std::string rpath;
  std::optional<std::string> true_key;
  int top = 5;
  auto* recover = app.add_subcommand("recover", "rank key-byte candidates from random-plaintext traces");
  recover->add_option("traces", rpath, "trace file")->required();
  recover->add_option("--true-key", true_key, "known key, enables the guessing-entropy section");
  recover->add_option("--top", top, "candidates shown per byte")->check(CLI::Range(1, 256));

  std::string kpath, kout;
  std::string bandwidth_text = "auto";
  std::size_t grid = 512;
  auto* kde = app.add_subcommand("kde", "kernel density estimate of the timing column");
  kde->add_option("traces", kpath, "trace file")->required();
  kde->add_option("--bandwidth", bandwidth_text, "positive number or 'auto' (Silverman)");
  kde->add_option("--grid", grid, "grid points (>= 16)")->check(CLI::Range(std::size_t{16}, std::size_t{1} << 24));
  kde->add_option("--out", kout, "output CSV (grid,density)")->required();

  std::string sdir = ".";
  std::uint64_t sseed = 1;
  std::uint64_t sn = 5000;
  auto* selftest = app.add_subcommand("selftest", "synthetic shifted and null pairs through assess");
  selftest->add_option("--dir", sdir, "where to write the synthetic files")->check(CLI::ExistingDirectory);
  selftest->add_option("--seed", sseed, "generator seed");
  selftest->add_option("--traces", sn, "records per file")->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 32));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*collect) return run_collect(ca);
  if (*assess) return run_assess(a1, a2, threshold);
  if (*recover) return run_recover(rpath, true_key, top);
  if (*kde) {
    double bw = 0.0;
    if (bandwidth_text != "auto") {
      try {
        std::size_t used = 0;
        bw = std::stod(bandwidth_text, &used);
        if (used != bandwidth_text.size() || !(bw > 0.0)) throw std::invalid_argument("bandwidth");
      } catch (const std::exception&) {
        std::fprintf(stderr, "occlab: --bandwidth must be a positive number or 'auto'\n");
        return kUsage;
      }
    }
    return run_kde(kpath, bw, grid, kout);
  }
  if (*selftest) return run_selftest(sdir, sseed, sn);
  return kUsage;
}
