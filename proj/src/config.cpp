#include "occlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

#include "occlab/error.hpp"

namespace occlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& origin, std::string_view key, std::string_view value,
                            const std::string& expected) {
  fail(ErrorKind::Config, origin + ": bad value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                              expected + ")");
}

template <typename T>
T parse_uint(const std::string& origin, std::string_view key, std::string_view value) {
  T out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc{} || end != value.data() + value.size()) {
    bad_value(origin, key, value, "a non-negative integer");
  }
  return out;
}

double parse_real(const std::string& origin, std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc{} || end != value.data() + value.size() || !std::isfinite(out)) {
    bad_value(origin, key, value, "a number");
  }
  return out;
}

Block parse_hex(const std::string& origin, std::string_view key, std::string_view value) {
  const auto block = parse_block_hex(value);
  if (!block) bad_value(origin, key, value, "32 hex digits");
  return *block;
}

bool parse_bool(const std::string& origin, std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(origin, key, value, "true or false");
}

using Setter = std::function<void(RunConfig&, std::string_view, const std::string&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["design"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      const auto d = parse_design(v);
      if (!d) bad_value(o, k, v, "setassoc, mirage or mirage_plus");
      c.experiment.design = *d;
    };
    t["line.size"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.geometry.line_size = parse_uint<std::uint32_t>(o, k, v);
    };
    t["l1d.size_kb"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.geometry.l1d_size = parse_uint<std::uint64_t>(o, k, v) * 1024;
    };
    t["l1d.ways"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.geometry.l1d_ways = parse_uint<std::uint32_t>(o, k, v);
    };
    t["llc.size_mb"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.geometry.llc_size = parse_uint<std::uint64_t>(o, k, v) << 20;
    };
    t["llc.size_kb"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.geometry.llc_size = parse_uint<std::uint64_t>(o, k, v) << 10;
    };
    t["llc.ways"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.geometry.llc_ways = parse_uint<std::uint32_t>(o, k, v);
    };
    t["latency.l1_hit"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.latency.l1_hit = parse_uint<Cycles>(o, k, v);
    };
    t["latency.llc_hit"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.latency.llc_hit = parse_uint<Cycles>(o, k, v);
    };
    t["latency.memory"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.latency.memory = parse_uint<Cycles>(o, k, v);
    };
    t["mirage.base_ways"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.mirage.base_ways_per_skew = parse_uint<std::uint32_t>(o, k, v);
    };
    t["mirage.extra_ways"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.mirage.extra_ways_per_skew = parse_uint<std::uint32_t>(o, k, v);
    };
    t["occupancy"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.occupancy_pct = parse_real(o, k, v);
    };
    t["traces"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.n_traces = parse_uint<std::uint64_t>(o, k, v);
    };
    t["plaintext"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      if (v == "random") {
        c.experiment.plaintext_mode = PlaintextMode::Random;
        return;
      }
      c.experiment.plaintext_mode = PlaintextMode::Fixed;
      c.experiment.fixed_plaintext = parse_hex(o, k, v);
    };
    t["key"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.victim_key = parse_hex(o, k, v);
    };
    t["key_id"] = [](RunConfig& c, std::string_view v, const std::string&, std::string_view) {
      c.experiment.key_id = std::string(v);
    };
    t["noise_avg"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.noise_avg_m = parse_uint<std::uint32_t>(o, k, v);
    };
    t["seed"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.rng_seed = parse_uint<std::uint64_t>(o, k, v);
      c.seed_given = true;
    };
    t["jobs"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.jobs = parse_uint<std::uint32_t>(o, k, v);
    };
    t["reuse_hierarchy"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.reuse_hierarchy = parse_bool(o, k, v);
    };
    t["occupy.max_passes"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.occupy.max_passes = parse_uint<std::uint32_t>(o, k, v);
    };
    t["occupy.settle_fraction"] = [](RunConfig& c, std::string_view v, const std::string& o, std::string_view k) {
      c.experiment.occupy.settle_fraction = parse_real(o, k, v);
    };
    t["out"] = [](RunConfig& c, std::string_view v, const std::string&, std::string_view) {
      c.output_path = std::string(v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value, const std::string& origin) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::Config, origin + ": unknown key '" + std::string(key) + "'");
  it->second(*this, value, origin, key);
}

void RunConfig::validate() const {
  if (!seed_given) fail(ErrorKind::Config, "no seed given (use --seed, a `seed` entry or OCCLAB_SEED)");
  if (output_path.empty()) fail(ErrorKind::Config, "no output path given");
  if (!(experiment.occupy.settle_fraction >= 0.0 && experiment.occupy.settle_fraction < 1.0)) {
    fail(ErrorKind::Config, "occupy.settle_fraction must be in [0, 1)");
  }
  try {
    experiment.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : setters()) out.push_back(k);
  return out;
}

void apply_config(RunConfig& base, std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string origin = source_name + ":" + std::to_string(line_no);
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (!text.empty() && text.back() == '\r') text = trim(text.substr(0, text.size() - 1));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::Config, origin + ": expected 'key = value'");
    const std::string_view key = trim(text.substr(0, eq));
    const std::string_view value = trim(text.substr(eq + 1));
    if (key.empty()) fail(ErrorKind::Config, origin + ": missing key");
    base.set(key, value, origin);
  }
}

void apply_config_file(RunConfig& base, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file '" + path + "'");
  apply_config(base, in, path);
}

}  // namespace occlab
