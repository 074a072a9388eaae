#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "occlab/attacker.hpp"

namespace occlab {

/// Everything `collect` needs: the experiment plus where to write it.
struct RunConfig {
  ExperimentConfig experiment;
  std::string output_path;
  bool seed_given = false;

  /// Sets one `key = value` entry. Unknown keys and bad values throw
  /// Error(Config) naming `origin` (e.g. `run.cfg:12` or `--traces`).
  void set(std::string_view key, std::string_view value, const std::string& origin);

  /// Throws Error(Config) if the run cannot start.
  void validate() const;

  /// Every accepted key, sorted.
  static std::vector<std::string> keys();
};

/// Applies a `key = value` file with `#` comments on top of `base`.
void apply_config(RunConfig& base, std::istream& in, const std::string& source_name);
void apply_config_file(RunConfig& base, const std::string& path);

}  // namespace occlab
