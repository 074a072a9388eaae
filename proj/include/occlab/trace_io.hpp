#pragma once

#include <iosfwd>
#include <string>
#include <utility>

#include "occlab/trace.hpp"

namespace occlab {

inline constexpr const char* kTraceColumns = "trace_idx,plaintext,ciphertext,occupancy_pct,timing,key_id";

/// `# key: value` header lines, the column line, then one row per record. LF only.
void write_csv(std::ostream& out, const TraceFileHeader& header, const TraceSet& traces);
void write_csv(const std::string& path, const TraceFileHeader& header, const TraceSet& traces);

/// Exact inverse of write_csv. Any malformed line aborts the read with its line number.
std::pair<TraceFileHeader, TraceSet> read_csv(std::istream& in);
std::pair<TraceFileHeader, TraceSet> read_csv(const std::string& path);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

}  // namespace occlab
