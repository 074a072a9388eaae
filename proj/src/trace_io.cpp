#include "occlab/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "occlab/error.hpp"

namespace occlab {

namespace {

[[noreturn]] void bad_line(std::size_t line_no, const std::string& what) {
  fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && end == text.data() + text.size();
}

// Strict form used in files: exactly 32 lowercase hex digits.
bool parse_file_hex(std::string_view text, Block& out) {
  if (text.size() != 32) return false;
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  const auto parsed = parse_block_hex(text);
  if (!parsed) return false;
  out = *parsed;
  return true;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void check_text_field(const std::string& value, const char* name) {
  if (value.find_first_of(",\r\n") != std::string::npos) {
    fail(ErrorKind::Format, std::string(name) + " may not contain commas or line breaks: '" + value + "'");
  }
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) fail(ErrorKind::Format, "cannot format number");
  return std::string(buf, end);
}

void write_csv(std::ostream& out, const TraceFileHeader& header, const TraceSet& traces) {
  check_text_field(header.design, "design");
  check_text_field(header.geometry, "geometry");
  check_text_field(header.key_id, "key_id");
  out << "# format_version: " << header.format_version << '\n'
      << "# design: " << header.design << '\n'
      << "# geometry: " << header.geometry << '\n'
      << "# occupancy_pct: " << format_real(header.occupancy_pct) << '\n'
      << "# key_id: " << header.key_id << '\n'
      << "# rng_seed: " << header.rng_seed << '\n'
      << kTraceColumns << '\n';
  for (const TraceRecord& r : traces) {
    check_text_field(r.key_id, "key_id");
    out << r.trace_idx << ',' << to_hex(r.plaintext) << ',' << to_hex(r.ciphertext) << ','
        << format_real(r.occupancy_pct) << ',' << r.timing << ',' << r.key_id << '\n';
  }
}

void write_csv(const std::string& path, const TraceFileHeader& header, const TraceSet& traces) {
  // Serialize first so a bad record never leaves a partial file behind.
  std::ostringstream buffer;
  write_csv(buffer, header, traces);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  const std::string text = buffer.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) fail(ErrorKind::Io, "write to '" + path + "' failed");
}

std::pair<TraceFileHeader, TraceSet> read_csv(std::istream& in) {
  TraceFileHeader header;
  TraceSet traces;
  std::map<std::string, std::string, std::less<>> fields;
  std::unordered_set<std::uint64_t> seen;
  bool columns_seen = false;
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') bad_line(line_no, "CR line endings are not accepted");

    if (!columns_seen) {
      if (line.starts_with("# ")) {
        const std::size_t colon = line.find(": ", 2);
        if (colon == std::string::npos) bad_line(line_no, "header line must look like '# key: value'");
        std::string key = line.substr(2, colon - 2);
        static const std::unordered_set<std::string> kKnown = {"format_version", "design",  "geometry",
                                                               "occupancy_pct",  "key_id",  "rng_seed"};
        if (!kKnown.contains(key)) bad_line(line_no, "unknown header field '" + key + "'");
        if (fields.contains(key)) bad_line(line_no, "duplicate header field '" + key + "'");
        fields.emplace(std::move(key), line.substr(colon + 2));
        continue;
      }
      if (line != kTraceColumns) {
        bad_line(line_no, std::string("expected column header '") + kTraceColumns + "', got '" + line + "'");
      }
      for (const char* name : {"format_version", "design", "geometry", "occupancy_pct", "key_id", "rng_seed"}) {
        if (!fields.contains(name)) bad_line(line_no, std::string("header field '") + name + "' missing");
      }
      if (!parse_number(fields["format_version"], header.format_version)) {
        bad_line(line_no, "format_version is not an integer");
      }
      if (header.format_version != TraceFileHeader::kFormatVersion) {
        fail(ErrorKind::Format, "format version mismatch: file has " + std::to_string(header.format_version) +
                                    ", reader supports " + std::to_string(TraceFileHeader::kFormatVersion));
      }
      header.design = fields["design"];
      header.geometry = fields["geometry"];
      header.key_id = fields["key_id"];
      if (!parse_number(fields["occupancy_pct"], header.occupancy_pct)) bad_line(line_no, "bad occupancy_pct");
      if (!parse_number(fields["rng_seed"], header.rng_seed)) bad_line(line_no, "bad rng_seed");
      columns_seen = true;
      continue;
    }

    const std::vector<std::string_view> cols = split(line, ',');
    if (cols.size() != 6) {
      bad_line(line_no, "expected 6 columns, got " + std::to_string(cols.size()));
    }
    TraceRecord r;
    if (!parse_number(cols[0], r.trace_idx)) bad_line(line_no, "bad trace_idx '" + std::string(cols[0]) + "'");
    if (!parse_file_hex(cols[1], r.plaintext)) bad_line(line_no, "malformed hex in plaintext");
    if (!parse_file_hex(cols[2], r.ciphertext)) bad_line(line_no, "malformed hex in ciphertext");
    if (!parse_number(cols[3], r.occupancy_pct)) bad_line(line_no, "bad occupancy_pct");
    if (!parse_number(cols[4], r.timing)) bad_line(line_no, "bad timing '" + std::string(cols[4]) + "'");
    r.key_id = std::string(cols[5]);
    if (!seen.insert(r.trace_idx).second) bad_line(line_no, "duplicate trace_idx " + std::to_string(r.trace_idx));
    traces.push_back(std::move(r));
  }
  if (in.bad()) fail(ErrorKind::Io, "read error");
  if (!columns_seen) fail(ErrorKind::Format, "missing column header line");
  return {std::move(header), std::move(traces)};
}

std::pair<TraceFileHeader, TraceSet> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  try {
    return read_csv(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

}  // namespace occlab
