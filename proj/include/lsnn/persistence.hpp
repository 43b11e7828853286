#pragma once

// Checkpoint files and CSV outputs.
//
// Checkpoint layout (format_version 1):
//
//   version: 1
//   dims: 2-20-20-1
//   seed: 7
//   iteration: 50000
//   interior: <17 significant digits>
//   boundary: <17 significant digits>
//   total: <17 significant digits>
//   [problem: N]          optional metadata, ignored if absent
//   [h: <real>]
//   [rho_divisor: <real>]
//   <blank line>
//   params, adam_m, adam_v as little-endian IEEE-754 binary64
//
// CSV files use '.' decimals (independent of the global locale) and LF.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/hyperplanes.hpp"
#include "lsnn/ls_functional.hpp"
#include "lsnn/metrics.hpp"
#include "lsnn/nn_core.hpp"
#include "lsnn/optimizer.hpp"

namespace lsnn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointVersion;
  Architecture arch;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  LossBreakdown loss;
  // Run metadata; absent in files that do not carry it.
  std::optional<int> problem;
  std::optional<double> h;
  std::optional<double> rho_divisor;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Shortest-round-trip-safe decimal with 17 significant digits.
inline std::string format_real(double v, int significant = 17) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, significant);
  return std::string(buf, res.ptr);
}

/// Shortest decimal that parses back to v.
inline std::string format_short(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view s) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("malformed number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_unsigned(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("malformed integer '" + std::string(s) + "'");
  return v;
}

namespace detail {

inline void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

inline double read_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int k = 7; k >= 0; --k) bits = (bits << 8) | p[k];
  return std::bit_cast<double>(bits);
}

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  ck.arch.validate();
  const auto n = param_count(ck.arch);
  if (ck.params.size() != n || ck.adam_m.size() != n || ck.adam_v.size() != n)
    throw ValidationError("checkpoint sequences must all have param_count(arch) entries");
  auto finite = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  if (!finite(ck.params) || !finite(ck.adam_m) || !finite(ck.adam_v) || !std::isfinite(ck.loss.interior) ||
      !std::isfinite(ck.loss.boundary) || !std::isfinite(ck.loss.total))
    throw ValidationError("refusing to serialize non-finite values");
  std::string out;
  out += "version: " + std::to_string(ck.format_version) + "\n";
  out += "dims: " + ck.arch.str() + "\n";
  out += "seed: " + std::to_string(ck.seed) + "\n";
  out += "iteration: " + std::to_string(ck.iteration) + "\n";
  out += "interior: " + format_real(ck.loss.interior) + "\n";
  out += "boundary: " + format_real(ck.loss.boundary) + "\n";
  out += "total: " + format_real(ck.loss.total) + "\n";
  if (ck.problem) out += "problem: " + std::to_string(*ck.problem) + "\n";
  if (ck.h) out += "h: " + format_real(*ck.h) + "\n";
  if (ck.rho_divisor) out += "rho_divisor: " + format_real(*ck.rho_divisor) + "\n";
  out += "\n";
  out.reserve(out.size() + 3 * n * 8);
  for (const auto* seq : {&ck.params, &ck.adam_m, &ck.adam_v})
    for (double v : *seq) detail::append_le(out, v);
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view data) {
  const auto sep = data.find("\n\n");
  if (sep == std::string_view::npos) throw CorruptCheckpoint("checkpoint header is not terminated by a blank line");
  std::map<std::string, std::string, std::less<>> kv;
  std::string_view header = data.substr(0, sep + 1);
  while (!header.empty()) {
    const auto eol = header.find('\n');
    std::string_view line = header.substr(0, eol);
    header.remove_prefix(eol + 1);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw CorruptCheckpoint("malformed header line '" + std::string(line) + "'");
    std::string_view value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    kv.emplace(std::string(line.substr(0, colon)), std::string(value));
  }
  auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw CorruptCheckpoint(std::string("checkpoint header lacks '") + key + "'");
    return it->second;
  };
  Checkpoint ck;
  try {
    const auto version = parse_unsigned(need("version"));
    if (version != kCheckpointVersion)
      throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version) +
                              " (supported versions: " + std::to_string(kCheckpointVersion) + ")");
    ck.format_version = static_cast<int>(version);
    ck.arch = Architecture::parse(need("dims"));
    ck.seed = parse_unsigned(need("seed"));
    ck.iteration = parse_unsigned(need("iteration"));
    ck.loss.interior = parse_real(need("interior"));
    ck.loss.boundary = parse_real(need("boundary"));
    ck.loss.total = parse_real(need("total"));
    if (auto it = kv.find("problem"); it != kv.end()) ck.problem = static_cast<int>(parse_unsigned(it->second));
    if (auto it = kv.find("h"); it != kv.end()) ck.h = parse_real(it->second);
    if (auto it = kv.find("rho_divisor"); it != kv.end()) ck.rho_divisor = parse_real(it->second);
  } catch (const CorruptCheckpoint&) {
    throw;
  } catch (const ValidationError& e) {
    throw CorruptCheckpoint(std::string("bad checkpoint header: ") + e.what());
  }
  const auto n = param_count(ck.arch);
  const std::string_view body = data.substr(sep + 2);
  if (body.size() != 3 * n * 8)
    throw CorruptCheckpoint("checkpoint body holds " + std::to_string(body.size()) + " bytes, dims " + ck.arch.str() +
                            " require " + std::to_string(3 * n * 8));
  const auto* bytes = reinterpret_cast<const unsigned char*>(body.data());
  for (auto* seq : {&ck.params, &ck.adam_m, &ck.adam_v}) {
    seq->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = detail::read_le(bytes);
      if (!std::isfinite(v)) throw CorruptCheckpoint("checkpoint contains non-finite values");
      (*seq)[i] = v;
      bytes += 8;
    }
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::write_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

inline Network network_of(const Checkpoint& ck) { return Network(ck.arch, ck.params); }

// ---- CSV ------------------------------------------------------------------

inline const char* kMetricsHeader = "problem,arch,rel_l2,rel_graph,ls_ratio,params,mesh";
inline const char* kHistoryHeader = "iter,lr,interior,boundary,total";
inline const char* kPolylineHeader = "layer,unit,x,y,chain";

inline std::string metrics_row(const ErrorReport& r, std::string_view mesh_tag) {
  return std::to_string(r.problem_id) + "," + r.arch.str() + "," + format_real(r.rel_l2) + "," +
         format_real(r.rel_graph) + "," + format_real(r.ls_ratio) + "," + std::to_string(r.params) + "," +
         std::string(mesh_tag) + "\n";
}

inline std::string history_row(const HistoryRow& row) {
  return std::to_string(row.iter) + "," + format_real(row.lr) + "," + format_real(row.loss.interior) + "," +
         format_real(row.loss.boundary) + "," + format_real(row.loss.total) + "\n";
}

/// Appends a row, writing the header first when the file is new or empty.
inline void append_csv(const std::filesystem::path& path, std::string_view header, const std::string& rows) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw IoError("cannot open " + path.string() + " for appending");
  if (fresh) os << header << '\n';
  os << rows;
  if (!os) throw IoError("write failed for " + path.string());
}

inline void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  std::string s = std::string(kHistoryHeader) + "\n";
  for (const auto& r : history) s += history_row(r);
  detail::write_atomic(path, s);
}

inline void write_polylines_csv(const std::filesystem::path& path, const std::vector<Polyline>& lines) {
  std::string s = std::string(kPolylineHeader) + "\n";
  std::map<std::pair<int, int>, int> chain_count;
  for (const auto& pl : lines) {
    const int chain = chain_count[{pl.layer, pl.unit}]++;
    for (const auto& v : pl.vertices)
      s += std::to_string(pl.layer) + "," + std::to_string(pl.unit) + "," + format_real(v[0]) + "," +
           format_real(v[1]) + "," + std::to_string(chain) + "\n";
  }
  detail::write_atomic(path, s);
}

/// Splits one CSV line on commas (no quoting is used by our files).
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace lsnn
