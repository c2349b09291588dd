#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace wifinet {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Valid RSS range in dBm. Values outside are rejected at parse time.
inline constexpr int kRssFloorDbm = -99;
inline constexpr int kRssCeilDbm = -30;

struct ApReading {
  std::string ap_id;
  int rss_dbm = 0;
  friend bool operator==(const ApReading&, const ApReading&) = default;
};

// One WiFi scan. Reading order is preserved from the source file because the
// encoder's first-appearance AP ordering depends on it.
struct RssSample {
  std::vector<ApReading> readings;
  std::optional<int> position_id;
  std::optional<Vec2> location;
  std::optional<double> timestamp;

  std::optional<int> rss_of(std::string_view ap) const {
    for (const auto& r : readings)
      if (r.ap_id == ap) return r.rss_dbm;
    return std::nullopt;
  }

  friend bool operator==(const RssSample&, const RssSample&) = default;
};

enum class DatasetKind { train, test_known, test_unknown, test_trajectory };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::train: return "train";
    case DatasetKind::test_known: return "test-known";
    case DatasetKind::test_unknown: return "test-unknown";
    case DatasetKind::test_trajectory: return "test-trajectory";
  }
  return "?";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "train") return DatasetKind::train;
  if (s == "test-known" || s == "known") return DatasetKind::test_known;
  if (s == "test-unknown" || s == "unknown") return DatasetKind::test_unknown;
  if (s == "test-trajectory" || s == "trajectory") return DatasetKind::test_trajectory;
  throw std::invalid_argument("unknown dataset kind: " + std::string(s));
}

struct Dataset {
  DatasetKind kind = DatasetKind::train;
  std::vector<RssSample> samples;
  std::map<int, Vec2> positions;  // position_id -> coordinates (metres)

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SpacingStats {
  double min_m = 0.0;
  double mean_m = 0.0;
  double max_m = 0.0;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

// Shortest round-trip decimal form (std::to_chars default).
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long> parse_int(std::string_view s) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline bool valid_ap_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id)
    if (c == ',' || c == ';' || c == '\n' || c == '\r') return false;
  return true;
}

}  // namespace detail

inline void validate_sample(const RssSample& s) {
  if (s.readings.empty()) throw std::invalid_argument("sample has no readings");
  for (const auto& r : s.readings) {
    if (!detail::valid_ap_id(r.ap_id))
      throw std::invalid_argument("invalid AP identifier: '" + r.ap_id + "'");
    if (r.rss_dbm < kRssFloorDbm || r.rss_dbm > kRssCeilDbm)
      throw std::invalid_argument("RSS " + std::to_string(r.rss_dbm) + " dBm outside [" +
                                  std::to_string(kRssFloorDbm) + ", " +
                                  std::to_string(kRssCeilDbm) + "]");
  }
  if (s.position_id) {
    if (*s.position_id < 0) throw std::invalid_argument("negative position_id");
    if (!s.location) throw std::invalid_argument("labelled sample without coordinates");
  }
}

inline void validate_dataset(const Dataset& ds) {
  for (const auto& s : ds.samples) validate_sample(s);

  if (ds.kind == DatasetKind::train || ds.kind == DatasetKind::test_known) {
    for (const auto& s : ds.samples) {
      if (!s.position_id)
        throw std::invalid_argument(to_string(ds.kind) + " sample missing position_id");
      if (!ds.positions.count(*s.position_id))
        throw std::invalid_argument("position_id " + std::to_string(*s.position_id) +
                                    " not in positions map");
    }
  }
  if (ds.kind == DatasetKind::test_trajectory) {
    std::optional<double> prev;
    for (const auto& s : ds.samples) {
      if (!s.timestamp) throw std::invalid_argument("trajectory sample missing timestamp");
      if (!s.location) throw std::invalid_argument("trajectory sample missing coordinates");
      if (prev && *s.timestamp < *prev)
        throw std::invalid_argument("trajectory samples not timestamp-ordered");
      prev = s.timestamp;
    }
  }
  // positions must be injective on coordinates
  for (auto i = ds.positions.begin(); i != ds.positions.end(); ++i) {
    auto j = i;
    for (++j; j != ds.positions.end(); ++j)
      if (i->second == j->second)
        throw std::invalid_argument("positions " + std::to_string(i->first) + " and " +
                                    std::to_string(j->first) + " share coordinates");
  }
}

inline constexpr std::string_view kCsvHeader = "timestamp,position_id,x,y,readings";

// CSV format: one row per scan, header `timestamp,position_id,x,y,readings`,
// readings = `AP_ID:RSS` pairs joined by `;`. AP ids may themselves contain
// colons (BSSIDs), so each pair splits at its last colon.
inline Dataset parse_dataset(const std::string& path, DatasetKind kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  Dataset ds;
  ds.kind = kind;

  std::string line;
  int line_no = 0;
  std::unordered_set<std::string> seen_triples;

  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw ParseError("bad header, expected '" + std::string(kCsvHeader) + "'", line_no);

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const auto fields = detail::split(line, ',');
    if (fields.size() != 5) throw ParseError("expected 5 fields, got " +
                                             std::to_string(fields.size()), line_no);

    RssSample s;
    if (!fields[0].empty()) {
      auto ts = detail::parse_double(fields[0]);
      if (!ts) throw ParseError("bad timestamp '" + std::string(fields[0]) + "'", line_no);
      s.timestamp = *ts;
    }
    if (!fields[1].empty()) {
      auto pid = detail::parse_int(fields[1]);
      if (!pid || *pid < 0)
        throw ParseError("bad position_id '" + std::string(fields[1]) + "'", line_no);
      s.position_id = static_cast<int>(*pid);
    }
    const bool has_x = !fields[2].empty(), has_y = !fields[3].empty();
    if (has_x != has_y) throw ParseError("x and y must both be present or both empty", line_no);
    if (has_x) {
      auto x = detail::parse_double(fields[2]);
      auto y = detail::parse_double(fields[3]);
      if (!x || !y) throw ParseError("bad coordinates", line_no);
      s.location = Vec2{*x, *y};
    }

    if (fields[4].empty()) throw ParseError("sample has no readings", line_no);
    for (auto pair : detail::split(fields[4], ';')) {
      const std::size_t colon = pair.rfind(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == pair.size())
        throw ParseError("bad reading '" + std::string(pair) + "'", line_no);
      std::string ap(pair.substr(0, colon));
      auto rss = detail::parse_int(pair.substr(colon + 1));
      if (!rss) throw ParseError("bad RSS in '" + std::string(pair) + "'", line_no);
      if (*rss < kRssFloorDbm || *rss > kRssCeilDbm)
        throw ParseError("RSS " + std::to_string(*rss) + " outside [" +
                         std::to_string(kRssFloorDbm) + ", " + std::to_string(kRssCeilDbm) +
                         "] in '" + std::string(pair) + "'", line_no);
      if (s.rss_of(ap))
        throw ParseError("duplicate AP '" + ap + "' within one sample", line_no);

      std::string triple = std::string(fields[0]) + "|" + std::string(fields[1]) + "|" + ap;
      if (!seen_triples.insert(std::move(triple)).second)
        throw ParseError("duplicate (timestamp, position_id, ap_id) triple for AP '" + ap + "'",
                         line_no);
      s.readings.push_back({std::move(ap), static_cast<int>(*rss)});
    }

    if (kind == DatasetKind::train && !s.position_id)
      throw ParseError("train sample missing position_id", line_no);

    if (s.position_id) {
      auto [it, inserted] = ds.positions.try_emplace(*s.position_id, *s.location);
      if (!inserted && !(it->second == *s.location))
        throw ParseError("position " + std::to_string(*s.position_id) +
                         " has conflicting coordinates", line_no);
    }
    ds.samples.push_back(std::move(s));
  }

  validate_dataset(ds);
  return ds;
}

inline void serialize_dataset(const Dataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::ofstream out(path, std::ios::binary);  // binary: byte-stable newlines
  if (!out) throw std::runtime_error("cannot write " + path);

  out << kCsvHeader << '\n';
  for (const auto& s : ds.samples) {
    if (s.timestamp) out << detail::format_double(*s.timestamp);
    out << ',';
    if (s.position_id) out << *s.position_id;
    out << ',';
    if (s.location)
      out << detail::format_double(s.location->x) << ',' << detail::format_double(s.location->y);
    else
      out << ',';
    out << ',';
    for (std::size_t i = 0; i < s.readings.size(); ++i) {
      if (i) out << ';';
      out << s.readings[i].ap_id << ':' << s.readings[i].rss_dbm;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline SpacingStats spacing_stats(const std::vector<Vec2>& positions) {
  if (positions.size() < 2)
    throw std::invalid_argument("spacing_stats needs at least 2 positions");
  SpacingStats st;
  st.min_m = std::numeric_limits<double>::infinity();
  st.max_m = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (i == j) continue;
      nearest = std::min(nearest, distance(positions[i], positions[j]));
    }
    st.min_m = std::min(st.min_m, nearest);
    st.max_m = std::max(st.max_m, nearest);
    sum += nearest;
  }
  st.mean_m = sum / static_cast<double>(positions.size());
  return st;
}

inline SpacingStats spacing_stats(const Dataset& ds) {
  std::vector<Vec2> pts;
  pts.reserve(ds.positions.size());
  for (const auto& [id, p] : ds.positions) pts.push_back(p);
  return spacing_stats(pts);
}

}  // namespace wifinet
