#pragma once

// Text I/O for passage records and preprocessed corpora.
//
// Record input: one record per line, "object,location,timestamp"; a tab
// may be used instead of the comma. Blank lines and lines starting with
// '#' are skipped, and a leading header row whose timestamp column reads
// "timestamp" is ignored.
//
// Corpus file (tab-separated, line-oriented):
//
//   TRALFM-CORPUS <tab> 1
//   order <tab> r
//   bin_hours <tab> h
//   tz_offset <tab> hours
//   locations <tab> L            followed by L lines: name
//   sequences <tab> S            followed by S lines: r+1 location ids, space-separated
//   objects <tab> O              followed by O lines: name
//   trajectories <tab> M         followed by M lines: T <tab> s,o,t s,o,t ...
//
// Line i of a table (0-based) is the dense id i.

#include <array>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "tralfm/corpus.hpp"

namespace tralfm {

inline constexpr const char* kCorpusMagic = "TRALFM-CORPUS";
inline constexpr int kCorpusVersion = 1;

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Formats doubles so that reading them back is exact.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) fail(std::string("unexpected end of file, expected ") + what);
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  // Reads "key <tab> value" and returns value.
  std::string keyed(const char* key) {
    const auto line = next(key);
    const auto parts = split(line, '\t');
    if (parts.size() != 2 || parts[0] != key) fail(std::string("expected '") + key + "<TAB>value', got '" + line + "'");
    return std::string(parts[1]);
  }

  template <class T>
  T keyed_number(const char* key) {
    auto v = parse_number<T>(keyed(key));
    if (!v) fail(std::string("bad numeric value for ") + key);
    return *v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(source_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

  std::size_t line_no() const noexcept { return line_no_; }
  std::istream& stream() noexcept { return in_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline std::vector<PassageRecord> read_records(std::istream& in, double tz_offset_hours,
                                               const std::string& source = "<records>") {
  std::vector<PassageRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    const auto fields = detail::split(line, delim);
    auto fail = [&](const std::string& why) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 3) fail("expected 3 fields (object,location,timestamp), got " + std::to_string(fields.size()));
    const auto object = detail::trim(fields[0]);
    const auto location = detail::trim(fields[1]);
    const auto stamp = detail::trim(fields[2]);
    if (out.empty() && stamp == "timestamp") continue;
    if (object.empty()) fail("empty object id");
    if (location.empty()) fail("empty location id");
    const auto ts = parse_timestamp(stamp, tz_offset_hours);
    if (!ts) fail("unparseable timestamp '" + std::string(stamp) + "'");
    if (*ts <= 0) fail("timestamp must be positive");
    out.push_back({std::string(object), std::string(location), *ts, line_no});
  }
  return out;
}

inline std::vector<PassageRecord> read_records_file(const std::string& path, double tz_offset_hours) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open record file '" + path + "'");
  return read_records(in, tz_offset_hours, path);
}

inline void write_corpus(std::ostream& out, const Corpus& c) {
  const auto& v = c.vocab;
  out << kCorpusMagic << '\t' << kCorpusVersion << '\n';
  out << "order\t" << v.order << '\n';
  out << "bin_hours\t" << c.scheme.bin_hours << '\n';
  out << "tz_offset\t" << detail::format_double(c.tz_offset_hours) << '\n';
  out << "locations\t" << v.locations.size() << '\n';
  for (const auto& name : v.locations.keys()) out << name << '\n';
  out << "sequences\t" << v.sequences.size() << '\n';
  for (const auto& key : v.sequences.keys()) {
    for (std::size_t j = 0; j < key.size(); ++j) out << (j ? " " : "") << key[j];
    out << '\n';
  }
  out << "objects\t" << v.objects.size() << '\n';
  for (const auto& name : v.objects.keys()) out << name << '\n';
  out << "trajectories\t" << c.trajectories.size() << '\n';
  for (const auto& t : c.trajectories) {
    out << t.size() << '\t';
    for (std::size_t i = 0; i < t.units.size(); ++i) {
      const auto& u = t.units[i];
      out << (i ? " " : "") << u.sequence << ',' << u.object << ',' << u.bin;
    }
    out << '\n';
  }
}

inline Corpus read_corpus(std::istream& in, const std::string& source = "<corpus>") {
  detail::LineReader rd(in, source);
  {
    const auto header = rd.next("header");
    const auto head = detail::split(header, '\t');
    if (head.size() != 2 || head[0] != kCorpusMagic) rd.fail("not a corpus file (missing TRALFM-CORPUS header)");
    if (detail::parse_number<int>(head[1]) != kCorpusVersion) rd.fail("unsupported corpus format version");
  }
  Corpus c;
  c.vocab.order = rd.keyed_number<int>("order");
  c.scheme.bin_hours = rd.keyed_number<int>("bin_hours");
  c.tz_offset_hours = rd.keyed_number<double>("tz_offset");
  if (c.vocab.order < 1) rd.fail("order must be >= 1");
  if (!TimeBinScheme::valid_bin_hours(c.scheme.bin_hours)) rd.fail("bin_hours must divide 24");

  const auto n_loc = rd.keyed_number<std::size_t>("locations");
  for (std::size_t i = 0; i < n_loc; ++i) {
    if (c.vocab.locations.intern(rd.next("location name")) != i) rd.fail("duplicate location name");
  }
  const auto n_seq = rd.keyed_number<std::size_t>("sequences");
  const auto width = static_cast<std::size_t>(c.vocab.order) + 1;
  for (std::size_t i = 0; i < n_seq; ++i) {
    const auto line = rd.next("sequence");
    SequenceKey key;
    for (auto tok : detail::split(line, ' ')) {
      auto id = detail::parse_number<Id>(tok);
      if (!id || *id >= n_loc) rd.fail("bad location id in sequence");
      key.push_back(*id);
    }
    if (key.size() != width) rd.fail("sequence must have order + 1 locations");
    if (c.vocab.sequences.intern(key) != i) rd.fail("duplicate sequence");
  }
  const auto n_obj = rd.keyed_number<std::size_t>("objects");
  for (std::size_t i = 0; i < n_obj; ++i) {
    if (c.vocab.objects.intern(rd.next("object name")) != i) rd.fail("duplicate object name");
  }
  const auto n_traj = rd.keyed_number<std::size_t>("trajectories");
  const auto n_bins = static_cast<Id>(c.scheme.total_bins());
  c.trajectories.reserve(n_traj);
  for (std::size_t m = 0; m < n_traj; ++m) {
    const auto line = rd.next("trajectory");
    const auto parts = detail::split(line, '\t');
    if (parts.size() != 2) rd.fail("trajectory line must be 'T<TAB>units'");
    const auto count = detail::parse_number<std::size_t>(parts[0]);
    TrajectoryUnits t;
    for (auto tok : detail::split(parts[1], ' ')) {
      const auto f = detail::split(tok, ',');
      if (f.size() != 3) rd.fail("unit must be s,o,t");
      const auto s = detail::parse_number<Id>(f[0]);
      const auto o = detail::parse_number<Id>(f[1]);
      const auto b = detail::parse_number<Id>(f[2]);
      if (!s || !o || !b) rd.fail("bad unit");
      if (*s >= n_seq || *o >= n_obj || *b >= n_bins) rd.fail("unit id out of range");
      t.units.push_back({*s, *o, *b});
    }
    if (!count || *count != t.size() || t.size() == 0) rd.fail("unit count mismatch");
    c.trajectories.push_back(std::move(t));
  }
  return c;
}

inline void save_corpus(const std::string& path, const Corpus& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file '" + path + "'");
  write_corpus(out, c);
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return read_corpus(in, path);
}

}  // namespace tralfm
