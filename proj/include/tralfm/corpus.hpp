#pragma once

// Raw passage records -> trajectories -> r-th-order trajectory units.
//
// A trajectory is one object's time-ordered run of (location, timestamp)
// observations with no gap above a threshold. Sliding a window of r + 1
// locations over a trajectory of length n gives n - r units; each unit
// carries the window's sequence id, the object id and the time bin of the
// window's mean timestamp.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "tralfm/common.hpp"

namespace tralfm {

using Timestamp = std::int64_t;  // seconds since the Unix epoch, UTC

/// Sequence-id used for test-time windows that are absent from a frozen vocabulary.
inline constexpr Id kUnknownSequence = 0xffffffffu;

struct PassageRecord {
  std::string object;
  std::string location;
  Timestamp timestamp = 0;
  std::size_t line = 0;  // 1-based source line, 0 when synthetic
};

struct TrajectoryPoint {
  std::string location;
  Timestamp timestamp = 0;
  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct Trajectory {
  std::string object;
  std::vector<TrajectoryPoint> points;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Equal-width bins over the day, duplicated for weekdays [0, per_day) and
/// weekends [per_day, 2 * per_day). Saturday and Sunday are weekend days.
struct TimeBinScheme {
  int bin_hours = 2;

  static bool valid_bin_hours(int h) noexcept { return h >= 1 && h <= 24 && 24 % h == 0; }

  void validate() const {
    if (!valid_bin_hours(bin_hours))
      throw UsageError("bin-hours must be a positive divisor of 24, got " + std::to_string(bin_hours));
  }

  int bins_per_day() const noexcept { return 24 / bin_hours; }
  int total_bins() const noexcept { return 2 * bins_per_day(); }

  /// Human-readable label such as "8:00-10:00@weekday".
  std::string label(int bin) const {
    const bool weekend = bin >= bins_per_day();
    const int start = (bin % bins_per_day()) * bin_hours;
    return std::to_string(start) + ":00-" + std::to_string(start + bin_hours) + ":00@" +
           (weekend ? "weekend" : "weekday");
  }

  friend bool operator==(const TimeBinScheme&, const TimeBinScheme&) = default;
};

inline std::int64_t tz_offset_seconds(double tz_offset_hours) {
  return static_cast<std::int64_t>(std::llround(tz_offset_hours * 3600.0));
}

/// Time bin of a UTC timestamp observed in a zone `tz_offset_hours` east of UTC.
inline int time_bin(Timestamp ts, const TimeBinScheme& scheme, double tz_offset_hours) {
  using namespace std::chrono;
  const sys_seconds local{seconds{ts + tz_offset_seconds(tz_offset_hours)}};
  const auto day = floor<days>(local);
  const auto second_of_day = (local - day).count();
  const unsigned dow = weekday{day}.c_encoding();  // 0 = Sunday
  const bool weekend = dow == 0 || dow == 6;
  const int bin = static_cast<int>(second_of_day / (3600LL * scheme.bin_hours));
  return bin + (weekend ? scheme.bins_per_day() : 0);
}

/// Parse an epoch-seconds integer or an ISO-8601 local date-time
/// ("YYYY-MM-DDTHH:MM[:SS]", 'T' or ' ' separator). Local times are
/// converted to UTC with the fixed offset.
inline std::optional<Timestamp> parse_timestamp(std::string_view text, double tz_offset_hours) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) return std::nullopt;

  auto all_digits = [](std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (all_digits(text)) {
    if (text.size() > 18) return std::nullopt;
    return static_cast<Timestamp>(std::stoll(std::string(text)));
  }

  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const std::string buf(text);
  const int fields = std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &consumed);
  if (fields == 7 && static_cast<std::size_t>(consumed) != buf.size()) return std::nullopt;
  if (fields == 6) {
    consumed = 0;
    std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
    if (static_cast<std::size_t>(consumed) != buf.size()) return std::nullopt;
    s = 0;
  } else if (fields != 7) {
    return std::nullopt;
  }
  if (sep != 'T' && sep != ' ') return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) return std::nullopt;
  const auto local = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
  return local.time_since_epoch().count() - tz_offset_seconds(tz_offset_hours);
}

/// Dense id assignment in first-seen order, with reverse lookup.
template <class Key, class Hash = std::hash<Key>>
class Bijection {
 public:
  Id intern(const Key& key) {
    auto [it, inserted] = index_.try_emplace(key, static_cast<Id>(keys_.size()));
    if (inserted) keys_.push_back(key);
    return it->second;
  }

  std::optional<Id> find(const Key& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Key& decode(Id id) const { return keys_.at(id); }
  std::size_t size() const noexcept { return keys_.size(); }
  const std::vector<Key>& keys() const noexcept { return keys_; }

  friend bool operator==(const Bijection& a, const Bijection& b) { return a.keys_ == b.keys_; }

 private:
  std::unordered_map<Key, Id, Hash> index_;
  std::vector<Key> keys_;
};

/// An r-th-order sequence as r + 1 location ids.
using SequenceKey = std::vector<Id>;

struct SequenceKeyHash {
  std::size_t operator()(const SequenceKey& key) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Id v : key) {
      h ^= v;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct Vocabularies {
  int order = 2;
  Bijection<std::string> locations;
  Bijection<SequenceKey, SequenceKeyHash> sequences;
  Bijection<std::string> objects;

  /// Raw location names of a sequence id.
  std::vector<std::string> sequence_names(Id s) const {
    std::vector<std::string> out;
    for (Id l : sequences.decode(s)) out.push_back(locations.decode(l));
    return out;
  }

  friend bool operator==(const Vocabularies&, const Vocabularies&) = default;
};

struct Unit {
  Id sequence = 0;
  Id object = 0;
  Id bin = 0;
  friend bool operator==(const Unit&, const Unit&) = default;
};

/// Units of one trajectory in order. The object is stored per unit because
/// the generative model draws it per unit; extracted corpora repeat it.
struct TrajectoryUnits {
  std::vector<Unit> units;

  std::size_t size() const noexcept { return units.size(); }
  Id object() const { return units.at(0).object; }
  friend bool operator==(const TrajectoryUnits&, const TrajectoryUnits&) = default;
};

struct Corpus {
  Vocabularies vocab;
  TimeBinScheme scheme;
  double tz_offset_hours = 0.0;
  std::vector<TrajectoryUnits> trajectories;

  std::size_t unit_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.size();
    return n;
  }
  std::size_t num_sequences() const noexcept { return vocab.sequences.size(); }
  std::size_t num_objects() const noexcept { return vocab.objects.size(); }
  std::size_t num_bins() const noexcept { return static_cast<std::size_t>(scheme.total_bins()); }
  int order() const noexcept { return vocab.order; }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Group records by object, order by time, and split wherever consecutive
/// timestamps differ by more than `gap_seconds`. Segments with fewer than
/// `min_len` points are dropped. Output is ordered by object id, then start time.
inline std::vector<Trajectory> segment(std::vector<PassageRecord> records, Timestamp gap_seconds,
                                       std::size_t min_len) {
  std::stable_sort(records.begin(), records.end(), [](const PassageRecord& a, const PassageRecord& b) {
    return std::tie(a.object, a.timestamp, a.location) < std::tie(b.object, b.timestamp, b.location);
  });

  std::vector<Trajectory> out;
  Trajectory current;
  auto flush = [&] {
    if (!current.points.empty() && current.points.size() >= min_len) out.push_back(std::move(current));
    current = Trajectory{};
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const bool same_run = i > 0 && records[i - 1].object == r.object &&
                          r.timestamp - records[i - 1].timestamp <= gap_seconds;
    if (!same_run) {
      flush();
      current.object = r.object;
    }
    current.points.push_back({r.location, r.timestamp});
  }
  flush();
  return out;
}

/// Slide an (order + 1)-location window over `traj`. With `freeze_vocab`
/// unseen windows (or unseen locations/objects) are not added; unseen
/// windows get kUnknownSequence and an unseen object is rejected.
inline TrajectoryUnits extract_units(const Trajectory& traj, const TimeBinScheme& scheme, double tz_offset_hours,
                                     Vocabularies& vocab, bool freeze_vocab) {
  const auto r = static_cast<std::size_t>(vocab.order);
  if (vocab.order < 1) throw UsageError("sequence order must be >= 1");
  if (traj.points.size() < r + 1)
    throw DataError("trajectory of object '" + traj.object + "' has " + std::to_string(traj.points.size()) +
                    " points, fewer than order + 1 = " + std::to_string(r + 1));

  Id object = 0;
  if (freeze_vocab) {
    auto found = vocab.objects.find(traj.object);
    if (!found) throw DataError("object '" + traj.object + "' is not in the frozen vocabulary");
    object = *found;
  } else {
    object = vocab.objects.intern(traj.object);
  }

  std::vector<std::optional<Id>> loc_ids;
  loc_ids.reserve(traj.points.size());
  for (const auto& p : traj.points)
    loc_ids.push_back(freeze_vocab ? vocab.locations.find(p.location)
                                   : std::optional<Id>(vocab.locations.intern(p.location)));

  TrajectoryUnits out;
  out.units.reserve(traj.points.size() - r);
  SequenceKey key(r + 1);
  for (std::size_t i = 0; i + r < traj.points.size(); ++i) {
    bool known = true;
    long double time_sum = 0;
    for (std::size_t j = 0; j <= r; ++j) {
      known = known && loc_ids[i + j].has_value();
      key[j] = loc_ids[i + j].value_or(0);
      time_sum += static_cast<long double>(traj.points[i + j].timestamp);
    }
    const auto mean = static_cast<Timestamp>(std::floor(time_sum / static_cast<long double>(r + 1)));
    Id seq = kUnknownSequence;
    if (!freeze_vocab) {
      seq = vocab.sequences.intern(key);
    } else if (known) {
      seq = vocab.sequences.find(key).value_or(kUnknownSequence);
    }
    out.units.push_back({seq, object, static_cast<Id>(time_bin(mean, scheme, tz_offset_hours))});
  }
  return out;
}

struct IngestOptions {
  Timestamp gap_seconds = 3600;
  std::size_t min_len = 3;
  int order = 2;
  TimeBinScheme scheme;
  double tz_offset_hours = 0.0;
};

/// Full ingestion: segment, drop trajectories too short to yield a unit,
/// and extract units while growing the vocabularies.
inline Corpus build_corpus(std::vector<PassageRecord> records, const IngestOptions& opt) {
  opt.scheme.validate();
  if (opt.order < 1) throw UsageError("order must be >= 1");
  Corpus corpus;
  corpus.scheme = opt.scheme;
  corpus.tz_offset_hours = opt.tz_offset_hours;
  corpus.vocab.order = opt.order;
  const auto min_len = std::max(opt.min_len, static_cast<std::size_t>(opt.order) + 1);
  for (const auto& traj : segment(std::move(records), opt.gap_seconds, min_len))
    corpus.trajectories.push_back(extract_units(traj, opt.scheme, opt.tz_offset_hours, corpus.vocab, false));
  return corpus;
}

}  // namespace tralfm
