#pragma once

// Run configuration: every setting is a string keyed by its flag name.
// Effective values are merged as defaults < config file < command-line
// flags, and the merged set is echoed into a manifest next to each run's
// outputs. A manifest is itself a valid config file, so
// `tralfm <subcommand> --config run.manifest` repeats the run.

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tralfm/common.hpp"
#include "tralfm/corpus_io.hpp"
#include "tralfm/model_io.hpp"
#include "tralfm/rng.hpp"

namespace tralfm {

inline constexpr const char* kVersion = "1.0.0";

struct SettingSpec {
  std::string key;
  std::string default_value;
  std::string help;
};

using SettingMap = std::map<std::string, std::string>;

/// Parse flat "key = value" text. '#' starts a comment line.
inline SettingMap parse_config_text(std::istream& in, const std::string& source = "<config>") {
  SettingMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(line_no) + ": empty key");
    out[std::string(key)] = std::string(detail::trim(t.substr(eq + 1)));
  }
  return out;
}

inline SettingMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  return parse_config_text(in, path);
}

class RunConfig {
 public:
  RunConfig() = default;

  /// Merge defaults < file < flags. Keys not in `specs` are rejected.
  static RunConfig resolve(std::string subcommand, const std::vector<SettingSpec>& specs, const SettingMap& file,
                           const SettingMap& flags) {
    RunConfig rc;
    rc.subcommand_ = std::move(subcommand);
    for (const auto& s : specs) {
      rc.values_[s.key] = s.default_value;
      rc.origin_[s.key] = "default";
    }
    auto apply = [&](const SettingMap& src, const char* origin) {
      for (const auto& [k, v] : src) {
        if (!rc.values_.count(k)) throw UsageError("unknown setting '" + k + "' for " + rc.subcommand_);
        rc.values_[k] = v;
        rc.origin_[k] = origin;
      }
    };
    apply(file, "file");
    apply(flags, "flag");
    return rc;
  }

  const std::string& subcommand() const noexcept { return subcommand_; }
  const SettingMap& values() const noexcept { return values_; }
  const std::string& origin(const std::string& key) const { return origin_.at(key); }

  bool has(const std::string& key) const {
    auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("setting '" + key + "' not declared");
    return it->second;
  }

  const std::string& required(const std::string& key) const {
    if (!has(key)) throw UsageError("--" + key + " is required for " + subcommand_);
    return str(key);
  }

  void set(const std::string& key, std::string value, const char* origin = "derived") {
    values_[key] = std::move(value);
    origin_[key] = origin;
  }

  template <class T>
  T number(const std::string& key) const {
    const auto& s = str(key);
    auto v = detail::parse_number<T>(s);
    if (!v) throw UsageError("--" + key + ": '" + s + "' is not a valid number");
    return *v;
  }

  std::optional<double> optional_double(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number<double>(key);
  }

  template <class T>
  std::vector<T> number_list(const std::string& key) const {
    std::vector<T> out;
    for (auto tok : detail::split(str(key), ',')) {
      auto v = detail::parse_number<T>(tok);
      if (!v) throw UsageError("--" + key + ": '" + std::string(tok) + "' is not a valid number");
      out.push_back(*v);
    }
    return out;
  }

  /// The run seed; generated and recorded when not supplied.
  std::uint64_t seed() {
    if (!has("seed")) {
      std::random_device rd;
      const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
      set("seed", std::to_string(s), "generated");
    }
    return number<std::uint64_t>("seed");
  }

 private:
  std::string subcommand_;
  SettingMap values_;
  std::map<std::string, std::string> origin_;
};

inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "unreadable";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    if (!in) break;
  }
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Manifest text: metadata as comments, then every effective setting.
inline void write_manifest(std::ostream& out, const RunConfig& rc, const std::vector<std::string>& input_keys) {
  out << "# tralfm run manifest\n";
  out << "# subcommand: " << rc.subcommand() << '\n';
  out << "# version: tralfm " << kVersion << ", corpus format " << kCorpusVersion << ", model format "
      << kModelVersion << ", rng " << kRngName << '\n';
  for (const auto& key : input_keys)
    if (rc.has(key)) out << "# checksum " << key << ": " << file_checksum(rc.str(key)) << '\n';
  if (rc.values().count("seed")) out << "# seed origin: " << rc.origin("seed") << '\n';
  for (const auto& [k, v] : rc.values()) {
    if (k == "config") continue;
    out << k << " = " << v << '\n';
  }
}

inline void save_manifest(const std::string& path, const RunConfig& rc, const std::vector<std::string>& input_keys) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  write_manifest(out, rc, input_keys);
}

}  // namespace tralfm
