#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "delphi/errors.hpp"

namespace delphi::util {

// ---- hashing / deterministic randomness ------------------------------------
//
// All seeded behaviour in the library goes through these primitives instead of
// <random> distributions, which are implementation-defined. That keeps panel
// runs, mock noise, and cassette fingerprints stable across toolchains.

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : text) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derives one 64-bit key from a numeric seed plus string parts.
inline std::uint64_t key_hash(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
  std::uint64_t h = splitmix64(seed);
  h = fnv1a64("delphi", h);
  for (std::string_view part : parts) {
    h = fnv1a64(part, h);
    h ^= kFnvPrime;  // separator so {"ab",""} != {"a","b"}
    h *= kFnvPrime;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Box-Muller normal deviate.
  double normal(double mean, double sd) {
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * (mag * std::cos(2.0 * std::numbers::pi * u2));
  }

  std::size_t next_index(std::size_t bound) {
    return static_cast<std::size_t>(next_u64() % bound);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[next_index(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

// ---- numbers ----------------------------------------------------------------

inline double clamp_pct(double value) { return std::clamp(value, 0.0, 100.0); }

/// Fixed-point with `decimals` digits, e.g. fmt_fixed(-1.0, 2) == "-1.00".
inline std::string fmt_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

/// Trimmed fixed-point: up to four decimals, at least one. 40 -> "40.0".
inline std::string fmt_pct(double value) {
  std::string s = fmt_fixed(value, 4);
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.push_back('0');
  return s;
}

// ---- strings ----------------------------------------------------------------

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

// ---- files ------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << content;
  if (!out) throw ConfigError("short write: " + path.string());
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
  if (parsed.is_discarded()) throw ConfigError("invalid JSON in " + path.string());
  return parsed;
}

inline void save_json_file(const std::filesystem::path& path, const nlohmann::json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

// ---- time -------------------------------------------------------------------

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline std::string iso8601_utc(std::int64_t epoch_ms) {
  const std::time_t secs = epoch_ms / 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(epoch_ms % 1000));
  return buf;
}

inline std::string now_iso8601_utc() { return iso8601_utc(now_ms()); }

}  // namespace delphi::util
