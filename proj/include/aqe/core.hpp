#pragma once

#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aqe {

// Errors ---------------------------------------------------------------------

/// Base of every error thrown by the engine. `kind()` is a short stable tag
/// used by the CLI for its machine-parseable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct InvalidParameter : Error {
  explicit InvalidParameter(const std::string& w) : Error("invalid_parameter", w) {}
};

struct IngestionError : Error {
  IngestionError(const std::string& file, std::size_t line, const std::string& w)
      : Error("ingestion", file + ":" + std::to_string(line) + ": " + w), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct UndefinedInput : Error {
  explicit UndefinedInput(const std::string& w) : Error("undefined_input", w) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& w) : Error("dimension_mismatch", w) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};

struct NotFound : Error {
  explicit NotFound(const std::string& w) : Error("not_found", w) {}
};

// Logging --------------------------------------------------------------------

enum class LogLevel : int { Quiet = 0, Warn = 1, Info = 2 };

inline std::atomic<int>& log_level() {
  static std::atomic<int> level{static_cast<int>(LogLevel::Warn)};
  return level;
}

inline void log_at(LogLevel lvl, std::string_view msg) {
  if (static_cast<int>(lvl) > log_level().load(std::memory_order_relaxed)) return;
  std::clog << (lvl == LogLevel::Warn ? "[warn] " : "[info] ") << msg << '\n';
}
inline void log_info(std::string_view msg) { log_at(LogLevel::Info, msg); }
inline void log_warn(std::string_view msg) { log_at(LogLevel::Warn, msg); }

// Pollutants -----------------------------------------------------------------

enum class Pollutant : int { NO2 = 0, O3 = 1, PM25 = 2, PM10 = 3 };

inline constexpr std::size_t kNumPollutants = 4;
inline constexpr std::array<Pollutant, kNumPollutants> kPollutants = {
    Pollutant::NO2, Pollutant::O3, Pollutant::PM25, Pollutant::PM10};

constexpr std::size_t index_of(Pollutant p) noexcept { return static_cast<std::size_t>(p); }

/// Feature-name spelling (NO2, O3, PM25, PM10).
constexpr std::string_view name_of(Pollutant p) noexcept {
  constexpr std::array<std::string_view, kNumPollutants> names = {"NO2", "O3", "PM25", "PM10"};
  return names[index_of(p)];
}

/// File/column spelling (no2, o3, pm25, pm10).
constexpr std::string_view column_of(Pollutant p) noexcept {
  constexpr std::array<std::string_view, kNumPollutants> names = {"no2", "o3", "pm25", "pm10"};
  return names[index_of(p)];
}

inline Pollutant parse_pollutant(std::string_view s) {
  for (auto p : kPollutants) {
    if (s == name_of(p) || s == column_of(p)) return p;
  }
  if (s == "PM2.5" || s == "pm2.5") return Pollutant::PM25;
  throw InvalidParameter("unknown pollutant '" + std::string(s) + "'");
}

/// Four concentrations in µg/m³, each possibly NA.
using MaybeConcentrations = std::array<std::optional<double>, kNumPollutants>;

/// Four concentrations in µg/m³, all present.
using Concentrations = std::array<double, kNumPollutants>;

inline bool any_present(const MaybeConcentrations& c) noexcept {
  for (const auto& v : c)
    if (v) return true;
  return false;
}

// Feature presets (Europe/US-style full set, reduced set elsewhere).
enum class FeaturePreset { Full, Reduced };

inline std::string to_string(FeaturePreset p) { return p == FeaturePreset::Full ? "full" : "reduced"; }

inline FeaturePreset parse_preset(std::string_view s) {
  if (s == "full" || s == "Full") return FeaturePreset::Full;
  if (s == "reduced" || s == "Reduced") return FeaturePreset::Reduced;
  throw InvalidParameter("unknown feature preset '" + std::string(s) + "'");
}

// Time -----------------------------------------------------------------------

/// Whole hours since 1970-01-01T00:00Z.
struct Hour {
  std::int64_t value = 0;
  friend constexpr auto operator<=>(Hour, Hour) = default;
};

inline constexpr int hour_of_day(Hour h) noexcept {
  auto r = h.value % 24;
  return static_cast<int>(r < 0 ? r + 24 : r);
}

/// Seconds since the epoch of "YYYY-MM-DDTHH:MM[:SS]" followed by "Z" or "+00:00".
inline std::optional<std::int64_t> parse_instant(std::string_view s) {
  auto num = [&](std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return ec == std::errc{} && p == s.data() + pos + len;
  };
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (s.size() < 17 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':') return std::nullopt;
  if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, hh) || !num(14, 2, mm))
    return std::nullopt;
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!num(pos + 1, 2, ss)) return std::nullopt;
    pos += 3;
  }
  auto rest = s.substr(pos);
  if (rest != "Z" && rest != "+00:00") return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 59 || hh < 0 || mm < 0 || ss < 0) return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd}.time_since_epoch().count() * 86400 + hh * 3600 + mm * 60 + ss;
}

/// Whole hours only.
inline std::optional<Hour> parse_hour(std::string_view s) {
  auto t = parse_instant(s);
  if (!t || *t % 3600 != 0) return std::nullopt;
  return Hour{*t / 3600};
}

/// Nearest whole hour; half past rounds up.
inline std::optional<Hour> parse_hour_rounded(std::string_view s) {
  auto t = parse_instant(s);
  if (!t) return std::nullopt;
  const auto q = *t >= 0 ? *t / 3600 : (*t - 3599) / 3600;
  return Hour{*t - q * 3600 >= 1800 ? q + 1 : q};
}

inline std::string format_hour(Hour h) {
  using namespace std::chrono;
  auto days = h.value >= 0 ? h.value / 24 : (h.value - 23) / 24;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                hour_of_day(h));
  return buf;
}

// Text helpers ---------------------------------------------------------------

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace aqe
