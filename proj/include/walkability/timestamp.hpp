#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "walkability/errors.hpp"

namespace walkability {

/// Naive local calendar hour as carried by the visitor feed ("YYYYMMDD-HH").
/// No zone conversion is ever applied.
struct Timestamp {
  std::chrono::sys_days day{};
  int hour = 0;

  auto operator<=>(const Timestamp&) const = default;

  /// Hours since the epoch, convenient for ordering and hashing.
  long long ordinal() const {
    return static_cast<long long>(day.time_since_epoch().count()) * 24 + hour;
  }
};

namespace detail {

inline std::optional<int> parse_digits(std::string_view s) {
  int v = 0;
  if (s.empty()) return std::nullopt;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses "YYYYMMDD" into a calendar day.
inline std::optional<std::chrono::sys_days> try_parse_date(std::string_view s) {
  if (s.size() != 8) return std::nullopt;
  auto y = detail::parse_digits(s.substr(0, 4));
  auto m = detail::parse_digits(s.substr(4, 2));
  auto d = detail::parse_digits(s.substr(6, 2));
  if (!y || !m || !d) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{*y},
                                  std::chrono::month{static_cast<unsigned>(*m)},
                                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

inline std::optional<Timestamp> try_parse_timestamp(std::string_view s) {
  if (s.size() != 11 || s[8] != '-') return std::nullopt;
  auto day = try_parse_date(s.substr(0, 8));
  auto hour = detail::parse_digits(s.substr(9, 2));
  if (!day || !hour || *hour < 0 || *hour > 23) return std::nullopt;
  return Timestamp{*day, *hour};
}

inline Timestamp parse_timestamp(std::string_view s) {
  auto t = try_parse_timestamp(s);
  if (!t) throw FormatError("invalid timestamp '" + std::string(s) + "', expected YYYYMMDD-HH");
  return *t;
}

inline std::chrono::sys_days parse_date(std::string_view s) {
  auto d = try_parse_date(s);
  if (!d) throw FormatError("invalid date '" + std::string(s) + "', expected YYYYMMDD");
  return *d;
}

inline std::string format_date(std::chrono::sys_days day) {
  std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::string format_timestamp(const Timestamp& t) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "-%02d", t.hour);
  return format_date(t.day) + buf;
}

/// Closed interval [start, end] of feed hours.
struct TimeWindow {
  Timestamp start;
  Timestamp end;

  bool well_formed() const { return start <= end; }
  bool contains(const Timestamp& t) const { return start <= t && t <= end; }

  static TimeWindow everything() {
    using namespace std::chrono;
    return {Timestamp{sys_days{year{1} / 1 / 1}, 0}, Timestamp{sys_days{year{9999} / 12 / 31}, 23}};
  }
};

/// Parses "START..END" where each side is YYYYMMDD-HH or YYYYMMDD (whole day).
inline TimeWindow parse_window(std::string_view s) {
  auto sep = s.find("..");
  if (sep == std::string_view::npos) throw FormatError("invalid window '" + std::string(s) + "'");
  auto side = [](std::string_view part, bool is_end) {
    if (part.size() == 8) return Timestamp{parse_date(part), is_end ? 23 : 0};
    return parse_timestamp(part);
  };
  TimeWindow w{side(s.substr(0, sep), false), side(s.substr(sep + 2), true)};
  if (!w.well_formed()) throw FormatError("window start after end: '" + std::string(s) + "'");
  return w;
}

inline std::string format_window(const TimeWindow& w) {
  return format_timestamp(w.start) + ".." + format_timestamp(w.end);
}

}  // namespace walkability
