#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "panelcrypt/core/error.hpp"

namespace panelcrypt {

// Calendar date stored as a day count since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(int days_since_epoch) : days_(days_since_epoch) {}
  constexpr Date(int y, unsigned m, unsigned d)
      : days_(std::chrono::sys_days{std::chrono::year_month_day{
                  std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}}
                  .time_since_epoch()
                  .count()) {}

  constexpr int days() const noexcept { return days_; }

  std::chrono::year_month_day ymd() const {
    return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}};
  }

  std::string iso() const {
    const auto d = ymd();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
  }

  constexpr Date operator+(int n) const noexcept { return Date{days_ + n}; }
  constexpr Date operator-(int n) const noexcept { return Date{days_ - n}; }
  constexpr int operator-(Date other) const noexcept { return days_ - other.days_; }

  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  int days_ = 0;
};

namespace detail {

inline std::optional<int> parse_digits(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

inline std::optional<Date> make_date(std::optional<int> y, std::optional<int> m,
                                     std::optional<int> d) {
  if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1 || *d > 31) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{*y},
                                        std::chrono::month{static_cast<unsigned>(*m)},
                                        std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d)};
}

}  // namespace detail

// Strict ISO-8601 calendar date, YYYY-MM-DD.
inline std::optional<Date> try_parse_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  return detail::make_date(detail::parse_digits(s.substr(0, 4)),
                           detail::parse_digits(s.substr(5, 2)),
                           detail::parse_digits(s.substr(8, 2)));
}

// Accepts YYYY-MM-DD or the DD.MM.YYYY form some exports use.
inline std::optional<Date> try_parse_date(std::string_view s) {
  if (auto iso = try_parse_iso_date(s)) return iso;
  if (s.size() != 10 || s[2] != '.' || s[5] != '.') return std::nullopt;
  return detail::make_date(detail::parse_digits(s.substr(6, 4)),
                           detail::parse_digits(s.substr(3, 2)),
                           detail::parse_digits(s.substr(0, 2)));
}

inline Date parse_date(std::string_view s) {
  if (auto d = try_parse_date(s)) return *d;
  throw DomainError("unparseable date '" + std::string(s) + "'");
}

}  // namespace panelcrypt
