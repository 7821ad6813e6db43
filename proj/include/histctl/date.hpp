#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace histctl {

// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
struct Date {
  std::int32_t days = 0;

  static Date from_ymd(int year, unsigned month, unsigned day);
  // Accepts YYYY-MM-DD; throws ParseError otherwise.
  static Date parse(std::string_view iso);

  int year() const;
  unsigned month() const;
  unsigned day() const;
  std::string iso() const;

  Date operator+(int d) const { return Date{days + d}; }
  Date operator-(int d) const { return Date{days - d}; }
  int operator-(Date other) const { return days - other.days; }
  auto operator<=>(const Date&) const = default;
};

// Protocol months are fixed 30-day periods counted from a reference date.
inline constexpr int kDaysPerMonth = 30;

inline Date add_months(Date d, int months) { return d + months * kDaysPerMonth; }

// Zero-based month index of `when` relative to `origin`; negative before it.
inline int month_index(Date origin, Date when) {
  const int diff = when - origin;
  return diff >= 0 ? diff / kDaysPerMonth : -((-diff + kDaysPerMonth - 1) / kDaysPerMonth);
}

}  // namespace histctl
