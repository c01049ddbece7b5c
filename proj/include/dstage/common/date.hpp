#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace dstage {

/// Proleptic Gregorian calendar date, serialized as YYYY-MM-DD.
class CalendarDate {
 public:
  CalendarDate() = default;
  CalendarDate(int year, unsigned month, unsigned day);

  static CalendarDate parse(std::string_view text);

  CalendarDate plus_days(int days) const;
  int days_since(const CalendarDate& other) const;

  int year() const { return static_cast<int>(ymd_.year()); }
  unsigned month() const { return static_cast<unsigned>(ymd_.month()); }
  unsigned day() const { return static_cast<unsigned>(ymd_.day()); }

  std::string to_string() const;

  friend bool operator==(const CalendarDate&, const CalendarDate&) = default;
  friend auto operator<=>(const CalendarDate& a, const CalendarDate& b) {
    return std::chrono::sys_days{a.ymd_} <=> std::chrono::sys_days{b.ymd_};
  }

 private:
  std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::month{1},
                                   std::chrono::day{1}};
};

}  // namespace dstage
