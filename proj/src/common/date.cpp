#include "dstage/common/date.hpp"

#include <charconv>
#include <cstdio>

#include "dstage/common/errors.hpp"

namespace dstage {

namespace chr = std::chrono;

CalendarDate::CalendarDate(int y, unsigned m, unsigned d)
    : ymd_{chr::year{y}, chr::month{m}, chr::day{d}} {
  if (!ymd_.ok()) throw Error("invalid calendar date");
}

CalendarDate CalendarDate::parse(std::string_view text) {
  auto bad = [&] {
    return ParseError("date", "expected YYYY-MM-DD, got '" + std::string(text) + "'");
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto field = [&](std::size_t pos, std::size_t len, auto& out) {
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (ec != std::errc{} || ptr != text.data() + pos + len) throw bad();
  };
  field(0, 4, y);
  field(5, 2, m);
  field(8, 2, d);
  chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw bad();
  return CalendarDate(y, m, d);
}

CalendarDate CalendarDate::plus_days(int n) const {
  chr::year_month_day shifted{chr::sys_days{ymd_} + chr::days{n}};
  return CalendarDate(static_cast<int>(shifted.year()), static_cast<unsigned>(shifted.month()),
                      static_cast<unsigned>(shifted.day()));
}

int CalendarDate::days_since(const CalendarDate& other) const {
  return static_cast<int>((chr::sys_days{ymd_} - chr::sys_days{other.ymd_}).count());
}

std::string CalendarDate::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

}  // namespace dstage
