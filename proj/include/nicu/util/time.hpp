#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace nicu::util {

// UTC milliseconds since the Unix epoch <-> "YYYY-MM-DDTHH:MM:SS[.mmm]Z".
// Whole seconds are written without a fraction.
inline std::string format_iso8601(std::int64_t unix_ms) {
  using namespace std::chrono;
  const sys_time<milliseconds> t{milliseconds{unix_ms}};
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[40];
  const long ms = static_cast<long>(hms.subseconds().count());
  if (ms == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<long>(hms.hours().count()),
                  static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()),
                  ms);
  }
  return buf;
}

// Throws std::invalid_argument on anything but the form written above.
inline std::int64_t parse_iso8601(const std::string& s) {
  using namespace std::chrono;
  int y = 0, n = 0;
  unsigned mo = 0, d = 0, hh = 0, mm = 0, ss = 0, ms = 0;
  char tail = 0;
  bool ok = std::sscanf(s.c_str(), "%4d-%2u-%2uT%2u:%2u:%2u%n", &y, &mo, &d, &hh, &mm, &ss, &n) == 6;
  std::size_t pos = static_cast<std::size_t>(n);
  if (ok && pos < s.size() && s[pos] == '.') {
    if (pos + 5 > s.size()) ok = false;
    for (std::size_t i = pos + 1; ok && i < pos + 4; ++i) {
      if (s[i] < '0' || s[i] > '9') ok = false;
      else ms = ms * 10 + static_cast<unsigned>(s[i] - '0');
    }
    pos += 4;
  }
  if (ok) tail = pos < s.size() ? s[pos] : 0;
  ok = ok && tail == 'Z' && pos + 1 == s.size() && hh < 24 && mm < 60 && ss < 60;
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ok || !ymd.ok()) throw std::invalid_argument("bad ISO 8601 UTC time '" + s + "'");
  const auto t = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} + milliseconds{ms};
  return duration_cast<milliseconds>(t.time_since_epoch()).count();
}

}  // namespace nicu::util
