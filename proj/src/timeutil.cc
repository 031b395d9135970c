/*
 * Copyright 2026 The icubench Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "icubench/timeutil.h"

#include <chrono>
#include <cstdio>

#include "block_config.h"

namespace icubench {
namespace {

namespace chr = std::chrono;

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t FloorDiv(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

chr::year_month_day DateOf(Timestamp ts) {
  return chr::year_month_day(
      chr::sys_days(chr::days(FloorDiv(ts, kSecondsPerDay))));
}

// Same month/day in `year`; Feb 29 maps to Mar 1 in non-leap years.
Timestamp AnniversaryIn(const chr::year_month_day& birth,
                        std::int64_t seconds_into_day, int year) {
  const chr::year_month_day date{chr::year{year}, birth.month(), birth.day()};
  chr::sys_days days = date.ok() ? chr::sys_days(date)
                                 : chr::sys_days(chr::year_month_day{
                                       chr::year{year}, chr::March, chr::day{1}});
  return days.time_since_epoch().count() * kSecondsPerDay + seconds_into_day;
}

}  // namespace

Timestamp MakeTimestamp(int year, int month, int day, int hour, int minute,
                        int second) {
  const chr::sys_days days = chr::year_month_day{
      chr::year{year}, chr::month{static_cast<unsigned>(month)},
      chr::day{static_cast<unsigned>(day)}};
  return static_cast<Timestamp>(days.time_since_epoch().count()) *
             kSecondsPerDay +
         hour * 3600 + minute * 60 + second;
}

std::optional<Timestamp> ParseTimestamp(std::string_view text) {
  text = internal::Trim(text);
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  const auto digits = [&](size_t pos, size_t count) -> std::optional<int> {
    if (pos + count > text.size()) return std::nullopt;
    int value = 0;
    for (size_t i = pos; i < pos + count; ++i) {
      if (text[i] < '0' || text[i] > '9') return std::nullopt;
      value = value * 10 + (text[i] - '0');
    }
    return value;
  };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  const auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  if (!y || !mo || !d) return std::nullopt;
  year = *y;
  month = *mo;
  day = *d;
  if (text.size() > 10) {
    if ((text[10] != ' ' && text[10] != 'T') || text.size() < 16 ||
        text[13] != ':') {
      return std::nullopt;
    }
    const auto h = digits(11, 2), mi = digits(14, 2);
    if (!h || !mi) return std::nullopt;
    hour = *h;
    minute = *mi;
    if (text.size() > 16) {
      if (text.size() != 19 || text[16] != ':') return std::nullopt;
      const auto s = digits(17, 2);
      if (!s) return std::nullopt;
      second = *s;
    }
  }
  const chr::year_month_day date{chr::year{year},
                                 chr::month{static_cast<unsigned>(month)},
                                 chr::day{static_cast<unsigned>(day)}};
  if (!date.ok() || hour > 23 || minute > 59 || second > 59) {
    return std::nullopt;
  }
  return MakeTimestamp(year, month, day, hour, minute, second);
}

std::string FormatTimestamp(Timestamp ts) {
  const auto date = DateOf(ts);
  const std::int64_t in_day = ts - FloorDiv(ts, kSecondsPerDay) * kSecondsPerDay;
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02uT%02d:%02d:%02d",
                static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()),
                static_cast<unsigned>(date.day()),
                static_cast<int>(in_day / 3600),
                static_cast<int>((in_day % 3600) / 60),
                static_cast<int>(in_day % 60));
  return buffer;
}

Timestamp StartOfDay(Timestamp ts) {
  return FloorDiv(ts, kSecondsPerDay) * kSecondsPerDay;
}

double AgeInYears(Timestamp dob, Timestamp at) {
  const auto birth = DateOf(dob);
  const std::int64_t birth_seconds = dob - StartOfDay(dob);
  const int birth_year = static_cast<int>(birth.year());
  int years = static_cast<int>(DateOf(at).year()) - birth_year;
  Timestamp last = AnniversaryIn(birth, birth_seconds, birth_year + years);
  while (last > at) {
    --years;
    last = AnniversaryIn(birth, birth_seconds, birth_year + years);
  }
  const Timestamp next =
      AnniversaryIn(birth, birth_seconds, birth_year + years + 1);
  return years + static_cast<double>(at - last) /
                     static_cast<double>(next - last);
}

}  // namespace icubench
