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

#ifndef ICUBENCH_TIMEUTIL_H_
#define ICUBENCH_TIMEUTIL_H_

#include <optional>
#include <string>
#include <string_view>

#include "icubench/core.h"

namespace icubench {

// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" and the 'T'-separated form.
std::optional<Timestamp> ParseTimestamp(std::string_view text);
// "YYYY-MM-DDTHH:MM:SS".
std::string FormatTimestamp(Timestamp ts);

Timestamp MakeTimestamp(int year, int month, int day, int hour = 0,
                        int minute = 0, int second = 0);
// Midnight of the day containing `ts`.
Timestamp StartOfDay(Timestamp ts);

inline double HoursBetween(Timestamp from, Timestamp to) {
  return static_cast<double>(to - from) / 3600.0;
}

// Calendar age: whole birthdays passed plus the elapsed fraction of the
// current year of life. A stay exactly on the 18th birthday yields 18.0.
double AgeInYears(Timestamp dob, Timestamp at);

}  // namespace icubench

#endif  // ICUBENCH_TIMEUTIL_H_
