#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace v2n {

// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

inline constexpr Timestamp kStepSeconds = 300;
inline constexpr Timestamp kDaySeconds = 86400;

struct CivilTime {
    int year;
    unsigned month;   // 1..12
    unsigned day;     // 1..31
    unsigned hour;
    unsigned minute;
    unsigned second;
    unsigned weekday;  // Monday = 1 .. Sunday = 7
};

// Accepts `YYYY-MM-DDTHH:MM:SSZ`, `YYYY-MM-DD HH:MM:SS` and `YYYY-MM-DD`;
// a trailing `+HH:MM` / `-HH:MM` offset is converted to UTC.
// Throws FormatError.
Timestamp parse_timestamp(std::string_view text);

// `YYYY-MM-DDTHH:MM:SSZ`
std::string format_timestamp(Timestamp ts);

// `YYYY-MM-DD`
std::string format_date(Timestamp ts);

CivilTime to_civil(Timestamp ts);

Timestamp from_civil(int year, unsigned month, unsigned day, unsigned hour = 0,
                     unsigned minute = 0, unsigned second = 0);

}  // namespace v2n
