#include "v2n/time.hpp"

#include <chrono>
#include <cstdio>

#include "v2n/error.hpp"

namespace v2n {

namespace {

using namespace std::chrono;

bool parse_uint(std::string_view s, std::size_t pos, std::size_t len, unsigned& out) {
    if (pos + len > s.size()) {
        return false;
    }
    unsigned v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        const char c = s[i];
        if (c < '0' || c > '9') {
            return false;
        }
        v = v * 10 + static_cast<unsigned>(c - '0');
    }
    out = v;
    return true;
}

}  // namespace

Timestamp from_civil(int year, unsigned month, unsigned day, unsigned hour, unsigned minute,
                     unsigned second) {
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                             std::chrono::day{day}};
    if (!ymd.ok()) {
        throw FormatError("invalid calendar date");
    }
    const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
    return static_cast<Timestamp>(days_since_epoch) * kDaySeconds + hour * 3600 + minute * 60 +
           second;
}

Timestamp parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) {
        text.remove_suffix(1);
    }
    unsigned y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    const bool date_ok = text.size() >= 10 && parse_uint(text, 0, 4, y) && text[4] == '-' &&
                         parse_uint(text, 5, 2, mo) && text[7] == '-' && parse_uint(text, 8, 2, d);
    if (!date_ok) {
        throw FormatError("unparseable timestamp '" + std::string(text) + "'");
    }
    Timestamp offset = 0;
    if (text.size() > 10) {
        bool time_ok = text.size() >= 19 && (text[10] == 'T' || text[10] == ' ') &&
                       parse_uint(text, 11, 2, h) && text[13] == ':' &&
                       parse_uint(text, 14, 2, mi) && text[16] == ':' &&
                       parse_uint(text, 17, 2, se);
        if (time_ok && text.size() == 20) {
            time_ok = text[19] == 'Z';
        } else if (time_ok && text.size() == 25) {
            // +HH:MM / -HH:MM offset from UTC
            unsigned oh = 0, om = 0;
            time_ok = (text[19] == '+' || text[19] == '-') && parse_uint(text, 20, 2, oh) &&
                      text[22] == ':' && parse_uint(text, 23, 2, om);
            offset = (text[19] == '+' ? 1 : -1) * static_cast<Timestamp>(oh * 3600 + om * 60);
        } else if (text.size() != 19) {
            time_ok = false;
        }
        if (!time_ok || h > 23 || mi > 59 || se > 59) {
            throw FormatError("unparseable timestamp '" + std::string(text) + "'");
        }
    }
    try {
        return from_civil(static_cast<int>(y), mo, d, h, mi, se) - offset;
    } catch (const FormatError&) {
        throw FormatError("unparseable timestamp '" + std::string(text) + "'");
    }
}

CivilTime to_civil(Timestamp ts) {
    Timestamp days = ts / kDaySeconds;
    Timestamp rem = ts % kDaySeconds;
    if (rem < 0) {
        rem += kDaySeconds;
        --days;
    }
    const sys_days sd{std::chrono::days{days}};
    const year_month_day ymd{sd};
    const weekday wd{sd};
    CivilTime out{};
    out.year = static_cast<int>(ymd.year());
    out.month = static_cast<unsigned>(ymd.month());
    out.day = static_cast<unsigned>(ymd.day());
    out.hour = static_cast<unsigned>(rem / 3600);
    out.minute = static_cast<unsigned>((rem % 3600) / 60);
    out.second = static_cast<unsigned>(rem % 60);
    out.weekday = wd.iso_encoding();
    return out;
}

std::string format_timestamp(Timestamp ts) {
    const CivilTime c = to_civil(ts);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:%02u:%02uZ", c.year, c.month, c.day, c.hour,
                  c.minute, c.second);
    return buf;
}

std::string format_date(Timestamp ts) {
    const CivilTime c = to_civil(ts);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.year, c.month, c.day);
    return buf;
}

}  // namespace v2n
