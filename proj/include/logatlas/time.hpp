#pragma once

// UTC timestamps with microsecond precision and their RFC 3339 text form.
// Everything here is timezone-free by construction: parsing normalizes to
// UTC once, and all calendar arithmetic (hour-of-day, weekday) is done in UTC.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace logatlas {

// Microseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

constexpr std::int64_t kMicrosPerSecond = 1'000'000;

namespace detail {

using SysDays = std::chrono::sys_days;
using Micros = std::chrono::microseconds;

inline SysDays day_of(Timestamp ts) {
    return std::chrono::floor<std::chrono::days>(
        std::chrono::sys_time<Micros>{Micros{ts}});
}

}  // namespace detail

inline Timestamp make_timestamp(int year, unsigned month, unsigned day,
                                unsigned hour, unsigned minute, unsigned second,
                                std::int64_t micros = 0) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                             std::chrono::day{day}};
    if (!ymd.ok())
        throw std::invalid_argument("make_timestamp: invalid calendar date");
    if (hour > 23 || minute > 59 || second > 60 || micros < 0 ||
        micros >= kMicrosPerSecond)
        throw std::invalid_argument("make_timestamp: invalid time of day");
    const sys_days d{ymd};
    return duration_cast<microseconds>(d.time_since_epoch()).count() +
           (hour * 3600LL + minute * 60LL + second) * kMicrosPerSecond + micros;
}

// Hour of day 0-23, UTC.
inline int utc_hour(Timestamp ts) {
    using namespace std::chrono;
    const auto tod = sys_time<microseconds>{microseconds{ts}} - detail::day_of(ts);
    return static_cast<int>(duration_cast<hours>(tod).count());
}

// Saturday or Sunday, UTC.
inline bool utc_is_weekend(Timestamp ts) {
    const std::chrono::weekday wd{detail::day_of(ts)};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

// "2024-01-12T08:30:01.123456Z" — always 6 fractional digits, always 'Z'.
inline std::string format_rfc3339(Timestamp ts) {
    using namespace std::chrono;
    const auto d = detail::day_of(ts);
    const year_month_day ymd{d};
    std::int64_t in_day =
        ts - duration_cast<microseconds>(d.time_since_epoch()).count();
    const std::int64_t us = in_day % kMicrosPerSecond;
    std::int64_t secs = in_day / kMicrosPerSecond;
    const int hh = static_cast<int>(secs / 3600);
    const int mm = static_cast<int>((secs / 60) % 60);
    const int ss = static_cast<int>(secs % 60);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%06lldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), hh, mm, ss,
                  static_cast<long long>(us));
    return std::string{buf};
}

// Strict parser for the serialization above. Accepts 1-6 fractional digits
// (missing fraction means .000000); requires the trailing 'Z'.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
    auto digits = [&](size_t pos, size_t n, int& out) -> bool {
        if (pos + n > s.size()) return false;
        int v = 0;
        for (size_t i = 0; i < n; ++i) {
            const char c = s[pos + i];
            if (c < '0' || c > '9') return false;
            v = v * 10 + (c - '0');
        }
        out = v;
        return true;
    };
    int Y, M, D, h, m, sec;
    if (!digits(0, 4, Y) || s.size() < 20 || s[4] != '-' || !digits(5, 2, M) ||
        s[7] != '-' || !digits(8, 2, D) || (s[10] != 'T' && s[10] != 't') ||
        !digits(11, 2, h) || s[13] != ':' || !digits(14, 2, m) || s[16] != ':' ||
        !digits(17, 2, sec))
        return std::nullopt;
    size_t pos = 19;
    std::int64_t us = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int ndig = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9' && ndig < 6) {
            us = us * 10 + (s[pos] - '0');
            ++pos;
            ++ndig;
        }
        if (ndig == 0) return std::nullopt;
        for (int i = ndig; i < 6; ++i) us *= 10;
    }
    if (pos + 1 != s.size() || (s[pos] != 'Z' && s[pos] != 'z'))
        return std::nullopt;
    try {
        return make_timestamp(Y, static_cast<unsigned>(M), static_cast<unsigned>(D),
                              static_cast<unsigned>(h), static_cast<unsigned>(m),
                              static_cast<unsigned>(sec), us);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

}  // namespace logatlas
