#include "recon/time.hpp"

#include <charconv>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

namespace recon {

namespace chr = std::chrono;

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Reads exactly `width` digits starting at `pos`.
std::optional<int> read_digits(std::string_view s, std::size_t& pos, std::size_t width) {
    if (pos + width > s.size()) return std::nullopt;
    int value = 0;
    for (std::size_t i = 0; i < width; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + (c - '0');
    }
    pos += width;
    return value;
}

bool consume(std::string_view s, std::size_t& pos, char c) {
    if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
    }
    return false;
}

}  // namespace

HourStamp HourStamp::from_civil(const CivilHour& civil) {
    const chr::year_month_day ymd{chr::year{civil.year}, chr::month{civil.month}, chr::day{civil.day}};
    const chr::sys_days days{ymd};
    return HourStamp(static_cast<std::int64_t>(days.time_since_epoch().count()) * 24 +
                     static_cast<std::int64_t>(civil.hour));
}

CivilHour HourStamp::to_civil() const {
    const std::int64_t day_index = floor_div(hours_, 24);
    const auto hour = static_cast<unsigned>(hours_ - day_index * 24);
    const chr::year_month_day ymd{chr::sys_days{chr::days{day_index}}};
    return CivilHour{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()), hour};
}

unsigned HourStamp::weekday() const {
    const chr::weekday wd{chr::sys_days{chr::days{floor_div(hours_, 24)}}};
    return wd.iso_encoding() - 1;
}

std::optional<HourStamp> parse_timestamp(std::string_view text, int dataset_offset_minutes) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '"' || text.back() == '\r'))
        text.remove_suffix(1);

    std::size_t pos = 0;
    const auto year = read_digits(text, pos, 4);
    if (!year || !consume(text, pos, '-')) return std::nullopt;
    const auto month = read_digits(text, pos, 2);
    if (!month || !consume(text, pos, '-')) return std::nullopt;
    const auto day = read_digits(text, pos, 2);
    if (!day) return std::nullopt;

    int hour = 0;
    int minute = 0;
    if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
        ++pos;
        const auto h = read_digits(text, pos, 2);
        if (!h) return std::nullopt;
        hour = *h;
        if (consume(text, pos, ':')) {
            const auto m = read_digits(text, pos, 2);
            if (!m) return std::nullopt;
            minute = *m;
            if (consume(text, pos, ':')) {
                const auto s = read_digits(text, pos, 2);
                if (!s || *s > 60) return std::nullopt;
                if (consume(text, pos, '.')) {
                    const std::size_t start = pos;
                    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
                    if (pos == start) return std::nullopt;
                }
            }
        }
    }

    std::optional<int> offset_minutes;
    if (pos < text.size()) {
        const char sign = text[pos];
        if (sign == 'Z') {
            offset_minutes = 0;
            ++pos;
        } else if (sign == '+' || sign == '-') {
            ++pos;
            const auto oh = read_digits(text, pos, 2);
            if (!oh) return std::nullopt;
            int om = 0;
            if (consume(text, pos, ':') || (pos < text.size() && text[pos] != ' ')) {
                const auto m = read_digits(text, pos, 2);
                if (!m) return std::nullopt;
                om = *m;
            }
            offset_minutes = (sign == '-' ? -1 : 1) * (*oh * 60 + om);
        }
    }
    if (pos != text.size()) return std::nullopt;

    if (hour > 23 || minute > 59) return std::nullopt;
    const chr::year_month_day ymd{chr::year{*year}, chr::month{static_cast<unsigned>(*month)},
                                  chr::day{static_cast<unsigned>(*day)}};
    if (!ymd.ok()) return std::nullopt;

    // Minutes since epoch on the clock the string was written in.
    std::int64_t minutes = static_cast<std::int64_t>(chr::sys_days{ymd}.time_since_epoch().count()) * 1440 +
                           hour * 60 + minute;
    if (offset_minutes) minutes += dataset_offset_minutes - *offset_minutes;
    return HourStamp(floor_div(minutes, 60));
}

std::string format_timestamp(HourStamp stamp) {
    const CivilHour c = stamp.to_civil();
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:00", c.year, c.month, c.day, c.hour);
}

}  // namespace recon
