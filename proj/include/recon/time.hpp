#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace recon {

/// Broken-down civil time at hourly resolution.
struct CivilHour {
    int year = 1970;
    unsigned month = 1;  // 1..12
    unsigned day = 1;    // 1..31
    unsigned hour = 0;   // 0..23

    friend bool operator==(const CivilHour&, const CivilHour&) = default;
};

/// An hour on the dataset's civil clock, stored as whole hours since
/// 1970-01-01T00:00 in the dataset's declared fixed UTC offset. There is no
/// DST arithmetic: every day has exactly 24 hours.
class HourStamp {
public:
    constexpr HourStamp() = default;
    constexpr explicit HourStamp(std::int64_t hours_since_epoch) : hours_(hours_since_epoch) {}

    static HourStamp from_civil(const CivilHour& civil);
    static HourStamp from_civil(int year, unsigned month, unsigned day, unsigned hour = 0) {
        return from_civil(CivilHour{year, month, day, hour});
    }

    CivilHour to_civil() const;

    /// ISO weekday with Monday = 0 ... Sunday = 6.
    unsigned weekday() const;

    constexpr std::int64_t hours_since_epoch() const { return hours_; }

    constexpr HourStamp operator+(std::int64_t hours) const { return HourStamp(hours_ + hours); }
    constexpr HourStamp operator-(std::int64_t hours) const { return HourStamp(hours_ - hours); }
    constexpr std::int64_t operator-(HourStamp other) const { return hours_ - other.hours_; }

    friend constexpr auto operator<=>(HourStamp, HourStamp) = default;

private:
    std::int64_t hours_ = 0;
};

/// Parse an ISO-8601 timestamp (`YYYY-MM-DD[T| ]HH[:MM[:SS[.fff]]][Z|+HH:MM|-HH:MM]`
/// or a bare date) onto the dataset clock. Strings carrying an explicit offset
/// are shifted to `dataset_offset_minutes`; strings without one are taken to
/// be on the dataset clock already. Minutes and seconds are truncated.
std::optional<HourStamp> parse_timestamp(std::string_view text, int dataset_offset_minutes = 0);

/// `YYYY-MM-DDTHH:00`.
std::string format_timestamp(HourStamp stamp);

}  // namespace recon
