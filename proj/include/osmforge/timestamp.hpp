#pragma once

#include <array>
#include <string>
#include <string_view>

namespace osmforge {

/// Calendar timestamp in the (hh:mm:ss, yyyy-mm-dd) layout used by the time
/// encoder. Construct through `make` or `parse` to get validation.
struct TimeStamp6D {
    int year = 2000;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;

    /// Throws DateError for anything that is not a real Gregorian datetime.
    static TimeStamp6D make(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);

    /// Accepts `YYYY-MM-DD`, `YYYY-MM-DDThh:mm:ss` and a trailing `Z`.
    static TimeStamp6D parse(std::string_view text);

    /// `YYYY-MM-DDThh:mm:ssZ`
    std::string iso() const;

    /// Channels normalized to roughly [0, 1), ordered hour, minute, second,
    /// year, month, day.
    std::array<double, 6> normalized() const noexcept;

    friend bool operator==(const TimeStamp6D&, const TimeStamp6D&) = default;
};

bool is_leap_year(int year) noexcept;
int days_in_month(int year, int month) noexcept;

} // namespace osmforge
