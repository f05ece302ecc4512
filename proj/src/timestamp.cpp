#include "osmforge/timestamp.hpp"

#include "osmforge/errors.hpp"

#include <charconv>
#include <cstdio>

namespace osmforge {

bool is_leap_year(int year) noexcept
{
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) noexcept
{
    static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12) {
        return 0;
    }
    return month == 2 && is_leap_year(year) ? 29 : days[month - 1];
}

TimeStamp6D TimeStamp6D::make(int year, int month, int day, int hour, int minute, int second)
{
    if (year < 1 || year > 9999) {
        throw DateError("year " + std::to_string(year) + " out of range");
    }
    if (month < 1 || month > 12) {
        throw DateError("month " + std::to_string(month) + " out of range");
    }
    if (day < 1 || day > days_in_month(year, month)) {
        throw DateError("day " + std::to_string(day) + " invalid for " + std::to_string(year) + "-" +
                        std::to_string(month));
    }
    if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 59) {
        throw DateError("time of day out of range");
    }
    return {year, month, day, hour, minute, second};
}

TimeStamp6D TimeStamp6D::parse(std::string_view text)
{
    auto field = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        if (pos + len > text.size()) {
            throw DateError("truncated timestamp '" + std::string(text) + "'");
        }
        const char* first = text.data() + pos;
        auto [ptr, ec] = std::from_chars(first, first + len, v);
        if (ec != std::errc{} || ptr != first + len) {
            throw DateError("malformed timestamp '" + std::string(text) + "'");
        }
        return v;
    };
    auto expect = [&](std::size_t pos, char c) {
        if (pos >= text.size() || text[pos] != c) {
            throw DateError("malformed timestamp '" + std::string(text) + "'");
        }
    };

    if (!text.empty() && text.back() == 'Z') {
        text.remove_suffix(1);
    }
    expect(4, '-');
    expect(7, '-');
    const int y = field(0, 4), mo = field(5, 2), d = field(8, 2);
    if (text.size() == 10) {
        return make(y, mo, d);
    }
    if (text.size() != 19 || (text[10] != 'T' && text[10] != ' ')) {
        throw DateError("malformed timestamp '" + std::string(text) + "'");
    }
    expect(13, ':');
    expect(16, ':');
    return make(y, mo, d, field(11, 2), field(14, 2), field(17, 2));
}

std::string TimeStamp6D::iso() const
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", year, month, day, hour, minute,
                  second);
    return buf;
}

std::array<double, 6> TimeStamp6D::normalized() const noexcept
{
    return {hour / 24.0,           minute / 60.0,       second / 60.0,
            (year - 2000) / 100.0, (month - 1) / 12.0, (day - 1) / 31.0};
}

} // namespace osmforge
