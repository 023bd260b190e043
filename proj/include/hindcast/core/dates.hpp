#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hindcast {

// Calendar date at day granularity, UTC. Sub-day timestamps truncate to the
// date on parse.
class Date {
public:
    Date() = default;
    Date(int year, int month, int day) : y_(year), m_(month), d_(day) {
        if (!valid()) throw std::invalid_argument("invalid calendar date");
    }

    int year() const { return y_; }
    int month() const { return m_; }
    int day() const { return d_; }

    auto operator<=>(const Date&) const = default;

    // Days since 1970-01-01 (proleptic Gregorian).
    std::int64_t to_days() const {
        std::int64_t y = y_;
        const std::int64_t m = m_, d = d_;
        y -= m <= 2;
        const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
        const std::int64_t yoe = y - era * 400;
        const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + doe - 719468;
    }

    static Date from_days(std::int64_t z) {
        z += 719468;
        const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
        const std::int64_t doe = z - era * 146097;
        const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const std::int64_t y = yoe + era * 400;
        const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const std::int64_t mp = (5 * doy + 2) / 153;
        const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
        const std::int64_t m = mp + (mp < 10 ? 3 : -9);
        return Date(static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d));
    }

    Date minus_days(std::int64_t n) const { return from_days(to_days() - n); }
    Date plus_days(std::int64_t n) const { return from_days(to_days() + n); }

    std::string to_iso() const {
        char buf[11];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y_, m_, d_);
        return buf;
    }

    static int days_in_month(int year, int month) {
        static constexpr int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        if (month == 2 && leap(year)) return 29;
        return lengths[month - 1];
    }

    static bool leap(int year) {
        return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    }

    // Accepts "YYYY-MM-DD" optionally followed by a time suffix ("T..." or
    // " ..."), which is truncated. Returns nullopt on anything else.
    static std::optional<Date> parse_iso(std::string_view s) {
        if (s.size() < 10) return std::nullopt;
        if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') return std::nullopt;
        int y = 0, m = 0, d = 0;
        if (!parse_int(s.substr(0, 4), y) || s[4] != '-' ||
            !parse_int(s.substr(5, 2), m) || s[7] != '-' ||
            !parse_int(s.substr(8, 2), d))
            return std::nullopt;
        if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) return std::nullopt;
        Date out;
        out.y_ = y;
        out.m_ = m;
        out.d_ = d;
        return out;
    }

    // Month-granularity disclosures ("YYYY-MM") round to the last day of the
    // disclosed month; full dates pass through.
    static std::optional<Date> parse_cutoff(std::string_view s) {
        if (s.size() == 7 && s[4] == '-') {
            int y = 0, m = 0;
            if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m)) return std::nullopt;
            if (m < 1 || m > 12) return std::nullopt;
            return Date(y, m, days_in_month(y, m));
        }
        return parse_iso(s);
    }

private:
    bool valid() const {
        return m_ >= 1 && m_ <= 12 && d_ >= 1 && d_ <= days_in_month(y_, m_);
    }

    static bool parse_int(std::string_view s, int& out) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc() && p == s.data() + s.size();
    }

    int y_ = 1970;
    int m_ = 1;
    int d_ = 1;
};

// chi = tau - delta. Rejects delta < 1: a zero offset would allow
// resolution-day retrieval.
inline Date prediction_cutoff(const Date& end_time, std::int64_t delta_days) {
    if (delta_days < 1) throw std::invalid_argument("temporal offset must be at least one day");
    return end_time.minus_days(delta_days);
}

}  // namespace hindcast
