#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace intentscope {

/// Calendar day, counted from 1970-01-01. All analyses run at day resolution.
struct Day {
    int32_t value = 0;

    friend constexpr auto operator<=>(Day, Day) = default;
    constexpr Day operator+(int32_t n) const { return Day{value + n}; }
    constexpr Day operator-(int32_t n) const { return Day{value - n}; }
    constexpr int32_t operator-(Day other) const { return value - other.value; }
};

struct Ymd {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;
};

Day day_from_ymd(int year, unsigned month, unsigned day);
Ymd to_ymd(Day d);
/// "YYYY-MM-DD"
std::string format_date(Day d);
std::optional<Day> parse_date(std::string_view text);
/// Number of days in the calendar month containing `d`.
int days_in_month(int year, unsigned month);
/// Months are indexed as year * 12 + (month - 1).
int month_index(Day d);
Day first_day_of_month_index(int index);

/// Date plus seconds-of-day. Seconds only order events within a day.
struct Timestamp {
    Day day;
    int32_t seconds = 0;

    friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// ISO-8601 "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z'; a bare date is midnight.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(const Timestamp& ts);

/// Contiguous range of calendar months, [first, first + count).
struct MonthWindow {
    int first = 0;
    int count = 1;

    bool contains(int month) const { return month >= first && month < first + count; }
    Day start_day() const { return first_day_of_month_index(first); }
    /// Last day inside the window (inclusive).
    Day end_day() const { return first_day_of_month_index(first + count) - 1; }
};

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a master seed and a label.
/// Used so stages and resamples can run in any order yet stay reproducible.
uint64_t derive_seed(uint64_t master, std::string_view label);
uint64_t derive_seed(uint64_t master, uint64_t index);

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::vector<std::string> split(std::string_view s, char sep);

/// Shortest round-trip representation, stable across runs.
std::string format_double(double v);

/// Count of UTF-8 code points.
std::size_t utf8_length(std::string_view s);

/// Host part of an http(s) URL, lower-cased, with any leading "www." removed.
std::string url_host(std::string_view url);

// Warnings go through a replaceable sink so tests can capture them.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace intentscope
