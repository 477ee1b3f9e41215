#include "intentscope/common.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <mutex>

namespace intentscope {

// Civil-date conversions after H. Hinnant's days_from_civil / civil_from_days.
Day day_from_ymd(int year, unsigned month, unsigned day) {
    year -= month <= 2 ? 1 : 0;
    const int era = (year >= 0 ? year : year - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(year - era * 400);
    const unsigned doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Day{era * 146097 + static_cast<int>(doe) - 719468};
}

Ymd to_ymd(Day d) {
    const int z = d.value + 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned dd = doy - (153 * mp + 2) / 5 + 1;
    const unsigned mm = mp < 10 ? mp + 3 : mp - 9;
    return Ymd{y + (mm <= 2 ? 1 : 0), mm, dd};
}

int days_in_month(int year, unsigned month) {
    static constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2) {
        const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        return leap ? 29 : 28;
    }
    return kDays.at(month - 1);
}

std::string format_date(Day d) {
    const Ymd ymd = to_ymd(d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", ymd.year, ymd.month, ymd.day);
    return buf;
}

namespace {

bool parse_fixed_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) return false;
    const char* first = text.data() + pos;
    for (std::size_t i = 0; i < len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(first[i]))) return false;
    }
    auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc{} && ptr == first + len;
}

}  // namespace

std::optional<Day> parse_date(std::string_view text) {
    text = trim(text);
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!parse_fixed_int(text, 0, 4, y) || !parse_fixed_int(text, 5, 2, m) ||
        !parse_fixed_int(text, 8, 2, d)) {
        return std::nullopt;
    }
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, static_cast<unsigned>(m))) {
        return std::nullopt;
    }
    return day_from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

int month_index(Day d) {
    const Ymd ymd = to_ymd(d);
    return ymd.year * 12 + static_cast<int>(ymd.month) - 1;
}

Day first_day_of_month_index(int index) {
    const int year = index >= 0 ? index / 12 : (index - 11) / 12;
    const unsigned month = static_cast<unsigned>(index - year * 12) + 1;
    return day_from_ymd(year, month, 1);
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    text = trim(text);
    if (text.size() < 10) return std::nullopt;
    auto day = parse_date(text.substr(0, 10));
    if (!day) return std::nullopt;
    if (text.size() == 10) return Timestamp{*day, 0};
    if (text[10] != 'T' && text[10] != ' ') return std::nullopt;
    std::string_view rest = text.substr(11);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    int hh = 0, mm = 0, ss = 0;
    if (rest.size() != 8 || rest[2] != ':' || rest[5] != ':' || !parse_fixed_int(rest, 0, 2, hh) ||
        !parse_fixed_int(rest, 3, 2, mm) || !parse_fixed_int(rest, 6, 2, ss)) {
        return std::nullopt;
    }
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    return Timestamp{*day, hh * 3600 + mm * 60 + ss};
}

std::string format_timestamp(const Timestamp& ts) {
    char buf[48];
    const int s = ts.seconds;
    std::snprintf(buf, sizeof buf, "T%02d:%02d:%02d", s / 3600, (s / 60) % 60, s % 60);
    return format_date(ts.day) + buf;
}

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(master) ^ h);
}

uint64_t derive_seed(uint64_t master, uint64_t index) {
    return splitmix64(splitmix64(master) + 0x632be59bd9b4e019ULL * (index + 1));
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            return parts;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::string url_host(std::string_view url) {
    const std::size_t scheme = url.find("://");
    std::string_view rest = scheme == std::string_view::npos ? url : url.substr(scheme + 3);
    const std::size_t end = rest.find_first_of("/?#:");
    std::string host = to_lower_ascii(rest.substr(0, end));
    if (starts_with(host, "www.")) host.erase(0, 4);
    return host;
}

namespace {

std::mutex g_warn_mutex;
WarningSink& warning_sink() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}

}  // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(g_warn_mutex);
    warning_sink() = sink ? std::move(sink)
                          : [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
}

void warn(std::string_view message) {
    std::lock_guard lock(g_warn_mutex);
    warning_sink()(message);
}

}  // namespace intentscope
