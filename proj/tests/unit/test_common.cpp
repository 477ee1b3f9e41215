#include <doctest.h>

#include <sstream>

#include "intentscope/common.hpp"
#include "intentscope/csv.hpp"

using namespace intentscope;

TEST_SUITE("stats") {

TEST_CASE("calendar conversions round-trip") {
    const Day d = day_from_ymd(2021, 2, 28);
    CHECK(format_date(d) == "2021-02-28");
    CHECK(format_date(d + 1) == "2021-03-01");
    CHECK(days_in_month(2020, 2) == 29);
    CHECK(days_in_month(2021, 2) == 28);
    CHECK(parse_date("2021-07-01").value() == day_from_ymd(2021, 7, 1));
    CHECK_FALSE(parse_date("2021-13-01").has_value());
    CHECK(first_day_of_month_index(month_index(d)) == day_from_ymd(2021, 2, 1));
    for (int v = -1000; v < 40000; v += 37) {
        const Day x{v};
        const Ymd y = to_ymd(x);
        CHECK(day_from_ymd(y.year, y.month, y.day) == x);
    }
}

TEST_CASE("timestamps parse with and without a time part") {
    const auto a = parse_timestamp("2021-03-04T05:06:07Z");
    REQUIRE(a.has_value());
    CHECK(a->seconds == 5 * 3600 + 6 * 60 + 7);
    CHECK(format_timestamp(*a) == "2021-03-04T05:06:07");
    const auto b = parse_timestamp("2021-03-04");
    REQUIRE(b.has_value());
    CHECK(b->seconds == 0);
    CHECK_FALSE(parse_timestamp("yesterday").has_value());
}

TEST_CASE("seed derivation separates labels and indices") {
    CHECK(derive_seed(1, "ppr") == derive_seed(1, "ppr"));
    CHECK(derive_seed(1, "ppr") != derive_seed(1, "gnn"));
    CHECK(derive_seed(1, "ppr") != derive_seed(2, "ppr"));
    CHECK(derive_seed(7, uint64_t{0}) != derive_seed(7, uint64_t{1}));
}

TEST_CASE("url host strips www and lower-cases") {
    CHECK(url_host("https://WWW.Example.com/a/b") == "example.com");
    CHECK(url_host("http://news.site.org") == "news.site.org");
}

TEST_CASE("csv quoting round-trips") {
    std::ostringstream out;
    write_csv_row(out, {"a", "b,c", "say \"hi\""});
    write_csv_row(out, {"1", "2", "3"});
    std::istringstream in("x,y,z\n" + out.str());
    const CsvTable t = read_csv(in);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "b,c");
    CHECK(t.rows[0][2] == "say \"hi\"");
    CHECK(t.column("y") == 1);
    CHECK(t.column("nope") == -1);
    CHECK_THROWS_AS(t.require_column("nope"), CsvError);
}

TEST_CASE("format_double is round-trip exact") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

}
