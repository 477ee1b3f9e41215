#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "intentscope/log_model.hpp"
#include "intentscope/synthetic.hpp"

using namespace intentscope;

namespace {

std::string event_line(const std::string& query, const std::string& clicks = "[]") {
    return R"({"user_id":"u1","ts":"2021-03-01T10:00:00","zcta":"Z1","county":"C1","state":"S1","session":"s1","query":")" +
           query + R"(","clicks":)" + clicks + "}";
}


}  // namespace

TEST_SUITE("log_model") {

TEST_CASE("ingest lower-cases and trims queries") {
    std::istringstream in(event_line("  COVID Vaccine ") + "\n");
    IngestStats stats;
    const auto events = ingest_events(in, &stats);
    REQUIRE(events.size() == 1);
    CHECK(events[0].query == "covid vaccine");
    CHECK(stats.accepted == 1);
}

TEST_CASE("implausibly long queries are skipped and counted") {
    std::istringstream in(event_line(std::string(150, 'a')) + "\n" + event_line(std::string(100, 'b')) + "\n");
    IngestStats stats;
    const auto events = ingest_events(in, &stats);
    CHECK(events.size() == 1);
    CHECK(stats.too_long == 1);
}

TEST_CASE("length limit counts code points, not bytes") {
    std::string q;
    for (int i = 0; i < 100; ++i) q += "\xC3\xA9";  // 100 two-byte characters
    std::istringstream in(event_line(q) + "\n");
    IngestStats stats;
    CHECK(ingest_events(in, &stats).size() == 1);
}

TEST_CASE("non-URL clicks are removed") {
    std::istringstream in(event_line("cvs vaccine", R"x(["javascript:void(0)","https://cvs.com/a"])x") + "\n");
    IngestStats stats;
    const auto events = ingest_events(in, &stats);
    REQUIRE(events.size() == 1);
    CHECK(events[0].clicks == std::vector<std::string>{"https://cvs.com/a"});
    CHECK(stats.clicks_dropped == 1);
}

TEST_CASE("malformed lines are skipped, or abort in strict mode") {
    const std::string text = event_line("a") + "\n{not json\n\n" + event_line("b") + "\n";
    std::istringstream lenient(text);
    IngestStats stats;
    CHECK(ingest_events(lenient, &stats).size() == 2);
    CHECK(stats.malformed == 1);
    CHECK(stats.first_malformed_line == 2);

    std::istringstream strict(text);
    IngestOptions opt;
    opt.strict = true;
    CHECK_THROWS_AS(ingest_events(strict, nullptr, opt), IngestError);
}

TEST_CASE("serialized events read back unchanged") {
    LogEvent e;
    e.user_id = "u\"9";
    e.ts = *parse_timestamp("2021-04-05T06:07:08");
    e.zcta = "Z1";
    e.state = "S1";
    e.session_id = "s";
    e.query = "where can i get a covid vaccine";
    e.clicks = {"https://a.com/x", "https://b.com/y"};
    std::ostringstream out;
    write_events(out, std::vector<LogEvent>{e});
    std::istringstream in(out.str());
    const auto back = ingest_events(in);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == e);
}

TEST_CASE("region table round-trips with demographics") {
    std::istringstream in("region_id,population,county,state,income\nZ1,100,C1,S1,5.5\nZ2,200,C1,S1,6\n");
    const RegionTable t = read_region_table(in);
    REQUIRE(t.size() == 2);
    CHECK(t.find("Z2")->population == 200);
    CHECK(t.find("Z1")->demographics.at("income") == doctest::Approx(5.5));
    std::ostringstream out;
    write_region_table(out, t);
    std::istringstream again(out.str());
    const RegionTable t2 = read_region_table(again);
    CHECK(t2.find("Z1")->county.value() == "C1");
    CHECK(t2.schema() == t.schema());
}

TEST_CASE("a world with zero intent has no intent users") {
    auto cfg = fixtures::small_world({{0.0, 1.0}}, 300);
    auto [events, art] = generate_world(cfg);
    CHECK(!events.empty());
    std::size_t intent = 0;
    for (const auto& [id, u] : art.truth.users) intent += u.intent;
    CHECK(intent == 0);
    CHECK(art.active_users == 300);
}

TEST_CASE("same config and seed give identical event streams") {
    auto cfg = fixtures::small_world({{0.5, 0.5}, {0.3, 0.5}}, 200);
    cfg.rng_seed = 42;
    std::ostringstream a, b;
    generate_world(cfg, [&](LogEvent&& e) { a << serialize_event(e) << '\n'; });
    generate_world(cfg, [&](LogEvent&& e) { b << serialize_event(e) << '\n'; });
    CHECK(a.str() == b.str());
    cfg.rng_seed = 43;
    std::ostringstream c;
    generate_world(cfg, [&](LogEvent&& e) { c << serialize_event(e) << '\n'; });
    CHECK(a.str() != c.str());
}

TEST_CASE("per-region intent rates stay inside binomial bands") {
    // 50 regions of 200 users, rate rising linearly with the region index.
    std::vector<std::pair<double, double>> rc;
    for (int i = 0; i < 50; ++i) rc.push_back({0.05 + 0.9 * i / 49.0, 1.0});
    auto cfg = fixtures::small_world(rc, 200);
    cfg.rng_seed = 7;
    const auto art = generate_world(cfg, [](LogEvent&&) {});
    int outside = 0;
    for (const auto& r : cfg.regions) {
        const double p = r.intent_rate;
        const double n = static_cast<double>(art.truth.region_users.at(r.region.id));
        const double realized = art.truth.region_realized_rate.at(r.region.id);
        const double sigma = std::sqrt(p * (1 - p) / n);
        if (std::abs(realized - p) > 3 * sigma) ++outside;
    }
    // 3 sigma leaves about 0.3% per region; allow one excursion.
    CHECK(outside <= 1);
}

TEST_CASE("world validation rejects impossible settings") {
    auto cfg = fixtures::small_world({{0.5, 1.0}}, 10);
    cfg.regions[0].intent_rate = 1.5;
    CHECK_THROWS(validate_world(cfg));
    cfg = fixtures::small_world({{0.5, 1.0}}, 10);
    cfg.reported_jitter_days = -1;
    CHECK_THROWS(validate_world(cfg));
}

}
