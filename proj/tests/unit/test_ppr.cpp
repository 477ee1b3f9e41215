#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "intentscope/ppr.hpp"

using namespace intentscope;
using fixtures::GraphBuilder;

namespace {

double linf(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<ScoredItem> items(std::initializer_list<std::pair<const char*, double>> list) {
    std::vector<ScoredItem> v;
    for (auto [t, s] : list) v.push_back({t, s});
    return v;
}

Candidate cand(const std::string& url, std::size_t rank) {
    Candidate c;
    c.url = url;
    c.ranks.push_back({"R", rank, 1.0 / static_cast<double>(rank)});
    return c;
}

}  // namespace

TEST_SUITE("ppr") {

TEST_CASE("isolated seed keeps all mass") {
    const auto g = GraphBuilder().node("q").build();
    const auto s = personalized_pagerank(g, std::vector<uint32_t>{0}, PprConfig{});
    CHECK(s.score[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.converged);
}

TEST_CASE("fixture G1 matches dense power iteration") {
    const auto g = GraphBuilder().edge("q1", "u:u1", 2).edge("q1", "u:u2", 1).edge("q2", "u:u2", 3).edge("q1", "q2", 1).build();
    const auto seed = *g.find(NodeKind::query, "q1");
    PprConfig cfg;
    cfg.tolerance = 1e-14;
    const auto s = personalized_pagerank(g, std::vector<uint32_t>{seed}, cfg);
    const auto oracle = fixtures::dense_ppr(g, {seed}, cfg.alpha);
    CHECK(linf(s.score, oracle) <= 1e-8);
    CHECK(std::accumulate(s.score.begin(), s.score.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("unreachable component gets zero score") {
    const auto g = GraphBuilder().edge("a", "u:x").edge("b", "u:y").build();
    const auto s = personalized_pagerank(g, std::vector<std::string>{"a"}, PprConfig{});
    CHECK(s.score[*g.find(NodeKind::query, "b")] == 0.0);
    CHECK(s.score[*g.find(NodeKind::url, "y")] == 0.0);
    CHECK(s.score[*g.find(NodeKind::url, "x")] > 0.0);
}

TEST_CASE("missing seeds are all listed") {
    const auto g = GraphBuilder().edge("a", "u:x").build();
    try {
        personalized_pagerank(g, std::vector<std::string>{"a", "zz", "yy"}, PprConfig{});
        FAIL("expected MissingSeedsError");
    } catch (const MissingSeedsError& e) {
        CHECK(e.missing.size() == 2);
    }
    CHECK_THROWS(personalized_pagerank(g, std::vector<std::string>{}, PprConfig{}));
}

TEST_CASE("config validation") {
    PprConfig c;
    c.alpha = 1.0;
    CHECK_THROWS(validate(c));
    c = PprConfig{};
    c.tolerance = 0.0;
    CHECK_THROWS(validate(c));
}

TEST_CASE("ranking breaks ties by text") {
    auto v = items({{"b", 0.5}, {"a", 0.5}, {"c", 0.9}});
    rank_items(v);
    CHECK(v[0].text == "c");
    CHECK(v[1].text == "a");
    CHECK(v[2].text == "b");
}

TEST_CASE("candidate union of identical lists has top_n entries") {
    const auto list = items({{"u1", 0.5}, {"u2", 0.4}, {"u3", 0.3}, {"u4", 0.2}});
    const auto c = select_candidates({{"R1", list}, {"R2", list}}, 3);
    CHECK(c.size() == 3);
    CHECK(c[0].ranks.size() == 2);
}

TEST_CASE("short regional lists are taken whole") {
    const auto c = select_candidates({{"R1", items({{"u1", 0.5}})}, {"R2", items({{"u2", 0.4}, {"u3", 0.3}})}}, 100);
    CHECK(c.size() == 3);
}

TEST_CASE("dedup keeps five of eight store locators") {
    std::vector<Candidate> cs;
    const char* cities[] = {"boston-ma", "austin-tx", "dallas-tx", "miami-fl", "reno-nv", "tulsa-ok", "omaha-ne", "tampa-fl"};
    for (std::size_t i = 0; i < 8; ++i) {
        cs.push_back(cand(std::string("https://www.cvs.com/store-locator/") + cities[i] + "/covid-vaccine", i + 1));
    }
    const auto kept = dedup_by_pattern(cs, 5);
    REQUIRE(kept.size() == 5);
    CHECK(kept[0].url == cs[0].url);
    CHECK(kept[4].url == cs[4].url);
}

TEST_CASE("dedup leaves unique patterns and a full family of five alone") {
    std::vector<Candidate> unique{cand("https://a.com/x", 1), cand("https://b.com/y/z", 2), cand("https://c.org/", 3)};
    CHECK(dedup_by_pattern(unique, 5).size() == 3);
    std::vector<Candidate> five;
    for (int i = 0; i < 5; ++i) five.push_back(cand("https://s.com/loc/" + std::to_string(i) + "/v", static_cast<std::size_t>(i + 1)));
    CHECK(dedup_by_pattern(five, 5).size() == 5);
}

TEST_CASE("pattern families wildcard varying segments") {
    const auto f = pattern_families({"https://s.com/loc/a/v", "https://s.com/loc/b/v", "https://s.com/loc/c/v", "https://t.com/x"});
    CHECK(f[0] == f[1]);
    CHECK(f[1] == f[2]);
    CHECK(f[0] != f[3]);
}

TEST_CASE("levenshtein matches hand values") {
    CHECK(levenshtein("abc", "abd") == 1);
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("same", "same") == 0);
}

TEST_CASE("redirect filter uses normalized edit distance") {
    const std::string long_url = "https://" + std::string(92, 'x');
    REQUIRE(long_url.size() == 100);
    std::unordered_map<std::string, std::string> redirects{
        {"abc", "abd"}, {"self", "self"}, {long_url, long_url + "/?ref=1234"}};
    const auto kept = redirect_filter({cand("abc", 1), cand("self", 2), cand(long_url, 3), cand("unmapped", 4)}, redirects);
    std::vector<std::string> urls;
    for (const auto& c : kept) urls.push_back(c.url);
    CHECK(urls == std::vector<std::string>{"self", long_url, "unmapped"});
}

TEST_CASE("candidates CSV round-trips") {
    const auto c = select_candidates({{"R1", items({{"u1", 0.5}, {"u2", 0.25}})}, {"R2", items({{"u2", 0.75}})}}, 10);
    std::ostringstream out;
    write_candidates(out, c);
    std::istringstream in(out.str());
    const auto back = read_candidates(in);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back[i].url == c[i].url);
        CHECK(back[i].ranks.size() == c[i].ranks.size());
    }
}

TEST_CASE("seed nodes follow the lexicon") {
    const auto g = GraphBuilder().edge("where can i get a covid vaccine", "u:x").edge("covid vaccine", "u:x").build();
    const auto seeds = seed_nodes(g, default_lexicon());
    REQUIRE(seeds.size() == 1);
    CHECK(g.node(seeds[0]).text == "where can i get a covid vaccine");
}

}
