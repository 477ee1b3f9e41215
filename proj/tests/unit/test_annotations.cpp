#include <doctest.h>

#include <sstream>

#include "intentscope/annotations.hpp"

using namespace intentscope;

namespace {

std::vector<AnnotationRecord> recs(const std::string& url, std::initializer_list<Verdict> vs) {
    std::vector<AnnotationRecord> out;
    int i = 0;
    for (Verdict v : vs) out.push_back({url, "a" + std::to_string(i++), v});
    return out;
}

constexpr auto P = Verdict::highly_likely;
constexpr auto L = Verdict::likely;
constexpr auto N = Verdict::unlikely;
constexpr auto A = Verdict::ambiguous;
constexpr auto M = Verdict::missing_page;

}  // namespace

TEST_SUITE("annotations") {

TEST_CASE("three positives make a positive") {
    CHECK(consensus(recs("u", {P, L, P})).label == ConsensusLabel::positive);
}

TEST_CASE("two positives and one negative wait for a fourth annotator") {
    const auto r = consensus(recs("u", {P, P, N}));
    CHECK(r.label == ConsensusLabel::undecided);
    CHECK(r.needs_fourth);
    CHECK(consensus(recs("u", {P, P, N, L})).label == ConsensusLabel::positive);
}

TEST_CASE("two negatives make a negative") {
    CHECK(consensus(recs("u", {P, N, A})).label == ConsensusLabel::negative);
    CHECK(consensus(recs("u", {N, N, N})).label == ConsensusLabel::negative);
}

TEST_CASE("missing pages abstain and ask for more annotators") {
    const auto r = consensus(recs("u", {P, P, M}));
    CHECK(r.label == ConsensusLabel::undecided);
    CHECK(r.needs_fourth);
    CHECK(r.abstentions == 1);
}

TEST_CASE("three positives and two negatives is flagged as conflicted") {
    const auto r = consensus(recs("u", {P, P, P, N, N}));
    CHECK(r.conflicted);
}

TEST_CASE("consensus input errors") {
    CHECK_THROWS_AS(consensus(recs("u", {P, P})), std::invalid_argument);
    auto dup = recs("u", {P, P, P});
    dup[2].annotator_id = dup[0].annotator_id;
    CHECK_THROWS_AS(consensus(dup), std::invalid_argument);
    CHECK_THROWS(parse_verdict("sure"));
}

TEST_CASE("rule-only positives carry rule provenance") {
    const auto store = assemble_labels({}, {{"u1", Polarity::positive}}, {});
    REQUIRE(store.get("u1").has_value());
    CHECK(store.get("u1")->provenance == Provenance::rule);
    CHECK(store.is_positive("u1"));
}

TEST_CASE("undecided URLs stay out of the store") {
    std::map<std::string, ConsensusResult> c{{"u1", consensus(recs("u1", {P, P, N}))}};
    const auto store = assemble_labels(c, {}, {});
    CHECK_FALSE(store.get("u1").has_value());
    CHECK(store.urls().empty());
}

TEST_CASE("consensus overrides a conflicting rule and the conflict is reported") {
    std::map<std::string, ConsensusResult> c{{"u1", consensus(recs("u1", {N, N, P}))}};
    std::vector<std::string> warnings;
    set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    std::vector<LabelConflict> conflicts;
    const auto store = assemble_labels(c, {{"u1", Polarity::positive}}, {}, &conflicts);
    set_warning_sink(nullptr);
    CHECK(store.get("u1")->polarity == Polarity::negative);
    CHECK(store.get("u1")->provenance == Provenance::consensus);
    REQUIRE(conflicts.size() == 1);
    CHECK(conflicts[0].rule == Polarity::positive);
    CHECK_FALSE(warnings.empty());
}

TEST_CASE("seed queries and expansions") {
    LabelStore store = assemble_labels({}, {{"u1", Polarity::negative}}, std::vector<std::string>{"q"});
    CHECK(store.seed_queries().count("q") == 1);
    CHECK_FALSE(store.add_expanded("u1"));
    CHECK(store.add_expanded("u2"));
    CHECK(store.get("u2")->provenance == Provenance::gnn);
    CHECK(store.count(Polarity::positive) == 1);
    CHECK(store.count(Provenance::rule) == 1);
}

TEST_CASE("annotation and label files round-trip") {
    const auto r = recs("https://x", {P, L, N, A, M});
    std::ostringstream out;
    write_annotations(out, r);
    std::istringstream in(out.str());
    const auto back = read_annotations(in);
    REQUIRE(back.size() == r.size());
    CHECK(back[4].verdict == M);

    LabelStore store = assemble_labels({}, {{"u1", Polarity::negative}, {"u2", Polarity::positive}}, std::vector<std::string>{"q"});
    std::ostringstream lo;
    write_labels(lo, store);
    std::istringstream li(lo.str());
    const LabelStore s2 = read_labels(li);
    CHECK(s2.urls().size() == 2);
    CHECK(s2.get("u1")->polarity == Polarity::negative);
    CHECK(s2.seed_queries() == store.seed_queries());
}

TEST_CASE("simulated annotators with no errors reproduce the truth") {
    AnnotatorModel m;
    m.error_rate = 0.0;
    m.missing_page_rate = 0.0;
    const std::vector<std::string> urls{"a", "b", "c"};
    const auto records = simulate_annotations(urls, {{"a", true}, {"b", false}, {"c", true}}, m, 5);
    const auto c = consensus_all(records);
    CHECK(c.at("a").label == ConsensusLabel::positive);
    CHECK(c.at("b").label == ConsensusLabel::negative);
    CHECK(c.at("c").label == ConsensusLabel::positive);
    CHECK(simulate_annotations(urls, {{"a", true}, {"b", false}, {"c", true}}, m, 5).size() == records.size());
}

}
