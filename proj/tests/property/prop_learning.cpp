#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "intentscope/annotations.hpp"
#include "intentscope/gnn.hpp"

using namespace intentscope;

namespace {

std::vector<AnnotationRecord> random_records(std::mt19937_64& rng, const std::string& url) {
    std::vector<AnnotationRecord> out;
    const int n = 3 + static_cast<int>(rng() % 3);
    for (int k = 0; k < n; ++k) out.push_back({url, "a" + std::to_string(k), static_cast<Verdict>(rng() % 5)});
    return out;
}

/// Smallest candidate threshold whose every larger candidate keeps precision.
std::optional<double> precision_oracle(const std::vector<double>& s, const std::vector<bool>& y, double min_p) {
    std::set<double> cands(s.begin(), s.end());
    cands.insert(0.0);
    auto ok = [&](double t) {
        std::size_t n = 0, p = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] > t) {
                ++n;
                p += y[i];
            }
        }
        return n == 0 || static_cast<double>(p) >= min_p * static_cast<double>(n);
    };
    auto nonempty = [&](double t) { return std::any_of(s.begin(), s.end(), [&](double v) { return v > t; }); };
    std::optional<double> best;
    for (auto it = cands.rbegin(); it != cands.rend(); ++it) {
        if (!ok(*it)) break;
        if (nonempty(*it)) best = *it;
    }
    return best;
}

}  // namespace

TEST_SUITE("properties.learning") {

TEST_CASE("consensus does not depend on annotator order") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 300; ++t) {
        auto r = random_records(rng, "u");
        const auto a = consensus(r);
        std::shuffle(r.begin(), r.end(), rng);
        const auto b = consensus(r);
        CHECK(a.label == b.label);
        CHECK(a.needs_fourth == b.needs_fourth);
        CHECK(a.conflicted == b.conflicted);
        CHECK(a.positives == b.positives);
        CHECK(a.negatives == b.negatives);
    }
}

TEST_CASE("decided labels never outnumber annotated URLs and undecided URLs stay out") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        std::vector<AnnotationRecord> all;
        for (int u = 0; u < 20; ++u) {
            const auto r = random_records(rng, "https://x.org/" + std::to_string(u));
            all.insert(all.end(), r.begin(), r.end());
        }
        const auto cons = consensus_all(all);
        const auto store = assemble_labels(cons, {}, std::vector<std::string>{});
        CHECK(store.count(Polarity::positive) + store.count(Polarity::negative) <= cons.size());
        for (const auto& [url, c] : cons) {
            if (c.label == ConsensusLabel::undecided) CHECK_FALSE(store.get(url).has_value());
            else CHECK(store.get(url)->polarity == (c.label == ConsensusLabel::positive ? Polarity::positive : Polarity::negative));
        }
    }
}

TEST_CASE("forward pass is equivariant under node relabeling") {
    std::mt19937_64 rng(3);
    const auto cfg = fixtures::small_model();
    for (int t = 0; t < 10; ++t) {
        const std::size_t n = 2 + rng() % 15;
        std::vector<std::string> texts;
        std::vector<bool> is_url;
        for (std::size_t i = 0; i < n; ++i) {
            texts.push_back("node " + std::to_string(rng() % 1000));
            is_url.push_back(rng() % 2);
        }
        std::vector<std::pair<uint32_t, uint32_t>> edges;
        for (std::size_t k = 0; k < n; ++k) edges.emplace_back(rng() % n, rng() % n);
        std::vector<uint32_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::string> ptexts(n);
        std::vector<bool> pis(n);
        for (std::size_t i = 0; i < n; ++i) {
            ptexts[perm[i]] = texts[i];
            pis[perm[i]] = is_url[i];
        }
        std::vector<std::pair<uint32_t, uint32_t>> pedges;
        for (auto [a, b] : edges) pedges.emplace_back(perm[a], perm[b]);
        GnnModel m(cfg);
        m.init(rng());
        const auto s = m.forward(prepare_input(texts, edges, is_url, cfg));
        const auto ps = m.forward(prepare_input(ptexts, pedges, pis, cfg));
        for (std::size_t i = 0; i < n; ++i) CHECK(ps[perm[i]] == doctest::Approx(s[i]).epsilon(1e-12));
    }
}

TEST_CASE("precision threshold agrees with a brute-force search") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 1 + rng() % 25;
        std::vector<double> s;
        std::vector<bool> y;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(static_cast<double>(1 + rng() % 10) / 11.0);
            y.push_back(rng() % 4 != 0);
        }
        CHECK(precision_threshold(s, y, 0.9) == precision_oracle(s, y, 0.9));
    }
}

TEST_CASE("trials with an achievable precision threshold keep test precision") {
    auto cfg = fixtures::small_model();
    cfg.max_epochs = 60;
    std::mt19937_64 rng(5);
    int with_threshold = 0;
    for (int t = 0; t < 6; ++t) {
        auto f = fixtures::separable_fixture(cfg, 40, 100 + t);
        for (auto& v : f.labels.values) {
            if (rng() % 10 == 0) v = 1.0 - v;
        }
        const auto r = train_trial(cfg, f.input, f.labels, t, 7 + t);
        if (!r.t_prec) continue;
        ++with_threshold;
        std::size_t above = 0, pos = 0;
        for (uint32_t i : r.test) {
            if (r.scores[i] > r.threshold) {
                ++above;
                const auto k = static_cast<std::size_t>(std::find(f.labels.nodes.begin(), f.labels.nodes.end(), i) - f.labels.nodes.begin());
                pos += f.labels.values[k] > 0.5;
            }
        }
        if (above) CHECK(static_cast<double>(pos) >= 0.9 * static_cast<double>(above));
    }
    CHECK(with_threshold > 0);
}

TEST_CASE("regions with identical generators give similar detection rates") {
    const auto cfg = fixtures::small_model();
    std::vector<double> tpr, fpr;
    for (int region = 0; region < 5; ++region) {
        const auto f = fixtures::separable_fixture(cfg, 40, 200 + region);
        const auto r = train_trial(cfg, f.input, f.labels, 0, 31 + region);
        tpr.push_back(r.tpr);
        fpr.push_back(r.fpr);
    }
    CHECK(*std::max_element(tpr.begin(), tpr.end()) - *std::min_element(tpr.begin(), tpr.end()) <= 0.1);
    CHECK(*std::max_element(fpr.begin(), fpr.end()) <= 0.05);
}

}
