#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "intentscope/cohort.hpp"
#include "intentscope/common.hpp"
#include "intentscope/gnn.hpp"
#include "intentscope/ontology.hpp"
#include "intentscope/qc_graph.hpp"
#include "intentscope/synthetic.hpp"

namespace fixtures {

using namespace intentscope;

/// Builds a query-click graph from named edges. Names starting with "u:" are
/// URL nodes (the prefix is stripped); everything else is a query.
class GraphBuilder {
public:
    GraphBuilder& node(const std::string& name) {
        id(name);
        return *this;
    }
    GraphBuilder& edge(const std::string& from, const std::string& to, uint64_t w = 1) {
        edges_.emplace_back(id(from), id(to), w);
        return *this;
    }
    QueryClickGraph build(std::string scope = "test") const {
        return QueryClickGraph(std::move(scope), nodes_, edges_);
    }

private:
    uint32_t id(const std::string& name) {
        auto it = ids_.find(name);
        if (it != ids_.end()) return it->second;
        GraphNode n;
        if (name.rfind("u:", 0) == 0) {
            n.kind = NodeKind::url;
            n.text = name.substr(2);
        } else {
            n.kind = NodeKind::query;
            n.text = name;
        }
        nodes_.push_back(n);
        const auto i = static_cast<uint32_t>(nodes_.size() - 1);
        ids_[name] = i;
        return i;
    }

    std::map<std::string, uint32_t> ids_;
    std::vector<GraphNode> nodes_;
    std::vector<QueryClickGraph::EdgeTriple> edges_;
};

/// Random query-click graph: queries point at queries and URLs with integer weights.
inline QueryClickGraph random_qc_graph(std::mt19937_64& rng, std::size_t n, double density = 0.15) {
    std::uniform_int_distribution<std::size_t> nq(1, std::max<std::size_t>(1, n - 1));
    const std::size_t queries = n == 1 ? 1 : nq(rng);
    std::vector<GraphNode> nodes;
    for (std::size_t i = 0; i < n; ++i) {
        GraphNode g;
        g.kind = i < queries ? NodeKind::query : NodeKind::url;
        g.text = (i < queries ? "q" : "u") + std::to_string(i);
        nodes.push_back(g);
    }
    std::bernoulli_distribution has(density);
    std::uniform_int_distribution<uint64_t> w(1, 9);
    std::vector<QueryClickGraph::EdgeTriple> edges;
    for (uint32_t s = 0; s < queries; ++s) {
        for (uint32_t t = 0; t < n; ++t) {
            if (s != t && has(rng)) edges.emplace_back(s, t, w(rng));
        }
    }
    return QueryClickGraph("random", std::move(nodes), std::move(edges));
}

/// Dense power iteration of the personalized PageRank map, run until the
/// iterate stops changing in double precision.
inline std::vector<double> dense_ppr(const QueryClickGraph& g, const std::vector<uint32_t>& seeds, double alpha) {
    const auto n = static_cast<Eigen::Index>(g.node_count());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    for (uint32_t s : seeds) e[s] = 1.0 / static_cast<double>(seeds.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double total = static_cast<double>(g.out_weight(static_cast<std::size_t>(i)));
        if (total == 0.0) {
            p.row(i) = e.transpose();
            continue;
        }
        for (const auto& edge : g.out_edges(static_cast<std::size_t>(i))) {
            p(i, edge.target) += static_cast<double>(edge.weight) / total;
        }
    }
    Eigen::RowVectorXd x = e.transpose();
    for (int it = 0; it < 100000; ++it) {
        Eigen::RowVectorXd next = (1.0 - alpha) * e.transpose() + alpha * (x * p);
        const double change = (next - x).cwiseAbs().sum();
        x = next;
        if (change < 1e-15) break;
    }
    return {x.data(), x.data() + n};
}

/// Size of a maximum matching by exhaustive search over left vertices.
inline std::size_t brute_force_matching(std::size_t left, std::size_t right, const std::vector<std::vector<int>>& adj) {
    std::vector<bool> used(right, false);
    std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
        if (i == left) return 0;
        std::size_t b = best(i + 1);
        for (int r : adj[i]) {
            if (used[static_cast<std::size_t>(r)]) continue;
            used[static_cast<std::size_t>(r)] = true;
            b = std::max(b, 1 + best(i + 1));
            used[static_cast<std::size_t>(r)] = false;
        }
        return b;
    };
    return best(0);
}

/// Modularity from the textbook definition, Q = sum_c [L_c / m - gamma (d_c / 2m)^2].
inline double modularity_oracle(const CoClickGraph& g, const Partition& p, double gamma) {
    const double m = g.total_weight();
    if (m == 0.0) return 0.0;
    std::map<int, double> inside, degree;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        degree[p[i]] += g.degree(i);
        for (const auto& [j, w] : g.neighbors(i)) {
            if (i < j && p[i] == p[j]) inside[p[i]] += w;
        }
    }
    double q = 0.0;
    for (const auto& [c, d] : degree) q += inside[c] / m - gamma * (d / (2 * m)) * (d / (2 * m));
    return q;
}

/// Best modularity over every set partition (restricted growth strings).
inline std::pair<double, Partition> exhaustive_modularity(const CoClickGraph& g, double gamma) {
    const std::size_t n = g.node_count();
    Partition p(n, 0);
    double best = -1e300;
    Partition arg = p;
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int max_label) {
        if (i == n) {
            const double q = modularity_oracle(g, p, gamma);
            if (q > best) {
                best = q;
                arg = p;
            }
            return;
        }
        for (int c = 0; c <= max_label + 1; ++c) {
            p[i] = c;
            rec(i + 1, std::max(max_label, c));
        }
    };
    if (n == 0) return {0.0, p};
    p[0] = 0;
    rec(1, 0);
    return {best, arg};
}

/// Random connected weighted graph: a random spanning tree plus extra edges.
inline CoClickGraph random_connected_graph(std::mt19937_64& rng, std::size_t n, double extra = 0.3) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("n" + std::to_string(i));
    std::vector<std::tuple<uint32_t, uint32_t, double>> edges;
    std::uniform_real_distribution<double> w(0.5, 3.0);
    std::set<std::pair<uint32_t, uint32_t>> seen;
    for (uint32_t i = 1; i < n; ++i) {
        const auto j = std::uniform_int_distribution<uint32_t>(0, i - 1)(rng);
        edges.emplace_back(j, i, w(rng));
        seen.insert({j, i});
    }
    std::bernoulli_distribution more(extra);
    for (uint32_t i = 0; i < n; ++i) {
        for (uint32_t j = i + 1; j < n; ++j) {
            if (!seen.count({i, j}) && more(rng)) edges.emplace_back(i, j, w(rng));
        }
    }
    return CoClickGraph(std::move(labels), edges);
}

/// Two k-cliques joined by a single edge.
inline CoClickGraph twin_cliques(std::size_t k) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < 2 * k; ++i) labels.push_back("n" + std::to_string(i));
    std::vector<std::tuple<uint32_t, uint32_t, double>> edges;
    for (uint32_t base : {0u, static_cast<uint32_t>(k)}) {
        for (uint32_t i = 0; i < k; ++i) {
            for (uint32_t j = i + 1; j < k; ++j) edges.emplace_back(base + i, base + j, 1.0);
        }
    }
    edges.emplace_back(0, static_cast<uint32_t>(k), 1.0);
    return CoClickGraph(std::move(labels), edges);
}

/// One-month world (March 2021) with one region per (rate, coverage) pair,
/// five zctas per county, every user active.
inline SyntheticWorldConfig small_world(std::vector<std::pair<double, double>> rate_coverage, int64_t population) {
    SyntheticWorldConfig cfg;
    apply_default_vocabulary(cfg);
    cfg.window = MonthWindow{month_index(day_from_ymd(2021, 3, 1)), 1};
    cfg.late_intent_start = day_from_ymd(2021, 3, 20);
    cfg.min_monthly_queries = 30;
    cfg.max_monthly_queries = 32;
    cfg.light_user_share = 0.0;
    int i = 0;
    for (auto [rate, coverage] : rate_coverage) {
        SyntheticRegion r;
        r.region.id = "Z" + std::to_string(1000 + i);
        r.region.county = "C" + std::to_string(i / 5);
        r.region.state = "S1";
        r.region.population = population;
        r.intent_rate = rate;
        r.coverage = coverage;
        cfg.regions.push_back(r);
        ++i;
    }
    return cfg;
}

/// Small, fast model for tests.
inline ModelConfig small_model() {
    ModelConfig cfg;
    cfg.embed_dim = 6;
    cfg.windows = {3};
    cfg.filters = 6;
    cfg.gcn_widths = {8, 8};
    cfg.max_text_len = 24;
    cfg.optimizer = Optimizer::adam;
    cfg.learning_rate = 0.02;
    cfg.max_epochs = 200;
    cfg.patience = 25;
    cfg.pretrain = false;
    return cfg;
}

/// Labeled nodes whose text alone separates the classes: positives mention an
/// appointment page, negatives a weather page. Same-class nodes are chained.
struct SeparableFixture {
    GraphInput input;
    Targets labels;
    std::vector<bool> positive;
};

inline SeparableFixture separable_fixture(const ModelConfig& cfg, std::size_t per_class, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> texts;
    std::vector<bool> is_url;
    SeparableFixture f;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const bool pos = i % 2 == 0;
        const auto k = std::to_string(std::uniform_int_distribution<int>(0, 999)(rng));
        texts.push_back(pos ? "vaccine/appt/" + k : "weather/news/" + k);
        is_url.push_back(true);
        f.positive.push_back(pos);
        f.labels.nodes.push_back(static_cast<uint32_t>(i));
        f.labels.values.push_back(pos ? 1.0 : 0.0);
    }
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 2; i < texts.size(); ++i) edges.emplace_back(i - 2, i);
    f.input = prepare_input(texts, edges, is_url, cfg);
    return f;
}

}  // namespace fixtures
