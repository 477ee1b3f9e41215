#include "intentscope/qc_graph.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

namespace intentscope {

namespace {

bool node_less(const GraphNode& a, const GraphNode& b) {
    return std::tie(a.kind, a.text) < std::tie(b.kind, b.text);
}

std::string escape_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_text(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\' || i + 1 == s.size()) {
            out.push_back(s[i]);
            continue;
        }
        switch (s[++i]) {
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            default: out.push_back(s[i]);
        }
    }
    return out;
}

}  // namespace

QueryClickGraph::QueryClickGraph(std::string scope, std::vector<GraphNode> nodes, std::vector<EdgeTriple> edges) :
    scope_(std::move(scope)) {
    const std::size_t n = nodes.size();
    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) { return node_less(nodes[a], nodes[b]); });
    std::vector<uint32_t> remap(n);
    nodes_.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        if (i > 0 && !node_less(nodes[order[i - 1]], nodes[order[i]])) {
            throw std::invalid_argument("duplicate graph node '" + nodes[order[i]].text + "'");
        }
        remap[order[i]] = i;
        nodes_.push_back(std::move(nodes[order[i]]));
    }
    for (auto& [s, t, w] : edges) {
        if (s >= n || t >= n) throw std::invalid_argument("edge endpoint out of range");
        if (w == 0) throw std::invalid_argument("edge weight must be positive");
        s = remap[s];
        t = remap[t];
        if (nodes_[s].kind == NodeKind::url) throw std::invalid_argument("edge leaves URL node '" + nodes_[s].text + "'");
    }
    std::sort(edges.begin(), edges.end());

    offsets_.assign(n + 1, 0);
    out_weight_.assign(n, 0);
    for (std::size_t i = 0; i < edges.size();) {
        const auto [s, t, w0] = edges[i];
        uint64_t w = 0;
        for (; i < edges.size() && std::get<0>(edges[i]) == s && std::get<1>(edges[i]) == t; ++i) w += std::get<2>(edges[i]);
        targets_.push_back(GraphEdge{t, w});
        ++offsets_[s + 1];
        out_weight_[s] += w;
    }
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
    for (uint32_t i = 0; i < n; ++i) {
        (nodes_[i].kind == NodeKind::query ? query_index_ : url_index_).emplace(nodes_[i].text, i);
    }
}

std::optional<uint32_t> QueryClickGraph::find(NodeKind kind, std::string_view text) const {
    const auto& index = kind == NodeKind::query ? query_index_ : url_index_;
    auto it = index.find(std::string(text));
    if (it == index.end()) return std::nullopt;
    return it->second;
}

std::vector<QueryClickGraph::EdgeTriple> QueryClickGraph::edges() const {
    std::vector<EdgeTriple> out;
    out.reserve(targets_.size());
    for (uint32_t s = 0; s < nodes_.size(); ++s) {
        for (const GraphEdge& e : out_edges(s)) out.emplace_back(s, e.target, e.weight);
    }
    return out;
}

namespace {

class GraphAccumulator {
public:
    uint32_t node(NodeKind kind, const std::string& text) {
        auto& index = kind == NodeKind::query ? queries_ : urls_;
        auto [it, inserted] = index.emplace(text, static_cast<uint32_t>(nodes_.size()));
        if (inserted) nodes_.push_back(GraphNode{kind, text});
        return it->second;
    }
    void edge(uint32_t s, uint32_t t) { ++edges_[{s, t}]; }

    QueryClickGraph finish(std::string scope) {
        std::vector<QueryClickGraph::EdgeTriple> triples;
        triples.reserve(edges_.size());
        for (const auto& [key, w] : edges_) triples.emplace_back(key.first, key.second, w);
        return QueryClickGraph(std::move(scope), std::move(nodes_), std::move(triples));
    }

private:
    std::vector<GraphNode> nodes_;
    std::unordered_map<std::string, uint32_t> queries_, urls_;
    std::map<std::pair<uint32_t, uint32_t>, uint64_t> edges_;
};

struct RelevanceCache {
    const SeedLexicon& lex;
    std::unordered_map<std::string, bool> cache;
    bool operator()(const std::string& q) {
        auto it = cache.find(q);
        if (it != cache.end()) return it->second;
        return cache.emplace(q, is_graph_relevant(q, lex)).first->second;
    }
};

/// Session order: (user, session, timestamp), ties by input position.
std::vector<uint32_t> session_order(std::span<const LogEvent> events, const std::vector<uint32_t>& subset) {
    std::vector<uint32_t> idx = subset;
    std::stable_sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
        const LogEvent& x = events[a];
        const LogEvent& y = events[b];
        if (int c = x.user_id.compare(y.user_id)) return c < 0;
        if (int c = x.session_id.compare(y.session_id)) return c < 0;
        if (x.ts != y.ts) return x.ts < y.ts;
        // Equal timestamps: order by content so the graph is input-order independent.
        if (int c = x.query.compare(y.query)) return c < 0;
        return x.clicks < y.clicks;
    });
    return idx;
}

QueryClickGraph build_from_sorted(std::span<const LogEvent> events, const std::vector<uint32_t>& order,
                                  RelevanceCache& relevant, std::string scope) {
    GraphAccumulator acc;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        bool any_relevant = false;
        const LogEvent& head = events[order[i]];
        for (; j < order.size(); ++j) {
            const LogEvent& e = events[order[j]];
            if (e.user_id != head.user_id || e.session_id != head.session_id) break;
            any_relevant = any_relevant || relevant(e.query);
        }
        if (any_relevant) {
            std::optional<uint32_t> prev;
            for (std::size_t k = i; k < j; ++k) {
                const LogEvent& e = events[order[k]];
                const uint32_t q = acc.node(NodeKind::query, e.query);
                if (prev && *prev != q) acc.edge(*prev, q);
                for (const std::string& url : e.clicks) acc.edge(q, acc.node(NodeKind::url, url));
                prev = q;
            }
        }
        i = j;
    }
    QueryClickGraph g = acc.finish(std::move(scope));
    if (g.empty()) warn("query-click graph for scope '" + g.scope() + "' is empty");
    return g;
}

bool month_selected(const LogEvent& e, const std::vector<int>& months) {
    return months.empty() || std::find(months.begin(), months.end(), month_index(e.ts.day)) != months.end();
}

}  // namespace

QueryClickGraph build_graph(std::span<const LogEvent> events, const SeedLexicon& lex, const GraphScope& scope) {
    std::vector<uint32_t> subset;
    for (uint32_t i = 0; i < events.size(); ++i) {
        const LogEvent& e = events[i];
        if (!month_selected(e, scope.months)) continue;
        if (scope.region) {
            const auto& r = region_of(e, scope.granularity);
            if (!r || *r != *scope.region) continue;
        }
        subset.push_back(i);
    }
    RelevanceCache relevant{lex, {}};
    return build_from_sorted(events, session_order(events, subset), relevant, scope.name);
}

std::vector<QueryClickGraph> build_graphs_by_region(std::span<const LogEvent> events, const SeedLexicon& lex,
                                                    Granularity granularity, const std::vector<int>& months) {
    std::map<std::string, std::vector<uint32_t>> by_region;
    for (uint32_t i = 0; i < events.size(); ++i) {
        const LogEvent& e = events[i];
        const auto& r = region_of(e, granularity);
        if (r && month_selected(e, months)) by_region[*r].push_back(i);
    }
    RelevanceCache relevant{lex, {}};
    std::vector<QueryClickGraph> graphs;
    for (const auto& [region, subset] : by_region) {
        graphs.push_back(build_from_sorted(events, session_order(events, subset), relevant, region));
    }
    return graphs;
}

void write_graph(std::ostream& out, const QueryClickGraph& g) {
    out << "qcgraph 1\n";
    out << "scope\t" << escape_text(g.scope()) << '\n';
    out << "nodes\t" << g.node_count() << '\n';
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        out << i << '\t' << (g.node(i).kind == NodeKind::query ? 'q' : 'u') << '\t' << escape_text(g.node(i).text)
            << '\n';
    }
    out << "edges\t" << g.edge_count() << '\n';
    for (const auto& [s, t, w] : g.edges()) out << s << '\t' << t << '\t' << w << '\n';
}

QueryClickGraph read_graph(std::istream& in) {
    std::string line;
    auto next = [&](const char* what) {
        if (!std::getline(in, line)) throw std::runtime_error(std::string("graph file truncated before ") + what);
        return split(line, '\t');
    };
    if (!std::getline(in, line) || line != "qcgraph 1") throw std::runtime_error("not a version-1 graph file");
    auto f = next("scope");
    if (f.size() != 2 || f[0] != "scope") throw std::runtime_error("graph file: bad scope line");
    const std::string scope = unescape_text(f[1]);
    f = next("node count");
    if (f.size() != 2 || f[0] != "nodes") throw std::runtime_error("graph file: bad node header");
    const std::size_t n = std::stoul(f[1]);
    std::vector<GraphNode> nodes;
    nodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        f = next("node");
        if (f.size() != 3 || std::stoul(f[0]) != i || (f[1] != "q" && f[1] != "u")) {
            throw std::runtime_error("graph file: bad node line " + std::to_string(i));
        }
        nodes.push_back(GraphNode{f[1] == "q" ? NodeKind::query : NodeKind::url, unescape_text(f[2])});
    }
    f = next("edge count");
    if (f.size() != 2 || f[0] != "edges") throw std::runtime_error("graph file: bad edge header");
    const std::size_t m = std::stoul(f[1]);
    std::vector<QueryClickGraph::EdgeTriple> edges;
    edges.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        f = next("edge");
        if (f.size() != 3) throw std::runtime_error("graph file: bad edge line " + std::to_string(i));
        edges.emplace_back(static_cast<uint32_t>(std::stoul(f[0])), static_cast<uint32_t>(std::stoul(f[1])),
                           std::stoull(f[2]));
    }
    QueryClickGraph g(scope, std::move(nodes), std::move(edges));
    return g;
}

CoClickRule parse_coclick_rule(std::string_view name) {
    if (name == "min") return CoClickRule::min;
    if (name == "product") return CoClickRule::product;
    if (name == "normalized") return CoClickRule::normalized;
    throw std::invalid_argument("unknown co-click rule '" + std::string(name) + "'");
}

CoClickGraph::CoClickGraph(std::vector<std::string> labels,
                           const std::vector<std::tuple<uint32_t, uint32_t, double>>& edges) :
    labels_(std::move(labels)), adj_(labels_.size()), degree_(labels_.size(), 0.0) {
    std::map<std::pair<uint32_t, uint32_t>, double> merged;
    for (const auto& [i, j, w] : edges) {
        if (i >= labels_.size() || j >= labels_.size()) throw std::invalid_argument("co-click edge out of range");
        if (i == j) throw std::invalid_argument("co-click graph cannot hold self-loops");
        if (!(w > 0.0)) throw std::invalid_argument("co-click weight must be positive");
        merged[{std::min(i, j), std::max(i, j)}] += w;
    }
    for (const auto& [key, w] : merged) {
        adj_[key.first].emplace_back(key.second, w);
        adj_[key.second].emplace_back(key.first, w);
        degree_[key.first] += w;
        degree_[key.second] += w;
        total_weight_ += w;
    }
    for (auto& list : adj_) std::sort(list.begin(), list.end());
}

double CoClickGraph::weight(std::size_t i, std::size_t j) const {
    const auto& list = adj_[i];
    auto it = std::lower_bound(list.begin(), list.end(), Neighbor{static_cast<uint32_t>(j), 0.0},
                               [](const Neighbor& a, const Neighbor& b) { return a.first < b.first; });
    return it != list.end() && it->first == j ? it->second : 0.0;
}

std::size_t CoClickGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& list : adj_) n += list.size();
    return n / 2;
}

CoClickGraph collapse_to_coclick(const QueryClickGraph& g, CoClickRule rule, const std::vector<std::string>* keep) {
    std::set<std::string> allowed;
    if (keep) allowed.insert(keep->begin(), keep->end());
    std::vector<int64_t> url_id(g.node_count(), -1);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.node(i).kind != NodeKind::url) continue;
        if (keep && !allowed.count(g.node(i).text)) continue;
        url_id[i] = static_cast<int64_t>(labels.size());
        labels.push_back(g.node(i).text);
    }
    std::map<std::pair<uint32_t, uint32_t>, double> acc;
    std::vector<std::pair<uint32_t, double>> clicked;
    for (std::size_t q = 0; q < g.node_count(); ++q) {
        if (g.node(q).kind != NodeKind::query) continue;
        clicked.clear();
        double total = 0.0;
        for (const GraphEdge& e : g.out_edges(q)) {
            if (g.node(e.target).kind != NodeKind::url) continue;
            total += static_cast<double>(e.weight);
            if (url_id[e.target] >= 0) clicked.emplace_back(static_cast<uint32_t>(url_id[e.target]), static_cast<double>(e.weight));
        }
        for (std::size_t a = 0; a < clicked.size(); ++a) {
            for (std::size_t b = a + 1; b < clicked.size(); ++b) {
                const double wa = clicked[a].second;
                const double wb = clicked[b].second;
                double c = 0.0;
                switch (rule) {
                    case CoClickRule::min: c = std::min(wa, wb); break;
                    case CoClickRule::product: c = wa * wb; break;
                    case CoClickRule::normalized: c = wa * wb / total; break;
                }
                const uint32_t i = clicked[a].first;
                const uint32_t j = clicked[b].first;
                acc[{std::min(i, j), std::max(i, j)}] += c;
            }
        }
    }
    std::vector<std::tuple<uint32_t, uint32_t, double>> edges;
    edges.reserve(acc.size());
    for (const auto& [key, w] : acc) edges.emplace_back(key.first, key.second, w);
    return CoClickGraph(std::move(labels), edges);
}

}  // namespace intentscope
