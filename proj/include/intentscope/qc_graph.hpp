#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "intentscope/lexicon.hpp"
#include "intentscope/log_model.hpp"

namespace intentscope {

enum class NodeKind : uint8_t { query = 0, url = 1 };

struct GraphNode {
    NodeKind kind = NodeKind::query;
    std::string text;
};

struct GraphEdge {
    uint32_t target = 0;
    uint64_t weight = 0;
};

/// Directed query-click graph in CSR form. Node ids are canonical: nodes are
/// sorted by (kind, text), so ids do not depend on input order.
class QueryClickGraph {
public:
    using EdgeTriple = std::tuple<uint32_t, uint32_t, uint64_t>;

    QueryClickGraph() = default;
    /// Canonicalizes node order, merges parallel edges by summing weights.
    /// Throws std::invalid_argument on zero weights or edges leaving a URL node.
    QueryClickGraph(std::string scope, std::vector<GraphNode> nodes, std::vector<EdgeTriple> edges);

    const std::string& scope() const { return scope_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return targets_.size(); }
    bool empty() const { return nodes_.empty(); }
    const GraphNode& node(std::size_t id) const { return nodes_[id]; }
    const std::vector<GraphNode>& nodes() const { return nodes_; }
    std::optional<uint32_t> find(NodeKind kind, std::string_view text) const;

    std::span<const GraphEdge> out_edges(std::size_t id) const {
        return {targets_.data() + offsets_[id], targets_.data() + offsets_[id + 1]};
    }
    uint64_t out_weight(std::size_t id) const { return out_weight_[id]; }

    /// Sorted (source, target, weight) triples.
    std::vector<EdgeTriple> edges() const;

private:
    std::string scope_;
    std::vector<GraphNode> nodes_;
    std::vector<std::size_t> offsets_{0};
    std::vector<GraphEdge> targets_;
    std::vector<uint64_t> out_weight_;
    std::unordered_map<std::string, uint32_t> query_index_;
    std::unordered_map<std::string, uint32_t> url_index_;
};

struct GraphScope {
    std::string name = "all";
    Granularity granularity = Granularity::state;
    /// When unset every event is in scope.
    std::optional<std::string> region;
    /// Month indices to sample; empty means the full window.
    std::vector<int> months;
};

/// Builds the graph from sessions that contain at least one graph-relevant
/// query. Every query and click of such a session is included.
QueryClickGraph build_graph(std::span<const LogEvent> events, const SeedLexicon& lex, const GraphScope& scope);

/// One graph per distinct region at `granularity`, keyed by region id.
std::vector<QueryClickGraph> build_graphs_by_region(std::span<const LogEvent> events, const SeedLexicon& lex,
                                                    Granularity granularity, const std::vector<int>& months = {});

void write_graph(std::ostream& out, const QueryClickGraph& g);
QueryClickGraph read_graph(std::istream& in);

/// How a query clicked into u_i (w_i) and u_j (w_j) connects the two URLs.
enum class CoClickRule {
    min,         // min(w_i, w_j)
    product,     // w_i * w_j
    normalized,  // w_i * w_j / total clicks of the query
};

CoClickRule parse_coclick_rule(std::string_view name);

/// Undirected weighted URL graph without self-loops.
class CoClickGraph {
public:
    using Neighbor = std::pair<uint32_t, double>;

    CoClickGraph() = default;
    /// Edges (i, j, w) with i != j and w > 0; parallel edges are summed.
    CoClickGraph(std::vector<std::string> labels, const std::vector<std::tuple<uint32_t, uint32_t, double>>& edges);

    std::size_t node_count() const { return labels_.size(); }
    const std::string& label(std::size_t i) const { return labels_[i]; }
    const std::vector<std::string>& labels() const { return labels_; }
    /// Sorted by neighbor id.
    const std::vector<Neighbor>& neighbors(std::size_t i) const { return adj_[i]; }
    double weight(std::size_t i, std::size_t j) const;
    double degree(std::size_t i) const { return degree_[i]; }
    /// Sum of edge weights, each undirected edge counted once.
    double total_weight() const { return total_weight_; }
    std::size_t edge_count() const;

private:
    std::vector<std::string> labels_;
    std::vector<std::vector<Neighbor>> adj_;
    std::vector<double> degree_;
    double total_weight_ = 0.0;
};

/// URL nodes of the result keep the canonical URL order of `g`.
/// `keep`, when given, restricts the URLs that enter the co-click graph.
CoClickGraph collapse_to_coclick(const QueryClickGraph& g, CoClickRule rule = CoClickRule::min,
                                 const std::vector<std::string>* keep = nullptr);

}  // namespace intentscope
