#include "intentscope/ontology.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "intentscope/csv.hpp"

namespace intentscope {

namespace {

bool contains_any(const std::string& lower, const std::vector<std::string>& needles) {
    return std::any_of(needles.begin(), needles.end(),
                       [&](const std::string& n) { return lower.find(n) != std::string::npos; });
}

}  // namespace

ClickCollector::ClickCollector(std::vector<std::string> topic_substrings) {
    for (auto& s : topic_substrings) substrings_.push_back(to_lower_ascii(s));
}

bool ClickCollector::topical(const std::string& url) const {
    return substrings_.empty() || contains_any(to_lower_ascii(url), substrings_);
}

void ClickCollector::observe(const LogEvent& e) {
    for (const std::string& url : e.clicks) {
        if (!topical(url)) continue;
        UrlClicks& u = urls_[url];
        u.users.insert(e.user_id);
        ++u.clicks;
        ++u.queries[e.query];
    }
}

std::vector<std::string> filter_urls(const std::map<std::string, UrlClicks>& clicks, const LabelStore& labels,
                                     const UrlFilter& filter) {
    std::vector<std::string> topic, excluded;
    for (const auto& s : filter.topic_substrings) topic.push_back(to_lower_ascii(s));
    for (const auto& s : filter.excluded_substrings) excluded.push_back(to_lower_ascii(s));
    std::vector<std::string> out;
    for (const auto& [url, c] : clicks) {
        const std::string lower = to_lower_ascii(url);
        if (!topic.empty() && !contains_any(lower, topic)) continue;
        if (contains_any(lower, excluded)) continue;
        if (labels.is_positive(url)) continue;
        if (c.users.size() < filter.min_users) continue;
        out.push_back(url);
    }
    return out;
}

CoClickGraph coclick_from_clicks(const std::map<std::string, UrlClicks>& clicks, const std::vector<std::string>& urls,
                                 CoClickRule rule) {
    std::vector<GraphNode> nodes;
    std::map<std::string, uint32_t> query_id;
    std::vector<QueryClickGraph::EdgeTriple> edges;
    for (const std::string& url : urls) {
        auto it = clicks.find(url);
        if (it == clicks.end()) continue;
        const auto url_node = static_cast<uint32_t>(nodes.size());
        nodes.push_back({NodeKind::url, url});
        for (const auto& [q, n] : it->second.queries) {
            auto [qi, inserted] = query_id.emplace(q, 0);
            if (inserted) {
                qi->second = static_cast<uint32_t>(nodes.size());
                nodes.push_back({NodeKind::query, q});
            }
            edges.emplace_back(qi->second, url_node, n);
        }
    }
    // URLs with no recorded clicks still appear as isolated nodes.
    for (const std::string& url : urls) {
        if (!clicks.count(url)) nodes.push_back({NodeKind::url, url});
    }
    const QueryClickGraph g("ontology", std::move(nodes), std::move(edges));
    return collapse_to_coclick(g, rule, &urls);
}

void validate(const LouvainConfig& cfg) {
    if (!(cfg.resolution > 0.0)) throw std::invalid_argument("Louvain resolution must be positive");
    if (cfg.band_lo >= cfg.band_hi) throw std::invalid_argument("cluster size band must have lower < upper");
    if (cfg.restarts < 1) throw std::invalid_argument("Louvain restarts must be at least 1");
}

Partition canonical_partition(const Partition& p) {
    std::map<int, int> remap;
    Partition out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto [it, inserted] = remap.emplace(p[i], static_cast<int>(remap.size()));
        out[i] = it->second;
    }
    return out;
}

std::vector<std::size_t> community_sizes(const Partition& p) {
    std::vector<std::size_t> sizes;
    for (int c : p) {
        if (c < 0) throw std::invalid_argument("negative community id");
        if (static_cast<std::size_t>(c) >= sizes.size()) sizes.resize(static_cast<std::size_t>(c) + 1, 0);
        ++sizes[static_cast<std::size_t>(c)];
    }
    return sizes;
}

double modularity(const CoClickGraph& g, const Partition& p, double resolution) {
    if (p.size() != g.node_count()) throw std::invalid_argument("partition size differs from node count");
    const double two_m = 2.0 * g.total_weight();
    if (two_m <= 0.0) return 0.0;
    std::map<int, double> in, tot;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        tot[p[i]] += g.degree(i);
        for (const auto& [j, w] : g.neighbors(i)) {
            if (p[j] == p[i]) in[p[i]] += w;  // each edge seen from both ends
        }
    }
    double q = 0.0;
    for (const auto& [c, t] : tot) {
        const double frac = t / two_m;
        q += in[c] / two_m - resolution * frac * frac;
    }
    return q;
}

namespace {

struct Level {
    std::vector<std::vector<std::pair<int, double>>> adj;  // no self entries
    std::vector<double> self;                              // A_ii, internal weight counted twice
    std::vector<double> k;
    std::size_t size() const { return k.size(); }
};

Level base_level(const CoClickGraph& g) {
    Level l;
    const std::size_t n = g.node_count();
    l.adj.resize(n);
    l.self.assign(n, 0.0);
    l.k.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, w] : g.neighbors(i)) l.adj[i].emplace_back(static_cast<int>(j), w);
        l.k[i] = g.degree(i);
    }
    return l;
}

/// Local moving phase. Returns the number of moves made.
std::size_t local_moves(const Level& l, double gamma, double two_m, Rng& rng, std::vector<int>& comm) {
    const std::size_t n = l.size();
    comm.resize(n);
    std::iota(comm.begin(), comm.end(), 0);
    std::vector<double> tot(l.k);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> w_to(n, 0.0);
    std::vector<int> touched;
    std::size_t moves = 0;
    for (int pass = 0; pass < 1000; ++pass) {
        std::size_t pass_moves = 0;
        for (int i : order) {
            const auto ui = static_cast<std::size_t>(i);
            const int ci = comm[ui];
            touched.clear();
            for (const auto& [j, w] : l.adj[ui]) {
                const int cj = comm[static_cast<std::size_t>(j)];
                if (w_to[static_cast<std::size_t>(cj)] == 0.0) touched.push_back(cj);
                w_to[static_cast<std::size_t>(cj)] += w;
            }
            tot[static_cast<std::size_t>(ci)] -= l.k[ui];
            const double ki = l.k[ui] / two_m;
            int best = ci;
            double best_gain = w_to[static_cast<std::size_t>(ci)] - gamma * tot[static_cast<std::size_t>(ci)] * ki;
            for (int c : touched) {
                const double gain = w_to[static_cast<std::size_t>(c)] - gamma * tot[static_cast<std::size_t>(c)] * ki;
                if (gain > best_gain + 1e-12) {
                    best = c;
                    best_gain = gain;
                }
            }
            tot[static_cast<std::size_t>(best)] += l.k[ui];
            comm[ui] = best;
            if (best != ci) ++pass_moves;
            for (int c : touched) w_to[static_cast<std::size_t>(c)] = 0.0;
        }
        moves += pass_moves;
        if (pass_moves == 0) break;
    }
    return moves;
}

Level aggregate_level(const Level& l, const std::vector<int>& comm, int communities) {
    Level out;
    const auto nc = static_cast<std::size_t>(communities);
    out.adj.resize(nc);
    out.self.assign(nc, 0.0);
    out.k.assign(nc, 0.0);
    std::vector<std::map<int, double>> acc(nc);
    for (std::size_t i = 0; i < l.size(); ++i) {
        const auto ci = static_cast<std::size_t>(comm[i]);
        out.self[ci] += l.self[i];
        out.k[ci] += l.k[i];
        for (const auto& [j, w] : l.adj[i]) {
            const int cj = comm[static_cast<std::size_t>(j)];
            if (static_cast<std::size_t>(cj) == ci) {
                out.self[ci] += w;
            } else {
                acc[ci][cj] += w;
            }
        }
    }
    for (std::size_t c = 0; c < nc; ++c) {
        for (const auto& [d, w] : acc[c]) out.adj[c].emplace_back(d, w);
    }
    return out;
}

LouvainResult louvain_once(const CoClickGraph& g, double gamma, uint64_t seed) {
    LouvainResult res;
    const std::size_t n = g.node_count();
    res.partition.resize(n);
    std::iota(res.partition.begin(), res.partition.end(), 0);
    const double two_m = 2.0 * g.total_weight();
    if (n == 0 || two_m <= 0.0) {
        res.modularity = modularity(g, res.partition, gamma);
        return res;
    }
    Rng rng(seed);
    Level level = base_level(g);
    std::vector<int> comm;
    while (true) {
        const std::size_t moves = local_moves(level, gamma, two_m, rng, comm);
        if (moves == 0) break;
        const Partition renumbered = canonical_partition(comm);
        const int communities = *std::max_element(renumbered.begin(), renumbered.end()) + 1;
        for (int& c : res.partition) c = renumbered[static_cast<std::size_t>(c)];
        ++res.levels;
        res.level_modularity.push_back(modularity(g, res.partition, gamma));
        if (static_cast<std::size_t>(communities) == level.size()) break;
        level = aggregate_level(level, renumbered, communities);
    }
    res.partition = canonical_partition(res.partition);
    res.modularity = modularity(g, res.partition, gamma);
    return res;
}

}  // namespace

LouvainResult louvain(const CoClickGraph& g, const LouvainConfig& cfg) {
    validate(cfg);
    LouvainResult best;
    for (int r = 0; r < cfg.restarts; ++r) {
        LouvainResult cur = louvain_once(g, cfg.resolution, derive_seed(cfg.seed, static_cast<uint64_t>(r)));
        if (r == 0 || cur.modularity > best.modularity + 1e-12) best = std::move(cur);
    }
    return best;
}

ResolutionTuning tune_resolution(const CoClickGraph& g, const LouvainConfig& base, std::vector<double> grid) {
    if (grid.empty()) throw std::invalid_argument("resolution grid is empty");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    ResolutionTuning t;
    std::size_t best_count = 0;
    bool first = true;
    for (double gamma : grid) {
        LouvainConfig cfg = base;
        cfg.resolution = gamma;
        LouvainResult r = louvain(g, cfg);
        std::size_t count = 0;
        for (std::size_t s : community_sizes(r.partition)) count += s >= base.band_lo && s <= base.band_hi;
        t.in_band.emplace_back(gamma, count);
        if (first || count > best_count) {
            first = false;
            best_count = count;
            t.best = gamma;
            t.partition = std::move(r);
        }
    }
    return t;
}

std::vector<ClusterDigest> cluster_digest(const CoClickGraph& g, const Partition& p,
                                          const std::map<std::string, UrlClicks>& clicks, std::size_t top_k,
                                          std::size_t sample_size, uint64_t seed) {
    if (p.size() != g.node_count()) throw std::invalid_argument("partition size differs from node count");
    std::map<int, std::vector<std::string>> members;
    for (std::size_t i = 0; i < p.size(); ++i) members[p[i]].push_back(g.label(i));
    std::vector<ClusterDigest> out;
    for (auto& [c, urls] : members) {
        ClusterDigest d;
        d.cluster = c;
        d.url_count = urls.size();
        std::vector<std::pair<std::string, uint64_t>> url_clicks;
        std::map<std::string, uint64_t> queries;
        for (const std::string& u : urls) {
            auto it = clicks.find(u);
            const uint64_t n = it == clicks.end() ? 0 : it->second.clicks;
            url_clicks.emplace_back(u, n);
            d.clicks += n;
            if (it != clicks.end()) {
                for (const auto& [q, k] : it->second.queries) queries[q] += k;
            }
        }
        auto by_count = [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        };
        std::sort(url_clicks.begin(), url_clicks.end(), by_count);
        for (std::size_t k = 0; k < url_clicks.size() && k < top_k; ++k) {
            d.top_url_clicks.push_back(url_clicks[k]);
            const double share = d.clicks ? 100.0 * static_cast<double>(url_clicks[k].second) / static_cast<double>(d.clicks) : 0.0;
            d.top_urls.emplace_back(url_clicks[k].first, share);
        }
        std::vector<std::pair<std::string, uint64_t>> qs(queries.begin(), queries.end());
        std::sort(qs.begin(), qs.end(), by_count);
        if (qs.size() > top_k) qs.resize(top_k);
        d.top_queries = std::move(qs);
        std::vector<std::string> sample = urls;
        std::sort(sample.begin(), sample.end());
        Rng rng(derive_seed(seed, static_cast<uint64_t>(c)));
        std::shuffle(sample.begin(), sample.end(), rng);
        if (sample.size() > sample_size) sample.resize(sample_size);
        std::sort(sample.begin(), sample.end());
        d.sample = std::move(sample);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<ClusterLabelRow> read_cluster_labels(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t id = t.require_column("cluster_id");
    std::vector<ClusterLabelRow> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        ClusterLabelRow l;
        l.line = t.lines[r];
        try {
            l.cluster = std::stoi(row.at(id));
        } catch (const std::exception&) {
            throw CsvError("bad cluster id", t.lines[r]);
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c != id && !row[c].empty()) l.subcategories.push_back(row[c]);
        }
        out.push_back(std::move(l));
    }
    return out;
}

std::map<std::string, std::string> read_subcategory_parents(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t sub = t.require_column("subcategory");
    const std::size_t top = t.require_column("top_category");
    std::map<std::string, std::string> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size() || row[sub].empty() || row[top].empty()) {
            throw CsvError("incomplete subcategory row", t.lines[r]);
        }
        auto [it, inserted] = out.emplace(row[sub], row[top]);
        if (!inserted && it->second != row[top]) {
            throw CsvError("subcategory '" + row[sub] + "' has two top categories", t.lines[r]);
        }
    }
    return out;
}

Ontology assemble_ontology(const std::vector<int>& clusters, const std::vector<ClusterLabelRow>& labels,
                           const std::map<std::string, std::string>& parents) {
    Ontology o;
    for (const auto& [sub, top] : parents) {
        o.parent[sub] = top;
        o.categories[top].push_back(sub);
    }
    const std::set<int> known(clusters.begin(), clusters.end());
    std::set<int> unclear;
    auto where = [](const ClusterLabelRow& l) { return "cluster label line " + std::to_string(l.line) + ": "; };
    for (const ClusterLabelRow& l : labels) {
        if (!known.count(l.cluster)) throw OntologyError(where(l) + "unknown cluster " + std::to_string(l.cluster));
        for (const std::string& s : l.subcategories) {
            if (s == "unclear") {
                unclear.insert(l.cluster);
                continue;
            }
            if (!o.parent.count(s)) throw OntologyError(where(l) + "subcategory '" + s + "' has no top category");
            auto& subs = o.cluster_subcategories[l.cluster];
            if (std::find(subs.begin(), subs.end(), s) == subs.end()) subs.push_back(s);
            if (subs.size() > 2) {
                throw OntologyError(where(l) + "cluster " + std::to_string(l.cluster) +
                                    " mapped to more than 2 subcategories");
            }
        }
    }
    for (int c : known) {
        if (unclear.count(c) && !o.cluster_subcategories.count(c)) {
            o.unclear.push_back(c);
        } else if (!o.cluster_subcategories.count(c)) {
            o.unassigned.push_back(c);
        }
    }
    return o;
}

Partition split_cluster(const CoClickGraph& g, const Partition& p, int cluster, uint64_t seed) {
    if (p.size() != g.node_count()) throw std::invalid_argument("partition size differs from node count");
    std::vector<uint32_t> members;
    std::vector<int> local(g.node_count(), -1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == cluster) {
            local[i] = static_cast<int>(members.size());
            members.push_back(static_cast<uint32_t>(i));
        }
    }
    if (members.empty()) throw std::invalid_argument("cluster " + std::to_string(cluster) + " has no members");
    std::vector<std::string> labels;
    std::vector<std::tuple<uint32_t, uint32_t, double>> edges;
    for (uint32_t i : members) {
        labels.push_back(g.label(i));
        for (const auto& [j, w] : g.neighbors(i)) {
            if (local[j] >= 0 && i < j) edges.emplace_back(local[i], local[j], w);
        }
    }
    const CoClickGraph sub(std::move(labels), edges);
    LouvainConfig cfg;
    cfg.seed = seed;
    const LouvainResult r = louvain(sub, cfg);
    const int next = *std::max_element(p.begin(), p.end()) + 1;
    Partition out = p;
    for (std::size_t k = 0; k < members.size(); ++k) out[members[k]] = next + r.partition[k];
    return out;
}

void write_partition(std::ostream& out, const CoClickGraph& g, const Partition& p) {
    write_csv_row(out, {"url", "cluster_id"});
    for (std::size_t i = 0; i < g.node_count(); ++i) write_csv_row(out, {g.label(i), std::to_string(p[i])});
}

std::map<std::string, int> read_partition(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t url = t.require_column("url");
    const std::size_t id = t.require_column("cluster_id");
    std::map<std::string, int> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        try {
            out[t.rows[r].at(url)] = std::stoi(t.rows[r].at(id));
        } catch (const std::exception&) {
            throw CsvError("bad partition row", t.lines[r]);
        }
    }
    return out;
}

nlohmann::json to_json(const std::vector<ClusterDigest>& digest) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ClusterDigest& d : digest) {
        nlohmann::json urls = nlohmann::json::array();
        for (std::size_t k = 0; k < d.top_urls.size(); ++k) {
            urls.push_back({{"url", d.top_urls[k].first},
                            {"clicks", d.top_url_clicks[k].second},
                            {"share_percent", d.top_urls[k].second}});
        }
        nlohmann::json qs = nlohmann::json::array();
        for (const auto& [q, n] : d.top_queries) qs.push_back({{"query", q}, {"clicks", n}});
        arr.push_back({{"cluster", d.cluster},
                       {"url_count", d.url_count},
                       {"clicks", d.clicks},
                       {"top_urls", urls},
                       {"top_queries", qs},
                       {"sample", d.sample}});
    }
    return arr;
}

void write_ontology(std::ostream& out, const Ontology& o) {
    write_csv_row(out, {"cluster_id", "subcategory", "top_category"});
    for (const auto& [c, subs] : o.cluster_subcategories) {
        for (const std::string& s : subs) write_csv_row(out, {std::to_string(c), s, o.parent.at(s)});
    }
    for (int c : o.unclear) write_csv_row(out, {std::to_string(c), "unclear", ""});
    for (int c : o.unassigned) write_csv_row(out, {std::to_string(c), "unassigned", ""});
}

}  // namespace intentscope
