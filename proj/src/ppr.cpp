#include "intentscope/ppr.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "intentscope/csv.hpp"

namespace intentscope {

void validate(const PprConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("PPR alpha must lie in (0,1)");
    if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("PPR tolerance must be positive");
    if (cfg.max_iterations < 1) throw std::invalid_argument("PPR max_iterations must be positive");
}

namespace {

std::string join_missing(const std::vector<std::string>& missing) {
    std::string s;
    for (const auto& m : missing) s += (s.empty() ? "" : ", ") + ("'" + m + "'");
    return s;
}

}  // namespace

MissingSeedsError::MissingSeedsError(std::vector<std::string> m) :
    std::runtime_error("seed queries not in graph: " + join_missing(m)), missing(std::move(m)) {}

PprScores personalized_pagerank(const QueryClickGraph& g, const std::vector<uint32_t>& seeds, const PprConfig& cfg) {
    validate(cfg);
    if (seeds.empty()) throw std::invalid_argument("personalized PageRank needs at least one seed");
    const std::size_t n = g.node_count();
    std::vector<uint32_t> s = seeds;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (uint32_t id : s) {
        if (id >= n) throw std::invalid_argument("seed node id out of range");
    }

    PprScores out;
    out.seeds = s;
    const double seed_mass = 1.0 / static_cast<double>(s.size());
    std::vector<double> x(n, 0.0), next(n);
    for (uint32_t id : s) x[id] = seed_mass;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        double dangling = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            if (x[u] == 0.0) continue;
            const uint64_t total = g.out_weight(u);
            if (total == 0) {
                dangling += x[u];
                continue;
            }
            const double scale = cfg.alpha * x[u] / static_cast<double>(total);
            for (const GraphEdge& e : g.out_edges(u)) next[e.target] += scale * static_cast<double>(e.weight);
        }
        const double back = ((1.0 - cfg.alpha) + cfg.alpha * dangling) * seed_mass;
        for (uint32_t id : s) next[id] += back;
        double diff = 0.0;
        for (std::size_t u = 0; u < n; ++u) diff += std::abs(next[u] - x[u]);
        x.swap(next);
        out.iterations = it;
        out.residual = diff;
        if (diff < cfg.tolerance) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged) warn("personalized PageRank did not converge on '" + g.scope() + "'");
    out.score = std::move(x);
    return out;
}

PprScores personalized_pagerank(const QueryClickGraph& g, const std::vector<std::string>& seed_queries,
                                const PprConfig& cfg) {
    std::vector<uint32_t> ids;
    std::vector<std::string> missing;
    for (const std::string& q : seed_queries) {
        if (auto id = g.find(NodeKind::query, q)) {
            ids.push_back(*id);
        } else {
            missing.push_back(q);
        }
    }
    if (!missing.empty()) throw MissingSeedsError(std::move(missing));
    return personalized_pagerank(g, ids, cfg);
}

std::vector<uint32_t> seed_nodes(const QueryClickGraph& g, const SeedLexicon& lex) {
    std::vector<uint32_t> out;
    for (uint32_t i = 0; i < g.node_count(); ++i) {
        if (g.node(i).kind == NodeKind::query && is_seed_query(g.node(i).text, lex)) out.push_back(i);
    }
    return out;
}

void rank_items(std::vector<ScoredItem>& items) {
    std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.text < b.text;
    });
}

std::vector<ScoredItem> rank_urls(const QueryClickGraph& g, const PprScores& scores) {
    std::vector<ScoredItem> out;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.node(i).kind == NodeKind::url) out.push_back({g.node(i).text, scores.score[i]});
    }
    rank_items(out);
    return out;
}

std::vector<ScoredItem> rank_queries(const QueryClickGraph& g, const PprScores& scores, const SeedLexicon& lex) {
    std::vector<ScoredItem> out;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        const GraphNode& node = g.node(i);
        if (node.kind == NodeKind::query && !is_seed_query(node.text, lex)) out.push_back({node.text, scores.score[i]});
    }
    rank_items(out);
    return out;
}

std::size_t Candidate::best_rank() const {
    std::size_t best = SIZE_MAX;
    for (const RegionRank& r : ranks) best = std::min(best, r.rank);
    return best;
}

double Candidate::best_score() const {
    double best = 0.0;
    for (const RegionRank& r : ranks) best = std::max(best, r.score);
    return best;
}

std::vector<Candidate> select_candidates(const std::map<std::string, std::vector<ScoredItem>>& ranked_by_region,
                                         std::size_t top_n) {
    std::map<std::string, Candidate> merged;
    for (const auto& [region, ranked] : ranked_by_region) {
        const std::size_t take = std::min(top_n, ranked.size());
        for (std::size_t k = 0; k < take; ++k) {
            Candidate& c = merged[ranked[k].text];
            c.url = ranked[k].text;
            c.ranks.push_back({region, k + 1, ranked[k].score});
        }
    }
    std::vector<Candidate> out;
    out.reserve(merged.size());
    for (auto& [url, c] : merged) out.push_back(std::move(c));
    std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.best_rank() != b.best_rank()) return a.best_rank() < b.best_rank();
        if (a.best_score() != b.best_score()) return a.best_score() > b.best_score();
        return a.url < b.url;
    });
    return out;
}

namespace {

struct UrlParts {
    std::string host;
    std::vector<std::string> segments;
};

UrlParts split_url(std::string_view url) {
    UrlParts p;
    const std::size_t scheme = url.find("://");
    std::string_view rest = scheme == std::string_view::npos ? url : url.substr(scheme + 3);
    rest = rest.substr(0, rest.find_first_of("?#"));
    const std::size_t slash = rest.find('/');
    p.host = to_lower_ascii(rest.substr(0, slash));
    if (starts_with(p.host, "www.")) p.host.erase(0, 4);
    if (slash != std::string_view::npos) {
        for (std::string& seg : split(rest.substr(slash + 1), '/')) {
            if (!seg.empty()) p.segments.push_back(std::move(seg));
        }
    }
    return p;
}

}  // namespace

std::vector<std::string> pattern_families(const std::vector<std::string>& urls, std::size_t min_group) {
    std::vector<UrlParts> parts;
    parts.reserve(urls.size());
    std::map<std::pair<std::string, std::size_t>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < urls.size(); ++i) {
        parts.push_back(split_url(urls[i]));
        groups[{parts.back().host, parts.back().segments.size()}].push_back(i);
    }
    std::vector<std::string> family(urls.size());
    for (const auto& [key, members] : groups) {
        const std::size_t depth = key.second;
        std::vector<bool> wild(depth, false);
        if (members.size() >= min_group) {
            for (std::size_t pos = 0; pos < depth; ++pos) {
                std::set<std::string> distinct;
                for (std::size_t m : members) distinct.insert(parts[m].segments[pos]);
                wild[pos] = distinct.size() * 2 > members.size();
            }
        }
        for (std::size_t m : members) {
            if (members.size() < min_group) {
                family[m] = urls[m];
                continue;
            }
            std::string f = key.first;
            for (std::size_t pos = 0; pos < depth; ++pos) f += "/" + (wild[pos] ? std::string("*") : parts[m].segments[pos]);
            family[m] = std::move(f);
        }
    }
    return family;
}

std::vector<Candidate> dedup_by_pattern(const std::vector<Candidate>& candidates, std::size_t max_per_pattern,
                                        std::size_t min_group) {
    std::vector<std::string> urls;
    urls.reserve(candidates.size());
    for (const Candidate& c : candidates) urls.push_back(c.url);
    const std::vector<std::string> family = pattern_families(urls, min_group);
    std::map<std::string, std::size_t> kept;
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (kept[family[i]]++ < max_per_pattern) out.push_back(candidates[i]);
    }
    return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        prev.swap(cur);
    }
    return prev[b.size()];
}

std::vector<Candidate> redirect_filter(const std::vector<Candidate>& candidates,
                                       const std::unordered_map<std::string, std::string>& redirect_map,
                                       double max_ratio) {
    std::vector<Candidate> out;
    for (const Candidate& c : candidates) {
        auto it = redirect_map.find(c.url);
        if (it == redirect_map.end() || c.url.empty()) {
            out.push_back(c);
            continue;
        }
        const double ratio = static_cast<double>(levenshtein(c.url, it->second)) / static_cast<double>(c.url.size());
        if (ratio <= max_ratio) out.push_back(c);
    }
    return out;
}

std::unordered_map<std::string, std::string> read_redirect_map(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t url = t.require_column("url");
    const std::size_t resolved = t.require_column("resolved_url");
    std::unordered_map<std::string, std::string> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() <= std::max(url, resolved)) throw CsvError("short redirect row", t.lines[r]);
        out[row[url]] = row[resolved];
    }
    return out;
}

void write_candidates(std::ostream& out, const std::vector<Candidate>& candidates) {
    write_csv_row(out, {"url", "region", "rank", "score"});
    for (const Candidate& c : candidates) {
        for (const RegionRank& r : c.ranks) {
            write_csv_row(out, {c.url, r.region, std::to_string(r.rank), format_double(r.score)});
        }
    }
}

std::vector<Candidate> read_candidates(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t url = t.require_column("url");
    const std::size_t region = t.require_column("region");
    const std::size_t rank = t.require_column("rank");
    const std::size_t score = t.require_column("score");
    std::vector<Candidate> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size()) throw CsvError("short candidate row", t.lines[r]);
        if (out.empty() || out.back().url != row[url]) out.push_back(Candidate{row[url], {}});
        out.back().ranks.push_back({row[region], std::stoul(row[rank]), std::stod(row[score])});
    }
    return out;
}

}  // namespace intentscope
