#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "intentscope/qc_graph.hpp"

namespace intentscope {

struct PprConfig {
    /// Continuation probability.
    double alpha = 0.85;
    /// L1 change between iterates that counts as converged.
    double tolerance = 1e-10;
    int max_iterations = 1000;
    std::size_t top_n = 100;
};

void validate(const PprConfig& cfg);

struct PprScores {
    std::vector<double> score;
    std::vector<uint32_t> seeds;
    int iterations = 0;
    bool converged = false;
    /// L1 change of the last iteration.
    double residual = 0.0;
};

struct MissingSeedsError : std::runtime_error {
    explicit MissingSeedsError(std::vector<std::string> missing);
    std::vector<std::string> missing;
};

/// Power iteration of x <- (1-alpha) e_S + alpha x P. P follows out-edge
/// weights; mass at nodes without out-edges returns to the seeds.
PprScores personalized_pagerank(const QueryClickGraph& g, const std::vector<uint32_t>& seeds, const PprConfig& cfg);
/// Seeds given as query texts. Throws MissingSeedsError listing every absent seed.
PprScores personalized_pagerank(const QueryClickGraph& g, const std::vector<std::string>& seed_queries,
                                const PprConfig& cfg);

/// Query nodes of g that pass is_seed_query.
std::vector<uint32_t> seed_nodes(const QueryClickGraph& g, const SeedLexicon& lex);

struct ScoredItem {
    std::string text;
    double score = 0.0;
};

/// Items sorted by score descending, ties by text ascending.
void rank_items(std::vector<ScoredItem>& items);

/// URL nodes of g ranked by score.
std::vector<ScoredItem> rank_urls(const QueryClickGraph& g, const PprScores& scores);
/// Non-seed query nodes ranked by score, for manual review.
std::vector<ScoredItem> rank_queries(const QueryClickGraph& g, const PprScores& scores, const SeedLexicon& lex);

struct RegionRank {
    std::string region;
    std::size_t rank = 0;  // 1-based
    double score = 0.0;
};

struct Candidate {
    std::string url;
    /// Every region whose top list contains the URL, in region order.
    std::vector<RegionRank> ranks;
    std::size_t best_rank() const;
    double best_score() const;
};

/// Union of per-region top-n lists. Output is ordered by best rank, then
/// best score descending, then URL.
std::vector<Candidate> select_candidates(const std::map<std::string, std::vector<ScoredItem>>& ranked_by_region,
                                         std::size_t top_n);

/// Pattern family of each URL. Host plus path shape; path positions whose
/// values vary across most members of a large enough group become wildcards.
std::vector<std::string> pattern_families(const std::vector<std::string>& urls, std::size_t min_group = 3);

/// Keeps the first `max_per_pattern` candidates of each family, preserving order.
std::vector<Candidate> dedup_by_pattern(const std::vector<Candidate>& candidates, std::size_t max_per_pattern = 5,
                                        std::size_t min_group = 3);

std::size_t levenshtein(std::string_view a, std::string_view b);

/// Keeps a URL iff edit distance to its redirect target / its length <= max_ratio.
std::vector<Candidate> redirect_filter(const std::vector<Candidate>& candidates,
                                       const std::unordered_map<std::string, std::string>& redirect_map,
                                       double max_ratio = 0.2);

/// CSV url,resolved_url.
std::unordered_map<std::string, std::string> read_redirect_map(std::istream& in);
/// CSV url,region,rank,score; one row per region membership.
void write_candidates(std::ostream& out, const std::vector<Candidate>& candidates);
std::vector<Candidate> read_candidates(std::istream& in);

}  // namespace intentscope
