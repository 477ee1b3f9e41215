#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "intentscope/annotations.hpp"
#include "intentscope/log_model.hpp"
#include "intentscope/qc_graph.hpp"

namespace intentscope {

struct UrlClicks {
    std::unordered_set<std::string> users;
    uint64_t clicks = 0;
    std::map<std::string, uint64_t> queries;  // query -> clicks on this URL
};

/// Click totals per URL. Only URLs passing `accept` are kept, which bounds
/// memory on large logs.
class ClickCollector {
public:
    explicit ClickCollector(std::vector<std::string> topic_substrings = {"vaccin", "vax"});
    void observe(const LogEvent& e);
    const std::map<std::string, UrlClicks>& urls() const { return urls_; }
    bool topical(const std::string& url) const;

private:
    std::vector<std::string> substrings_;
    std::map<std::string, UrlClicks> urls_;
};

struct UrlFilter {
    std::vector<std::string> topic_substrings{"vaccin", "vax"};
    /// Internal and advertising links.
    std::vector<std::string> excluded_substrings{"bing.com/", "doubleclick", "/aclk", "googleadservices"};
    std::size_t min_users = 5;
};

/// Topical URLs clicked by at least min_users distinct users, minus intent URLs.
std::vector<std::string> filter_urls(const std::map<std::string, UrlClicks>& clicks, const LabelStore& labels,
                                     const UrlFilter& filter = {});

/// Co-click graph over `urls` from the collected query clicks.
CoClickGraph coclick_from_clicks(const std::map<std::string, UrlClicks>& clicks, const std::vector<std::string>& urls,
                                 CoClickRule rule = CoClickRule::min);

struct LouvainConfig {
    double resolution = 1.0;
    std::size_t band_lo = 100;
    std::size_t band_hi = 500;
    /// Independent seeded runs; the highest-modularity partition wins.
    int restarts = 1;
    uint64_t seed = 1;
};

void validate(const LouvainConfig& cfg);

/// community[i] for every node; ids are 0.. in order of first appearance.
using Partition = std::vector<int>;

/// Resolution-scaled modularity. Zero for a graph without edges.
double modularity(const CoClickGraph& g, const Partition& p, double resolution = 1.0);

struct LouvainResult {
    Partition partition;
    double modularity = 0.0;
    int levels = 0;
    /// Modularity after each aggregation level.
    std::vector<double> level_modularity;
};

LouvainResult louvain(const CoClickGraph& g, const LouvainConfig& cfg = {});

/// Renumbers communities by first appearance.
Partition canonical_partition(const Partition& p);
std::vector<std::size_t> community_sizes(const Partition& p);

struct ResolutionTuning {
    double best = 1.0;
    std::vector<std::pair<double, std::size_t>> in_band;  // (gamma, clusters within band)
    LouvainResult partition;
};

/// Picks the resolution with the most in-band clusters; ties go to the smaller value.
ResolutionTuning tune_resolution(const CoClickGraph& g, const LouvainConfig& base, std::vector<double> grid);

struct ClusterDigest {
    int cluster = 0;
    std::size_t url_count = 0;
    uint64_t clicks = 0;
    std::vector<std::pair<std::string, double>> top_urls;     // share in percent
    std::vector<std::pair<std::string, uint64_t>> top_queries;
    std::vector<std::pair<std::string, uint64_t>> top_url_clicks;
    std::vector<std::string> sample;
};

std::vector<ClusterDigest> cluster_digest(const CoClickGraph& g, const Partition& p,
                                          const std::map<std::string, UrlClicks>& clicks, std::size_t top_k = 4,
                                          std::size_t sample_size = 30, uint64_t seed = 1);

struct OntologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Ontology {
    std::map<std::string, std::vector<std::string>> categories;  // top -> subcategories
    std::map<std::string, std::string> parent;                   // subcategory -> top
    std::map<int, std::vector<std::string>> cluster_subcategories;
    std::vector<int> unassigned;
    std::vector<int> unclear;
};

struct ClusterLabelRow {
    int cluster = 0;
    std::vector<std::string> subcategories;
    std::size_t line = 0;
};

/// CSV cluster_id,subcategory[,subcategory2]. "unclear" marks a cluster for re-splitting.
std::vector<ClusterLabelRow> read_cluster_labels(std::istream& in);
/// CSV subcategory,top_category.
std::map<std::string, std::string> read_subcategory_parents(std::istream& in);

Ontology assemble_ontology(const std::vector<int>& clusters, const std::vector<ClusterLabelRow>& labels,
                           const std::map<std::string, std::string>& parents);

/// Re-runs Louvain at resolution 1 inside one cluster; new communities get fresh ids.
Partition split_cluster(const CoClickGraph& g, const Partition& p, int cluster, uint64_t seed = 1);

void write_partition(std::ostream& out, const CoClickGraph& g, const Partition& p);
std::map<std::string, int> read_partition(std::istream& in);
nlohmann::json to_json(const std::vector<ClusterDigest>& digest);
void write_ontology(std::ostream& out, const Ontology& o);

}  // namespace intentscope
