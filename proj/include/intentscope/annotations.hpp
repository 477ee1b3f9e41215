#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "intentscope/common.hpp"
#include "intentscope/lexicon.hpp"

namespace intentscope {

enum class Verdict { highly_likely, likely, ambiguous, unlikely, missing_page };

std::string_view verdict_name(Verdict v);
Verdict parse_verdict(std::string_view s);

struct AnnotationRecord {
    std::string url;
    std::string annotator_id;
    Verdict verdict = Verdict::ambiguous;
};

enum class ConsensusLabel { positive, negative, undecided };

struct ConsensusResult {
    ConsensusLabel label = ConsensusLabel::undecided;
    /// Undecided but another annotator could settle it.
    bool needs_fourth = false;
    /// Enough votes on both sides; a human should look.
    bool conflicted = false;
    int positives = 0;
    int negatives = 0;
    int abstentions = 0;
};

/// Records for a single URL. Positive needs three positive verdicts,
/// negative needs two of {ambiguous, unlikely}; missing_page abstains.
/// Throws std::invalid_argument for fewer than three records or a repeated annotator.
ConsensusResult consensus(std::span<const AnnotationRecord> records);

/// Groups records by URL.
std::map<std::string, ConsensusResult> consensus_all(std::span<const AnnotationRecord> records);

enum class Provenance { consensus, rule, gnn, seed };
std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view s);

struct UrlLabel {
    Polarity polarity = Polarity::positive;
    Provenance provenance = Provenance::consensus;
};

class LabelStore {
public:
    /// Replaces any previous label of the URL.
    void set_url(const std::string& url, Polarity polarity, Provenance provenance);
    /// Adds a GNN-expanded positive; returns false if the URL already has a label.
    bool add_expanded(const std::string& url);
    void add_seed_query(const std::string& query) { seed_queries_.insert(query); }

    std::optional<UrlLabel> get(std::string_view url) const;
    bool is_positive(std::string_view url) const;
    const std::map<std::string, UrlLabel, std::less<>>& urls() const { return urls_; }
    const std::set<std::string>& seed_queries() const { return seed_queries_; }
    std::size_t count(Polarity p) const;
    std::size_t count(Provenance p) const;

private:
    std::map<std::string, UrlLabel, std::less<>> urls_;
    std::set<std::string> seed_queries_;
};

struct LabelConflict {
    std::string url;
    Polarity rule = Polarity::positive;
    Polarity consensus = Polarity::negative;
};

/// Rule labels for a URL list; unmatched URLs are absent.
std::map<std::string, Polarity> rule_labels(std::span<const std::string> urls, std::span<const UrlLabelRule> rules);

/// Merges consensus and rule labels. Consensus decides when both exist;
/// disagreements are warned about and returned through `conflicts`.
LabelStore assemble_labels(const std::map<std::string, ConsensusResult>& consensus_results,
                           const std::map<std::string, Polarity>& rule_labels,
                           std::span<const std::string> seed_queries, std::vector<LabelConflict>* conflicts = nullptr);

/// CSV url,annotator_id,verdict.
std::vector<AnnotationRecord> read_annotations(std::istream& in);
void write_annotations(std::ostream& out, std::span<const AnnotationRecord> records);
/// CSV url,label,provenance.
void write_labels(std::ostream& out, const LabelStore& store);
LabelStore read_labels(std::istream& in);

/// Simulated annotation rounds for synthetic worlds: three annotators per URL,
/// more (up to `max_annotators`) while consensus asks for another.
struct AnnotatorModel {
    /// Probability that an annotator flips the true polarity.
    double error_rate = 0.1;
    double missing_page_rate = 0.02;
    int pool_size = 30;
    int max_annotators = 5;
};
std::vector<AnnotationRecord> simulate_annotations(std::span<const std::string> urls,
                                                   const std::map<std::string, bool>& url_intent,
                                                   const AnnotatorModel& model, uint64_t seed);

}  // namespace intentscope
