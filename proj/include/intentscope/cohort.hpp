#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "intentscope/rates.hpp"

namespace intentscope {

struct CohortSpec {
    /// Early adopters show first intent strictly before this day.
    Day early_cutoff;
    /// Holdouts show first intent on or after this day.
    Day holdout_start;
    bool strict_evidence = true;
};

void validate(const CohortSpec& spec);

struct Cohorts {
    std::vector<std::string> holdouts;
    std::vector<std::string> early_adopters;
};

/// Both cohorts require activity in every month of the window.
Cohorts identify_cohorts(const std::map<std::string, UserIntent>& intents, std::span<const UserAssignment> users,
                         const CohortSpec& spec);

struct MatchConstraint {
    Granularity region = Granularity::county;
    double max_query_difference = 10.0;
};

struct MatchProfile {
    std::string user_id;
    std::optional<std::string> region;
    double avg_monthly_queries = 0.0;
};

MatchProfile profile_of(const UserAssignment& u, const MatchConstraint& c);

/// match_left[i] is the right vertex matched to left vertex i, or -1.
std::vector<int> hopcroft_karp(std::size_t left, std::size_t right, const std::vector<std::vector<int>>& adj);

struct MatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (holdout index, adopter index)
    std::size_t holdouts = 0;
    std::size_t adopters = 0;
    std::size_t valid_edges = 0;
    double match_rate() const { return holdouts ? static_cast<double>(pairs.size()) / static_cast<double>(holdouts) : 0.0; }
};

bool valid_pair(const MatchProfile& a, const MatchProfile& b, const MatchConstraint& c);

/// Maximum matching on the validity graph. Edges are found by bucketing on
/// (region, query band) instead of testing every pair.
MatchResult match(std::span<const MatchProfile> holdouts, std::span<const MatchProfile> adopters,
                  const MatchConstraint& c);

struct WeightedClick {
    double weight = 1.0;
    bool positive = false;
    uint32_t user = 0;
};

struct RatioUndefined : std::domain_error {
    RatioUndefined(const std::string& what, std::size_t relevant, std::size_t positive) :
        std::domain_error(what), relevant(relevant), positive(positive) {}
    std::size_t relevant;
    std::size_t positive;
};

struct RatioResult {
    double p1 = 0.0;
    double p2 = 0.0;
    double ratio = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    /// Bootstrap replicates dropped because the second group had no positive click.
    std::size_t dropped = 0;
};

/// Weighted positive-click probability of a group.
double weighted_probability(std::span<const WeightedClick> clicks);

/// Ratio of weighted probabilities with a percentile bootstrap over clicks.
/// Throws RatioUndefined when the second probability is zero.
RatioResult click_ratio(std::span<const WeightedClick> g1, std::span<const WeightedClick> g2, std::size_t n_boot = 1000,
                        uint64_t seed = 1, double level = 0.95);

/// Cross-check: weighted mean over users of each user's positive fraction.
double per_user_probability(std::span<const WeightedClick> clicks);

/// Click tagged with category membership (bit s set = category s).
struct CategoryClick {
    double weight = 1.0;
    uint64_t mask = 0;
};

struct CategoryRatio {
    int category = 0;
    bool defined = false;
    std::string reason;
    RatioResult result;
};

/// One click_ratio per category, all sharing the same bootstrap resamples.
std::vector<CategoryRatio> category_ratios(std::span<const CategoryClick> g1, std::span<const CategoryClick> g2,
                                           int categories, std::size_t n_boot = 1000, uint64_t seed = 1);

struct LogitObservation {
    bool y = false;
    bool v = false;
    int32_t day = 0;
};

struct LogitFit {
    double beta = 0.0;
    double beta_se = 0.0;
    /// Intercept, or the reference-day effect when day effects are on.
    double intercept = 0.0;
    /// (day, effect relative to the reference day); reference excluded.
    std::vector<std::pair<int32_t, double>> day_effects;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
    bool separated = false;
    std::size_t n = 0;
};

/// Logistic regression of y on v with an intercept or day fixed effects, by
/// damped Newton steps until the mean-loglik gradient norm is <= tolerance.
LogitFit fit_logit(std::span<const LogitObservation> obs, bool with_day_effects, double tolerance = 1e-8,
                   int max_iterations = 200);

struct DynamicsClick {
    int32_t offset = 0;  // click day minus first-intent day
    double weight = 1.0;
    bool relevant = false;
    uint64_t mask = 0;
};

struct DynamicsOptions {
    int window = 3;
    int min_offset = -14;
    int max_offset = 7;
    std::size_t n_boot = 1000;
    uint64_t seed = 1;
};

struct OffsetRatio {
    int category = 0;
    int offset = 0;
    bool conditioned = false;
    CategoryRatio ratio;
    /// Share of relevant click weight at this offset, split evenly across a click's categories.
    double share = 0.0;
};

struct WindowDynamics {
    std::vector<CategoryRatio> in_window;  // in-window vs out-of-window, relevant clicks only
    std::vector<OffsetRatio> by_offset;    // raw and conditioned, vs clicks outside the offset range
};

WindowDynamics window_dynamics(std::span<const DynamicsClick> clicks, int categories,
                               const DynamicsOptions& options = {});

using TrustTable = std::map<std::string, double>;
TrustTable read_trust_table(std::istream& in);
/// Lower-cased host without a leading "www.".
std::string news_domain(std::string_view url);

struct NewsClick {
    std::string domain;
    double weight = 1.0;
    uint32_t user = 0;
};

struct DomainRatio {
    std::string domain;
    double trust = 0.0;
    double share = 0.0;
    bool defined = false;
    RatioResult result;
};

struct NewsTrustResult {
    bool defined = false;
    std::string reason;
    RatioResult overall;
    std::vector<DomainRatio> domains;
    double per_user_ratio = 0.0;
};

NewsTrustResult news_trust_ratio(std::span<const NewsClick> g1, std::span<const NewsClick> g2, const TrustTable& trust,
                                 double threshold = 60.0, double min_share = 1e-6, std::size_t n_boot = 1000,
                                 uint64_t seed = 1);

nlohmann::json to_json(const RatioResult& r);
nlohmann::json to_json(const LogitFit& f);

}  // namespace intentscope
