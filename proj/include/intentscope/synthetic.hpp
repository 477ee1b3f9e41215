#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "intentscope/common.hpp"
#include "intentscope/log_model.hpp"

namespace intentscope {

struct SyntheticRegion {
    Region region;
    /// p(v,z): probability that an active user has intent.
    double intent_rate = 0.0;
    /// Pr(b=1|z): fraction of the population observed as active users.
    double coverage = 1.0;
};

/// A vaccine-related concern that users read about. Drives the ontology
/// and the cohort click comparisons.
struct ConcernTopic {
    std::string name;
    std::string category;
    std::vector<std::string> queries;
    std::vector<std::string> urls;
    /// Relative click weight for early-intent users and for late/never-intent users.
    double early_weight = 1.0;
    double holdout_weight = 1.0;
    /// Multiplier on the weight within window_days of a user's first intent.
    double window_multiplier = 1.0;
};

struct NewsDomain {
    std::string domain;
    double trust_score = 100.0;
};

struct SyntheticWorldConfig {
    std::vector<SyntheticRegion> regions;
    std::vector<std::string> demographic_schema;
    MonthWindow window;

    std::vector<std::string> seed_queries;
    /// Vaccine queries that do not pass the seed rules.
    std::vector<std::string> ambiguous_queries;
    /// Intent queries that carry no graph keyword (reached only via sessions).
    std::vector<std::string> portal_queries;
    /// Informational vaccine queries, clicked through to non-intent pages.
    std::vector<std::string> info_queries;
    std::vector<std::string> distractor_queries;

    /// URL templates; "{state}" and "{k}" are substituted.
    std::vector<std::string> intent_url_templates;
    std::vector<std::string> info_url_templates;
    std::vector<std::string> distractor_url_templates;
    int intent_urls_per_template = 4;
    int info_urls_per_template = 4;
    int distractor_urls_per_template = 20;

    std::vector<ConcernTopic> topics;
    std::vector<NewsDomain> news_domains;

    int min_monthly_queries = 32;
    int max_monthly_queries = 48;
    /// Extra users per region (as a share of active users) below the activity threshold.
    double light_user_share = 0.1;
    int light_min_queries = 5;
    int light_max_queries = 25;
    double home_share = 0.9;
    double missing_geo_prob = 0.02;

    /// Distribution of the first-intent month over the window; uniform if empty.
    std::vector<double> first_intent_month_weights;
    /// Probability that an intent user leaves any observable signal.
    double signal_tpr = 1.0;
    /// Probability that a user without intent issues a seed query anyway.
    double signal_fpr = 0.0;
    /// Share of observable signals expressed as a seed query (the rest are URL clicks only).
    double seed_query_share = 0.7;
    double portal_prob = 0.3;
    double repeat_intent_prob = 0.3;
    double info_query_prob = 0.04;
    double ambiguous_query_prob = 0.02;
    double topic_query_prob = 0.08;
    double news_query_prob = 0.05;
    double untrusted_share_early = 0.2;
    double untrusted_share_late = 0.338;
    int window_days = 3;
    /// Users whose first intent is on or after this day are "late".
    Day late_intent_start;
    double cross_topic_noise = 0.05;
    /// Share of intent/info URLs that redirect to their site root.
    double redirect_share = 0.05;
    int reported_lag_days = 7;
    /// Reported dates scatter uniformly by up to this many days around the lag.
    int reported_jitter_days = 2;
    /// Keep per-user truth records (large worlds may turn this off).
    bool record_users = true;
    uint64_t rng_seed = 1;
};

struct WorldArtifacts {
    GroundTruth truth;
    RegionTable regions;
    /// url -> resolved url, for every URL that redirects.
    std::vector<std::pair<std::string, std::string>> redirects;
    /// Lagged daily vaccination series, a stand-in for officially reported data.
    std::vector<std::pair<Day, double>> reported;
    std::size_t event_count = 0;
    std::size_t active_users = 0;
};

/// Throws std::invalid_argument when the config is out of range.
void validate_world(const SyntheticWorldConfig& cfg);

/// Streams events user by user, each user's events in time order.
WorldArtifacts generate_world(const SyntheticWorldConfig& cfg, const EventSink& sink);
std::pair<std::vector<LogEvent>, WorldArtifacts> generate_world(const SyntheticWorldConfig& cfg);

/// Every URL the world can emit: intent, info, distractor, topic and news pages.
struct UrlUniverse {
    std::vector<std::vector<std::string>> intent_by_state;
    std::vector<std::vector<std::string>> info_by_state;
    std::vector<std::string> distractor;
    std::vector<std::string> news;
    std::vector<std::string> states;
};
UrlUniverse build_url_universe(const SyntheticWorldConfig& cfg);

/// Fills query vocabularies, URL templates, topics and news domains.
void apply_default_vocabulary(SyntheticWorldConfig& cfg);

/// Compact description of a state/county/zcta grid world.
struct GridWorldSpec {
    int states = 3;
    int counties_per_state = 2;
    int zctas_per_county = 3;
    int64_t population_min = 20000;
    int64_t population_max = 40000;
    double coverage_min = 0.01;
    double coverage_max = 0.02;
    double rate_min = 0.2;
    double rate_max = 0.7;
    /// When set, coverage decreases as the intent rate rises.
    bool anti_correlate = true;
    /// Uniform relative jitter applied to coverage.
    double coverage_jitter = 0.0;
    uint64_t seed = 1;
};

/// Builds regions with intent rates spread over [rate_min, rate_max] and
/// demographics correlated with the rate.
std::vector<SyntheticRegion> make_grid_regions(const GridWorldSpec& spec, std::vector<std::string>& schema);

}  // namespace intentscope
