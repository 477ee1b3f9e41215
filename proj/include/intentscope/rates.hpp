#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "intentscope/annotations.hpp"
#include "intentscope/lexicon.hpp"
#include "intentscope/log_model.hpp"
#include "intentscope/stats.hpp"

namespace intentscope {

/// Earliest evidence of intent for one user.
struct UserIntent {
    /// Any positive evidence, including model-expanded URLs.
    std::optional<Day> first_any;
    /// Seed queries and manually or rule-labeled URLs only.
    std::optional<Day> first_strict;
};

/// Streaming intent detector. A query is evidence if it passes the seed rules
/// or is a stored seed query; a click is evidence if its URL carries a positive
/// label, or has no label and matches a positive rule.
class IntentDetector {
public:
    IntentDetector(const LabelStore& labels, const SeedLexicon& lex, std::vector<UrlLabelRule> rules = {});
    void observe(const LogEvent& e);
    const std::map<std::string, UserIntent>& users() const { return users_; }

private:
    enum class Evidence { none, strict, expanded };
    Evidence query_evidence(const std::string& q);
    Evidence click_evidence(const std::string& url) const;

    const LabelStore& labels_;
    const SeedLexicon& lex_;
    std::vector<UrlLabelRule> rules_;
    std::unordered_map<std::string, bool> query_cache_;
    std::map<std::string, UserIntent> users_;
};

std::map<std::string, UserIntent> detect_intent_users(std::span<const LogEvent> events, const LabelStore& labels,
                                                      const SeedLexicon& lex,
                                                      std::span<const UrlLabelRule> rules = {});

struct ActivityOptions {
    int min_monthly_queries = 30;
    int min_home_queries = 10;
    double min_home_share = 0.25;
};

struct UserAssignment {
    std::string user_id;
    std::vector<bool> active;  // per month of the window
    int active_months = 0;
    std::array<std::optional<std::string>, 3> home;  // indexed by Granularity
    std::size_t queries = 0;

    const std::optional<std::string>& home_at(Granularity g) const { return home[static_cast<std::size_t>(g)]; }
};

/// Streaming per-user activity and home-region accumulation. Events outside
/// the window are ignored. The home share is taken over queries whose region
/// is known at that granularity; ties in the mode go to the smaller code.
class ActivityTracker {
public:
    ActivityTracker(MonthWindow window, ActivityOptions options = {});
    void observe(const LogEvent& e);
    /// Assignments sorted by user id.
    std::vector<UserAssignment> finish() const;

private:
    struct Acc {
        std::vector<int> month_counts;
        std::array<std::vector<std::pair<std::string, int>>, 3> regions;
        std::size_t queries = 0;
    };
    MonthWindow window_;
    ActivityOptions options_;
    std::unordered_map<std::string, Acc> users_;
};

std::vector<UserAssignment> assign_users(std::span<const LogEvent> events, MonthWindow window,
                                         const ActivityOptions& options = {});

struct RegionStats {
    std::string region_id;
    int64_t population = 0;
    /// N(b,z): mean monthly active users with home z.
    double active_users = 0.0;
    /// N(v̂,z): mean monthly active users with home z and detected intent.
    double intent_users = 0.0;
    double coverage = 0.0;
    double rate = 0.0;
    /// Intent users over population, with no coverage correction.
    double uncorrected_rate = 0.0;
    bool coverage_above_one = false;
};

struct ExcludedRegion {
    std::string region_id;
    std::string reason;
};

struct RegionStatsResult {
    std::vector<RegionStats> included;
    std::vector<ExcludedRegion> excluded;
};

struct RateOptions {
    double privacy_floor = 50.0;
    /// Use only seed-query and manual-label evidence.
    bool strict_evidence = false;
};

RegionStatsResult region_stats(std::span<const UserAssignment> users, const std::map<std::string, UserIntent>& intents,
                               const RegionTable& regions, Granularity granularity, const RateOptions& options = {});

/// Population-weighted mean rate. Throws on an empty set.
double aggregate(std::span<const RegionStats> regions);
double aggregate(std::span<const double> populations, std::span<const double> rates);

struct Correlation {
    double r = 0.0;
    double lo = -1.0;
    double hi = 1.0;
    std::size_t n = 0;
    /// Kish effective sample size used for the interval.
    double n_eff = 0.0;
};

/// Weighted Pearson with a Fisher-transform interval.
Correlation weighted_pearson(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                             double level = 0.95);

struct QuartileComparison {
    std::string key;
    double bottom_cut = 0.0;
    double top_cut = 0.0;
    std::size_t bottom_regions = 0;
    std::size_t top_regions = 0;
    double bottom_rate = 0.0;
    double top_rate = 0.0;
    /// 100 * (top / bottom - 1)
    double percent_difference = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// Cutoffs come from every region in `all`; rates from `stats` (already privacy
/// filtered). Bootstrap resamples regions, then intent counts binomially.
QuartileComparison quartile_compare(std::span<const RegionStats> stats, const RegionTable& all, const std::string& key,
                                    std::size_t n_boot = 1000, uint64_t seed = 1);

struct DailySeries {
    Day start;
    std::vector<double> values;
    Day day(std::size_t i) const { return start + static_cast<int32_t>(i); }
};

/// Daily new first-intent rate over the window, combined across the included
/// regions with population weights. Not smoothed.
DailySeries intent_time_series(const std::map<std::string, UserIntent>& intents,
                               std::span<const UserAssignment> users, std::span<const RegionStats> included,
                               Granularity granularity, MonthWindow window, bool strict_evidence = false);

enum class Padding {
    /// Early days average over the days available.
    partial,
    /// Days before the series count as zero, which preserves total mass.
    zero
};
std::vector<double> trailing_mean(std::span<const double> x, int width = 7, Padding padding = Padding::partial);

/// Values of `series` on the days [start, start + length); missing days are zero.
std::vector<double> series_on(const std::vector<std::pair<Day, double>>& series, Day start, std::size_t length);

struct LagScan {
    std::vector<int> lags;
    /// NaN where a side is constant over the overlap.
    std::vector<double> correlation;
    int best_lag = 0;
    double best_r = 0.0;
    bool low_confidence = false;
};

/// Correlates a(t) with b(t + l) for l = 0..max_lag. Ties go to the smaller lag.
LagScan lag_scan(std::span<const double> a, std::span<const double> b, int max_lag = 21,
                 std::size_t min_overlap = 30, double confident_r = 0.5);

/// Scales to a maximum of 100. Throws when no value is positive.
std::vector<double> normalize_trend(std::span<const double> x);

struct RegionDiagnostics {
    std::string region_id;
    double tpr = 0.0;
    double fpr = 0.0;
    std::optional<double> auc;
};

/// Detection rates per region against known user intent.
std::vector<RegionDiagnostics> truth_diagnostics(const std::map<std::string, UserIntent>& intents,
                                                 std::span<const UserAssignment> users, const GroundTruth& truth,
                                                 Granularity granularity, bool strict_evidence = false);

struct BiasReport {
    std::size_t regions = 0;
    OlsFit fit;  // p̃ on the true rate
    double tpr_mean = 0.0, tpr_min = 0.0, tpr_max = 0.0;
    double fpr_mean = 0.0, fpr_min = 0.0, fpr_max = 0.0;
    double expected_slope = 0.0;
    double expected_intercept = 0.0;
    /// Regions whose p̃ sits outside FPR + (TPR - FPR) p by more than the tolerance.
    std::vector<std::string> flagged;
    double corrected_correlation = 0.0;
    double uncorrected_correlation = 0.0;
};

BiasReport bias_report(std::span<const RegionDiagnostics> diagnostics, std::span<const RegionStats> stats,
                       const std::map<std::string, double>& true_rate, double sigmas = 3.0);

void write_region_stats(std::ostream& out, const RegionStatsResult& result);
void write_series(std::ostream& out, const std::vector<std::pair<std::string, DailySeries>>& columns);
std::vector<std::pair<Day, double>> read_date_series(std::istream& in);
nlohmann::json to_json(const LagScan& scan);
nlohmann::json to_json(const BiasReport& report);
nlohmann::json to_json(const Correlation& c);
nlohmann::json to_json(const QuartileComparison& q);

}  // namespace intentscope
