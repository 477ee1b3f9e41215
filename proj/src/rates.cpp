#include "intentscope/rates.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "intentscope/csv.hpp"

namespace intentscope {

IntentDetector::IntentDetector(const LabelStore& labels, const SeedLexicon& lex, std::vector<UrlLabelRule> rules) :
    labels_(labels), lex_(lex), rules_(std::move(rules)) {}

IntentDetector::Evidence IntentDetector::query_evidence(const std::string& q) {
    auto it = query_cache_.find(q);
    if (it == query_cache_.end()) {
        it = query_cache_.emplace(q, labels_.seed_queries().count(q) > 0 || is_seed_query(q, lex_)).first;
    }
    return it->second ? Evidence::strict : Evidence::none;
}

IntentDetector::Evidence IntentDetector::click_evidence(const std::string& url) const {
    if (auto l = labels_.get(url)) {
        if (l->polarity != Polarity::positive) return Evidence::none;
        return l->provenance == Provenance::gnn ? Evidence::expanded : Evidence::strict;
    }
    if (auto p = apply_url_rules(url, rules_); p && *p == Polarity::positive) return Evidence::strict;
    return Evidence::none;
}

void IntentDetector::observe(const LogEvent& e) {
    bool strict = query_evidence(e.query) == Evidence::strict;
    bool any = strict;
    for (const std::string& c : e.clicks) {
        const Evidence ev = click_evidence(c);
        any = any || ev != Evidence::none;
        strict = strict || ev == Evidence::strict;
    }
    if (!any) return;
    UserIntent& u = users_[e.user_id];
    if (!u.first_any || e.ts.day < *u.first_any) u.first_any = e.ts.day;
    if (strict && (!u.first_strict || e.ts.day < *u.first_strict)) u.first_strict = e.ts.day;
}

std::map<std::string, UserIntent> detect_intent_users(std::span<const LogEvent> events, const LabelStore& labels,
                                                      const SeedLexicon& lex, std::span<const UrlLabelRule> rules) {
    IntentDetector d(labels, lex, std::vector<UrlLabelRule>(rules.begin(), rules.end()));
    for (const LogEvent& e : events) d.observe(e);
    return d.users();
}

ActivityTracker::ActivityTracker(MonthWindow window, ActivityOptions options) : window_(window), options_(options) {
    if (window.count < 1) throw std::invalid_argument("month window must contain at least one month");
}

void ActivityTracker::observe(const LogEvent& e) {
    const int m = month_index(e.ts.day);
    if (!window_.contains(m)) return;
    Acc& acc = users_[e.user_id];
    if (acc.month_counts.empty()) acc.month_counts.assign(static_cast<std::size_t>(window_.count), 0);
    ++acc.month_counts[static_cast<std::size_t>(m - window_.first)];
    ++acc.queries;
    for (Granularity g : {Granularity::zcta, Granularity::county, Granularity::state}) {
        const auto& r = region_of(e, g);
        if (!r) continue;
        auto& counts = acc.regions[static_cast<std::size_t>(g)];
        auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& kv) { return kv.first == *r; });
        if (it == counts.end()) {
            counts.emplace_back(*r, 1);
        } else {
            ++it->second;
        }
    }
}

std::vector<UserAssignment> ActivityTracker::finish() const {
    std::vector<UserAssignment> out;
    out.reserve(users_.size());
    for (const auto& [id, acc] : users_) {
        UserAssignment a;
        a.user_id = id;
        a.queries = acc.queries;
        for (int c : acc.month_counts) {
            a.active.push_back(c >= options_.min_monthly_queries);
            a.active_months += a.active.back();
        }
        for (std::size_t g = 0; g < 3; ++g) {
            const auto& counts = acc.regions[g];
            int total = 0;
            const std::pair<std::string, int>* best = nullptr;
            for (const auto& kv : counts) {
                total += kv.second;
                if (!best || kv.second > best->second || (kv.second == best->second && kv.first < best->first)) {
                    best = &kv;
                }
            }
            if (best && best->second >= options_.min_home_queries &&
                static_cast<double>(best->second) >= options_.min_home_share * static_cast<double>(total)) {
                a.home[g] = best->first;
            }
        }
        out.push_back(std::move(a));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
    return out;
}

std::vector<UserAssignment> assign_users(std::span<const LogEvent> events, MonthWindow window,
                                         const ActivityOptions& options) {
    ActivityTracker t(window, options);
    for (const LogEvent& e : events) t.observe(e);
    return t.finish();
}

namespace {

const std::optional<Day>& evidence_day(const UserIntent& u, bool strict) { return strict ? u.first_strict : u.first_any; }

}  // namespace

RegionStatsResult region_stats(std::span<const UserAssignment> users, const std::map<std::string, UserIntent>& intents,
                               const RegionTable& regions, Granularity granularity, const RateOptions& options) {
    struct Acc {
        double active = 0.0;
        double intent = 0.0;
    };
    std::map<std::string, Acc> acc;
    std::size_t months = 0;
    for (const UserAssignment& u : users) {
        months = std::max(months, u.active.size());
        const auto& home = u.home_at(granularity);
        if (!home || u.active_months == 0) continue;
        Acc& a = acc[*home];
        a.active += u.active_months;
        auto it = intents.find(u.user_id);
        if (it != intents.end() && evidence_day(it->second, options.strict_evidence)) a.intent += u.active_months;
    }
    RegionStatsResult res;
    for (const Region& r : regions.regions()) {
        const auto it = acc.find(r.id);
        const double active = it == acc.end() || months == 0 ? 0.0 : it->second.active / static_cast<double>(months);
        const double intent = it == acc.end() || months == 0 ? 0.0 : it->second.intent / static_cast<double>(months);
        if (static_cast<double>(r.population) < options.privacy_floor) {
            res.excluded.push_back({r.id, "population below privacy floor"});
            continue;
        }
        if (active < options.privacy_floor) {
            res.excluded.push_back({r.id, "active users " + format_double(active) + " below privacy floor"});
            continue;
        }
        RegionStats s;
        s.region_id = r.id;
        s.population = r.population;
        s.active_users = active;
        s.intent_users = intent;
        s.coverage = active / static_cast<double>(r.population);
        s.coverage_above_one = s.coverage > 1.0;
        s.rate = intent / active;
        s.uncorrected_rate = intent / static_cast<double>(r.population);
        res.included.push_back(std::move(s));
    }
    for (const auto& [id, a] : acc) {
        if (!regions.find(id)) res.excluded.push_back({id, "not in region table"});
    }
    return res;
}

double aggregate(std::span<const double> populations, std::span<const double> rates) {
    if (populations.size() != rates.size()) throw std::invalid_argument("aggregate inputs differ in length");
    if (populations.empty()) throw std::invalid_argument("aggregate over an empty region set");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        num += populations[i] * rates[i];
        den += populations[i];
    }
    if (den <= 0.0) throw std::invalid_argument("aggregate needs positive total population");
    return num / den;
}

double aggregate(std::span<const RegionStats> regions) {
    std::vector<double> pop, rate;
    for (const RegionStats& r : regions) {
        pop.push_back(static_cast<double>(r.population));
        rate.push_back(r.rate);
    }
    return aggregate(pop, rate);
}

Correlation weighted_pearson(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                             double level) {
    if (x.size() < 3) throw std::invalid_argument("weighted correlation needs at least three points");
    for (double v : w) {
        if (!(v > 0.0)) throw std::invalid_argument("correlation weights must be positive");
    }
    Correlation c;
    c.n = x.size();
    c.r = weighted_pearson_r(x, y, w);
    double sw = 0.0, sw2 = 0.0;
    for (double v : w) {
        sw += v;
        sw2 += v * v;
    }
    c.n_eff = sw * sw / sw2;
    if (std::abs(c.r) >= 1.0) {
        c.lo = c.hi = c.r;
    } else if (c.n_eff > 3.0) {
        const double z = std::atanh(c.r);
        const double half = normal_quantile(0.5 + level / 2.0) / std::sqrt(c.n_eff - 3.0);
        c.lo = std::tanh(z - half);
        c.hi = std::tanh(z + half);
    }
    return c;
}

QuartileComparison quartile_compare(std::span<const RegionStats> stats, const RegionTable& all, const std::string& key,
                                    std::size_t n_boot, uint64_t seed) {
    std::vector<double> values;
    for (const Region& r : all.regions()) {
        auto it = r.demographics.find(key);
        if (it == r.demographics.end()) throw std::invalid_argument("region " + r.id + " lacks demographic '" + key + "'");
        values.push_back(it->second);
    }
    if (values.empty()) throw std::invalid_argument("quartile comparison over an empty region table");
    QuartileComparison q;
    q.key = key;
    q.bottom_cut = percentile(values, 0.25);
    q.top_cut = percentile(values, 0.75);
    std::vector<const RegionStats*> top, bottom;
    for (const RegionStats& s : stats) {
        const Region* r = all.find(s.region_id);
        if (!r) throw std::invalid_argument("region " + s.region_id + " missing from region table");
        const double v = r->demographics.at(key);
        if (v >= q.top_cut) top.push_back(&s);
        if (v <= q.bottom_cut) bottom.push_back(&s);
    }
    if (top.empty() || bottom.empty()) {
        throw std::invalid_argument("quartile of '" + key + "' is empty after privacy filtering");
    }
    q.top_regions = top.size();
    q.bottom_regions = bottom.size();
    auto rate_of = [](const std::vector<const RegionStats*>& group, const std::vector<double>* rates) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < group.size(); ++i) {
            const double pop = static_cast<double>(group[i]->population);
            num += pop * (rates ? (*rates)[i] : group[i]->rate);
            den += pop;
        }
        return num / den;
    };
    q.top_rate = rate_of(top, nullptr);
    q.bottom_rate = rate_of(bottom, nullptr);
    if (q.bottom_rate <= 0.0) throw std::domain_error("bottom quartile rate is zero");
    q.percent_difference = 100.0 * (q.top_rate / q.bottom_rate - 1.0);

    std::vector<double> diffs;
    diffs.reserve(n_boot);
    auto resample = [](const std::vector<const RegionStats*>& group, Rng& rng, std::vector<const RegionStats*>& picked,
                       std::vector<double>& rates) {
        std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
        picked.clear();
        rates.clear();
        for (std::size_t i = 0; i < group.size(); ++i) {
            const RegionStats* s = group[pick(rng)];
            const auto n = static_cast<long long>(std::llround(s->active_users));
            std::binomial_distribution<long long> binom(n, std::clamp(s->rate, 0.0, 1.0));
            picked.push_back(s);
            rates.push_back(n > 0 ? static_cast<double>(binom(rng)) / static_cast<double>(n) : 0.0);
        }
    };
    std::vector<const RegionStats*> pt, pb;
    std::vector<double> rt, rb;
    for (std::size_t b = 0; b < n_boot; ++b) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(b)));
        resample(top, rng, pt, rt);
        resample(bottom, rng, pb, rb);
        const double bottom_rate = rate_of(pb, &rb);
        if (bottom_rate <= 0.0) continue;
        diffs.push_back(100.0 * (rate_of(pt, &rt) / bottom_rate - 1.0));
    }
    if (!diffs.empty()) {
        q.ci_lo = percentile(diffs, 0.025);
        q.ci_hi = percentile(diffs, 0.975);
    } else {
        q.ci_lo = q.ci_hi = q.percent_difference;
    }
    return q;
}

DailySeries intent_time_series(const std::map<std::string, UserIntent>& intents,
                               std::span<const UserAssignment> users, std::span<const RegionStats> included,
                               Granularity granularity, MonthWindow window, bool strict_evidence) {
    DailySeries s;
    s.start = window.start_day();
    const std::size_t days = static_cast<std::size_t>(window.end_day() - s.start + 1);
    s.values.assign(days, 0.0);
    if (included.empty()) return s;
    std::map<std::string, std::vector<double>> counts;
    for (const RegionStats& r : included) counts[r.region_id].assign(days, 0.0);
    for (const UserAssignment& u : users) {
        const auto& home = u.home_at(granularity);
        if (!home || u.active_months == 0) continue;
        auto c = counts.find(*home);
        if (c == counts.end()) continue;
        auto it = intents.find(u.user_id);
        if (it == intents.end()) continue;
        const auto& d = evidence_day(it->second, strict_evidence);
        if (!d || *d < s.start || *d > window.end_day()) continue;
        c->second[static_cast<std::size_t>(*d - s.start)] += 1.0;
    }
    double total_pop = 0.0;
    for (const RegionStats& r : included) total_pop += static_cast<double>(r.population);
    for (const RegionStats& r : included) {
        const double w = static_cast<double>(r.population) / total_pop / r.active_users;
        const auto& c = counts[r.region_id];
        for (std::size_t i = 0; i < days; ++i) s.values[i] += w * c[i];
    }
    return s;
}

std::vector<double> trailing_mean(std::span<const double> x, int width, Padding padding) {
    if (width < 1) throw std::invalid_argument("smoothing width must be positive");
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sum += x[i];
        if (i >= static_cast<std::size_t>(width)) sum -= x[i - static_cast<std::size_t>(width)];
        const std::size_t have = std::min(i + 1, static_cast<std::size_t>(width));
        out[i] = sum / static_cast<double>(padding == Padding::partial ? have : static_cast<std::size_t>(width));
    }
    return out;
}

std::vector<double> series_on(const std::vector<std::pair<Day, double>>& series, Day start, std::size_t length) {
    std::vector<double> out(length, 0.0);
    for (const auto& [d, v] : series) {
        const int32_t i = d - start;
        if (i >= 0 && static_cast<std::size_t>(i) < length) out[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

LagScan lag_scan(std::span<const double> a, std::span<const double> b, int max_lag, std::size_t min_overlap,
                 double confident_r) {
    if (max_lag < 0) throw std::invalid_argument("maximum lag must be non-negative");
    auto overlap = [&](int l) {
        const std::size_t shifted = b.size() > static_cast<std::size_t>(l) ? b.size() - static_cast<std::size_t>(l) : 0;
        return std::min(a.size(), shifted);
    };
    if (overlap(max_lag) < min_overlap) {
        throw std::invalid_argument("lag scan overlap of " + std::to_string(overlap(max_lag)) + " days at lag " +
                                    std::to_string(max_lag) + " is below " + std::to_string(min_overlap));
    }
    LagScan s;
    s.best_r = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int l = 0; l <= max_lag; ++l) {
        const std::size_t n = overlap(l);
        double r = std::numeric_limits<double>::quiet_NaN();
        try {
            r = pearson(a.subspan(0, n), b.subspan(static_cast<std::size_t>(l), n));
        } catch (const std::domain_error&) {
        }
        s.lags.push_back(l);
        s.correlation.push_back(r);
        if (!std::isnan(r) && r > s.best_r) {
            s.best_r = r;
            s.best_lag = l;
            any = true;
        }
    }
    if (!any) throw std::domain_error("lag scan undefined: a series is constant at every lag");
    s.low_confidence = s.best_r < confident_r;
    return s;
}

std::vector<double> normalize_trend(std::span<const double> x) {
    const double m = x.empty() ? 0.0 : *std::max_element(x.begin(), x.end());
    if (!(m > 0.0)) throw std::invalid_argument("cannot normalize a series with no positive value");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] == m ? 100.0 : x[i] / m * 100.0;
    return out;
}

std::vector<RegionDiagnostics> truth_diagnostics(const std::map<std::string, UserIntent>& intents,
                                                 std::span<const UserAssignment> users, const GroundTruth& truth,
                                                 Granularity granularity, bool strict_evidence) {
    struct Acc {
        double pos = 0, tp = 0, neg = 0, fp = 0;
    };
    std::map<std::string, Acc> acc;
    for (const UserAssignment& u : users) {
        const auto& home = u.home_at(granularity);
        if (!home || u.active_months == 0) continue;
        auto t = truth.users.find(u.user_id);
        if (t == truth.users.end()) continue;
        auto it = intents.find(u.user_id);
        const bool detected = it != intents.end() && evidence_day(it->second, strict_evidence).has_value();
        Acc& a = acc[*home];
        if (t->second.intent) {
            a.pos += 1;
            a.tp += detected;
        } else {
            a.neg += 1;
            a.fp += detected;
        }
    }
    std::vector<RegionDiagnostics> out;
    for (const auto& [id, a] : acc) {
        RegionDiagnostics d;
        d.region_id = id;
        d.tpr = a.pos > 0 ? a.tp / a.pos : 0.0;
        d.fpr = a.neg > 0 ? a.fp / a.neg : 0.0;
        out.push_back(std::move(d));
    }
    return out;
}

BiasReport bias_report(std::span<const RegionDiagnostics> diagnostics, std::span<const RegionStats> stats,
                       const std::map<std::string, double>& true_rate, double sigmas) {
    BiasReport rep;
    if (diagnostics.empty()) throw std::invalid_argument("bias report needs region diagnostics");
    rep.tpr_min = rep.fpr_min = std::numeric_limits<double>::infinity();
    rep.tpr_max = rep.fpr_max = -std::numeric_limits<double>::infinity();
    std::map<std::string, const RegionDiagnostics*> by_id;
    for (const RegionDiagnostics& d : diagnostics) {
        by_id[d.region_id] = &d;
        rep.tpr_mean += d.tpr;
        rep.fpr_mean += d.fpr;
        rep.tpr_min = std::min(rep.tpr_min, d.tpr);
        rep.tpr_max = std::max(rep.tpr_max, d.tpr);
        rep.fpr_min = std::min(rep.fpr_min, d.fpr);
        rep.fpr_max = std::max(rep.fpr_max, d.fpr);
    }
    rep.tpr_mean /= static_cast<double>(diagnostics.size());
    rep.fpr_mean /= static_cast<double>(diagnostics.size());
    rep.expected_slope = rep.tpr_mean - rep.fpr_mean;
    rep.expected_intercept = rep.fpr_mean;

    std::vector<double> p, est, raw, w;
    for (const RegionStats& s : stats) {
        auto t = true_rate.find(s.region_id);
        if (t == true_rate.end()) continue;
        p.push_back(t->second);
        est.push_back(s.rate);
        raw.push_back(s.uncorrected_rate);
        w.push_back(std::sqrt(static_cast<double>(s.population)));
        auto d = by_id.find(s.region_id);
        const double tpr = d == by_id.end() ? rep.tpr_mean : d->second->tpr;
        const double fpr = d == by_id.end() ? rep.fpr_mean : d->second->fpr;
        const double expect = fpr + (tpr - fpr) * t->second;
        const double se = std::sqrt(std::max(expect * (1.0 - expect), 1e-12) / std::max(s.active_users, 1.0));
        if (std::abs(s.rate - expect) > sigmas * se) rep.flagged.push_back(s.region_id);
    }
    rep.regions = p.size();
    if (p.size() >= 3) {
        rep.fit = ols(p, est);
        try {
            rep.corrected_correlation = weighted_pearson_r(est, p, w);
            rep.uncorrected_correlation = weighted_pearson_r(raw, p, w);
        } catch (const std::domain_error&) {
        }
    }
    return rep;
}

void write_region_stats(std::ostream& out, const RegionStatsResult& result) {
    write_csv_row(out, {"region_id", "population", "active_users", "intent_users", "coverage", "rate",
                        "uncorrected_rate", "status"});
    for (const RegionStats& s : result.included) {
        write_csv_row(out, {s.region_id, std::to_string(s.population), format_double(s.active_users),
                            format_double(s.intent_users), format_double(s.coverage), format_double(s.rate),
                            format_double(s.uncorrected_rate), s.coverage_above_one ? "coverage_above_one" : "ok"});
    }
    for (const ExcludedRegion& e : result.excluded) {
        write_csv_row(out, {e.region_id, "", "", "", "", "", "", "excluded: " + e.reason});
    }
}

void write_series(std::ostream& out, const std::vector<std::pair<std::string, DailySeries>>& columns) {
    if (columns.empty()) return;
    std::vector<std::string> header{"date"};
    for (const auto& [name, s] : columns) header.push_back(name);
    write_csv_row(out, header);
    const DailySeries& first = columns.front().second;
    for (std::size_t i = 0; i < first.values.size(); ++i) {
        std::vector<std::string> row{format_date(first.day(i))};
        for (const auto& [name, s] : columns) {
            if (s.start != first.start || s.values.size() != first.values.size()) {
                throw std::invalid_argument("series columns are not aligned");
            }
            row.push_back(format_double(s.values[i]));
        }
        write_csv_row(out, row);
    }
}

std::vector<std::pair<Day, double>> read_date_series(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t date = t.require_column("date");
    const std::size_t value = t.require_column("value");
    std::vector<std::pair<Day, double>> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size()) throw CsvError("short series row", t.lines[r]);
        auto d = parse_date(row[date]);
        if (!d) throw CsvError("bad date '" + row[date] + "'", t.lines[r]);
        try {
            out.emplace_back(*d, std::stod(row[value]));
        } catch (const std::exception&) {
            throw CsvError("bad value '" + row[value] + "'", t.lines[r]);
        }
    }
    return out;
}

namespace {

nlohmann::json num(double v) {
    if (std::isnan(v) || std::isinf(v)) return nullptr;
    return v;
}

}  // namespace

nlohmann::json to_json(const LagScan& scan) {
    nlohmann::json corr = nlohmann::json::array();
    for (double r : scan.correlation) corr.push_back(num(r));
    return {{"lags", scan.lags},
            {"correlation", corr},
            {"best_lag", scan.best_lag},
            {"best_r", num(scan.best_r)},
            {"low_confidence", scan.low_confidence}};
}

nlohmann::json to_json(const BiasReport& r) {
    return {{"regions", r.regions},
            {"slope", num(r.fit.slope)},
            {"slope_se", num(r.fit.slope_se)},
            {"intercept", num(r.fit.intercept)},
            {"intercept_se", num(r.fit.intercept_se)},
            {"r2", num(r.fit.r2)},
            {"tpr", {{"mean", num(r.tpr_mean)}, {"min", num(r.tpr_min)}, {"max", num(r.tpr_max)}}},
            {"fpr", {{"mean", num(r.fpr_mean)}, {"min", num(r.fpr_min)}, {"max", num(r.fpr_max)}}},
            {"expected_slope", num(r.expected_slope)},
            {"expected_intercept", num(r.expected_intercept)},
            {"flagged", r.flagged},
            {"corrected_correlation", num(r.corrected_correlation)},
            {"uncorrected_correlation", num(r.uncorrected_correlation)}};
}

nlohmann::json to_json(const Correlation& c) {
    return {{"r", num(c.r)}, {"lo", num(c.lo)}, {"hi", num(c.hi)}, {"n", c.n}, {"n_eff", num(c.n_eff)}};
}

nlohmann::json to_json(const QuartileComparison& q) {
    return {{"key", q.key},
            {"bottom_cut", num(q.bottom_cut)},
            {"top_cut", num(q.top_cut)},
            {"bottom_regions", q.bottom_regions},
            {"top_regions", q.top_regions},
            {"bottom_rate", num(q.bottom_rate)},
            {"top_rate", num(q.top_rate)},
            {"percent_difference", num(q.percent_difference)},
            {"ci_lo", num(q.ci_lo)},
            {"ci_hi", num(q.ci_hi)}};
}

}  // namespace intentscope
