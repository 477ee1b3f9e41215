#include "intentscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace intentscope {

namespace {

std::string substitute(std::string text, std::string_view key, std::string_view value) {
    for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

std::string expand(const std::string& tmpl, const std::string& state, int k) {
    return substitute(substitute(tmpl, "{state}", state), "{k}", std::to_string(k));
}

/// Popularity skew over a pool: weight 1/(i+1).
class ZipfSampler {
public:
    explicit ZipfSampler(std::size_t n) : cumulative_(n) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += 1.0 / static_cast<double>(i + 1);
            cumulative_[i] = total;
        }
    }
    std::size_t operator()(Rng& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, cumulative_.back())(rng);
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1);
    }

private:
    std::vector<double> cumulative_;
};

bool bernoulli(Rng& rng, double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::size_t pick_weighted(Rng& rng, const std::vector<double>& w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (u < w[i]) return i;
        u -= w[i];
    }
    return w.size() - 1;
}

std::string site_root(const std::string& url) {
    const std::size_t scheme = url.find("://");
    const std::size_t slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    return slash == std::string::npos ? url + "/" : url.substr(0, slash + 1);
}

struct WorldIndex {
    UrlUniverse urls;
    std::vector<ZipfSampler> intent_zipf;
    std::vector<ZipfSampler> info_zipf;
    std::optional<ZipfSampler> distractor_zipf;
    std::vector<ZipfSampler> topic_zipf;
    std::map<std::string, std::size_t> state_index;
    std::vector<std::size_t> region_state;
    std::vector<std::vector<std::size_t>> state_regions;
    std::vector<std::size_t> trusted_news;
    std::vector<std::size_t> untrusted_news;
};

struct Emitter {
    const SyntheticWorldConfig& cfg;
    const WorldIndex& idx;
    Rng& rng;
    std::size_t home;
    std::vector<LogEvent>& out;
    std::string user_id;

    void add(Day day, int seconds, std::string query, std::vector<std::string> clicks) {
        LogEvent e;
        e.user_id = user_id;
        e.ts = Timestamp{day, seconds};
        std::size_t r = home;
        if (bernoulli(rng, cfg.missing_geo_prob)) {
            r = cfg.regions.size();
        } else if (!bernoulli(rng, cfg.home_share)) {
            r = pick(rng, idx.state_regions[idx.region_state[home]]);
        }
        if (r < cfg.regions.size()) {
            const Region& region = cfg.regions[r].region;
            e.zcta = region.id;
            e.county = region.county;
            e.state = region.state;
        }
        e.query = std::move(query);
        e.clicks = std::move(clicks);
        out.push_back(std::move(e));
    }
};

}  // namespace

UrlUniverse build_url_universe(const SyntheticWorldConfig& cfg) {
    UrlUniverse u;
    std::set<std::string> seen;
    for (const SyntheticRegion& r : cfg.regions) {
        const std::string state = r.region.state.value_or("all");
        if (seen.insert(state).second) u.states.push_back(state);
    }
    for (const std::string& s : u.states) {
        const std::string code = to_lower_ascii(s);
        std::vector<std::string> intent, info;
        for (int k = 1; k <= cfg.intent_urls_per_template; ++k) {
            for (const auto& t : cfg.intent_url_templates) intent.push_back(expand(t, code, k));
        }
        for (int k = 1; k <= cfg.info_urls_per_template; ++k) {
            for (const auto& t : cfg.info_url_templates) info.push_back(expand(t, code, k));
        }
        u.intent_by_state.push_back(std::move(intent));
        u.info_by_state.push_back(std::move(info));
    }
    for (int k = 1; k <= cfg.distractor_urls_per_template; ++k) {
        for (const auto& t : cfg.distractor_url_templates) u.distractor.push_back(expand(t, "", k));
    }
    for (const NewsDomain& d : cfg.news_domains) {
        u.news.push_back("https://" + d.domain + "/health/covid-vaccine-coverage");
    }
    return u;
}

void validate_world(const SyntheticWorldConfig& cfg) {
    if (cfg.regions.empty()) throw std::invalid_argument("synthetic world has no regions");
    if (cfg.reported_lag_days < 0 || cfg.reported_jitter_days < 0) {
        throw std::invalid_argument("reported lag and jitter must be non-negative");
    }
    for (const SyntheticRegion& r : cfg.regions) {
        if (r.intent_rate < 0.0 || r.intent_rate > 1.0) {
            throw std::invalid_argument("intent rate out of [0,1] for region " + r.region.id);
        }
        if (!(r.coverage > 0.0) || r.coverage > 1.0) {
            throw std::invalid_argument("coverage out of (0,1] for region " + r.region.id);
        }
        if (r.region.population < 0) throw std::invalid_argument("negative population for " + r.region.id);
    }
    auto prob = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0) throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
    };
    prob(cfg.signal_tpr, "signal_tpr");
    prob(cfg.signal_fpr, "signal_fpr");
    prob(cfg.seed_query_share, "seed_query_share");
    prob(cfg.home_share, "home_share");
    prob(cfg.missing_geo_prob, "missing_geo_prob");
    prob(cfg.untrusted_share_early, "untrusted_share_early");
    prob(cfg.untrusted_share_late, "untrusted_share_late");
    prob(cfg.redirect_share, "redirect_share");
    if (cfg.info_query_prob + cfg.ambiguous_query_prob + cfg.topic_query_prob + cfg.news_query_prob > 1.0) {
        throw std::invalid_argument("query type probabilities sum above 1");
    }
    if (cfg.window.count < 1) throw std::invalid_argument("window must span at least one month");
    if (cfg.min_monthly_queries > cfg.max_monthly_queries || cfg.light_min_queries > cfg.light_max_queries) {
        throw std::invalid_argument("query count range is inverted");
    }
    if (!cfg.first_intent_month_weights.empty() &&
        cfg.first_intent_month_weights.size() != static_cast<std::size_t>(cfg.window.count)) {
        throw std::invalid_argument("first_intent_month_weights must have one entry per month");
    }
    if (cfg.seed_queries.empty() || cfg.ambiguous_queries.empty() || cfg.distractor_queries.empty() ||
        cfg.intent_url_templates.empty() || cfg.info_url_templates.empty() ||
        cfg.distractor_url_templates.empty() || cfg.info_queries.empty()) {
        throw std::invalid_argument("synthetic vocabulary is incomplete");
    }
    if (cfg.portal_prob > 0.0 && cfg.portal_queries.empty()) throw std::invalid_argument("portal_queries empty");
    if (cfg.topic_query_prob > 0.0 && cfg.topics.empty()) throw std::invalid_argument("topic_query_prob set without topics");
    if (cfg.news_query_prob > 0.0 && cfg.news_domains.empty()) throw std::invalid_argument("news_query_prob set without news domains");

    // Pools must be disjoint so URL truth is well defined.
    const UrlUniverse u = build_url_universe(cfg);
    std::set<std::string> all;
    std::size_t total = 0;
    auto add = [&](const std::vector<std::string>& v) {
        all.insert(v.begin(), v.end());
        total += v.size();
    };
    for (const auto& v : u.intent_by_state) add(v);
    for (const auto& v : u.info_by_state) add(v);
    add(u.distractor);
    add(u.news);
    for (const ConcernTopic& t : cfg.topics) add(t.urls);
    if (all.size() != total) throw std::invalid_argument("URL pools overlap");
}

WorldArtifacts generate_world(const SyntheticWorldConfig& cfg, const EventSink& sink) {
    validate_world(cfg);
    WorldArtifacts art;
    {
        std::vector<Region> regions;
        for (const SyntheticRegion& r : cfg.regions) regions.push_back(r.region);
        art.regions = RegionTable(std::move(regions), cfg.demographic_schema);
    }

    WorldIndex idx;
    idx.urls = build_url_universe(cfg);
    for (std::size_t s = 0; s < idx.urls.states.size(); ++s) idx.state_index[idx.urls.states[s]] = s;
    idx.state_regions.resize(idx.urls.states.size());
    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        const std::size_t s = idx.state_index.at(cfg.regions[r].region.state.value_or("all"));
        idx.region_state.push_back(s);
        idx.state_regions[s].push_back(r);
    }
    for (std::size_t s = 0; s < idx.urls.states.size(); ++s) {
        idx.intent_zipf.emplace_back(idx.urls.intent_by_state[s].size());
        idx.info_zipf.emplace_back(idx.urls.info_by_state[s].size());
    }
    idx.distractor_zipf.emplace(idx.urls.distractor.size());
    for (const ConcernTopic& t : cfg.topics) idx.topic_zipf.emplace_back(std::max<std::size_t>(t.urls.size(), 1));
    for (std::size_t i = 0; i < cfg.news_domains.size(); ++i) {
        (cfg.news_domains[i].trust_score < 60.0 ? idx.untrusted_news : idx.trusted_news).push_back(i);
    }

    GroundTruth& truth = art.truth;
    for (std::size_t s = 0; s < idx.urls.states.size(); ++s) {
        for (const auto& u : idx.urls.intent_by_state[s]) truth.url_intent[u] = true;
        for (const auto& u : idx.urls.info_by_state[s]) truth.url_intent[u] = false;
    }
    for (const auto& u : idx.urls.distractor) truth.url_intent[u] = false;
    for (const auto& u : idx.urls.news) {
        truth.url_intent[u] = false;
        truth.url_topic[u] = "news";
    }
    for (const ConcernTopic& t : cfg.topics) {
        for (const auto& u : t.urls) {
            truth.url_intent[u] = false;
            truth.url_topic[u] = t.name;
        }
    }

    Rng redirect_rng(derive_seed(cfg.rng_seed, "redirects"));
    for (std::size_t s = 0; s < idx.urls.states.size(); ++s) {
        for (const auto* pool : {&idx.urls.intent_by_state[s], &idx.urls.info_by_state[s]}) {
            for (const auto& u : *pool) {
                if (bernoulli(redirect_rng, cfg.redirect_share)) art.redirects.emplace_back(u, site_root(u));
            }
        }
    }

    // Realized user counts per region.
    Rng region_rng(derive_seed(cfg.rng_seed, "region-counts"));
    std::vector<int64_t> active_count(cfg.regions.size()), light_count(cfg.regions.size());
    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        const SyntheticRegion& reg = cfg.regions[r];
        active_count[r] = std::binomial_distribution<int64_t>(reg.region.population, reg.coverage)(region_rng);
        const double light_p = std::min(1.0, reg.coverage * cfg.light_user_share);
        light_count[r] = std::binomial_distribution<int64_t>(reg.region.population, light_p)(region_rng);
    }

    std::vector<double> month_w = cfg.first_intent_month_weights;
    if (month_w.empty()) month_w.assign(cfg.window.count, 1.0);
    const Day window_start = cfg.window.start_day();
    const Day window_end = cfg.window.end_day();

    std::vector<double> topic_base_early, topic_base_late;
    for (const ConcernTopic& t : cfg.topics) {
        topic_base_early.push_back(t.early_weight);
        topic_base_late.push_back(t.holdout_weight);
    }

    std::vector<std::size_t> intent_users(cfg.regions.size(), 0);
    // Reported series: population-weighted vaccinations per day.
    std::map<int32_t, double> reported;

    std::vector<LogEvent> buffer;
    uint64_t user_index = 0;
    char id_buf[32];
    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        const SyntheticRegion& reg = cfg.regions[r];
        const std::size_t state = idx.region_state[r];
        const int64_t total_users = active_count[r] + light_count[r];
        for (int64_t k = 0; k < total_users; ++k, ++user_index) {
            const bool active = k < active_count[r];
            Rng rng(derive_seed(cfg.rng_seed, user_index));
            std::snprintf(id_buf, sizeof id_buf, "u%07llu", static_cast<unsigned long long>(user_index));
            buffer.clear();
            Emitter em{cfg, idx, rng, r, buffer, id_buf};

            UserTruth ut;
            ut.home_region = reg.region.id;
            ut.intent = bernoulli(rng, reg.intent_rate);
            if (ut.intent) {
                const std::size_t m = pick_weighted(rng, month_w);
                const Day first = first_day_of_month_index(cfg.window.first + static_cast<int>(m));
                const Ymd ymd = to_ymd(first);
                ut.first_intent = first + uniform_int(rng, 0, days_in_month(ymd.year, ymd.month) - 1);
                ut.late = *ut.first_intent >= cfg.late_intent_start;
            }
            const bool observable = ut.intent && bernoulli(rng, cfg.signal_tpr);
            const bool false_positive = !ut.intent && bernoulli(rng, cfg.signal_fpr);
            const bool late_like = !ut.intent || ut.late;
            const double untrusted_share = late_like ? cfg.untrusted_share_late : cfg.untrusted_share_early;

            auto intent_click = [&] { return idx.urls.intent_by_state[state][idx.intent_zipf[state](rng)]; };
            auto info_click = [&] { return idx.urls.info_by_state[state][idx.info_zipf[state](rng)]; };

            // Background traffic, month by month.
            for (int m = 0; m < cfg.window.count; ++m) {
                const Day month_start = first_day_of_month_index(cfg.window.first + m);
                const Ymd ymd = to_ymd(month_start);
                const int dim = days_in_month(ymd.year, ymd.month);
                const int n = active ? uniform_int(rng, cfg.min_monthly_queries, cfg.max_monthly_queries)
                                     : uniform_int(rng, cfg.light_min_queries, cfg.light_max_queries);
                for (int q = 0; q < n; ++q) {
                    const Day day = month_start + uniform_int(rng, 0, dim - 1);
                    const int sec = uniform_int(rng, 0, 86399);
                    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                    if ((u -= cfg.news_query_prob) < 0.0) {
                        const bool untrusted = !idx.untrusted_news.empty() &&
                                               (idx.trusted_news.empty() || bernoulli(rng, untrusted_share));
                        const std::size_t d = pick(rng, untrusted ? idx.untrusted_news : idx.trusted_news);
                        em.add(day, sec, "covid vaccine news", {idx.urls.news[d]});
                    } else if ((u -= cfg.topic_query_prob) < 0.0) {
                        std::vector<double> w = late_like ? topic_base_late : topic_base_early;
                        if (ut.first_intent && std::abs(day - *ut.first_intent) <= cfg.window_days) {
                            for (std::size_t t = 0; t < w.size(); ++t) w[t] *= cfg.topics[t].window_multiplier;
                        }
                        const std::size_t t = pick_weighted(rng, w);
                        std::size_t click_topic = t;
                        if (cfg.topics.size() > 1 && bernoulli(rng, cfg.cross_topic_noise)) {
                            click_topic = (t + 1 + std::uniform_int_distribution<std::size_t>(
                                                       0, cfg.topics.size() - 2)(rng)) %
                                          cfg.topics.size();
                        }
                        const ConcernTopic& ct = cfg.topics[click_topic];
                        std::vector<std::string> clicks;
                        if (!ct.urls.empty()) clicks.push_back(ct.urls[idx.topic_zipf[click_topic](rng)]);
                        em.add(day, sec, pick(rng, cfg.topics[t].queries), std::move(clicks));
                    } else if ((u -= cfg.info_query_prob) < 0.0) {
                        em.add(day, sec, pick(rng, cfg.info_queries), {info_click()});
                    } else if ((u -= cfg.ambiguous_query_prob) < 0.0) {
                        std::vector<std::string> clicks;
                        if (bernoulli(rng, 0.5)) clicks.push_back(info_click());
                        em.add(day, sec, pick(rng, cfg.ambiguous_queries), std::move(clicks));
                    } else {
                        std::vector<std::string> clicks;
                        if (bernoulli(rng, 0.6)) clicks.push_back(idx.urls.distractor[(*idx.distractor_zipf)(rng)]);
                        em.add(day, sec, pick(rng, cfg.distractor_queries), std::move(clicks));
                    }
                }
            }

            // Intent sessions.
            auto intent_session = [&](Day day, bool first) {
                int sec = uniform_int(rng, 0, 80000);
                if (first && bernoulli(rng, 0.5)) {
                    std::vector<std::string> clicks;
                    if (bernoulli(rng, 0.3)) clicks.push_back(info_click());
                    em.add(day, sec, pick(rng, cfg.ambiguous_queries), std::move(clicks));
                    sec += uniform_int(rng, 1, 120);
                }
                if (bernoulli(rng, cfg.seed_query_share)) {
                    std::vector<std::string> clicks;
                    if (bernoulli(rng, 0.8)) clicks.push_back(intent_click());
                    em.add(day, sec, pick(rng, cfg.seed_queries), std::move(clicks));
                    if (bernoulli(rng, cfg.portal_prob)) {
                        em.add(day, sec + uniform_int(rng, 1, 120), pick(rng, cfg.portal_queries), {intent_click()});
                    }
                } else {
                    em.add(day, sec, pick(rng, cfg.ambiguous_queries), {intent_click()});
                }
            };
            if (observable && *ut.first_intent <= window_end) {
                intent_session(*ut.first_intent, true);
                if (bernoulli(rng, cfg.repeat_intent_prob)) {
                    const Day again = *ut.first_intent + uniform_int(rng, 1, 20);
                    if (again <= window_end) intent_session(again, false);
                }
            }
            if (false_positive) {
                const Day day = window_start + uniform_int(rng, 0, window_end - window_start);
                em.add(day, uniform_int(rng, 0, 86399), pick(rng, cfg.seed_queries), {});
            }

            std::stable_sort(buffer.begin(), buffer.end(),
                             [](const LogEvent& a, const LogEvent& b) { return a.ts < b.ts; });
            for (LogEvent& e : buffer) {
                e.session_id = e.user_id + "-" + format_date(e.ts.day);
                ++art.event_count;
                sink(std::move(e));
            }

            if (active) {
                ++art.active_users;
                if (ut.intent) {
                    ++intent_users[r];
                    const Day vaccinated = *ut.first_intent + cfg.reported_lag_days +
                                           uniform_int(rng, -cfg.reported_jitter_days, cfg.reported_jitter_days);
                    reported[vaccinated.value] += 1.0 / reg.coverage;
                }
                if (cfg.record_users) truth.users.emplace(id_buf, std::move(ut));
            }
        }
    }

    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        const std::string& id = cfg.regions[r].region.id;
        truth.region_rate[id] = cfg.regions[r].intent_rate;
        truth.region_users[id] = static_cast<std::size_t>(active_count[r]);
        truth.region_realized_rate[id] =
            active_count[r] > 0 ? static_cast<double>(intent_users[r]) / static_cast<double>(active_count[r]) : 0.0;
    }
    // Runs past the window end so lagged comparisons have data.
    for (Day d = window_start; d <= window_end + 30; d = d + 1) {
        auto it = reported.find(d.value);
        art.reported.emplace_back(d, it == reported.end() ? 0.0 : it->second);
    }
    return art;
}

std::pair<std::vector<LogEvent>, WorldArtifacts> generate_world(const SyntheticWorldConfig& cfg) {
    std::vector<LogEvent> events;
    WorldArtifacts art = generate_world(cfg, [&](LogEvent&& e) { events.push_back(std::move(e)); });
    return {std::move(events), std::move(art)};
}

void apply_default_vocabulary(SyntheticWorldConfig& cfg) {
    cfg.seed_queries = {"where can i get a covid vaccine",  "covid vaccine appointment",
                        "cvs covid vaccine",                "walgreens covid vaccine appointment",
                        "covid vaccine near me",            "sign up for covid vaccine",
                        "covid vaccine registration",       "pfizer covid vaccine near me",
                        "moderna covid shot appointment",   "find a covid vaccine",
                        "walmart covid vaccine",            "covid booster appointment",
                        "rite aid covid vaccine",           "schedule covid vaccine",
                        "covid-19 vaccine finder",          "coronavirus vaccine sign up"};
    cfg.ambiguous_queries = {"covid vaccine",       "covid vaccine info",        "pfizer vaccine",
                             "moderna vaccine",     "covid vaccine eligibility", "covid shot",
                             "covid vaccine phases", "vaccine covid",            "johnson vaccine"};
    cfg.portal_queries = {"myturn sign up", "state portal sign in", "pharmacy scheduler login",
                          "clinic scheduling", "patient portal register"};
    cfg.info_queries = {"covid cases today", "cdc guidance", "covid testing sites", "pandemic update",
                        "covid variant", "fda approval", "pharmacy hours covid", "mrna explained"};
    cfg.distractor_queries = {"weather tomorrow", "nba scores",     "chicken recipe",   "amazon prime",
                              "news today",       "movie times",    "stock market",     "gas prices",
                              "facebook login",   "youtube",        "maps",             "translate",
                              "lottery results",  "best laptops",   "flight status",    "nfl schedule",
                              "pizza near me",    "home depot hours", "tax refund status", "job openings"};
    cfg.intent_url_templates = {
        "https://www.cvs.com/store-locator/store-{k}-{state}/covid-vaccine/schedule",
        "https://www.walgreens.com/findcare/vaccination/covid-19/appointment-{state}-{k}",
        "https://vaccinate.{state}.gov/appointment/site-{k}",
        "https://www.walmart.com/cp/covid-19-vaccine-scheduler/{state}-{k}",
        "https://www.riteaid.com/pharmacy/covid-vaccine-scheduler/{state}/clinic-{k}",
    };
    cfg.info_url_templates = {
        "https://www.cdc.gov/coronavirus/2019-ncov/data/cases-{state}-{k}.html",
        "https://en.wikipedia.org/wiki/pandemic_in_{state}_{k}",
        "https://www.cvs.com/store-locator/store-{k}-{state}/hours",
        "https://www.walgreens.com/storelocator/find-{state}-{k}",
        "https://health.{state}.gov/covid-19/testing/site-{k}",
        "https://www.fda.gov/emergency-updates/bulletin-{state}-{k}",
    };
    cfg.distractor_url_templates = {"https://weather.example.com/forecast/day-{k}",
                                    "https://shop.example.com/product/item-{k}",
                                    "https://sports.example.com/story/{k}",
                                    "https://recipes.example.com/dish-{k}",
                                    "https://social.example.com/page/{k}"};
    cfg.intent_urls_per_template = 6;
    cfg.info_urls_per_template = 4;
    cfg.distractor_urls_per_template = 20;

    struct TopicSpec {
        const char* name;
        const char* category;
        const char* slug;
        std::vector<std::string> queries;
        double early, late, window;
    };
    const std::vector<TopicSpec> specs = {
        {"side_effects", "vaccine safety", "side-effects",
         {"covid vaccine side effects", "fever after covid vaccine", "sore arm after vaccine shot"}, 1.0, 1.0, 3.0},
        {"ingredients", "vaccine safety", "ingredients",
         {"what is in the covid vaccine", "covid vaccine ingredients list", "mrna vaccine contents"}, 0.8, 1.4, 1.0},
        {"fertility", "vaccine safety", "fertility",
         {"covid vaccine fertility", "vaccine and pregnancy", "covid vaccine breastfeeding"}, 0.6, 1.2, 1.0},
        {"efficacy", "vaccine efficacy", "efficacy",
         {"how effective is the covid vaccine", "pfizer vaccine efficacy", "moderna vaccine efficacy"}, 1.6, 0.8, 1.0},
        {"variants", "vaccine efficacy", "variants",
         {"delta variant vaccine", "do vaccines work on variants", "covid variant vaccine protection"}, 1.0, 1.0, 1.0},
        {"exemptions", "requirements", "exemption",
         {"religious exemption covid vaccine", "vaccine exemption form", "medical exemption vaccine"}, 0.4, 1.6, 1.0},
        {"mandates", "requirements", "mandates",
         {"covid vaccine mandate", "employer vaccine mandate", "vaccine mandate lawsuit"}, 0.5, 1.8, 1.0},
        {"travel", "requirements", "travel",
         {"vaccine passport travel", "covid vaccine card travel", "travel vaccine requirements"}, 1.2, 0.7, 1.0},
        {"incentives", "incentives", "incentives",
         {"vaccine lottery", "covid vaccine incentives", "free donut vaccine card"}, 1.0, 0.9, 1.0},
        {"conspiracies", "conspiracies", "microchip",
         {"vaccine microchip", "covid vaccine dna change", "vaccine magnet challenge"}, 0.3, 1.5, 1.0},
    };
    const std::vector<std::string> sites = {"healthdesk.example.org", "medfacts.example.org",
                                            "dailyhealth.example.com", "wellnesswire.example.com"};
    cfg.topics.clear();
    for (const TopicSpec& s : specs) {
        ConcernTopic t;
        t.name = s.name;
        t.category = s.category;
        t.queries = s.queries;
        for (int k = 1; k <= 12; ++k) {
            const std::string& site = sites[static_cast<std::size_t>(k) % sites.size()];
            t.urls.push_back("https://" + site + "/vaccine-" + s.slug + "/article-" + std::to_string(k));
        }
        t.early_weight = s.early;
        t.holdout_weight = s.late;
        t.window_multiplier = s.window;
        cfg.topics.push_back(std::move(t));
    }
    cfg.news_domains = {{"harborgazette.example", 95},  {"valleytribune.example", 90},
                        {"metrodaily.example", 80},     {"civicledger.example", 85},
                        {"frontierherald.example", 70}, {"truthbeacon.example", 20},
                        {"patriotpulse.example", 35},   {"wakeupwire.example", 15},
                        {"freedomfeed.example", 45}};
}

std::vector<SyntheticRegion> make_grid_regions(const GridWorldSpec& spec, std::vector<std::string>& schema) {
    if (spec.states < 1 || spec.counties_per_state < 1 || spec.zctas_per_county < 1) {
        throw std::invalid_argument("grid dimensions must be positive");
    }
    if (spec.population_min > spec.population_max || spec.population_min < 0) {
        throw std::invalid_argument("bad population range");
    }
    schema = {"pct_65_over", "median_income", "pct_bachelor", "log_pop_density", "pct_republican"};
    Rng rng(derive_seed(spec.seed, "grid"));
    const int n = spec.states * spec.counties_per_state * spec.zctas_per_county;

    std::vector<double> rates(n);
    for (int i = 0; i < n; ++i) {
        rates[i] = n == 1 ? spec.rate_min : spec.rate_min + (spec.rate_max - spec.rate_min) * i / (n - 1);
    }
    std::shuffle(rates.begin(), rates.end(), rng);

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<SyntheticRegion> regions;
    char buf[32];
    for (int s = 0; s < spec.states; ++s) {
        for (int c = 0; c < spec.counties_per_state; ++c) {
            const std::size_t county_begin = regions.size();
            for (int z = 0; z < spec.zctas_per_county; ++z) {
                SyntheticRegion r;
                const double p = rates[regions.size()];
                const double t = spec.rate_max > spec.rate_min ? (p - spec.rate_min) / (spec.rate_max - spec.rate_min) : 0.5;
                std::snprintf(buf, sizeof buf, "Z%02d%02d%02d", s + 1, c + 1, z + 1);
                r.region.id = buf;
                std::snprintf(buf, sizeof buf, "C%02d%02d", s + 1, c + 1);
                r.region.county = buf;
                std::snprintf(buf, sizeof buf, "S%02d", s + 1);
                r.region.state = buf;
                r.region.population = std::uniform_int_distribution<int64_t>(spec.population_min, spec.population_max)(rng);
                r.intent_rate = p;
                const double base = spec.anti_correlate ? spec.coverage_max - (spec.coverage_max - spec.coverage_min) * t
                                                        : spec.coverage_min + (spec.coverage_max - spec.coverage_min) *
                                                                                  std::uniform_real_distribution<double>(0, 1)(rng);
                const double jitter = 1.0 + spec.coverage_jitter * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
                r.coverage = std::clamp(base * jitter, 1e-6, 1.0);
                r.region.demographics["pct_65_over"] = 10.0 + 25.0 * t + 2.0 * noise(rng);
                r.region.demographics["median_income"] = 40000.0 + 50000.0 * t + 5000.0 * noise(rng);
                r.region.demographics["pct_bachelor"] = 15.0 + 35.0 * t + 3.0 * noise(rng);
                r.region.demographics["log_pop_density"] = 5.0 + 2.0 * t + noise(rng);
                regions.push_back(std::move(r));
            }
            double mean_t = 0.0;
            for (std::size_t i = county_begin; i < regions.size(); ++i) {
                mean_t += regions[i].region.demographics["pct_bachelor"];
            }
            mean_t /= static_cast<double>(regions.size() - county_begin);
            const double republican = std::clamp(85.0 - 1.2 * mean_t + 3.0 * noise(rng), 5.0, 95.0);
            for (std::size_t i = county_begin; i < regions.size(); ++i) {
                regions[i].region.demographics["pct_republican"] = republican;
            }
        }
    }
    return regions;
}

}  // namespace intentscope
