#include "intentscope/cohort.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "intentscope/csv.hpp"

namespace intentscope {

void validate(const CohortSpec& spec) {
    if (!(spec.early_cutoff < spec.holdout_start)) {
        throw std::invalid_argument("early cutoff must precede the holdout start");
    }
}

Cohorts identify_cohorts(const std::map<std::string, UserIntent>& intents, std::span<const UserAssignment> users,
                         const CohortSpec& spec) {
    validate(spec);
    Cohorts c;
    for (const UserAssignment& u : users) {
        if (u.active.empty() || u.active_months != static_cast<int>(u.active.size())) continue;
        auto it = intents.find(u.user_id);
        if (it == intents.end()) continue;
        const auto& d = spec.strict_evidence ? it->second.first_strict : it->second.first_any;
        if (!d) continue;
        if (*d < spec.early_cutoff) {
            c.early_adopters.push_back(u.user_id);
        } else if (*d >= spec.holdout_start) {
            c.holdouts.push_back(u.user_id);
        }
    }
    return c;
}

MatchProfile profile_of(const UserAssignment& u, const MatchConstraint& c) {
    MatchProfile p;
    p.user_id = u.user_id;
    p.region = u.home_at(c.region);
    p.avg_monthly_queries =
        u.active.empty() ? 0.0 : static_cast<double>(u.queries) / static_cast<double>(u.active.size());
    return p;
}

std::vector<int> hopcroft_karp(std::size_t left, std::size_t right, const std::vector<std::vector<int>>& adj) {
    if (adj.size() != left) throw std::invalid_argument("adjacency size differs from left vertex count");
    constexpr int inf = std::numeric_limits<int>::max();
    std::vector<int> match_l(left, -1), match_r(right, -1), dist(left, 0);
    auto bfs = [&] {
        std::queue<int> q;
        bool found = false;
        for (std::size_t u = 0; u < left; ++u) {
            if (match_l[u] < 0) {
                dist[u] = 0;
                q.push(static_cast<int>(u));
            } else {
                dist[u] = inf;
            }
        }
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : adj[static_cast<std::size_t>(u)]) {
                const int w = match_r[static_cast<std::size_t>(v)];
                if (w < 0) {
                    found = true;
                } else if (dist[static_cast<std::size_t>(w)] == inf) {
                    dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
                    q.push(w);
                }
            }
        }
        return found;
    };
    std::vector<std::size_t> next(left, 0);
    auto dfs = [&](auto&& self, int u) -> bool {
        auto& it = next[static_cast<std::size_t>(u)];
        const auto& nbrs = adj[static_cast<std::size_t>(u)];
        for (; it < nbrs.size(); ++it) {
            const int v = nbrs[it];
            if (v < 0 || static_cast<std::size_t>(v) >= right) throw std::invalid_argument("edge to unknown right vertex");
            const int w = match_r[static_cast<std::size_t>(v)];
            if (w < 0 || (dist[static_cast<std::size_t>(w)] == dist[static_cast<std::size_t>(u)] + 1 && self(self, w))) {
                match_l[static_cast<std::size_t>(u)] = v;
                match_r[static_cast<std::size_t>(v)] = u;
                ++it;
                return true;
            }
        }
        dist[static_cast<std::size_t>(u)] = inf;
        return false;
    };
    while (bfs()) {
        std::fill(next.begin(), next.end(), 0);
        for (std::size_t u = 0; u < left; ++u) {
            if (match_l[u] < 0) dfs(dfs, static_cast<int>(u));
        }
    }
    return match_l;
}

bool valid_pair(const MatchProfile& a, const MatchProfile& b, const MatchConstraint& c) {
    return a.region && b.region && *a.region == *b.region &&
           std::abs(a.avg_monthly_queries - b.avg_monthly_queries) <= c.max_query_difference;
}

MatchResult match(std::span<const MatchProfile> holdouts, std::span<const MatchProfile> adopters,
                  const MatchConstraint& c) {
    if (!(c.max_query_difference > 0.0)) throw std::invalid_argument("query difference threshold must be positive");
    MatchResult res;
    res.holdouts = holdouts.size();
    res.adopters = adopters.size();
    auto band = [&](double q) { return static_cast<long>(std::floor(q / c.max_query_difference)); };
    std::map<std::pair<std::string, long>, std::vector<int>> buckets;
    for (std::size_t j = 0; j < adopters.size(); ++j) {
        if (adopters[j].region) buckets[{*adopters[j].region, band(adopters[j].avg_monthly_queries)}].push_back(static_cast<int>(j));
    }
    std::vector<std::vector<int>> adj(holdouts.size());
    for (std::size_t i = 0; i < holdouts.size(); ++i) {
        const MatchProfile& h = holdouts[i];
        if (!h.region) continue;
        const long b = band(h.avg_monthly_queries);
        for (long d = b - 1; d <= b + 1; ++d) {
            auto it = buckets.find({*h.region, d});
            if (it == buckets.end()) continue;
            for (int j : it->second) {
                if (valid_pair(h, adopters[static_cast<std::size_t>(j)], c)) adj[i].push_back(j);
            }
        }
        std::sort(adj[i].begin(), adj[i].end());
        res.valid_edges += adj[i].size();
    }
    const std::vector<int> m = hopcroft_karp(holdouts.size(), adopters.size(), adj);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] >= 0) res.pairs.emplace_back(i, static_cast<std::size_t>(m[i]));
    }
    return res;
}

double weighted_probability(std::span<const WeightedClick> clicks) {
    double num = 0.0, den = 0.0;
    for (const WeightedClick& c : clicks) {
        den += c.weight;
        if (c.positive) num += c.weight;
    }
    if (!(den > 0.0)) throw std::invalid_argument("group has no relevant click weight");
    return num / den;
}

double per_user_probability(std::span<const WeightedClick> clicks) {
    struct Acc {
        double n = 0.0, weight = 0.0, positive = 0.0;
    };
    std::map<uint32_t, Acc> users;
    for (const WeightedClick& c : clicks) {
        Acc& u = users[c.user];
        u.n += 1.0;
        u.weight += c.weight;
        if (c.positive) u.positive += c.weight;
    }
    double num = 0.0, den = 0.0;
    for (const auto& [id, u] : users) {
        if (u.weight <= 0.0) continue;
        // Each user counts once, with the mean weight of their clicks.
        const double w = u.weight / u.n;
        num += w * u.positive / u.weight;
        den += w;
    }
    if (!(den > 0.0)) throw std::invalid_argument("group has no relevant click weight");
    return num / den;
}

namespace {

/// Weighted totals of a click group, at the point estimate and under each
/// bootstrap resample of its clicks.
struct GroupBoot {
    double total = 0.0;
    std::vector<double> positive;
    std::vector<double> boot_total;
    std::vector<std::vector<double>> boot_positive;
};

GroupBoot bootstrap_group(std::span<const CategoryClick> clicks, int categories, std::size_t n_boot, uint64_t seed) {
    const auto nc = static_cast<std::size_t>(categories);
    GroupBoot g;
    g.positive.assign(nc, 0.0);
    auto add = [&](const CategoryClick& c, double& total, std::vector<double>& pos) {
        total += c.weight;
        for (uint64_t m = c.mask; m; m &= m - 1) {
            const auto s = static_cast<std::size_t>(std::countr_zero(m));
            if (s < nc) pos[s] += c.weight;
        }
    };
    for (const CategoryClick& c : clicks) add(c, g.total, g.positive);
    g.boot_total.assign(n_boot, 0.0);
    g.boot_positive.assign(n_boot, std::vector<double>(nc, 0.0));
    if (clicks.empty()) return g;
    std::uniform_int_distribution<std::size_t> pick(0, clicks.size() - 1);
    for (std::size_t b = 0; b < n_boot; ++b) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(b)));
        for (std::size_t k = 0; k < clicks.size(); ++k) add(clicks[pick(rng)], g.boot_total[b], g.boot_positive[b]);
    }
    return g;
}

std::vector<CategoryRatio> combine(const GroupBoot& a, const GroupBoot& b, int categories, std::size_t n1,
                                   std::size_t n2, double level) {
    std::vector<CategoryRatio> out;
    for (int s = 0; s < categories; ++s) {
        const auto us = static_cast<std::size_t>(s);
        CategoryRatio cr;
        cr.category = s;
        RatioResult& r = cr.result;
        r.n1 = n1;
        r.n2 = n2;
        if (!(a.total > 0.0) || !(b.total > 0.0)) {
            cr.reason = "a group has no relevant clicks";
            out.push_back(std::move(cr));
            continue;
        }
        r.p1 = a.positive[us] / a.total;
        r.p2 = b.positive[us] / b.total;
        if (!(r.p2 > 0.0)) {
            cr.reason = "second group has no positive clicks";
            out.push_back(std::move(cr));
            continue;
        }
        cr.defined = true;
        r.ratio = r.p1 / r.p2;
        std::vector<double> reps;
        for (std::size_t k = 0; k < a.boot_total.size(); ++k) {
            const double q2 = b.boot_total[k] > 0.0 ? b.boot_positive[k][us] / b.boot_total[k] : 0.0;
            if (!(q2 > 0.0) || !(a.boot_total[k] > 0.0)) {
                ++r.dropped;
                continue;
            }
            reps.push_back(a.boot_positive[k][us] / a.boot_total[k] / q2);
        }
        if (reps.empty()) {
            r.ci_lo = r.ci_hi = r.ratio;
        } else {
            r.ci_lo = percentile(reps, (1.0 - level) / 2.0);
            r.ci_hi = percentile(reps, 1.0 - (1.0 - level) / 2.0);
        }
        out.push_back(std::move(cr));
    }
    return out;
}

std::vector<CategoryClick> as_category(std::span<const WeightedClick> clicks) {
    std::vector<CategoryClick> out;
    out.reserve(clicks.size());
    for (const WeightedClick& c : clicks) out.push_back({c.weight, c.positive ? 1u : 0u});
    return out;
}

}  // namespace

RatioResult click_ratio(std::span<const WeightedClick> g1, std::span<const WeightedClick> g2, std::size_t n_boot,
                        uint64_t seed, double level) {
    if (g1.empty() || g2.empty()) throw std::invalid_argument("click ratio needs at least one relevant click per group");
    const auto c1 = as_category(g1);
    const auto c2 = as_category(g2);
    const GroupBoot a = bootstrap_group(c1, 1, n_boot, derive_seed(seed, "group1"));
    const GroupBoot b = bootstrap_group(c2, 1, n_boot, derive_seed(seed, "group2"));
    const CategoryRatio r = combine(a, b, 1, g1.size(), g2.size(), level).front();
    if (!r.defined) {
        const auto positives = static_cast<std::size_t>(std::count_if(g2.begin(), g2.end(), [](const auto& c) { return c.positive; }));
        throw RatioUndefined("click ratio undefined: " + r.reason + " (" + std::to_string(positives) + " of " +
                                 std::to_string(g2.size()) + " clicks positive)",
                             g2.size(), positives);
    }
    return r.result;
}

std::vector<CategoryRatio> category_ratios(std::span<const CategoryClick> g1, std::span<const CategoryClick> g2,
                                           int categories, std::size_t n_boot, uint64_t seed) {
    if (categories < 1 || categories > 64) throw std::invalid_argument("category count must be in 1..64");
    const GroupBoot a = bootstrap_group(g1, categories, n_boot, derive_seed(seed, "group1"));
    const GroupBoot b = bootstrap_group(g2, categories, n_boot, derive_seed(seed, "group2"));
    return combine(a, b, categories, g1.size(), g2.size(), 0.95);
}

LogitFit fit_logit(std::span<const LogitObservation> obs, bool with_day_effects, double tolerance,
                   int max_iterations) {
    if (obs.empty()) throw std::invalid_argument("logit fit needs observations");
    // The likelihood depends only on counts per (day, v) cell.
    struct Cell {
        double n = 0.0, y = 0.0;
    };
    std::map<std::pair<int32_t, bool>, Cell> cells;
    bool has_v[2] = {false, false};
    for (const LogitObservation& o : obs) {
        Cell& c = cells[{with_day_effects ? o.day : 0, o.v}];
        c.n += 1.0;
        c.y += o.y ? 1.0 : 0.0;
        has_v[o.v] = true;
    }
    if (!has_v[0] || !has_v[1]) throw std::invalid_argument("logit fit needs both values of the window indicator");
    std::vector<int32_t> days;
    for (const auto& [key, c] : cells) {
        if (days.empty() || days.back() != key.first) days.push_back(key.first);
    }
    const std::size_t p = 2 + (with_day_effects ? days.size() - 1 : 0);
    struct Row {
        std::size_t day_col;  // 0 when none
        double v, n, y;
    };
    std::vector<Row> rows;
    for (const auto& [key, c] : cells) {
        const std::size_t idx = static_cast<std::size_t>(std::lower_bound(days.begin(), days.end(), key.first) - days.begin());
        rows.push_back({idx == 0 ? 0 : 1 + idx, key.second ? 1.0 : 0.0, c.n, c.y});
    }
    const double n_total = static_cast<double>(obs.size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    auto eta_of = [&](const Row& r, const Eigen::VectorXd& b) {
        return b(0) * r.v + b(1) + (r.day_col ? b(static_cast<Eigen::Index>(r.day_col)) : 0.0);
    };
    auto loglik = [&](const Eigen::VectorXd& b) {
        double l = 0.0;
        for (const Row& r : rows) {
            const double eta = eta_of(r, b);
            const double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
            l += r.y * eta - r.n * log1pe;
        }
        return l;
    };
    auto grad_hess = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
        g.setZero(static_cast<Eigen::Index>(p));
        h.setZero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
        for (const Row& r : rows) {
            const double eta = eta_of(r, b);
            const double mu = 1.0 / (1.0 + std::exp(-eta));
            const double resid = r.y - r.n * mu;
            const double w = r.n * mu * (1.0 - mu);
            Eigen::Index cols[3] = {0, 1, static_cast<Eigen::Index>(r.day_col)};
            double x[3] = {r.v, 1.0, r.day_col ? 1.0 : 0.0};
            for (int a = 0; a < 3; ++a) {
                if (x[a] == 0.0) continue;
                g(cols[a]) += resid * x[a];
                for (int c = 0; c < 3; ++c) {
                    if (x[c] != 0.0) h(cols[a], cols[c]) += w * x[a] * x[c];
                }
            }
        }
    };
    LogitFit fit;
    fit.n = obs.size();
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    double ll = loglik(beta);
    for (int it = 0; it < max_iterations; ++it) {
        grad_hess(beta, g, h);
        fit.gradient_norm = g.norm() / n_total;
        if (fit.gradient_norm <= tolerance) {
            fit.converged = true;
            break;
        }
        ++fit.iterations;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        Eigen::VectorXd step = ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            step = (h + 1e-8 * Eigen::MatrixXd::Identity(h.rows(), h.cols())).ldlt().solve(g);
        }
        double t = 1.0;
        Eigen::VectorXd cand = beta + step;
        double cand_ll = loglik(cand);
        for (int k = 0; k < 40 && !(cand_ll >= ll - 1e-12 * std::abs(ll)); ++k) {
            t *= 0.5;
            cand = beta + t * step;
            cand_ll = loglik(cand);
        }
        beta = cand;
        ll = cand_ll;
    }
    if (!fit.converged) {
        grad_hess(beta, g, h);
        fit.gradient_norm = g.norm() / n_total;
        fit.converged = fit.gradient_norm <= tolerance;
    }
    fit.beta = beta(0);
    fit.intercept = beta(1);
    for (std::size_t d = 1; d < days.size() && with_day_effects; ++d) {
        fit.day_effects.emplace_back(days[d], beta(static_cast<Eigen::Index>(d + 1)));
    }
    const Eigen::MatrixXd cov = h.ldlt().solve(Eigen::MatrixXd::Identity(h.rows(), h.cols()));
    fit.beta_se = std::sqrt(std::max(0.0, cov(0, 0)));
    fit.separated = !fit.converged || beta.cwiseAbs().maxCoeff() > 15.0 || !std::isfinite(fit.beta_se);
    if (fit.separated) warn("logit fit shows separation or did not converge; coefficients may be unreliable");
    return fit;
}

WindowDynamics window_dynamics(std::span<const DynamicsClick> clicks, int categories, const DynamicsOptions& options) {
    if (options.min_offset > options.max_offset) throw std::invalid_argument("offset range is empty");
    if (options.window < 0) throw std::invalid_argument("window must be non-negative");
    WindowDynamics out;
    std::vector<CategoryClick> in_win, out_win, base_raw, base_cond;
    for (const DynamicsClick& c : clicks) {
        const CategoryClick cc{c.weight, c.relevant ? c.mask : 0};
        if (c.relevant) (std::abs(c.offset) <= options.window ? in_win : out_win).push_back(cc);
        if (c.offset < options.min_offset || c.offset > options.max_offset) {
            base_raw.push_back(cc);
            if (c.relevant) base_cond.push_back(cc);
        }
    }
    out.in_window = category_ratios(in_win, out_win, categories, options.n_boot, derive_seed(options.seed, "window"));

    const GroupBoot raw_base = bootstrap_group(base_raw, categories, options.n_boot, derive_seed(options.seed, "base-raw"));
    const GroupBoot cond_base =
        bootstrap_group(base_cond, categories, options.n_boot, derive_seed(options.seed, "base-conditioned"));
    for (int k = options.min_offset; k <= options.max_offset; ++k) {
        std::vector<CategoryClick> raw, cond;
        std::vector<double> share(static_cast<std::size_t>(categories), 0.0);
        double relevant_weight = 0.0;
        for (const DynamicsClick& c : clicks) {
            if (c.offset != k) continue;
            raw.push_back({c.weight, c.relevant ? c.mask : 0});
            if (!c.relevant) continue;
            cond.push_back({c.weight, c.mask});
            const int members = std::popcount(c.mask);
            if (members == 0) continue;
            relevant_weight += c.weight;
            for (uint64_t m = c.mask; m; m &= m - 1) {
                const auto s = static_cast<std::size_t>(std::countr_zero(m));
                if (s < share.size()) share[s] += c.weight / members;
            }
        }
        const uint64_t kseed = derive_seed(options.seed, static_cast<uint64_t>(k - options.min_offset));
        const GroupBoot raw_k = bootstrap_group(raw, categories, options.n_boot, derive_seed(kseed, "raw"));
        const GroupBoot cond_k = bootstrap_group(cond, categories, options.n_boot, derive_seed(kseed, "conditioned"));
        const auto raw_r = combine(raw_k, raw_base, categories, raw.size(), base_raw.size(), 0.95);
        const auto cond_r = combine(cond_k, cond_base, categories, cond.size(), base_cond.size(), 0.95);
        for (int s = 0; s < categories; ++s) {
            const auto us = static_cast<std::size_t>(s);
            const double sh = relevant_weight > 0.0 ? share[us] / relevant_weight : 0.0;
            out.by_offset.push_back({s, k, false, raw_r[us], sh});
            out.by_offset.push_back({s, k, true, cond_r[us], sh});
        }
    }
    return out;
}

TrustTable read_trust_table(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t domain = t.require_column("domain");
    const std::size_t score = t.require_column("score");
    TrustTable out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size() || row[domain].empty()) throw CsvError("incomplete trust row", t.lines[r]);
        try {
            out[news_domain(row[domain])] = std::stod(row[score]);
        } catch (const std::invalid_argument&) {
            throw CsvError("bad trust score '" + row[score] + "'", t.lines[r]);
        }
    }
    if (out.empty()) throw std::invalid_argument("trust table is empty");
    return out;
}

std::string news_domain(std::string_view url) { return url_host(url); }

NewsTrustResult news_trust_ratio(std::span<const NewsClick> g1, std::span<const NewsClick> g2, const TrustTable& trust,
                                 double threshold, double min_share, std::size_t n_boot, uint64_t seed) {
    if (trust.empty()) throw std::invalid_argument("trust table is empty");
    NewsTrustResult res;
    auto relevant = [&](std::span<const NewsClick> g) {
        std::vector<const NewsClick*> out;
        for (const NewsClick& c : g) {
            if (trust.count(c.domain)) out.push_back(&c);
        }
        return out;
    };
    const auto r1 = relevant(g1);
    const auto r2 = relevant(g2);
    if (r1.empty() || r2.empty()) {
        res.reason = "a group has no clicks on listed news domains";
        return res;
    }
    auto tag = [&](const std::vector<const NewsClick*>& g, auto&& pred) {
        std::vector<WeightedClick> out;
        for (const NewsClick* c : g) out.push_back({c->weight, pred(*c), c->user});
        return out;
    };
    auto untrusted = [&](const NewsClick& c) { return trust.at(c.domain) < threshold; };
    const auto w1 = tag(r1, untrusted);
    const auto w2 = tag(r2, untrusted);
    try {
        res.overall = click_ratio(w1, w2, n_boot, derive_seed(seed, "untrusted"));
        res.defined = true;
        const double pu2 = per_user_probability(w2);
        res.per_user_ratio = pu2 > 0.0 ? per_user_probability(w1) / pu2 : 0.0;
    } catch (const RatioUndefined& ex) {
        res.reason = ex.what();
    }
    std::map<std::string, std::size_t> counts;
    for (const NewsClick* c : r1) ++counts[c->domain];
    for (const NewsClick* c : r2) ++counts[c->domain];
    const double total = static_cast<double>(r1.size() + r2.size());
    for (const auto& [domain, n] : counts) {
        DomainRatio d;
        d.domain = domain;
        d.trust = trust.at(domain);
        d.share = static_cast<double>(n) / total;
        if (d.share < min_share) continue;
        auto is_domain = [&](const NewsClick& c) { return c.domain == domain; };
        try {
            d.result = click_ratio(tag(r1, is_domain), tag(r2, is_domain), n_boot, derive_seed(seed, domain));
            d.defined = true;
        } catch (const RatioUndefined&) {
        }
        res.domains.push_back(std::move(d));
    }
    return res;
}

nlohmann::json to_json(const RatioResult& r) {
    return {{"p1", r.p1},     {"p2", r.p2}, {"ratio", r.ratio},   {"ci_lo", r.ci_lo},
            {"ci_hi", r.ci_hi}, {"n1", r.n1}, {"n2", r.n2}, {"dropped", r.dropped}};
}

nlohmann::json to_json(const LogitFit& f) {
    return {{"beta", f.beta},
            {"beta_se", f.beta_se},
            {"intercept", f.intercept},
            {"day_effects", f.day_effects.size()},
            {"iterations", f.iterations},
            {"gradient_norm", f.gradient_norm},
            {"converged", f.converged},
            {"separated", f.separated},
            {"n", f.n}};
}

}  // namespace intentscope
