#include "intentscope/annotations.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "intentscope/csv.hpp"

namespace intentscope {

std::string_view verdict_name(Verdict v) {
    switch (v) {
        case Verdict::highly_likely: return "highly_likely";
        case Verdict::likely: return "likely";
        case Verdict::ambiguous: return "ambiguous";
        case Verdict::unlikely: return "unlikely";
        case Verdict::missing_page: return "missing_page";
    }
    return "ambiguous";
}

Verdict parse_verdict(std::string_view s) {
    for (Verdict v : {Verdict::highly_likely, Verdict::likely, Verdict::ambiguous, Verdict::unlikely,
                      Verdict::missing_page}) {
        if (verdict_name(v) == s) return v;
    }
    throw std::invalid_argument("unknown verdict '" + std::string(s) + "'");
}

ConsensusResult consensus(std::span<const AnnotationRecord> records) {
    if (records.size() < 3) {
        throw std::invalid_argument("consensus needs at least 3 annotations, got " + std::to_string(records.size()));
    }
    std::set<std::string> annotators;
    ConsensusResult r;
    for (const AnnotationRecord& rec : records) {
        if (!annotators.insert(rec.annotator_id).second) {
            throw std::invalid_argument("annotator " + rec.annotator_id + " judged " + rec.url + " twice");
        }
        switch (rec.verdict) {
            case Verdict::highly_likely:
            case Verdict::likely: ++r.positives; break;
            case Verdict::ambiguous:
            case Verdict::unlikely: ++r.negatives; break;
            case Verdict::missing_page: ++r.abstentions; break;
        }
    }
    const bool pos = r.positives >= 3;
    const bool neg = r.negatives >= 2;
    if (pos && neg) {
        r.conflicted = true;
    } else if (pos) {
        r.label = ConsensusLabel::positive;
    } else if (neg) {
        r.label = ConsensusLabel::negative;
    } else {
        r.needs_fourth = true;
    }
    return r;
}

std::map<std::string, ConsensusResult> consensus_all(std::span<const AnnotationRecord> records) {
    std::map<std::string, std::vector<AnnotationRecord>> by_url;
    for (const AnnotationRecord& r : records) by_url[r.url].push_back(r);
    std::map<std::string, ConsensusResult> out;
    for (const auto& [url, recs] : by_url) out.emplace(url, consensus(recs));
    return out;
}

std::string_view provenance_name(Provenance p) {
    switch (p) {
        case Provenance::consensus: return "consensus";
        case Provenance::rule: return "rule";
        case Provenance::gnn: return "gnn";
        case Provenance::seed: return "seed";
    }
    return "consensus";
}

Provenance parse_provenance(std::string_view s) {
    for (Provenance p : {Provenance::consensus, Provenance::rule, Provenance::gnn, Provenance::seed}) {
        if (provenance_name(p) == s) return p;
    }
    throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

void LabelStore::set_url(const std::string& url, Polarity polarity, Provenance provenance) {
    if (provenance == Provenance::seed) throw std::invalid_argument("seed provenance applies to queries only");
    urls_[url] = UrlLabel{polarity, provenance};
}

bool LabelStore::add_expanded(const std::string& url) {
    return urls_.emplace(url, UrlLabel{Polarity::positive, Provenance::gnn}).second;
}

std::optional<UrlLabel> LabelStore::get(std::string_view url) const {
    auto it = urls_.find(url);
    if (it == urls_.end()) return std::nullopt;
    return it->second;
}

bool LabelStore::is_positive(std::string_view url) const {
    auto it = urls_.find(url);
    return it != urls_.end() && it->second.polarity == Polarity::positive;
}

std::size_t LabelStore::count(Polarity p) const {
    return static_cast<std::size_t>(
        std::count_if(urls_.begin(), urls_.end(), [&](const auto& kv) { return kv.second.polarity == p; }));
}

std::size_t LabelStore::count(Provenance p) const {
    if (p == Provenance::seed) return seed_queries_.size();
    return static_cast<std::size_t>(
        std::count_if(urls_.begin(), urls_.end(), [&](const auto& kv) { return kv.second.provenance == p; }));
}

std::map<std::string, Polarity> rule_labels(std::span<const std::string> urls, std::span<const UrlLabelRule> rules) {
    std::map<std::string, Polarity> out;
    for (const std::string& u : urls) {
        if (auto p = apply_url_rules(u, rules)) out[u] = *p;
    }
    return out;
}

LabelStore assemble_labels(const std::map<std::string, ConsensusResult>& consensus_results,
                           const std::map<std::string, Polarity>& rule_labels_in,
                           std::span<const std::string> seed_queries, std::vector<LabelConflict>* conflicts) {
    LabelStore store;
    for (const auto& [url, p] : rule_labels_in) store.set_url(url, p, Provenance::rule);
    for (const auto& [url, c] : consensus_results) {
        if (c.label == ConsensusLabel::undecided) continue;
        const Polarity p = c.label == ConsensusLabel::positive ? Polarity::positive : Polarity::negative;
        auto rule = rule_labels_in.find(url);
        if (rule != rule_labels_in.end() && rule->second != p) {
            warn("label conflict for " + url + ": rule says " + std::string(polarity_name(rule->second)) +
                 ", annotators say " + std::string(polarity_name(p)) + "; keeping the annotators' label");
            if (conflicts) conflicts->push_back({url, rule->second, p});
        }
        store.set_url(url, p, Provenance::consensus);
    }
    for (const std::string& q : seed_queries) store.add_seed_query(q);
    return store;
}

std::vector<AnnotationRecord> read_annotations(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t url = t.require_column("url");
    const std::size_t who = t.require_column("annotator_id");
    const std::size_t verdict = t.require_column("verdict");
    std::vector<AnnotationRecord> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size()) throw CsvError("short annotation row", t.lines[r]);
        try {
            out.push_back({row[url], row[who], parse_verdict(row[verdict])});
        } catch (const std::invalid_argument& ex) {
            throw CsvError(ex.what(), t.lines[r]);
        }
    }
    return out;
}

void write_annotations(std::ostream& out, std::span<const AnnotationRecord> records) {
    write_csv_row(out, {"url", "annotator_id", "verdict"});
    for (const AnnotationRecord& r : records) {
        write_csv_row(out, {r.url, r.annotator_id, std::string(verdict_name(r.verdict))});
    }
}

void write_labels(std::ostream& out, const LabelStore& store) {
    write_csv_row(out, {"url", "label", "provenance"});
    for (const auto& [url, l] : store.urls()) {
        write_csv_row(out, {url, std::string(polarity_name(l.polarity)), std::string(provenance_name(l.provenance))});
    }
    for (const std::string& q : store.seed_queries()) {
        write_csv_row(out, {q, std::string(polarity_name(Polarity::positive)), std::string(provenance_name(Provenance::seed))});
    }
}

LabelStore read_labels(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t url = t.require_column("url");
    const std::size_t label = t.require_column("label");
    const std::size_t prov = t.require_column("provenance");
    LabelStore store;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size()) throw CsvError("short label row", t.lines[r]);
        try {
            const Provenance p = parse_provenance(row[prov]);
            if (p == Provenance::seed) {
                store.add_seed_query(row[url]);
            } else {
                store.set_url(row[url], parse_polarity(row[label]), p);
            }
        } catch (const std::exception& ex) {
            throw CsvError(ex.what(), t.lines[r]);
        }
    }
    return store;
}

std::vector<AnnotationRecord> simulate_annotations(std::span<const std::string> urls,
                                                   const std::map<std::string, bool>& url_intent,
                                                   const AnnotatorModel& model, uint64_t seed) {
    if (model.pool_size < model.max_annotators || model.max_annotators < 3) {
        throw std::invalid_argument("annotator pool too small");
    }
    std::vector<AnnotationRecord> out;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < urls.size(); ++i) {
        const std::string& url = urls[i];
        Rng rng(derive_seed(derive_seed(seed, "annotations"), i));
        auto truth = url_intent.find(url);
        const bool intent = truth != url_intent.end() && truth->second;
        std::vector<int> pool(static_cast<std::size_t>(model.pool_size));
        for (int k = 0; k < model.pool_size; ++k) pool[static_cast<std::size_t>(k)] = k;
        std::shuffle(pool.begin(), pool.end(), rng);

        std::vector<AnnotationRecord> recs;
        auto judge = [&] {
            AnnotationRecord r;
            r.url = url;
            r.annotator_id = "a" + std::to_string(pool[recs.size()]);
            if (unit(rng) < model.missing_page_rate) {
                r.verdict = Verdict::missing_page;
            } else {
                const bool says_positive = intent != (unit(rng) < model.error_rate);
                const bool strong = unit(rng) < 0.5;
                r.verdict = says_positive ? (strong ? Verdict::highly_likely : Verdict::likely)
                                          : (strong ? Verdict::unlikely : Verdict::ambiguous);
            }
            recs.push_back(std::move(r));
        };
        for (int k = 0; k < 3; ++k) judge();
        while (static_cast<int>(recs.size()) < model.max_annotators && consensus(recs).needs_fourth) judge();
        out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
}

}  // namespace intentscope
