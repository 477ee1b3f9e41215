#include "intentscope/lexicon.hpp"

#include <algorithm>

#include "intentscope/common.hpp"

namespace intentscope {

namespace {

bool contains_any(std::string_view text, const std::vector<std::string>& terms) {
    return std::any_of(terms.begin(), terms.end(),
                       [&](const std::string& t) { return text.find(t) != std::string_view::npos; });
}

/// Backreferences are outside the portable subset we accept.
void check_portable(const std::string& pattern) {
    for (std::size_t i = 0; i + 1 < pattern.size(); ++i) {
        if (pattern[i] == '\\') {
            const char next = pattern[i + 1];
            if (next >= '1' && next <= '9') {
                throw ConfigError("pattern uses a backreference: " + pattern);
            }
            ++i;
        }
    }
}

std::regex compile(const std::string& pattern) {
    check_portable(pattern);
    try {
        return std::regex(pattern, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& ex) {
        throw ConfigError("pattern does not compile: " + pattern + " (" + ex.what() + ")");
    }
}

std::vector<std::string> lower_all(std::vector<std::string> terms) {
    for (std::string& t : terms) t = to_lower_ascii(t);
    return terms;
}

}  // namespace

SeedLexicon default_lexicon() {
    SeedLexicon lex;
    lex.topic_terms = {"covid", "coronavirus"};
    lex.object_terms = {"vaccin", "vacin", "vax", "dose", "shot", "booster", "johnson", "pfizer", "moderna"};
    lex.intent_patterns = {
        R"((find|get)( me)? (a |my |the )?(covid|coronavirus)[- ]?(19 )?(vaccin|vax|shot|booster))",
        R"((covid|coronavirus)[- ]?(19 )?(vaccine|vaccination|shot)s? (finder|locator|locations?))",
    };
    lex.action_terms = {"appointment", "appt",         "sign up",    "signup",   "register",
                        "registration", "schedule",    "book ",      "near me",  "where can i get",
                        "where to get", "where do i get", "walk-in", "walk in"};
    // Federal Retail Pharmacy Program partners and large subsidiaries. Names
    // that collide with common words ("united") are left out.
    lex.entity_names = {"cvs",       "walgreens",  "walmart",     "rite aid",   "kroger",
                        "publix",    "costco",     "heb",         "h-e-b",      "meijer",
                        "safeway",   "albertsons", "hy-vee",      "hyvee",      "winn-dixie",
                        "giant eagle", "sam's club", "sams club", "health mart", "good neighbor pharmacy",
                        "harris teeter", "wegmans", "shoprite",   "food lion",  "fred meyer",
                        "ralphs",    "vons",       "jewel-osco",  "thrifty white", "kinney drugs",
                        "topco",     "smith's",    "king soopers", "fry's",     "dillons"};
    lex.graph_keywords = {"covid",  "corona",    "pandemic", "cov19",   "virus",    "variant",  "vaccin",
                          "vacin",  "vax",       "dose",     "shot",    "booster",  "rollout",  "roll out",
                          "fda",    "cdc",       "johnson",  "jj",      "janssen",  "pfizer",   "phizer",
                          "biontech", "moderna", "astrazeneca", "mrna"};
    finalize_lexicon(lex);
    return lex;
}

void finalize_lexicon(SeedLexicon& lex) {
    auto require = [](const std::vector<std::string>& terms, const char* name) {
        if (terms.empty()) throw ConfigError(std::string("lexicon list '") + name + "' is empty");
        for (const std::string& t : terms) {
            if (t.empty()) throw ConfigError(std::string("lexicon list '") + name + "' has an empty term");
        }
    };
    lex.topic_terms = lower_all(std::move(lex.topic_terms));
    lex.object_terms = lower_all(std::move(lex.object_terms));
    lex.action_terms = lower_all(std::move(lex.action_terms));
    lex.entity_names = lower_all(std::move(lex.entity_names));
    lex.graph_keywords = lower_all(std::move(lex.graph_keywords));
    require(lex.topic_terms, "topic_terms");
    require(lex.object_terms, "object_terms");
    require(lex.intent_patterns, "intent_patterns");
    require(lex.action_terms, "action_terms");
    require(lex.entity_names, "entity_names");
    require(lex.graph_keywords, "graph_keywords");

    lex.compiled_patterns.clear();
    for (const std::string& p : lex.intent_patterns) lex.compiled_patterns.push_back(compile(p));

    // A seed query contains a topic term and an object term, so it is
    // graph-relevant whenever every term of either list contains a keyword.
    auto covered = [&](const std::vector<std::string>& terms) {
        return std::all_of(terms.begin(), terms.end(),
                           [&](const std::string& t) { return contains_any(t, lex.graph_keywords); });
    };
    if (!covered(lex.topic_terms) && !covered(lex.object_terms)) {
        throw ConfigError("seed terms are not covered by graph_keywords: some seed queries "
                          "would be excluded from graph construction");
    }
}

SeedLexicon lexicon_from_json(const nlohmann::json& j) {
    SeedLexicon lex;
    auto list = [&](const char* key) {
        if (!j.contains(key)) throw ConfigError(std::string("lexicon is missing '") + key + "'");
        return j.at(key).get<std::vector<std::string>>();
    };
    lex.topic_terms = list("topic_terms");
    lex.object_terms = list("object_terms");
    lex.intent_patterns = list("intent_patterns");
    lex.action_terms = list("action_terms");
    lex.entity_names = list("entity_names");
    lex.graph_keywords = list("graph_keywords");
    finalize_lexicon(lex);
    return lex;
}

nlohmann::json lexicon_to_json(const SeedLexicon& lex) {
    return {{"topic_terms", lex.topic_terms},         {"object_terms", lex.object_terms},
            {"intent_patterns", lex.intent_patterns}, {"action_terms", lex.action_terms},
            {"entity_names", lex.entity_names},       {"graph_keywords", lex.graph_keywords}};
}

bool is_seed_query(std::string_view query, const SeedLexicon& lex) {
    if (!contains_any(query, lex.topic_terms) || !contains_any(query, lex.object_terms)) return false;
    if (contains_any(query, lex.action_terms) || contains_any(query, lex.entity_names)) return true;
    const auto first = query.begin();
    const auto last = query.end();
    return std::any_of(lex.compiled_patterns.begin(), lex.compiled_patterns.end(),
                       [&](const std::regex& re) { return std::regex_search(first, last, re); });
}

bool is_graph_relevant(std::string_view query, const SeedLexicon& lex) {
    return contains_any(query, lex.graph_keywords);
}

std::string_view polarity_name(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }

Polarity parse_polarity(std::string_view s) {
    if (s == "positive" || s == "1") return Polarity::positive;
    if (s == "negative" || s == "0") return Polarity::negative;
    throw ConfigError("unknown polarity '" + std::string(s) + "'");
}

UrlLabelRule make_url_rule(std::string pattern, Polarity polarity, std::string note) {
    UrlLabelRule rule;
    rule.compiled = compile(pattern);
    rule.pattern = std::move(pattern);
    rule.polarity = polarity;
    rule.note = std::move(note);
    return rule;
}

std::optional<Polarity> apply_url_rules(std::string_view url, std::span<const UrlLabelRule> rules) {
    for (const UrlLabelRule& rule : rules) {
        if (std::regex_search(url.begin(), url.end(), rule.compiled)) return rule.polarity;
    }
    return std::nullopt;
}

std::vector<UrlLabelRule> default_url_rules() {
    std::vector<UrlLabelRule> rules;
    rules.push_back(make_url_rule(R"(cvs\.com/store-locator/.*/covid-vaccine/)", Polarity::positive,
                                  "CVS COVID-19 vaccine store locator"));
    rules.push_back(make_url_rule(R"(walmart\.com/.*covid-?19?-vaccine)", Polarity::positive,
                                  "Walmart COVID-19 vaccine pages"));
    rules.push_back(make_url_rule(R"(cvs\.com/store-locator/)", Polarity::negative,
                                  "general CVS store locator"));
    rules.push_back(make_url_rule(R"(walgreens\.com/storelocator/)", Polarity::negative,
                                  "general Walgreens store locator"));
    return rules;
}

std::vector<UrlLabelRule> url_rules_from_json(const nlohmann::json& j) {
    std::vector<UrlLabelRule> rules;
    for (const auto& item : j) {
        rules.push_back(make_url_rule(item.at("pattern").get<std::string>(),
                                      parse_polarity(item.at("polarity").get<std::string>()),
                                      item.value("note", std::string())));
    }
    return rules;
}

nlohmann::json url_rules_to_json(std::span<const UrlLabelRule> rules) {
    nlohmann::json arr = nlohmann::json::array();
    for (const UrlLabelRule& r : rules) {
        arr.push_back({{"pattern", r.pattern}, {"polarity", polarity_name(r.polarity)}, {"note", r.note}});
    }
    return arr;
}

}  // namespace intentscope
