#pragma once

#include <optional>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace intentscope {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Term lists that identify unambiguous intent queries (the seed set) and
/// the broader keyword list that scopes graph construction.
///
/// All matching is substring matching on lower-cased text; only
/// `intent_patterns` are regular expressions.
struct SeedLexicon {
    std::vector<std::string> topic_terms;
    std::vector<std::string> object_terms;
    std::vector<std::string> intent_patterns;
    /// Appointment words and location-seeking words.
    std::vector<std::string> action_terms;
    /// Provider (pharmacy) names.
    std::vector<std::string> entity_names;
    std::vector<std::string> graph_keywords;

    std::vector<std::regex> compiled_patterns;
};

/// Best-effort default lexicon for COVID-19 vaccine intent. Every list is
/// configurable; the appointment/location lists in particular are partial.
SeedLexicon default_lexicon();

/// Validates term lists, compiles patterns, and checks that every possible
/// seed query is also graph-relevant. Throws ConfigError.
void finalize_lexicon(SeedLexicon& lex);

SeedLexicon lexicon_from_json(const nlohmann::json& j);
nlohmann::json lexicon_to_json(const SeedLexicon& lex);

bool is_seed_query(std::string_view query, const SeedLexicon& lex);
bool is_graph_relevant(std::string_view query, const SeedLexicon& lex);

enum class Polarity { positive, negative };

std::string_view polarity_name(Polarity p);
Polarity parse_polarity(std::string_view s);

struct UrlLabelRule {
    std::string pattern;
    Polarity polarity = Polarity::positive;
    std::string note;
    std::regex compiled;
};

UrlLabelRule make_url_rule(std::string pattern, Polarity polarity, std::string note = {});

/// Rules are evaluated in list order; the first match decides.
std::optional<Polarity> apply_url_rules(std::string_view url, std::span<const UrlLabelRule> rules);

std::vector<UrlLabelRule> default_url_rules();
std::vector<UrlLabelRule> url_rules_from_json(const nlohmann::json& j);
nlohmann::json url_rules_to_json(std::span<const UrlLabelRule> rules);

}  // namespace intentscope
