#include "intentscope/log_model.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "intentscope/csv.hpp"

namespace intentscope {

using nlohmann::json;

const std::optional<std::string>& region_of(const LogEvent& e, Granularity g) {
    switch (g) {
        case Granularity::zcta: return e.zcta;
        case Granularity::county: return e.county;
        case Granularity::state: return e.state;
    }
    return e.zcta;
}

std::string_view granularity_name(Granularity g) {
    switch (g) {
        case Granularity::zcta: return "zcta";
        case Granularity::county: return "county";
        case Granularity::state: return "state";
    }
    return "zcta";
}

RegionTable::RegionTable(std::vector<Region> regions, std::vector<std::string> demographic_schema) :
    regions_(std::move(regions)), schema_(std::move(demographic_schema)) {
    const std::set<std::string> declared(schema_.begin(), schema_.end());
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        const Region& r = regions_[i];
        if (r.population < 0) throw std::invalid_argument("negative population for region " + r.id);
        for (const auto& [key, value] : r.demographics) {
            if (!declared.count(key)) {
                throw std::invalid_argument("demographic '" + key + "' of region " + r.id +
                                            " is not in the declared schema");
            }
        }
        if (!index_.emplace(r.id, i).second) throw std::invalid_argument("duplicate region id " + r.id);
    }
}

const Region* RegionTable::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &regions_[it->second];
}

RegionTable read_region_table(std::istream& in) {
    const CsvTable csv = read_csv(in);
    const std::size_t id_col = csv.require_column("region_id");
    const std::size_t pop_col = csv.require_column("population");
    const int county_col = csv.column("county");
    const int state_col = csv.column("state");

    std::vector<std::string> schema;
    std::vector<std::size_t> demo_cols;
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
        if (c == id_col || c == pop_col || static_cast<int>(c) == county_col ||
            static_cast<int>(c) == state_col) {
            continue;
        }
        schema.push_back(csv.header[c]);
        demo_cols.push_back(c);
    }

    std::vector<Region> regions;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        auto field = [&](std::size_t c) -> std::string { return c < row.size() ? row[c] : std::string(); };
        Region region;
        region.id = field(id_col);
        if (region.id.empty()) throw CsvError("empty region_id", csv.lines[r]);
        const std::string pop = field(pop_col);
        auto [p, ec] = std::from_chars(pop.data(), pop.data() + pop.size(), region.population);
        if (ec != std::errc{} || p != pop.data() + pop.size() || region.population < 0) {
            throw CsvError("invalid population '" + pop + "'", csv.lines[r]);
        }
        if (county_col >= 0 && !field(county_col).empty()) region.county = field(county_col);
        if (state_col >= 0 && !field(state_col).empty()) region.state = field(state_col);
        for (std::size_t k = 0; k < demo_cols.size(); ++k) {
            const std::string v = field(demo_cols[k]);
            if (v.empty()) continue;
            try {
                std::size_t used = 0;
                const double value = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                region.demographics[schema[k]] = value;
            } catch (const std::exception&) {
                throw CsvError("invalid value '" + v + "' for " + schema[k], csv.lines[r]);
            }
        }
        regions.push_back(std::move(region));
    }
    return RegionTable(std::move(regions), std::move(schema));
}

RegionTable read_region_table_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open region table: " + path);
    return read_region_table(in);
}

void write_region_table(std::ostream& out, const RegionTable& table) {
    std::vector<std::string> header{"region_id", "population", "county", "state"};
    header.insert(header.end(), table.schema().begin(), table.schema().end());
    write_csv_row(out, header);
    for (const Region& r : table.regions()) {
        std::vector<std::string> row{r.id, std::to_string(r.population), r.county.value_or(""),
                                     r.state.value_or("")};
        for (const std::string& key : table.schema()) {
            auto it = r.demographics.find(key);
            row.push_back(it == r.demographics.end() ? "" : format_double(it->second));
        }
        write_csv_row(out, row);
    }
}

std::string normalize_query(std::string_view raw) { return to_lower_ascii(trim(raw)); }

bool normalize_event(LogEvent& event, const IngestOptions& options, IngestStats& stats) {
    event.query = normalize_query(event.query);
    if (event.query.empty()) {
        ++stats.empty_query;
        return false;
    }
    if (utf8_length(event.query) > options.max_query_chars) {
        ++stats.too_long;
        return false;
    }
    const std::size_t before = event.clicks.size();
    std::erase_if(event.clicks, [](const std::string& url) { return !starts_with(url, "http"); });
    stats.clicks_dropped += before - event.clicks.size();
    return true;
}

namespace {

std::optional<std::string> optional_string(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw std::invalid_argument(std::string("field '") + key + "' is not a string");
    std::string value = it->get<std::string>();
    if (value.empty()) return std::nullopt;
    return value;
}

std::string required_string(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw std::invalid_argument(std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
}

LogEvent parse_event(std::string_view line) {
    const json obj = json::parse(line);
    if (!obj.is_object()) throw std::invalid_argument("record is not an object");
    LogEvent e;
    e.user_id = required_string(obj, "user_id");
    if (e.user_id.empty()) throw std::invalid_argument("empty user_id");
    auto ts = parse_timestamp(required_string(obj, "ts"));
    if (!ts) throw std::invalid_argument("unparseable ts");
    e.ts = *ts;
    e.zcta = optional_string(obj, "zcta");
    e.county = optional_string(obj, "county");
    e.state = optional_string(obj, "state");
    e.session_id = required_string(obj, "session");
    e.query = required_string(obj, "query");
    if (auto it = obj.find("clicks"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) throw std::invalid_argument("clicks is not a list");
        for (const json& c : *it) {
            if (!c.is_string()) throw std::invalid_argument("click is not a string");
            e.clicks.push_back(c.get<std::string>());
        }
    }
    return e;
}

}  // namespace

IngestStats ingest_events(std::istream& in, const EventSink& sink, const IngestOptions& options) {
    IngestStats stats;
    std::string line;
    while (std::getline(in, line)) {
        ++stats.lines;
        if (trim(line).empty()) continue;
        LogEvent event;
        try {
            event = parse_event(line);
        } catch (const std::exception& ex) {
            ++stats.malformed;
            if (stats.first_malformed_line == 0) stats.first_malformed_line = stats.lines;
            if (options.strict) throw IngestError(ex.what(), stats.lines);
            continue;
        }
        if (!normalize_event(event, options, stats)) continue;
        ++stats.accepted;
        sink(std::move(event));
    }
    if (in.bad()) throw IngestError("stream read error", stats.lines + 1);
    return stats;
}

std::vector<LogEvent> ingest_events(std::istream& in, IngestStats* stats, const IngestOptions& options) {
    std::vector<LogEvent> events;
    IngestStats s = ingest_events(in, [&](LogEvent&& e) { events.push_back(std::move(e)); }, options);
    if (stats) *stats = s;
    return events;
}

std::vector<LogEvent> ingest_events_file(const std::string& path, IngestStats* stats,
                                         const IngestOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path, 0);
    return ingest_events(in, stats, options);
}

std::string serialize_event(const LogEvent& e) {
    json obj;
    obj["user_id"] = e.user_id;
    obj["ts"] = format_timestamp(e.ts);
    obj["zcta"] = e.zcta ? json(*e.zcta) : json(nullptr);
    obj["county"] = e.county ? json(*e.county) : json(nullptr);
    obj["state"] = e.state ? json(*e.state) : json(nullptr);
    obj["session"] = e.session_id;
    obj["query"] = e.query;
    obj["clicks"] = e.clicks;
    return obj.dump();
}

void write_events(std::ostream& out, std::span<const LogEvent> events) {
    for (const LogEvent& e : events) out << serialize_event(e) << '\n';
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
    json users = json::object();
    for (const auto& [id, u] : truth.users) {
        users[id] = {{"intent", u.intent},
                     {"first_intent", u.first_intent ? json(format_date(*u.first_intent)) : json(nullptr)},
                     {"home", u.home_region},
                     {"late", u.late}};
    }
    json doc;
    doc["version"] = 1;
    doc["users"] = std::move(users);
    doc["region_rate"] = truth.region_rate;
    doc["region_realized_rate"] = truth.region_realized_rate;
    doc["region_users"] = truth.region_users;
    doc["url_intent"] = truth.url_intent;
    doc["url_topic"] = truth.url_topic;
    out << doc.dump(1) << '\n';
}

GroundTruth read_ground_truth(std::istream& in) {
    const json doc = json::parse(in);
    if (doc.value("version", 0) != 1) throw std::runtime_error("unsupported ground truth version");
    GroundTruth truth;
    for (const auto& [id, u] : doc.at("users").items()) {
        UserTruth t;
        t.intent = u.at("intent").get<bool>();
        if (!u.at("first_intent").is_null()) {
            t.first_intent = parse_date(u.at("first_intent").get<std::string>());
        }
        t.home_region = u.at("home").get<std::string>();
        t.late = u.value("late", false);
        truth.users.emplace(id, std::move(t));
    }
    truth.region_rate = doc.at("region_rate").get<std::map<std::string, double>>();
    truth.region_realized_rate = doc.at("region_realized_rate").get<std::map<std::string, double>>();
    truth.region_users = doc.at("region_users").get<std::map<std::string, std::size_t>>();
    truth.url_intent = doc.at("url_intent").get<std::map<std::string, bool>>();
    truth.url_topic = doc.at("url_topic").get<std::map<std::string, std::string>>();
    return truth;
}

}  // namespace intentscope
