#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "intentscope/common.hpp"

namespace intentscope {

/// One search interaction.
struct LogEvent {
    std::string user_id;
    Timestamp ts;
    std::optional<std::string> zcta;
    std::optional<std::string> county;
    std::optional<std::string> state;
    std::string session_id;
    /// Lower-cased, trimmed, non-empty, at most 100 code points.
    std::string query;
    std::vector<std::string> clicks;

    friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

/// Geographic granularity of a region code.
enum class Granularity { zcta, county, state };

const std::optional<std::string>& region_of(const LogEvent& e, Granularity g);
std::string_view granularity_name(Granularity g);

struct Region {
    std::string id;
    int64_t population = 0;
    /// Parent codes in the fine ⊂ coarse ⊂ state hierarchy.
    std::optional<std::string> county;
    std::optional<std::string> state;
    std::map<std::string, double> demographics;
};

/// Regions keyed by id, plus the declared demographic schema.
class RegionTable {
public:
    RegionTable() = default;
    RegionTable(std::vector<Region> regions, std::vector<std::string> demographic_schema);

    const std::vector<Region>& regions() const { return regions_; }
    const std::vector<std::string>& schema() const { return schema_; }
    const Region* find(std::string_view id) const;
    std::size_t size() const { return regions_.size(); }
    bool empty() const { return regions_.empty(); }

private:
    std::vector<Region> regions_;
    std::vector<std::string> schema_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// CSV with header region_id,population[,county][,state],<demographic columns>.
RegionTable read_region_table(std::istream& in);
RegionTable read_region_table_file(const std::string& path);
void write_region_table(std::ostream& out, const RegionTable& table);

struct IngestError : std::runtime_error {
    IngestError(const std::string& what, std::size_t line) :
        std::runtime_error("ingest failed at line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

struct IngestOptions {
    std::size_t max_query_chars = 100;
    /// When set, the first malformed record aborts ingestion instead of being skipped.
    bool strict = false;
};

struct IngestStats {
    std::size_t lines = 0;
    std::size_t accepted = 0;
    std::size_t malformed = 0;
    std::size_t too_long = 0;
    std::size_t empty_query = 0;
    std::size_t clicks_dropped = 0;
    /// Line number of the first malformed record, 0 if none.
    std::size_t first_malformed_line = 0;
};

/// Lower-cases (ASCII) and trims.
std::string normalize_query(std::string_view raw);

/// Applies query/click normalization rules. Returns false if the event must be skipped.
bool normalize_event(LogEvent& event, const IngestOptions& options, IngestStats& stats);

using EventSink = std::function<void(LogEvent&&)>;

/// Reads line-delimited JSON events. Blank lines are ignored.
IngestStats ingest_events(std::istream& in, const EventSink& sink, const IngestOptions& options = {});
std::vector<LogEvent> ingest_events(std::istream& in, IngestStats* stats = nullptr,
                                    const IngestOptions& options = {});
std::vector<LogEvent> ingest_events_file(const std::string& path, IngestStats* stats = nullptr,
                                         const IngestOptions& options = {});

/// One JSON object per line with keys user_id, ts, zcta, county, state, session, query, clicks.
std::string serialize_event(const LogEvent& event);
void write_events(std::ostream& out, std::span<const LogEvent> events);

/// Per-user truth: intent flag v and first-intent date.
struct UserTruth {
    bool intent = false;
    std::optional<Day> first_intent;
    std::string home_region;
    /// First intent fell on or after the world's late-intent start.
    bool late = false;
};

struct GroundTruth {
    std::map<std::string, UserTruth> users;
    /// Configured p(v,z) per fine region.
    std::map<std::string, double> region_rate;
    /// Realized fraction of intent users per region.
    std::map<std::string, double> region_realized_rate;
    std::map<std::string, std::size_t> region_users;
    /// URL -> true intent flag, for every URL the world can emit.
    std::map<std::string, bool> url_intent;
    /// URL -> concern topic name for topic URLs.
    std::map<std::string, std::string> url_topic;
};

void write_ground_truth(std::ostream& out, const GroundTruth& truth);
GroundTruth read_ground_truth(std::istream& in);

}  // namespace intentscope
