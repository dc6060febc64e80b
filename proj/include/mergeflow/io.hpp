#pragma once

// Versioned JSONL files for PR tables, arrival schedules and event logs.
//
// Every file starts with a header line
//   {"type":"header","format":"mergeflow","version":"1.0","content":...}
// followed by one record per line with "type" = "pr", "arrival" or "event".
// Readers reject a different major version.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mergeflow/core.hpp"

namespace mergeflow::io {

inline constexpr std::string_view kFormatName = "mergeflow";
inline constexpr std::string_view kFormatVersion = "1.0";

class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const PullRequest& pr);
PullRequest pr_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EventRecord& ev);
EventRecord event_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Arrival& a);
Arrival arrival_from_json(const nlohmann::json& doc);

/// Contents of one JSONL file; any section may be empty.
struct Bundle {
    PrTable prs;
    std::vector<Arrival> arrivals;
    EventLog events;
};

/// One JSON document per line, header first.
void write_jsonl(std::ostream& out, std::string_view content, const Bundle& bundle);
void write_jsonl(const std::filesystem::path& path, std::string_view content, const Bundle& bundle);

/// Parses and validates: PR invariants, arrival order, event-log ordering and
/// pairing. Errors carry the line number or the offending record id. An
/// empty input yields an empty bundle.
Bundle read_jsonl(std::istream& in);
Bundle ingest(const std::filesystem::path& path);

}  // namespace mergeflow::io
