#pragma once

#include "procgraph/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace procgraph {

enum class EventKind : int {
  ProcessCreate = 1,
  FileTimeChange = 2,
  ProcessTerminate = 5,
  FileCreate = 11,
  RegistryObject = 12,
  RegistryValueSet = 13,
};

std::optional<EventKind> event_kind_from_id(std::int64_t id);
std::string_view event_kind_name(EventKind kind);
std::optional<EventKind> event_kind_from_name(std::string_view name);

// Ordinal values match the comparison scale used by the reward; Unknown sorts
// below every real level.
enum class IntegrityLevel : int {
  Unknown = -1,
  Untrusted = 0,
  Low = 1,
  Medium = 2,
  High = 3,
  System = 4,
};

/// Case-insensitive name mapping. Raw SIDs ("S-1-16-...") map to Unknown.
IntegrityLevel normalize_integrity(std::string_view raw);
std::string_view integrity_name(IntegrityLevel level);

struct SysmonEvent {
  int event_id = 0;
  EventKind event_kind = EventKind::ProcessCreate;
  UtcTime utc_time;
  std::string process_guid;
  std::int64_t process_id = 0;
  std::string image;
  std::optional<std::string> parent_process_guid;
  std::optional<std::int64_t> parent_process_id;
  std::optional<std::string> parent_image;
  std::optional<std::string> command_line;
  IntegrityLevel integrity_level = IntegrityLevel::Unknown;
  std::optional<std::string> user;
  std::optional<std::string> hostname;
  std::optional<std::string> target_object;

  friend bool operator==(const SysmonEvent&, const SysmonEvent&) = default;
};

enum class InputFormat { JsonLines, Csv };

std::optional<InputFormat> input_format_from_name(std::string_view name);

struct RejectReport {
  std::size_t line_number = 0;  // 1-based physical line where the record starts
  std::string reason;
};

struct ParseResult {
  std::vector<SysmonEvent> events;
  std::vector<RejectReport> rejects;
  std::size_t record_count = 0;  // events.size() + rejects.size()
};

// Reject reasons.
inline constexpr std::string_view kRejectUnsupportedEventId = "unsupported event id";
inline constexpr std::string_view kRejectBadTimestamp = "bad timestamp";
inline constexpr std::string_view kRejectMalformed = "malformed record";
inline constexpr std::string_view kRejectMissingField = "missing field";
inline constexpr std::string_view kRejectMissingImage = "missing image";

/// Field alias table: canonical name -> accepted spellings (canonical first).
/// Lookup is exact-match first, then case-insensitive.
const std::map<std::string, std::vector<std::string>>& field_aliases();

/// Throws IngestError if the stream is unreadable. Blank lines are not records.
ParseResult parse_sysmon_records(std::istream& source, InputFormat format);

/// Canonical JSON-lines form; parse_sysmon_records(JsonLines) reads it back
/// into an identical event sequence.
std::string to_canonical_json(const SysmonEvent& event);
void write_canonical_jsonl(std::ostream& out, std::span<const SysmonEvent> events);

/// CSV with header "line_number,reason".
void write_reject_report(std::ostream& out, std::span<const RejectReport> rejects);

// --- relation extraction ----------------------------------------------------

/// One side of a relation. `key` is the label-level identity; `pid` lets the
/// graph builder refine it under label+pid keying.
struct RelationEndpoint {
  std::string key;
  std::string label;
  std::optional<std::int64_t> pid;
  IntegrityLevel integrity = IntegrityLevel::Unknown;
  std::map<std::string, std::string> attributes;
};

struct ParentChildRelation {
  RelationEndpoint parent;
  RelationEndpoint child;
  EventKind relation_kind = EventKind::ProcessCreate;
  UtcTime timestamp;
  std::map<std::string, std::string> attributes;  // command_line, target_object, user, host
};

struct RelationSummary {
  std::vector<ParentChildRelation> relations;
  std::size_t orphan_count = 0;   // ProcessCreate events without parent_image
  std::size_t skipped_count = 0;  // other events with no usable image or target
};

inline constexpr std::size_t kMaxNodeKeyLength = 256;

/// Process label: lowercased basename with a trailing ".exe" removed.
std::string process_label(std::string_view image_path);
/// Basename of a Windows or POSIX path (either separator), lowercased.
std::string path_basename(std::string_view path);

RelationSummary extract_relations(std::span<const SysmonEvent> events);

}  // namespace procgraph
