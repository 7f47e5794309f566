#include "procgraph/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace procgraph {

using nlohmann::json;

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

// Cuts at a UTF-8 code point boundary at or below `limit` bytes.
std::string truncate_key(std::string key) {
  if (key.size() <= kMaxNodeKeyLength) return key;
  std::size_t cut = kMaxNodeKeyLength;
  while (cut > 0 && (static_cast<unsigned char>(key[cut]) & 0xC0) == 0x80) --cut;
  key.resize(cut);
  return key;
}

// A record as a flat name -> raw string view of its fields. JSON numbers are
// rendered to text so both input formats resolve through the same path.
class FieldSource {
 public:
  void set(std::string name, std::string value) {
    lowered_.emplace(to_lower(name), fields_.size());
    fields_.emplace_back(std::move(name), std::move(value));
  }

  std::optional<std::string> get(const std::string& canonical) const {
    const auto& aliases = field_aliases().at(canonical);
    for (const auto& alias : aliases) {
      for (const auto& [name, value] : fields_) {
        if (name == alias) return value;
      }
    }
    for (const auto& alias : aliases) {
      auto it = lowered_.find(to_lower(alias));
      if (it != lowered_.end()) return fields_[it->second].second;
    }
    return std::nullopt;
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
  std::unordered_multimap<std::string, std::size_t> lowered_;
};

struct RecordOutcome {
  std::optional<SysmonEvent> event;
  std::string reject_reason;
};

RecordOutcome build_event(const FieldSource& fields) {
  RecordOutcome outcome;
  auto reject = [&](std::string reason) {
    outcome.reject_reason = std::move(reason);
    return outcome;
  };

  const auto raw_id = fields.get("EventID");
  if (!raw_id) return reject(std::string(kRejectMissingField) + ": EventID");
  const auto id = parse_int(*raw_id);
  if (!id) return reject(std::string(kRejectMalformed) + ": EventID");
  const auto kind = event_kind_from_id(*id);
  if (!kind) return reject(std::string(kRejectUnsupportedEventId));

  const auto raw_time = fields.get("UtcTime");
  if (!raw_time) return reject(std::string(kRejectBadTimestamp));
  const auto time = parse_utc_time(*raw_time);
  if (!time) return reject(std::string(kRejectBadTimestamp));

  SysmonEvent ev;
  ev.event_id = static_cast<int>(*id);
  ev.event_kind = *kind;
  ev.utc_time = *time;
  ev.process_guid = fields.get("ProcessGuid").value_or("");
  if (auto pid = fields.get("ProcessId")) {
    auto parsed = parse_int(*pid);
    if (!parsed) return reject(std::string(kRejectMalformed) + ": ProcessId");
    ev.process_id = *parsed;
  }
  ev.image = fields.get("Image").value_or("");
  ev.parent_process_guid = fields.get("ParentProcessGuid");
  if (auto ppid = fields.get("ParentProcessId")) {
    auto parsed = parse_int(*ppid);
    if (!parsed) return reject(std::string(kRejectMalformed) + ": ParentProcessId");
    ev.parent_process_id = *parsed;
  }
  ev.parent_image = fields.get("ParentImage");
  ev.command_line = fields.get("CommandLine");
  if (auto level = fields.get("IntegrityLevel")) ev.integrity_level = normalize_integrity(*level);
  ev.user = fields.get("User");
  ev.hostname = fields.get("Hostname");
  ev.target_object = fields.get("TargetObject");

  if (ev.event_kind == EventKind::ProcessCreate && ev.image.empty()) {
    return reject(std::string(kRejectMissingImage));
  }
  outcome.event = std::move(ev);
  return outcome;
}

std::optional<std::string> json_scalar_text(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  if (value.is_number_unsigned()) return std::to_string(value.get<std::uint64_t>());
  if (value.is_number_float()) return value.dump();
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  return std::nullopt;  // null, arrays and objects are not field values
}

void add_json_fields(FieldSource& fields, const json& object) {
  for (const auto& [name, value] : object.items()) {
    if (auto text = json_scalar_text(value)) fields.set(name, *text);
  }
}

void parse_json_lines(std::istream& in, ParseResult& result) {
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++result.record_count;

    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      result.rejects.push_back({line_number, std::string(kRejectMalformed)});
      continue;
    }
    FieldSource fields;
    add_json_fields(fields, doc);
    // One level of nesting as produced by common Sysmon exporters; top-level
    // fields win because they are matched first.
    for (const char* nested : {"EventData", "event_data"}) {
      auto it = doc.find(nested);
      if (it != doc.end() && it->is_object()) add_json_fields(fields, *it);
    }
    auto outcome = build_event(fields);
    if (outcome.event) {
      result.events.push_back(std::move(*outcome.event));
    } else {
      result.rejects.push_back({line_number, std::move(outcome.reject_reason)});
    }
  }
}

// RFC 4180 reader: quoted cells may contain separators, doubled quotes and
// newlines. Returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& cells, std::size_t& line_number,
                     bool& unterminated) {
  cells.clear();
  unterminated = false;
  std::string cell;
  bool in_quotes = false;
  bool any = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          cell.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_number;
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n') {
      ++line_number;
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      cells.push_back(std::move(cell));
      return true;
    } else {
      cell.push_back(c);
    }
  }
  if (!any) return false;
  unterminated = in_quotes;
  if (!cell.empty() && cell.back() == '\r') cell.pop_back();
  cells.push_back(std::move(cell));
  ++line_number;
  return true;
}

bool blank_record(const std::vector<std::string>& cells) {
  return cells.size() == 1 && trim(cells[0]).empty();
}

void parse_csv(std::istream& in, ParseResult& result) {
  std::vector<std::string> header;
  std::vector<std::string> cells;
  std::size_t consumed = 0;  // physical lines consumed so far
  bool unterminated = false;

  while (true) {
    if (!read_csv_record(in, header, consumed, unterminated)) return;  // empty input
    if (!blank_record(header)) break;
  }
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  for (auto& name : header) name = std::string(trim(name));

  while (true) {
    const std::size_t start_line = consumed + 1;
    if (!read_csv_record(in, cells, consumed, unterminated)) break;
    if (blank_record(cells)) continue;
    ++result.record_count;
    if (unterminated || cells.size() != header.size()) {
      result.rejects.push_back({start_line, std::string(kRejectMalformed)});
      continue;
    }
    FieldSource fields;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!cells[i].empty()) fields.set(header[i], cells[i]);
    }
    auto outcome = build_event(fields);
    if (outcome.event) {
      result.events.push_back(std::move(*outcome.event));
    } else {
      result.rejects.push_back({start_line, std::move(outcome.reject_reason)});
    }
  }
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::optional<EventKind> event_kind_from_id(std::int64_t id) {
  switch (id) {
    case 1: return EventKind::ProcessCreate;
    case 2: return EventKind::FileTimeChange;
    case 5: return EventKind::ProcessTerminate;
    case 11: return EventKind::FileCreate;
    case 12: return EventKind::RegistryObject;
    case 13: return EventKind::RegistryValueSet;
    default: return std::nullopt;
  }
}

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::ProcessCreate: return "ProcessCreate";
    case EventKind::FileTimeChange: return "FileTimeChange";
    case EventKind::ProcessTerminate: return "ProcessTerminate";
    case EventKind::FileCreate: return "FileCreate";
    case EventKind::RegistryObject: return "RegistryObject";
    case EventKind::RegistryValueSet: return "RegistryValueSet";
  }
  return "?";
}

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  for (int id : {1, 2, 5, 11, 12, 13}) {
    auto kind = *event_kind_from_id(id);
    if (event_kind_name(kind) == name) return kind;
  }
  return std::nullopt;
}

IntegrityLevel normalize_integrity(std::string_view raw) {
  const std::string level = to_lower(trim(raw));
  if (level == "untrusted") return IntegrityLevel::Untrusted;
  if (level == "low") return IntegrityLevel::Low;
  if (level == "medium") return IntegrityLevel::Medium;
  if (level == "high") return IntegrityLevel::High;
  if (level == "system") return IntegrityLevel::System;
  return IntegrityLevel::Unknown;
}

std::string_view integrity_name(IntegrityLevel level) {
  switch (level) {
    case IntegrityLevel::Untrusted: return "Untrusted";
    case IntegrityLevel::Low: return "Low";
    case IntegrityLevel::Medium: return "Medium";
    case IntegrityLevel::High: return "High";
    case IntegrityLevel::System: return "System";
    case IntegrityLevel::Unknown: break;
  }
  return "Unknown";
}

std::optional<InputFormat> input_format_from_name(std::string_view name) {
  const std::string lowered = to_lower(name);
  if (lowered == "json-lines" || lowered == "jsonl" || lowered == "json") return InputFormat::JsonLines;
  if (lowered == "csv") return InputFormat::Csv;
  return std::nullopt;
}

const std::map<std::string, std::vector<std::string>>& field_aliases() {
  // BRAWL exports use Sysmon's own names; the Cerberus Traces CSVs use
  // snake_case columns. Both sets are listed here.
  static const std::map<std::string, std::vector<std::string>> table = {
      {"EventID", {"EventID", "EventId", "event_id", "eventid", "event_code"}},
      {"UtcTime", {"UtcTime", "utc_time", "timestamp", "TimeCreated", "@timestamp"}},
      {"ProcessGuid", {"ProcessGuid", "process_guid"}},
      {"ProcessId", {"ProcessId", "process_id", "pid"}},
      {"Image", {"Image", "image_path", "image", "process_path"}},
      {"ParentProcessGuid", {"ParentProcessGuid", "parent_process_guid"}},
      {"ParentProcessId", {"ParentProcessId", "parent_process_id", "ppid"}},
      {"ParentImage", {"ParentImage", "parent_image_path", "parent_image", "parent_process_path"}},
      {"CommandLine", {"CommandLine", "command_line", "cmdline"}},
      {"IntegrityLevel", {"IntegrityLevel", "integrity_level"}},
      {"User", {"User", "user", "user_name", "username"}},
      {"Hostname", {"Computer", "Hostname", "hostname", "host", "computer_name"}},
      {"TargetObject",
       {"TargetObject", "TargetFilename", "target_object", "target_filename", "target_path"}},
  };
  return table;
}

ParseResult parse_sysmon_records(std::istream& source, InputFormat format) {
  if (!source.good()) throw IngestError("input stream is not readable");
  ParseResult result;
  if (format == InputFormat::JsonLines) {
    parse_json_lines(source, result);
  } else {
    parse_csv(source, result);
  }
  if (source.bad()) throw IngestError("I/O error while reading input stream");
  return result;
}

std::string to_canonical_json(const SysmonEvent& ev) {
  json doc = json::object();
  doc["EventID"] = ev.event_id;
  doc["UtcTime"] = format_utc_time(ev.utc_time);
  doc["ProcessGuid"] = ev.process_guid;
  doc["ProcessId"] = ev.process_id;
  doc["Image"] = ev.image;
  if (ev.parent_process_guid) doc["ParentProcessGuid"] = *ev.parent_process_guid;
  if (ev.parent_process_id) doc["ParentProcessId"] = *ev.parent_process_id;
  if (ev.parent_image) doc["ParentImage"] = *ev.parent_image;
  if (ev.command_line) doc["CommandLine"] = *ev.command_line;
  doc["IntegrityLevel"] = std::string(integrity_name(ev.integrity_level));
  if (ev.user) doc["User"] = *ev.user;
  if (ev.hostname) doc["Computer"] = *ev.hostname;
  if (ev.target_object) doc["TargetObject"] = *ev.target_object;
  return doc.dump();
}

void write_canonical_jsonl(std::ostream& out, std::span<const SysmonEvent> events) {
  for (const auto& ev : events) out << to_canonical_json(ev) << '\n';
}

void write_reject_report(std::ostream& out, std::span<const RejectReport> rejects) {
  out << "line_number,reason\n";
  for (const auto& r : rejects) out << r.line_number << ',' << csv_escape(r.reason) << '\n';
}

std::string path_basename(std::string_view path) {
  path = trim(path);
  while (!path.empty() && (path.back() == '\\' || path.back() == '/')) path.remove_suffix(1);
  const auto slash = path.find_last_of("\\/");
  if (slash != std::string_view::npos) path.remove_prefix(slash + 1);
  return to_lower(path);
}

std::string process_label(std::string_view image_path) {
  std::string base = path_basename(image_path);
  if (base.size() > 4 && base.ends_with(".exe")) base.resize(base.size() - 4);
  return base;
}

namespace {

RelationEndpoint process_endpoint(const SysmonEvent& ev) {
  RelationEndpoint ep;
  ep.label = process_label(ev.image);
  ep.key = truncate_key(ep.label);
  ep.pid = ev.process_id;
  ep.integrity = ev.integrity_level;
  ep.attributes["image_path"] = ev.image;
  ep.attributes["process_id"] = std::to_string(ev.process_id);
  if (ev.parent_process_id) ep.attributes["parent_process_id"] = std::to_string(*ev.parent_process_id);
  if (ev.user) ep.attributes["user"] = *ev.user;
  if (ev.hostname) ep.attributes["host"] = *ev.hostname;
  return ep;
}

std::map<std::string, std::string> relation_attributes(const SysmonEvent& ev) {
  std::map<std::string, std::string> attrs;
  if (ev.command_line) attrs["command_line"] = *ev.command_line;
  if (ev.target_object) attrs["target_object"] = *ev.target_object;
  if (ev.user) attrs["user"] = *ev.user;
  if (ev.hostname) attrs["host"] = *ev.hostname;
  return attrs;
}

}  // namespace

RelationSummary extract_relations(std::span<const SysmonEvent> events) {
  RelationSummary summary;
  for (const auto& ev : events) {
    ParentChildRelation rel;
    rel.relation_kind = ev.event_kind;
    rel.timestamp = ev.utc_time;
    rel.attributes = relation_attributes(ev);

    switch (ev.event_kind) {
      case EventKind::ProcessCreate: {
        if (!ev.parent_image || process_label(*ev.parent_image).empty()) {
          ++summary.orphan_count;
          continue;
        }
        rel.parent.label = process_label(*ev.parent_image);
        rel.parent.key = truncate_key(rel.parent.label);
        rel.parent.pid = ev.parent_process_id;
        rel.parent.attributes["image_path"] = *ev.parent_image;
        if (ev.parent_process_id) {
          rel.parent.attributes["process_id"] = std::to_string(*ev.parent_process_id);
        }
        if (ev.hostname) rel.parent.attributes["host"] = *ev.hostname;
        rel.child = process_endpoint(ev);
        break;
      }
      case EventKind::ProcessTerminate: {
        rel.parent = process_endpoint(ev);
        rel.child.label = rel.parent.label + ":terminated";
        rel.child.key = truncate_key(rel.child.label);
        rel.child.pid = ev.process_id;
        if (ev.hostname) rel.child.attributes["host"] = *ev.hostname;
        break;
      }
      case EventKind::FileTimeChange:
      case EventKind::FileCreate: {
        rel.parent = process_endpoint(ev);
        const std::string target = ev.target_object.value_or("");
        rel.child.label = path_basename(target);
        rel.child.key = truncate_key(rel.child.label);
        rel.child.attributes["file_path"] = target;
        if (ev.hostname) rel.child.attributes["host"] = *ev.hostname;
        break;
      }
      case EventKind::RegistryObject:
      case EventKind::RegistryValueSet: {
        rel.parent = process_endpoint(ev);
        const std::string target = ev.target_object.value_or("");
        // Registry entities keep the full path as identity; basenames such as
        // "start" or "(default)" recur across unrelated keys.
        rel.child.label = path_basename(target);
        rel.child.key = truncate_key(to_lower(trim(target)));
        rel.child.attributes["registry_key"] = target;
        if (ev.hostname) rel.child.attributes["host"] = *ev.hostname;
        break;
      }
    }
    if (rel.parent.key.empty() || rel.child.key.empty()) {
      ++summary.skipped_count;
      continue;
    }
    summary.relations.push_back(std::move(rel));
  }
  return summary;
}

}  // namespace procgraph
