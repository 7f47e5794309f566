#include "procgraph/ingest.hpp"
#include "procgraph/agent.hpp"

#include <doctest.h>

#include <sstream>

using namespace procgraph;

namespace {

ParseResult parse_json(const std::string& text) {
  std::istringstream in(text);
  return parse_sysmon_records(in, InputFormat::JsonLines);
}

ParseResult parse_csv(const std::string& text) {
  std::istringstream in(text);
  return parse_sysmon_records(in, InputFormat::Csv);
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("integrity names map case-insensitively") {
  CHECK(normalize_integrity("Untrusted") == IntegrityLevel::Untrusted);
  CHECK(normalize_integrity("low") == IntegrityLevel::Low);
  CHECK(normalize_integrity("MEDIUM") == IntegrityLevel::Medium);
  CHECK(normalize_integrity("High") == IntegrityLevel::High);
  CHECK(normalize_integrity("system") == IntegrityLevel::System);
  CHECK(normalize_integrity("S-1-16-8192") == IntegrityLevel::Unknown);
  CHECK(normalize_integrity("") == IntegrityLevel::Unknown);
}

TEST_CASE("event ids") {
  for (int id : {1, 2, 5, 11, 12, 13}) {
    const auto kind = event_kind_from_id(id);
    REQUIRE(kind);
    CHECK(static_cast<int>(*kind) == id);
  }
  CHECK_FALSE(event_kind_from_id(3));
  CHECK_FALSE(event_kind_from_id(99));
}

TEST_CASE("process creation record in JSON lines") {
  const auto r = parse_json(
      R"({"EventID":1,"UtcTime":"2022-01-01 10:00:00.250","ProcessId":42,"Image":"C:\\Windows\\cmd.exe",)"
      R"("ParentImage":"C:\\Windows\\explorer.exe","ParentProcessId":7,"IntegrityLevel":"High",)"
      R"("User":"corp\\alice","Computer":"ws1","CommandLine":"cmd /c whoami"})"
      "\n");
  REQUIRE(r.events.size() == 1);
  CHECK(r.rejects.empty());
  CHECK(r.record_count == 1);
  const auto& e = r.events[0];
  CHECK(e.event_kind == EventKind::ProcessCreate);
  CHECK(e.process_id == 42);
  CHECK(e.parent_process_id == 7);
  CHECK(e.parent_image == "C:\\Windows\\explorer.exe");
  CHECK(e.integrity_level == IntegrityLevel::High);
  CHECK(e.hostname == "ws1");
  CHECK(e.command_line == "cmd /c whoami");
  CHECK(format_utc_time(e.utc_time) == "2022-01-01 10:00:00.250000");
}

TEST_CASE("nested event data and snake_case aliases") {
  const auto r = parse_json(
      R"({"event_id":"11","EventData":{"utc_time":"2022-01-01T10:00:00Z","image_path":"/usr/bin/x",)"
      R"("target_filename":"C:\\tmp\\a.txt"}})"
      "\n");
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].event_kind == EventKind::FileCreate);
  CHECK(r.events[0].image == "/usr/bin/x");
  CHECK(r.events[0].target_object == "C:\\tmp\\a.txt");
}

TEST_CASE("rejects carry line numbers and reasons") {
  const auto r = parse_json(
      "{\"EventID\":1,\"UtcTime\":\"2022-01-01 00:00:00\",\"Image\":\"a.exe\"}\n"
      "\n"
      "{\"EventID\":4,\"UtcTime\":\"2022-01-01 00:00:00\"}\n"
      "{\"EventID\":1,\"UtcTime\":\"not a time\",\"Image\":\"a.exe\"}\n"
      "{broken\n"
      "{\"UtcTime\":\"2022-01-01 00:00:00\"}\n"
      "{\"EventID\":1,\"UtcTime\":\"2022-01-01 00:00:00\"}\n");
  CHECK(r.events.size() == 1);
  REQUIRE(r.rejects.size() == 5);
  CHECK(r.record_count == 6);
  CHECK(r.rejects[0].line_number == 3);
  CHECK(r.rejects[0].reason == kRejectUnsupportedEventId);
  CHECK(r.rejects[1].line_number == 4);
  CHECK(r.rejects[1].reason == kRejectBadTimestamp);
  CHECK(r.rejects[2].line_number == 5);
  CHECK(r.rejects[2].reason == kRejectMalformed);
  CHECK(starts_with(r.rejects[3].reason, kRejectMissingField));
  CHECK(r.rejects[4].reason == kRejectMissingImage);

  std::ostringstream report;
  write_reject_report(report, r.rejects);
  CHECK(starts_with(report.str(), "line_number,reason\n3,unsupported event id\n"));
}

TEST_CASE("CSV with quoted fields spanning lines") {
  const auto r = parse_csv(
      "event_id,utc_time,image_path,parent_image_path,command_line,integrity_level\n"
      "1,2022-01-01 00:00:01,C:\\a.exe,C:\\p.exe,\"x, \"\"quoted\"\"\nsecond line\",Low\n"
      "1,2022-01-01 00:00:02,C:\\b.exe,,,\n"
      "1,2022-01-01 00:00:03,C:\\c.exe\n");
  REQUIRE(r.events.size() == 2);
  CHECK(r.events[0].command_line == "x, \"quoted\"\nsecond line");
  CHECK(r.events[0].integrity_level == IntegrityLevel::Low);
  CHECK_FALSE(r.events[1].parent_image);
  CHECK_FALSE(r.events[1].command_line);
  REQUIRE(r.rejects.size() == 1);
  CHECK(r.rejects[0].line_number == 5);
  CHECK(r.rejects[0].reason == kRejectMalformed);
}

TEST_CASE("unreadable stream throws") {
  std::istringstream in;
  in.setstate(std::ios::badbit);
  CHECK_THROWS_AS(parse_sysmon_records(in, InputFormat::JsonLines), IngestError);
}

TEST_CASE("canonical JSON lines round trip on random events") {
  Rng rng(11);
  const EventKind kinds[] = {EventKind::ProcessCreate, EventKind::FileTimeChange, EventKind::ProcessTerminate,
                             EventKind::FileCreate,    EventKind::RegistryObject, EventKind::RegistryValueSet};
  std::vector<SysmonEvent> events;
  for (int i = 0; i < 300; ++i) {
    SysmonEvent e;
    e.event_kind = kinds[rng.next() % 6];
    e.event_id = static_cast<int>(e.event_kind);
    e.utc_time = UtcTime{static_cast<std::int64_t>(rng.next() % 4'000'000'000'000'000ULL)};
    e.process_guid = "{" + std::to_string(rng.next()) + "}";
    e.process_id = static_cast<std::int64_t>(rng.next() % 100000);
    e.image = "C:\\Program Files\\app " + std::to_string(i) + "\\\"odd\",name.exe";
    if (rng.uniform() < 0.5) e.parent_image = "C:\\p\\" + std::to_string(i) + ".exe";
    if (rng.uniform() < 0.5) e.parent_process_id = static_cast<std::int64_t>(rng.next() % 1000);
    if (rng.uniform() < 0.5) e.parent_process_guid = "{g}";
    if (rng.uniform() < 0.5) e.command_line = "run \u00e9\t\"x\"";
    e.integrity_level = static_cast<IntegrityLevel>(static_cast<int>(rng.next() % 6) - 1);
    if (rng.uniform() < 0.5) e.user = "dom\\u" + std::to_string(i);
    if (rng.uniform() < 0.5) e.hostname = "h" + std::to_string(i % 3);
    if (rng.uniform() < 0.5) e.target_object = "HKLM\\Software\\k" + std::to_string(i);
    events.push_back(std::move(e));
  }
  std::ostringstream out;
  write_canonical_jsonl(out, events);
  const auto back = parse_json(out.str());
  CHECK(back.rejects.empty());
  REQUIRE(back.events.size() == events.size());
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(back.events[i] == events[i]);
}

TEST_CASE("labels and basenames") {
  CHECK(process_label("C:\\Windows\\System32\\CONHOST.EXE") == "conhost");
  CHECK(process_label("/usr/bin/bash") == "bash");
  CHECK(path_basename("C:\\Temp\\Report.DOCX") == "report.docx");
  CHECK(path_basename("a/b\\c") == "c");
}

TEST_CASE("relation extraction rules") {
  std::vector<SysmonEvent> ev(6);
  ev[0].event_kind = EventKind::ProcessCreate;
  ev[0].image = "C:\\w\\cmd.exe";
  ev[0].parent_image = "C:\\w\\explorer.exe";
  ev[0].integrity_level = IntegrityLevel::High;
  ev[1].event_kind = EventKind::ProcessCreate;
  ev[1].image = "C:\\w\\orphan.exe";
  ev[2].event_kind = EventKind::ProcessTerminate;
  ev[2].image = "C:\\w\\cmd.exe";
  ev[3].event_kind = EventKind::FileCreate;
  ev[3].image = "C:\\w\\cmd.exe";
  ev[3].target_object = "C:\\tmp\\Drop.dll";
  ev[4].event_kind = EventKind::RegistryValueSet;
  ev[4].image = "C:\\w\\cmd.exe";
  ev[4].target_object = "HKLM\\Software\\Run\\Evil";
  ev[5].event_kind = EventKind::FileTimeChange;
  ev[5].image = "C:\\w\\cmd.exe";
  for (auto& e : ev) e.event_id = static_cast<int>(e.event_kind);

  const auto rel = extract_relations(ev);
  CHECK(rel.orphan_count == 1);
  CHECK(rel.skipped_count == 1);
  REQUIRE(rel.relations.size() == 4);
  CHECK(rel.relations[0].parent.key == "explorer");
  CHECK(rel.relations[0].child.key == "cmd");
  CHECK(rel.relations[0].child.integrity == IntegrityLevel::High);
  CHECK(rel.relations[1].child.key == "cmd:terminated");
  CHECK(rel.relations[2].child.key == "drop.dll");
  CHECK(rel.relations[3].child.key == "hklm\\software\\run\\evil");
  CHECK(rel.relations[3].child.label == "evil");
  CHECK(rel.relations[3].relation_kind == EventKind::RegistryValueSet);
}

TEST_CASE("long registry keys are truncated") {
  SysmonEvent e;
  e.event_kind = EventKind::RegistryObject;
  e.event_id = 12;
  e.image = "reg.exe";
  e.target_object = "HKLM\\" + std::string(400, 'k');
  const auto rel = extract_relations(std::span<const SysmonEvent>(&e, 1));
  REQUIRE(rel.relations.size() == 1);
  CHECK(rel.relations[0].child.key.size() <= kMaxNodeKeyLength);
}

}
