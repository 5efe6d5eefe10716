#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "evstream/scenario.hpp"

using namespace evstream;
using json = nlohmann::ordered_json;

namespace {

json base_config() {
  return json{
      {"scenario_id", "unit"},
      {"seed", 7},
      {"duration_ms", 1000},
      {"source",
       {{"kind", "poisson"},
        {"rate_eps", 20'000},
        {"geometry", {{"width", 640}, {"height", 480}}}}},
      {"partition",
       {{"mode", "subgroup"},
        {"events_per_object", 100},
        {"window_ms", 50},
        {"group_ms", 500}}},
      {"publisher_link", {{"ideal", true}}},
      {"subscribers",
       json::array({{{"id", 1},
                     {"egress_link", {{"bandwidth_mbps", 100.0}}},
                     {"delivery_timeout_ms", "infinite"}}})}};
}

}  // namespace

TEST_CASE("a lossless baseline delivers every event exactly once", "[scenario]") {
  ScenarioConfig cfg = parse_scenario_json(base_config());
  RunReport report = run_scenario(cfg);
  REQUIRE(report.subscribers.size() == 1);
  const SubscriberReport& s = report.subscribers[0];
  CHECK(report.source_events > 19'000);
  CHECK(s.delivered_event_fraction == 1.0);
  CHECK(s.objects_expired == 0);
  CHECK(s.events_decoded == report.source_events);
  CHECK(s.objects_queued_end == 0);
  CHECK(s.objects_inflight_end == 0);
}

TEST_CASE("the same config runs to byte-identical reports", "[scenario]") {
  ScenarioConfig cfg = parse_scenario_json(base_config());
  std::string a = export_json(run_scenario(cfg));
  std::string b = export_json(run_scenario(cfg));
  CHECK(a == b);
}

TEST_CASE("chained payload mode survives an uncongested run end to end", "[scenario]") {
  json j = base_config();
  j["partition"]["payload"] = "chained";
  RunReport report = run_scenario(parse_scenario_json(j));
  CHECK(report.subscribers[0].delivered_event_fraction == 1.0);
  CHECK(report.subscribers[0].objects_dependency_discarded == 0);
  // Chained payloads are smaller on this dense stream.
  CHECK(report.subscribers[0].bytes_delivered < report.published_events * 8 + 23 * report.published_objects);
}

TEST_CASE("a starved egress loses events but conserves accounting", "[scenario]") {
  json j = base_config();
  j["subscribers"][0]["egress_link"] = {{"bandwidth_mbps", 0.5}};
  j["subscribers"][0]["delivery_timeout_ms"] = 100;
  RunReport report = run_scenario(parse_scenario_json(j));
  const SubscriberReport& s = report.subscribers[0];
  CHECK(s.delivered_event_fraction < 0.9);
  CHECK(s.delivered_event_fraction > 0.0);
  CHECK(s.objects_expired > 0);
  CHECK(s.objects_delivered + s.objects_expired == report.published_objects);
}

TEST_CASE("file sources feed the scenario pipeline", "[scenario]") {
  auto path = std::filesystem::temp_directory_path() / "evstream_scenario_source.csv";
  {
    SourceModel m;
    m.rate_eps = 5'000;
    m.seed = 3;
    m.geometry = {640, 480};
    save_events(path.string(), FileFormat::kCsv, generate(m, 500'000));
  }
  json j = base_config();
  j["duration_ms"] = 500;
  j["source"] = {{"kind", "file"},
                 {"path", path.string()},
                 {"format", "csv"},
                 {"geometry", {{"width", 640}, {"height", 480}}}};
  RunReport report = run_scenario(parse_scenario_json(j));
  CHECK(report.source_events > 2'000);
  CHECK(report.subscribers[0].delivered_event_fraction == 1.0);
  std::filesystem::remove(path);
}

TEST_CASE("multitrack truncation shows up in the delivered fraction", "[scenario]") {
  json j = base_config();
  j["partition"] = {{"mode", "multitrack"},
                    {"events_per_object", 100},
                    {"tracks", 5},
                    {"interval_ms", 50}};
  // 20k eps * 50 ms = 1000 events per interval, capacity 500: half truncated.
  RunReport report = run_scenario(parse_scenario_json(j));
  const SubscriberReport& s = report.subscribers[0];
  CHECK(report.truncated_events > 0);
  CHECK(report.published_events + report.truncated_events == report.source_events);
  CHECK(s.delivered_event_fraction < 0.6);
  CHECK(s.delivered_event_fraction > 0.4);
}

TEST_CASE("sweep reports are ordered by input and monotone in bandwidth", "[scenario]") {
  json j = base_config();
  j["source"]["rate_eps"] = 100'000;  // 6.4 Mbps raw, oversubscribed at the low end
  j["subscribers"][0]["delivery_timeout_ms"] = 100;
  ScenarioConfig cfg = parse_scenario_json(j);
  auto reports = sweep_scenario(cfg, {1.0, 4.0, 16.0});
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].subscribers[0].bandwidth_mbps == 1.0);
  CHECK(reports[1].subscribers[0].bandwidth_mbps == 4.0);
  CHECK(reports[2].subscribers[0].bandwidth_mbps == 16.0);
  CHECK(reports[0].subscribers[0].delivered_event_fraction <
        reports[1].subscribers[0].delivered_event_fraction);
  CHECK(reports[1].subscribers[0].delivered_event_fraction <
        reports[2].subscribers[0].delivered_event_fraction);
  CHECK(reports[2].subscribers[0].delivered_event_fraction == 1.0);
}

TEST_CASE("unknown keys are rejected wherever they appear", "[scenario]") {
  json j = base_config();
  j["surprise"] = 1;
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
  j = base_config();
  j["source"]["surprise"] = 1;
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
  j = base_config();
  j["partition"]["surprise"] = 1;
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
  j = base_config();
  j["subscribers"][0]["surprise"] = 1;
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
}

TEST_CASE("group interval must be a multiple of the window", "[scenario]") {
  json j = base_config();
  j["partition"]["group_ms"] = 120;
  try {
    parse_scenario_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("group_ms") != std::string::npos);
  }
}

TEST_CASE("error messages name the offending key", "[scenario]") {
  json j = base_config();
  j.erase("duration_ms");
  try {
    parse_scenario_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("duration_ms") != std::string::npos);
  }
  j = base_config();
  j["subscribers"][0]["delivery_timeout_ms"] = 0;
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
  j = base_config();
  j["subscribers"] = json::array();
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
}

TEST_CASE("duplicate subscriber ids and oversized geometry are rejected", "[scenario]") {
  json j = base_config();
  j["subscribers"].push_back(j["subscribers"][0]);
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
  j = base_config();
  j["source"]["geometry"]["width"] = 70'000;
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
}

TEST_CASE("controller types are bound to their partition scheme", "[scenario]") {
  json j = base_config();
  j["subscribers"][0]["controller"] = {{"type", "track"}};
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
  j = base_config();
  j["subscribers"][0]["delivery_timeout_ms"] = 50;
  j["subscribers"][0]["controller"] = {{"type", "timeout"}};
  CHECK_NOTHROW(parse_scenario_json(j));
  // Timeout controller cannot start from an infinite timeout.
  j["subscribers"][0]["delivery_timeout_ms"] = "infinite";
  CHECK_THROWS_AS(parse_scenario_json(j), ConfigError);
}

TEST_CASE("timeout controller reacts to congestion in a full run", "[scenario]") {
  json j = base_config();
  j["duration_ms"] = 5000;
  j["source"]["rate_eps"] = 100'000;        // ~6.6 Mbps on the wire
  j["subscribers"][0]["egress_link"] = {{"bandwidth_mbps", 3.3}};
  j["subscribers"][0]["delivery_timeout_ms"] = 200;
  j["subscribers"][0]["controller"] = {{"type", "timeout"},
                                       {"target_ms", 50},
                                       {"epoch_ms", 1000},
                                       {"tau_min_ms", 10},
                                       {"tau_max_ms", 500}};
  RunReport report = run_scenario(parse_scenario_json(j));
  const SubscriberReport& s = report.subscribers[0];
  // Sustained overshoot forces at least one decrease toward the target.
  CHECK(s.control_messages >= 1);
  CHECK(s.control_messages <= 8);
}

TEST_CASE("decoded event latency obeys the window + timeout + link bound", "[scenario]") {
  json j = base_config();
  j["duration_ms"] = 3000;
  j["source"]["rate_eps"] = 100'000;
  j["subscribers"][0]["egress_link"] = {{"bandwidth_mbps", 4.0},
                                        {"propagation_delay_ms", 2}};
  j["subscribers"][0]["delivery_timeout_ms"] = 100;
  ScenarioConfig cfg = parse_scenario_json(j);
  RunLog log = run_scenario_collect(cfg);
  REQUIRE(!log.subscribers[0].arrivals.empty());
  LinkTrace egress = LinkTrace::constant(4'000'000, 2000);
  for (const ObjectRecord& a : log.subscribers[0].arrivals) {
    if (a.outcome != DecodeOutcome::kDecoded || !a.has_event_latency) continue;
    // capture-to-flush residual <= window T, relay hold <= timeout, then one
    // transmit plus propagation (publisher link is ideal here).
    uint64_t transmit = transmit_duration(a.wire_bytes, egress, a.relay_receipt_us);
    REQUIRE(a.oldest_event_latency_us > 0);
    REQUIRE(a.oldest_event_latency_us <=
            cfg.subgroup.window_us() + 100'000 + transmit + 2000);
  }
}

TEST_CASE("a steady uncongested minute stays nearly silent on control", "[scenario]") {
  json j = base_config();
  j["duration_ms"] = 60'000;
  j["subscribers"][0]["egress_link"] = {{"bandwidth_mbps", 100.0}};
  j["subscribers"][0]["delivery_timeout_ms"] = 50;
  j["subscribers"][0]["controller"] = {{"type", "timeout"}, {"target_ms", 50}};
  RunReport report = run_scenario(parse_scenario_json(j));
  CHECK(report.subscribers[0].control_messages <= 5);
  CHECK(report.subscribers[0].delivered_event_fraction == 1.0);
}

TEST_CASE("two subscribers with different timeouts see different fractions", "[scenario]") {
  json j = base_config();
  j["source"]["rate_eps"] = 100'000;
  j["subscribers"] = json::array(
      {{{"id", 1},
        {"egress_link", {{"bandwidth_mbps", 3.3}}},
        {"delivery_timeout_ms", 20}},
       {{"id", 2},
        {"egress_link", {{"bandwidth_mbps", 3.3}}},
        {"delivery_timeout_ms", "infinite"}}});
  RunReport report = run_scenario(parse_scenario_json(j));
  REQUIRE(report.subscribers.size() == 2);
  // The archival subscriber (infinite timeout) eventually receives everything.
  CHECK(report.subscribers[1].delivered_event_fraction == 1.0);
  CHECK(report.subscribers[0].delivered_event_fraction <
        report.subscribers[1].delivered_event_fraction);
}
