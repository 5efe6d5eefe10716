#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <vector>

#include "evstream/events.hpp"
#include "evstream/partition.hpp"

using namespace evstream;

namespace {

// n events spaced evenly inside window w of width T.
std::vector<Event> window_events(size_t n, uint64_t window_index, uint64_t window_us) {
  std::vector<Event> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    uint64_t t = window_index * window_us + (i * window_us) / (n + 1);
    out.push_back({static_cast<uint32_t>(t), static_cast<uint16_t>(i % 100),
                   static_cast<uint16_t>(i % 50), static_cast<uint8_t>(i & 1)});
  }
  return out;
}

SubgroupConfig subgroup_cfg(uint32_t e, uint32_t c0, uint32_t f) {
  SubgroupConfig cfg;
  cfg.events_per_object = e;
  cfg.base_objects_per_window = c0;
  cfg.growth_factor = f;
  return cfg;
}

size_t decoded_event_total(const PartitionedBatch& batch) {
  size_t total = 0;
  for (const EventObject& o : batch.objects) total += o.header.event_count;
  return total;
}

}  // namespace

TEST_CASE("capacity schedule follows c0 * f^s", "[partition]") {
  CHECK(subgroup_capacity(3, subgroup_cfg(10, 1, 1)) == 1);
  CHECK(subgroup_capacity(2, subgroup_cfg(10, 1, 2)) == 4);
  CHECK(subgroup_capacity(0, subgroup_cfg(10, 7, 3)) == 7);
  CHECK(subgroup_capacity(10, subgroup_cfg(10, 3, 2)) == 3072);
}

TEST_CASE("uniform schedule assigns one object per subgroup", "[partition]") {
  SubgroupPartitioner part(subgroup_cfg(10, 1, 1));
  auto batch = part.flush_window(window_events(20, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 2);
  CHECK(batch.objects[0].header.subgroup_id == 0);
  CHECK(batch.objects[1].header.subgroup_id == 1);
  CHECK(batch.objects[0].header.object_id == 0);
  CHECK(batch.objects[1].header.object_id == 1);
}

TEST_CASE("empty window emits no objects", "[partition]") {
  SubgroupPartitioner part(subgroup_cfg(10, 1, 1));
  CHECK(part.flush_window({}, 0).objects.empty());
}

TEST_CASE("doubling schedule packs later subgroups harder", "[partition]") {
  // 35 events, E=10 -> 4 objects; cumulative capacities 1,3,7 -> subgroups
  // 0,1,1,2 with the last object holding 5 events.
  SubgroupPartitioner part(subgroup_cfg(10, 1, 2));
  auto batch = part.flush_window(window_events(35, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 4);
  std::vector<uint16_t> subgroups;
  for (const auto& o : batch.objects) subgroups.push_back(o.header.subgroup_id);
  CHECK(subgroups == std::vector<uint16_t>{0, 1, 1, 2});
  CHECK(batch.objects.back().header.event_count == 5);
}

TEST_CASE("subgroup partitioning is lossless at the publisher", "[partition]") {
  SubgroupPartitioner part(subgroup_cfg(7, 2, 3));
  for (uint64_t w = 0; w < 6; ++w) {
    size_t n = (w * 37) % 120;
    auto events = window_events(n, w, 50'000);
    auto batch = part.flush_window(events, w);
    CHECK(decoded_event_total(batch) == n);
    // Payload decode returns exactly the input events.
    ChainContext ctx;
    std::vector<Event> decoded;
    for (const EventObject& o : batch.objects) {
      auto dec = decode_object(o.to_wire(), ctx);
      decoded.insert(decoded.end(), dec.events.begin(), dec.events.end());
    }
    CHECK(decoded == events);
  }
}

TEST_CASE("object ids ascend per group and per subgroup", "[partition]") {
  SubgroupConfig cfg = subgroup_cfg(5, 1, 2);
  cfg.window_ms = 50;
  cfg.group_ms = 200;  // 4 windows per group
  SubgroupPartitioner part(cfg);
  uint64_t last_group = ~0ull;
  uint64_t prev_id = 0;
  std::map<std::pair<uint64_t, uint16_t>, uint64_t> last_in_subgroup;
  for (uint64_t w = 0; w < 12; ++w) {
    auto batch = part.flush_window(window_events(40, w, 50'000), w);
    for (const EventObject& o : batch.objects) {
      CHECK(o.header.group_id == w / 4);
      if (o.header.group_id != last_group) {
        last_group = o.header.group_id;
        CHECK(o.header.object_id == 0);  // per-group counter resets
      } else {
        CHECK(o.header.object_id == prev_id + 1);
      }
      prev_id = o.header.object_id;
      auto key = std::pair{o.header.group_id, o.header.subgroup_id};
      auto it = last_in_subgroup.find(key);
      if (it != last_in_subgroup.end()) CHECK(o.header.object_id > it->second);
      last_in_subgroup[key] = o.header.object_id;
    }
  }
}

TEST_CASE("per-window subgroup counts respect capacities", "[partition]") {
  SubgroupConfig cfg = subgroup_cfg(3, 2, 2);
  SubgroupPartitioner part(cfg);
  auto batch = part.flush_window(window_events(100, 0, 50'000), 0);
  std::map<uint16_t, uint64_t> counts;
  uint16_t last_subgroup = 0;
  for (const EventObject& o : batch.objects) {
    counts[o.header.subgroup_id]++;
    last_subgroup = std::max(last_subgroup, o.header.subgroup_id);
  }
  for (const auto& [s, count] : counts)
    if (s < last_subgroup) CHECK(count <= subgroup_capacity(s, cfg));
}

TEST_CASE("max_subgroups clamps overflow into the last subgroup", "[partition]") {
  SubgroupConfig cfg = subgroup_cfg(1, 1, 1);
  cfg.max_subgroups = 3;
  SubgroupPartitioner part(cfg);
  auto batch = part.flush_window(window_events(10, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 10);
  std::vector<uint16_t> subgroups;
  for (const auto& o : batch.objects) subgroups.push_back(o.header.subgroup_id);
  CHECK(subgroups == std::vector<uint16_t>{0, 1, 2, 2, 2, 2, 2, 2, 2, 2});
  // Publisher-lossless even under the clamp.
  CHECK(decoded_event_total(batch) == 10);
}

TEST_CASE("striped assignment interleaves subgroups and keeps ids ascending", "[partition]") {
  SubgroupConfig cfg = subgroup_cfg(1, 1, 2);
  cfg.assignment = SubgroupAssignment::kStriped;
  SubgroupPartitioner part(cfg);
  auto batch = part.flush_window(window_events(4, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 4);
  std::vector<uint16_t> subgroups;
  for (const auto& o : batch.objects) subgroups.push_back(o.header.subgroup_id);
  CHECK(subgroups == std::vector<uint16_t>{0, 1, 2, 1});
  std::map<uint16_t, uint64_t> last;
  for (const auto& o : batch.objects) {
    auto it = last.find(o.header.subgroup_id);
    if (it != last.end()) CHECK(o.header.object_id > it->second);
    last[o.header.subgroup_id] = o.header.object_id;
  }
  CHECK(decoded_event_total(batch) == 4);
}

TEST_CASE("chained payloads stay decodable across windows of one group", "[partition]") {
  SubgroupConfig cfg = subgroup_cfg(5, 1, 1);
  cfg.payload = PayloadMode::kChained;
  cfg.window_ms = 50;
  cfg.group_ms = 150;
  SubgroupPartitioner part(cfg);
  ChainContext dec;
  for (uint64_t w = 0; w < 6; ++w) {
    auto events = window_events(12, w, 50'000);
    auto batch = part.flush_window(events, w);
    std::vector<Event> decoded;
    for (const EventObject& o : batch.objects) {
      auto d = decode_object(o.to_wire(), dec);
      decoded.insert(decoded.end(), d.events.begin(), d.events.end());
      CHECK(o.header.chained());
    }
    CHECK(decoded == events);
  }
}

TEST_CASE("events outside the window are rejected", "[partition]") {
  SubgroupPartitioner part(subgroup_cfg(10, 1, 1));
  std::vector<Event> events{{60'000, 0, 0, 0}};
  CHECK_THROWS_AS(part.flush_window(events, 0), ValidationError);
}

TEST_CASE("legacy interval of exactly N*E events fills all tracks", "[partition]") {
  TrackConfig cfg{250, 5, 50};
  TrackPartitioner part(cfg);
  auto batch = part.flush_interval(window_events(1250, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 5);
  CHECK(batch.publisher_truncated_count == 0);
  for (uint32_t i = 0; i < 5; ++i) {
    CHECK(batch.objects[i].track_id == i);
    CHECK(batch.objects[i].header.event_count == 250);
  }
}

TEST_CASE("legacy empty interval emits nothing", "[partition]") {
  TrackPartitioner part(TrackConfig{250, 5, 50});
  CHECK(part.flush_interval({}, 0).objects.empty());
}

TEST_CASE("legacy overflow is truncated at the publisher", "[partition]") {
  TrackPartitioner part(TrackConfig{250, 5, 50});
  auto batch = part.flush_interval(window_events(1500, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 5);
  CHECK(batch.publisher_truncated_count == 250);
  size_t carried = 0;
  for (const auto& o : batch.objects) carried += o.header.event_count;
  CHECK(carried == 1250);
}

TEST_CASE("legacy partial interval fills tracks in order", "[partition]") {
  TrackPartitioner part(TrackConfig{250, 5, 50});
  auto batch = part.flush_interval(window_events(600, 0, 50'000), 0);
  REQUIRE(batch.objects.size() == 3);
  CHECK(batch.objects[0].header.event_count == 250);
  CHECK(batch.objects[1].header.event_count == 250);
  CHECK(batch.objects[2].header.event_count == 100);
  CHECK(batch.objects[2].track_id == 2);
  CHECK(batch.publisher_truncated_count == 0);
}

TEST_CASE("legacy per-track object ids ascend across intervals", "[partition]") {
  TrackPartitioner part(TrackConfig{10, 3, 50});
  auto first = part.flush_interval(window_events(30, 0, 50'000), 0);
  auto second = part.flush_interval(window_events(30, 1, 50'000), 1);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(first.objects[i].header.object_id == 0);
    CHECK(second.objects[i].header.object_id == 1);
    CHECK(second.objects[i].header.group_id == 1);
  }
}

TEST_CASE("config validation rejects bad parameters", "[partition]") {
  SubgroupConfig cfg;
  cfg.events_per_object = 0;
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
  cfg = SubgroupConfig{};
  cfg.group_ms = 120;  // not a multiple of 50
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
  cfg = SubgroupConfig{};
  cfg.growth_factor = 0;
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
  TrackConfig tc;
  tc.track_count = 0;
  CHECK_THROWS_AS(validate_config(tc), ValidationError);
  tc = TrackConfig{};
  tc.track_count = 65;
  CHECK_THROWS_AS(validate_config(tc), ValidationError);
}
