#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <future>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evstream/errors.hpp"
#include "evstream/events.hpp"
#include "evstream/metrics.hpp"
#include "evstream/netsim.hpp"
#include "evstream/partition.hpp"
#include "evstream/relay.hpp"
#include "evstream/subscriber.hpp"

// Scenario configuration (strict JSON schema, times in ms, bandwidths in
// Mbps) and the deterministic end-to-end runner joining source, partitioner,
// publisher link, relay, receivers, and controllers.

namespace evstream {

enum class ControllerKind { kNone, kTimeout, kTrack };
enum class PartitionScheme { kSubgroup, kMultitrack };

struct SubscriberSpec {
  uint64_t id = 0;
  LinkTrace egress;
  uint64_t initial_timeout_us = kInfiniteTimeout;
  uint64_t initial_track_set = ~0ull;
  GroupOrder group_order = GroupOrder::kOldestFirst;
  ControllerKind controller = ControllerKind::kNone;
  TimeoutControllerConfig timeout_cfg;
  TrackControllerConfig track_cfg;
};

struct ScenarioConfig {
  std::string scenario_id = "scenario";
  uint64_t seed = 0;
  uint64_t duration_us = 0;
  SourceModel source;
  PartitionScheme scheme = PartitionScheme::kSubgroup;
  SubgroupConfig subgroup;
  TrackConfig track;
  LinkTrace publisher_link = LinkTrace::ideal();
  std::vector<SubscriberSpec> subscribers;
  nlohmann::ordered_json echo;
};

// --- JSON parsing: every object is checked for unknown keys ---

namespace config_detail {

using json = nlohmann::ordered_json;

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + ": missing required key '" + key + "'");
  return *it;
}

inline std::optional<uint64_t> as_u64(const json& j) {
  if (j.is_number_unsigned()) return j.get<uint64_t>();
  if (j.is_number_integer() && j.get<int64_t>() >= 0)
    return static_cast<uint64_t>(j.get<int64_t>());
  return std::nullopt;
}

inline uint64_t get_u64(const json& j, const char* key, const std::string& where,
                        std::optional<uint64_t> fallback = std::nullopt,
                        uint64_t max = std::numeric_limits<uint64_t>::max()) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing required key '" + key + "'");
  }
  auto v = as_u64(*it);
  if (!v) throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  if (*v > max)
    throw ConfigError(where + "." + key + ": must be at most " + std::to_string(max));
  return *v;
}

inline double get_double(const json& j, const char* key, const std::string& where,
                         std::optional<double> fallback = std::nullopt) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing required key '" + key + "'");
  }
  if (!it->is_number())
    throw ConfigError(where + "." + key + ": expected a number");
  return it->get<double>();
}

inline std::string get_string(const json& j, const char* key, const std::string& where,
                              std::optional<std::string> fallback = std::nullopt) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing required key '" + key + "'");
  }
  if (!it->is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return it->get<std::string>();
}

inline uint64_t mbps_to_bps(double mbps, const std::string& where) {
  if (!(mbps > 0)) throw ConfigError(where + ": bandwidth must be positive");
  return static_cast<uint64_t>(std::llround(mbps * 1e6));
}

inline LinkTrace parse_link(const json& j, const std::string& where) {
  check_keys(j, where, {"ideal", "bandwidth_mbps", "segments", "propagation_delay_ms"});
  LinkTrace trace;
  trace.propagation_delay_us = get_u64(j, "propagation_delay_ms", where, 0) * 1000;
  if (j.contains("ideal")) {
    if (!j.at("ideal").is_boolean() || !j.at("ideal").get<bool>())
      throw ConfigError(where + ".ideal: only 'true' is meaningful");
    if (j.contains("bandwidth_mbps") || j.contains("segments"))
      throw ConfigError(where + ": 'ideal' excludes bandwidth keys");
    trace.infinite = true;
    return trace;
  }
  if (j.contains("bandwidth_mbps") && j.contains("segments"))
    throw ConfigError(where + ": give either 'bandwidth_mbps' or 'segments', not both");
  if (j.contains("bandwidth_mbps")) {
    trace.segments.push_back({0, mbps_to_bps(get_double(j, "bandwidth_mbps", where), where)});
  } else if (j.contains("segments")) {
    const json& segs = j.at("segments");
    if (!segs.is_array() || segs.empty())
      throw ConfigError(where + ".segments: expected a nonempty array");
    size_t i = 0;
    for (const json& seg : segs) {
      std::string seg_where = where + ".segments[" + std::to_string(i++) + "]";
      check_keys(seg, seg_where, {"at_ms", "mbps"});
      trace.segments.push_back(
          {get_u64(seg, "at_ms", seg_where) * 1000,
           mbps_to_bps(get_double(seg, "mbps", seg_where), seg_where)});
    }
  } else {
    throw ConfigError(where + ": needs 'ideal', 'bandwidth_mbps', or 'segments'");
  }
  try {
    validate_trace(trace);
  } catch (const ValidationError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return trace;
}

inline SensorGeometry parse_geometry(const json& j, const std::string& where) {
  check_keys(j, where, {"width", "height"});
  SensorGeometry g;
  g.width = static_cast<uint16_t>(get_u64(j, "width", where, std::nullopt, kMaxCoord));
  g.height = static_cast<uint16_t>(get_u64(j, "height", where, std::nullopt, kMaxCoord));
  try {
    validate_geometry(g);
  } catch (const ValidationError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return g;
}

inline SourceModel parse_source(const json& j, uint64_t seed) {
  const std::string where = "source";
  check_keys(j, where, {"kind", "rate_eps", "bursts", "geometry", "path", "format"});
  SourceModel m;
  m.seed = seed;
  std::string kind = get_string(j, "kind", where);
  if (j.contains("geometry")) m.geometry = parse_geometry(j.at("geometry"), where + ".geometry");
  if (kind == "poisson" || kind == "bursty") {
    m.kind = kind == "poisson" ? SourceKind::kConstantPoisson : SourceKind::kBursty;
    m.rate_eps = get_double(j, "rate_eps", where);
    if (kind == "poisson" && j.contains("bursts"))
      throw ConfigError(where + ": 'bursts' requires kind 'bursty'");
    if (kind == "bursty") {
      const json& bursts = require(j, "bursts", where);
      if (!bursts.is_array()) throw ConfigError(where + ".bursts: expected an array");
      size_t i = 0;
      for (const json& b : bursts) {
        std::string bw = where + ".bursts[" + std::to_string(i++) + "]";
        check_keys(b, bw, {"start_ms", "end_ms", "multiplier"});
        m.bursts.push_back({get_u64(b, "start_ms", bw) * 1000,
                            get_u64(b, "end_ms", bw) * 1000,
                            get_double(b, "multiplier", bw)});
      }
    }
  } else if (kind == "file") {
    m.kind = SourceKind::kFile;
    m.path = get_string(j, "path", where);
    std::string format = get_string(j, "format", where, "csv");
    if (format == "csv")
      m.format = FileFormat::kCsv;
    else if (format == "binary")
      m.format = FileFormat::kPackedBinary;
    else
      throw ConfigError(where + ".format: expected 'csv' or 'binary'");
  } else {
    throw ConfigError(where + ".kind: expected 'poisson', 'bursty', or 'file'");
  }
  try {
    validate_model(m);
  } catch (const ValidationError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return m;
}

inline uint64_t parse_timeout_ms(const json& j, const char* key, const std::string& where,
                                 uint64_t fallback_us) {
  auto it = j.find(key);
  if (it == j.end()) return fallback_us;
  if (it->is_string()) {
    if (it->get<std::string>() == "infinite") return kInfiniteTimeout;
    throw ConfigError(where + "." + key + ": expected milliseconds or 'infinite'");
  }
  auto v = as_u64(*it);
  if (!v || *v == 0)
    throw ConfigError(where + "." + key + ": expected positive milliseconds or 'infinite'");
  return *v * 1000;
}

}  // namespace config_detail

inline ScenarioConfig parse_scenario_json(const nlohmann::ordered_json& j) {
  using namespace config_detail;
  check_keys(j, "config",
             {"scenario_id", "seed", "duration_ms", "source", "partition",
              "publisher_link", "subscribers"});
  ScenarioConfig cfg;
  cfg.echo = j;
  cfg.scenario_id = get_string(j, "scenario_id", "config", "scenario");
  cfg.seed = get_u64(j, "seed", "config", 0);
  cfg.duration_us = get_u64(j, "duration_ms", "config") * 1000;
  cfg.source = parse_source(require(j, "source", "config"), cfg.seed);

  const json& part = require(j, "partition", "config");
  std::string mode = get_string(part, "mode", "partition");
  if (mode == "subgroup") {
    cfg.scheme = PartitionScheme::kSubgroup;
    check_keys(part, "partition",
               {"mode", "events_per_object", "window_ms", "group_ms",
                "base_objects_per_window", "growth_factor", "max_subgroups", "payload",
                "assignment"});
    cfg.subgroup.events_per_object = static_cast<uint32_t>(
        get_u64(part, "events_per_object", "partition", 250, UINT32_MAX));
    cfg.subgroup.window_ms = get_u64(part, "window_ms", "partition", 50);
    cfg.subgroup.group_ms = get_u64(part, "group_ms", "partition", 1000);
    cfg.subgroup.base_objects_per_window = static_cast<uint32_t>(
        get_u64(part, "base_objects_per_window", "partition", 1, UINT32_MAX));
    cfg.subgroup.growth_factor = static_cast<uint32_t>(
        get_u64(part, "growth_factor", "partition", 1, UINT32_MAX));
    cfg.subgroup.max_subgroups = static_cast<uint16_t>(
        get_u64(part, "max_subgroups", "partition", 0, UINT16_MAX));
    std::string payload = get_string(part, "payload", "partition", "plain");
    if (payload == "plain")
      cfg.subgroup.payload = PayloadMode::kPlain;
    else if (payload == "chained")
      cfg.subgroup.payload = PayloadMode::kChained;
    else
      throw ConfigError("partition.payload: expected 'plain' or 'chained'");
    std::string assignment = get_string(part, "assignment", "partition", "sequential");
    if (assignment == "sequential")
      cfg.subgroup.assignment = SubgroupAssignment::kSequential;
    else if (assignment == "striped")
      cfg.subgroup.assignment = SubgroupAssignment::kStriped;
    else
      throw ConfigError("partition.assignment: expected 'sequential' or 'striped'");
    try {
      validate_config(cfg.subgroup);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("partition: ") + e.what());
    }
  } else if (mode == "multitrack") {
    cfg.scheme = PartitionScheme::kMultitrack;
    check_keys(part, "partition", {"mode", "events_per_object", "tracks", "interval_ms"});
    cfg.track.events_per_object = static_cast<uint32_t>(
        get_u64(part, "events_per_object", "partition", 250, UINT32_MAX));
    cfg.track.track_count =
        static_cast<uint32_t>(get_u64(part, "tracks", "partition", 5, 64));
    cfg.track.interval_ms = get_u64(part, "interval_ms", "partition", 50);
    try {
      validate_config(cfg.track);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("partition: ") + e.what());
    }
  } else {
    throw ConfigError("partition.mode: expected 'subgroup' or 'multitrack'");
  }

  if (j.contains("publisher_link"))
    cfg.publisher_link = parse_link(j.at("publisher_link"), "publisher_link");

  const json& subs = require(j, "subscribers", "config");
  if (!subs.is_array() || subs.empty())
    throw ConfigError("subscribers: expected a nonempty array");
  size_t i = 0;
  for (const json& js : subs) {
    std::string where = "subscribers[" + std::to_string(i++) + "]";
    check_keys(js, where,
               {"id", "egress_link", "delivery_timeout_ms", "tracks", "controller",
                "group_order"});
    SubscriberSpec spec;
    spec.id = get_u64(js, "id", where);
    for (const SubscriberSpec& other : cfg.subscribers)
      if (other.id == spec.id)
        throw ConfigError(where + ".id: duplicate subscriber id " + std::to_string(spec.id));
    spec.egress = parse_link(require(js, "egress_link", where), where + ".egress_link");
    spec.initial_timeout_us =
        parse_timeout_ms(js, "delivery_timeout_ms", where, kInfiniteTimeout);
    if (cfg.scheme == PartitionScheme::kMultitrack)
      spec.initial_track_set =
          cfg.track.track_count == 64 ? ~0ull : (1ull << cfg.track.track_count) - 1;
    if (js.contains("tracks")) {
      if (cfg.scheme != PartitionScheme::kMultitrack)
        throw ConfigError(where + ".tracks: only meaningful in multitrack mode");
      const json& tracks = js.at("tracks");
      if (!tracks.is_array() || tracks.empty())
        throw ConfigError(where + ".tracks: expected a nonempty array");
      spec.initial_track_set = 0;
      for (const json& t : tracks) {
        auto id = as_u64(t);
        if (!id || *id >= cfg.track.track_count)
          throw ConfigError(where + ".tracks: track ids must be below " +
                            std::to_string(cfg.track.track_count));
        spec.initial_track_set |= 1ull << *id;
      }
    }
    std::string order = get_string(js, "group_order", where, "oldest_first");
    if (order == "oldest_first")
      spec.group_order = GroupOrder::kOldestFirst;
    else if (order == "newest_first")
      spec.group_order = GroupOrder::kNewestFirst;
    else
      throw ConfigError(where + ".group_order: expected 'oldest_first' or 'newest_first'");

    if (js.contains("controller")) {
      const json& ctl = js.at("controller");
      std::string type = get_string(ctl, "type", where + ".controller");
      if (type == "none") {
        check_keys(ctl, where + ".controller", {"type"});
      } else if (type == "timeout") {
        if (cfg.scheme != PartitionScheme::kSubgroup)
          throw ConfigError(where + ".controller: timeout controller needs subgroup mode");
        check_keys(ctl, where + ".controller",
                   {"type", "target_ms", "epoch_ms", "decrease_factor", "low_watermark",
                    "increase_step_ms", "dwell_epochs", "tau_min_ms", "tau_max_ms"});
        spec.controller = ControllerKind::kTimeout;
        TimeoutControllerConfig& c = spec.timeout_cfg;
        std::string cw = where + ".controller";
        c.target_us = get_u64(ctl, "target_ms", cw, 50) * 1000;
        c.epoch_us = get_u64(ctl, "epoch_ms", cw, 1000) * 1000;
        c.decrease_factor = get_double(ctl, "decrease_factor", cw, 0.7);
        c.low_watermark = get_double(ctl, "low_watermark", cw, 0.5);
        c.increase_step_us = get_u64(ctl, "increase_step_ms", cw, 10) * 1000;
        c.dwell_epochs = static_cast<uint32_t>(get_u64(ctl, "dwell_epochs", cw, 10));
        c.tau_min_us = get_u64(ctl, "tau_min_ms", cw, 1) * 1000;
        c.tau_max_us = get_u64(ctl, "tau_max_ms", cw, 10'000) * 1000;
        try {
          validate_config(c);
        } catch (const ValidationError& e) {
          throw ConfigError(cw + ": " + e.what());
        }
        if (spec.initial_timeout_us == kInfiniteTimeout)
          throw ConfigError(cw + ": timeout controller needs a finite initial "
                            "delivery_timeout_ms");
      } else if (type == "track") {
        if (cfg.scheme != PartitionScheme::kMultitrack)
          throw ConfigError(where + ".controller: track controller needs multitrack mode");
        check_keys(ctl, where + ".controller",
                   {"type", "target_ms", "check_interval_ms", "resubscribe_threshold",
                    "dwell_intervals"});
        spec.controller = ControllerKind::kTrack;
        TrackControllerConfig& c = spec.track_cfg;
        std::string cw = where + ".controller";
        c.target_us = get_u64(ctl, "target_ms", cw, 50) * 1000;
        c.check_interval_us = get_u64(ctl, "check_interval_ms", cw, 50) * 1000;
        c.resubscribe_threshold = get_double(ctl, "resubscribe_threshold", cw, 0.8);
        c.dwell_intervals = static_cast<uint32_t>(get_u64(ctl, "dwell_intervals", cw, 2));
        try {
          validate_config(c);
        } catch (const ValidationError& e) {
          throw ConfigError(cw + ": " + e.what());
        }
      } else {
        throw ConfigError(where + ".controller.type: expected 'none', 'timeout', or 'track'");
      }
    }
    cfg.subscribers.push_back(std::move(spec));
  }
  return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_scenario_json(j);
}

// --- runner ---

namespace run_detail {

struct PublisherPipe {
  Scheduler& sched;
  Relay& relay;
  Link link;
  std::deque<EventObject> queue;
  bool inflight = false;

  PublisherPipe(Scheduler& s, Relay& r, const LinkTrace& trace)
      : sched(s), relay(r), link(trace) {}

  void enqueue(EventObject obj) {
    queue.push_back(std::move(obj));
    try_send();
  }

  void try_send() {
    if (inflight || queue.empty() || !link.idle(sched.now())) return;
    EventObject obj = std::move(queue.front());
    queue.pop_front();
    inflight = true;
    auto times = link.begin_send(obj.wire_size(), sched.now());
    sched.schedule(times.completion_us, [this] {
      inflight = false;
      try_send();
    });
    sched.schedule(times.arrival_us,
                   [this, o = std::move(obj), at = times.arrival_us] { relay.ingest(o, at); });
  }
};

using ObjectKey = std::tuple<uint64_t, uint32_t, uint64_t>;

// Timer-driven wiring for one subscriber's controller. Stats are computed
// from the receiver's append-only record list via cursors.
struct ControllerState {
  std::optional<TimeoutController> timeout;
  std::optional<TrackController> track;
  size_t latency_cursor = 0;
  size_t delivery_cursor = 0;
  // Delivered-fraction bookkeeping, lagged one epoch so in-flight objects at
  // the epoch edge do not read as loss (valid while tau stays under ~one
  // epoch; adaptation scenarios hold that).
  std::map<ObjectKey, uint64_t> pending_bucket;
  std::map<uint64_t, std::pair<uint64_t, uint64_t>> buckets;  // epoch -> {published, arrived}
};

}  // namespace run_detail

inline RunLog run_scenario_collect(const ScenarioConfig& cfg) {
  validate_model(cfg.source);
  validate_trace(cfg.publisher_link);
  if (cfg.subscribers.empty()) throw ConfigError("scenario needs at least one subscriber");

  const uint64_t window_us = cfg.scheme == PartitionScheme::kSubgroup
                                 ? cfg.subgroup.window_us()
                                 : cfg.track.interval_us();

  Scheduler sched;
  Relay relay(sched);
  run_detail::PublisherPipe publisher(sched, relay, cfg.publisher_link);

  RunLog log;
  log.scenario_id = cfg.scenario_id;
  log.seed = cfg.seed;
  log.mode = cfg.scheme == PartitionScheme::kSubgroup ? SubscriptionMode::kSubgroup
                                                      : SubscriptionMode::kMultitrack;
  log.duration_us = cfg.duration_us;
  log.window_us = window_us;
  log.config_echo = cfg.echo;

  // Receivers and subscriptions.
  std::vector<std::unique_ptr<Receiver>> receivers;
  std::vector<run_detail::ControllerState> controllers(cfg.subscribers.size());
  for (const SubscriberSpec& spec : cfg.subscribers) {
    SubscriptionConfig sub;
    sub.subscriber_id = spec.id;
    sub.mode = log.mode;
    sub.delivery_timeout_us = spec.initial_timeout_us;
    sub.track_set = spec.initial_track_set;
    sub.egress = spec.egress;
    sub.group_order = spec.group_order;
    auto receiver = std::make_unique<Receiver>(spec.id);
    Receiver* r = receiver.get();
    relay.add_subscription(sub, [r](const Delivery& d) { r->on_object(d); });
    receivers.push_back(std::move(receiver));
  }

  // Source, partitioner, and per-window flush events.
  std::shared_ptr<StreamGenerator> generator;
  std::shared_ptr<std::vector<Event>> file_events;
  std::shared_ptr<size_t> file_cursor;
  if (cfg.source.kind == SourceKind::kFile) {
    file_events = std::make_shared<std::vector<Event>>(
        load_events(cfg.source.path, cfg.source.format, cfg.source.geometry));
    file_cursor = std::make_shared<size_t>(0);
  } else if (cfg.source.rate_eps > 0) {
    generator = std::make_shared<StreamGenerator>(cfg.source);
  }

  auto subgroup_part = cfg.scheme == PartitionScheme::kSubgroup
                           ? std::make_shared<SubgroupPartitioner>(cfg.subgroup)
                           : nullptr;
  auto track_part = cfg.scheme == PartitionScheme::kMultitrack
                        ? std::make_shared<TrackPartitioner>(cfg.track)
                        : nullptr;

  const uint64_t n_windows = (cfg.duration_us + window_us - 1) / window_us;
  auto flush_window = [&, subgroup_part, track_part, generator, file_events,
                       file_cursor](uint64_t w) {
    const uint64_t bound = std::min((w + 1) * window_us, cfg.duration_us);
    std::vector<Event> events;
    if (generator) {
      events = generator->take_until(bound);
    } else if (file_events) {
      size_t& cur = *file_cursor;
      size_t begin = cur;
      while (cur < file_events->size() && (*file_events)[cur].t < bound) ++cur;
      events.assign(file_events->begin() + begin, file_events->begin() + cur);
    }
    log.source_events += events.size();
    PartitionedBatch batch = subgroup_part ? subgroup_part->flush_window(events, w)
                                           : track_part->flush_interval(events, w);
    log.truncated_events += batch.publisher_truncated_count;
    const uint64_t emit_time = sched.now();
    for (EventObject& obj : batch.objects) {
      obj.emit_time_us = emit_time;
      log.published.push_back({obj.header, obj.track_id, w, emit_time, obj.wire_size()});
      for (size_t si = 0; si < cfg.subscribers.size(); ++si) {
        run_detail::ControllerState& state = controllers[si];
        if (state.timeout.has_value()) {
          uint64_t epoch_us = cfg.subscribers[si].timeout_cfg.epoch_us;
          uint64_t bucket = (emit_time + epoch_us - 1) / epoch_us;
          state.pending_bucket[{obj.header.group_id, obj.track_id, obj.header.object_id}] =
              bucket;
          state.buckets[bucket].first += 1;
        }
      }
      publisher.enqueue(std::move(obj));
    }
  };
  for (uint64_t w = 0; w < n_windows; ++w)
    sched.schedule((w + 1) * window_us, [flush_window, w] { flush_window(w); });

  // Controller timers.
  for (size_t si = 0; si < cfg.subscribers.size(); ++si) {
    const SubscriberSpec& spec = cfg.subscribers[si];
    run_detail::ControllerState& state = controllers[si];
    Receiver* receiver = receivers[si].get();
    const uint64_t prop = spec.egress.propagation_delay_us;

    auto send_control = [&sched, &relay, &log, si](ControlMessage msg, uint64_t prop_us) {
      log.subscribers[si].controls.emplace_back(sched.now(), msg);
      sched.schedule(sched.now() + prop_us,
                     [&relay, msg, at = sched.now() + prop_us] { relay.on_control(msg, at); });
    };

    if (spec.controller == ControllerKind::kTimeout) {
      state.timeout.emplace(spec.timeout_cfg, spec.initial_timeout_us);
      const uint64_t epoch_us = spec.timeout_cfg.epoch_us;
      for (uint64_t k = 1; k * epoch_us <= cfg.duration_us; ++k) {
        sched.schedule(k * epoch_us, [&state, receiver, spec, k, send_control, prop] {
          const auto& records = receiver->records();
          // p95 object latency over this epoch's arrivals.
          std::vector<uint64_t> latencies;
          for (size_t i = state.latency_cursor; i < records.size(); ++i)
            latencies.push_back(records[i].object_latency_us);
          state.latency_cursor = records.size();
          // Lagged delivered fraction: bucket k-1 vs what has arrived by now.
          for (size_t i = state.delivery_cursor; i < records.size(); ++i) {
            auto key = run_detail::ObjectKey{records[i].header.group_id, records[i].track_id,
                                             records[i].header.object_id};
            auto it = state.pending_bucket.find(key);
            if (it != state.pending_bucket.end()) {
              state.buckets[it->second].second += 1;
              state.pending_bucket.erase(it);
            }
          }
          state.delivery_cursor = records.size();
          std::sort(latencies.begin(), latencies.end());
          EpochStats stats;
          stats.has_latency = !latencies.empty();
          stats.p95_object_latency_us = nearest_rank(latencies, 95);
          auto bucket_it = state.buckets.find(k - 1);
          if (bucket_it != state.buckets.end() && bucket_it->second.first > 0) {
            stats.has_delivery = true;
            stats.delivered_fraction = static_cast<double>(bucket_it->second.second) /
                                       static_cast<double>(bucket_it->second.first);
          }
          if (auto next = state.timeout->step(stats)) {
            ControlMessage msg;
            msg.kind = ControlKind::kUpdateTimeout;
            msg.subscriber_id = spec.id;
            msg.delivery_timeout_us = *next;
            send_control(msg, prop);
          }
        });
      }
    } else if (spec.controller == ControllerKind::kTrack) {
      state.track.emplace(spec.track_cfg, cfg.track.track_count, spec.initial_track_set);
      const uint64_t interval_us = spec.track_cfg.check_interval_us;
      for (uint64_t k = 1; k * interval_us <= cfg.duration_us; ++k) {
        sched.schedule(k * interval_us, [&state, receiver, spec, send_control, prop] {
          const auto& records = receiver->records();
          // Mean over this interval's arrivals from currently subscribed
          // tracks; stale deliveries of unsubscribed backlog are the relay
          // pathology and would pin the mean forever.
          uint64_t mask = state.track->current();
          unsigned __int128 sum = 0;
          uint64_t n = 0;
          for (size_t i = state.latency_cursor; i < records.size(); ++i) {
            if (((mask >> records[i].track_id) & 1) == 0) continue;
            sum += records[i].object_latency_us;
            ++n;
          }
          state.latency_cursor = records.size();
          IntervalStats stats;
          stats.has_latency = n > 0;
          if (n > 0) stats.mean_latency_us = static_cast<double>(sum) / static_cast<double>(n);
          if (auto next = state.track->step(stats)) {
            ControlMessage msg;
            msg.kind = ControlKind::kSubscribeTracks;
            msg.subscriber_id = spec.id;
            msg.track_set = *next;
            send_control(msg, prop);
          }
        });
      }
    }
  }

  // Subscriber log skeletons must exist before controllers append to them.
  for (const SubscriberSpec& spec : cfg.subscribers) {
    SubscriberRunLog sub;
    sub.subscriber_id = spec.id;
    sub.mode = log.mode;
    sub.egress_mbps = spec.egress.infinite
                          ? 0.0
                          : static_cast<double>(spec.egress.segments.front().bits_per_second) /
                                1e6;
    log.subscribers.push_back(std::move(sub));
  }

  // Run the source horizon, then drain: every queued object is eventually
  // delivered or expired, so queue/in-flight residues are zero.
  sched.run_all();

  for (size_t si = 0; si < cfg.subscribers.size(); ++si) {
    SubscriberRunLog& sub = log.subscribers[si];
    sub.arrivals = receivers[si]->records();
    sub.bytes_delivered = receivers[si]->bytes_delivered();
    auto stats = relay.queue_stats(sub.subscriber_id);
    sub.queued_objects_end = stats.queued_objects;
    sub.queued_events_end = stats.queued_events;
    sub.inflight_objects_end = stats.inflight_objects;
    sub.inflight_events_end = stats.inflight_events;
    sub.final_timeout_us = relay.delivery_timeout(sub.subscriber_id);
    sub.final_track_set = relay.track_set(sub.subscriber_id);
  }
  for (const DropRecord& d : relay.drops()) {
    for (SubscriberRunLog& sub : log.subscribers)
      if (sub.subscriber_id == d.subscriber_id) sub.drops.push_back(d);
  }
  return log;
}

inline RunReport run_scenario(const ScenarioConfig& cfg) {
  return aggregate(run_scenario_collect(cfg));
}

// Replaces every subscriber's egress with a constant-bandwidth link; the
// propagation delay and everything else stay as configured.
inline ScenarioConfig with_constant_egress(ScenarioConfig cfg, double mbps) {
  for (SubscriberSpec& spec : cfg.subscribers) {
    uint64_t prop = spec.egress.propagation_delay_us;
    spec.egress = LinkTrace::constant(
        config_detail::mbps_to_bps(mbps, "sweep bandwidth"), prop);
  }
  return cfg;
}

// One run per bandwidth, identical seed; scenarios are independent and run in
// parallel, but the output order always follows the input order.
inline std::vector<RunReport> sweep_scenario(const ScenarioConfig& cfg,
                                             const std::vector<double>& bandwidths_mbps) {
  if (bandwidths_mbps.empty())
    throw ConfigError("sweep needs at least one bandwidth");
  std::vector<std::future<RunReport>> futures;
  futures.reserve(bandwidths_mbps.size());
  for (double mbps : bandwidths_mbps)
    futures.push_back(std::async(std::launch::async, [cfg, mbps] {
      return run_scenario(with_constant_egress(cfg, mbps));
    }));
  std::vector<RunReport> out;
  out.reserve(futures.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

}  // namespace evstream
