#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "evstream/errors.hpp"
#include "evstream/relay.hpp"
#include "evstream/subscriber.hpp"

// Rate calculators, per-run aggregation, and report export. Aggregation is
// pure: identical logs give identical reports and identical exported bytes.

namespace evstream {

// Uncompressed bit rate of a framed camera.
inline uint64_t framed_rate_bps(uint64_t width, uint64_t height, uint64_t bit_depth,
                                uint64_t fps) {
  return width * height * bit_depth * fps;
}

// Raw event-stream bit rate at a given per-event encoding size.
inline uint64_t event_raw_rate_bps(uint64_t events_per_second, uint64_t bytes_per_event) {
  return events_per_second * bytes_per_event * 8;
}

struct LatencyStats {
  uint64_t count = 0;  // 0 marks the stats absent
  double mean_us = 0.0;
  uint64_t p50_us = 0;
  uint64_t p95_us = 0;
  uint64_t p99_us = 0;
  uint64_t max_us = 0;

  friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

// Nearest-rank percentile over a sorted sample: the smallest value with at
// least pct percent of the samples at or below it.
inline uint64_t nearest_rank(const std::vector<uint64_t>& sorted, uint32_t pct) {
  if (sorted.empty()) return 0;
  size_t rank = (static_cast<size_t>(pct) * sorted.size() + 99) / 100;
  if (rank == 0) rank = 1;
  return sorted[rank - 1];
}

inline LatencyStats compute_latency_stats(std::vector<uint64_t> samples) {
  LatencyStats stats;
  stats.count = samples.size();
  if (samples.empty()) return stats;
  std::sort(samples.begin(), samples.end());
  unsigned __int128 sum = 0;
  for (uint64_t s : samples) sum += s;
  stats.mean_us = static_cast<double>(sum) / static_cast<double>(samples.size());
  stats.p50_us = nearest_rank(samples, 50);
  stats.p95_us = nearest_rank(samples, 95);
  stats.p99_us = nearest_rank(samples, 99);
  stats.max_us = samples.back();
  return stats;
}

// --- run log: everything a simulation records, before aggregation ---

struct PublishedObjectLog {
  ObjectHeader header;
  uint32_t track_id = 0;
  uint64_t window_index = 0;
  uint64_t emit_us = 0;
  uint64_t wire_bytes = 0;
};

struct SubscriberRunLog {
  uint64_t subscriber_id = 0;
  SubscriptionMode mode = SubscriptionMode::kSubgroup;
  std::vector<ObjectRecord> arrivals;
  std::vector<DropRecord> drops;
  std::vector<std::pair<uint64_t, ControlMessage>> controls;  // emit time, message
  uint64_t queued_objects_end = 0;
  uint64_t queued_events_end = 0;
  uint64_t inflight_objects_end = 0;
  uint64_t inflight_events_end = 0;
  uint64_t bytes_delivered = 0;
  uint64_t final_timeout_us = kInfiniteTimeout;
  uint64_t final_track_set = ~0ull;
  double egress_mbps = 0.0;  // first-segment egress bandwidth, for reporting
};

struct RunLog {
  std::string scenario_id;
  uint64_t seed = 0;
  SubscriptionMode mode = SubscriptionMode::kSubgroup;
  uint64_t duration_us = 0;
  uint64_t window_us = 0;  // subgroup window T or multitrack interval
  uint64_t source_events = 0;
  uint64_t truncated_events = 0;
  std::vector<PublishedObjectLog> published;
  std::vector<SubscriberRunLog> subscribers;
  nlohmann::ordered_json config_echo;
};

// --- aggregated report ---

struct FractionEntry {
  uint64_t key = 0;  // subgroup id or track id
  uint64_t published_events = 0;
  uint64_t delivered_events = 0;
  double fraction = 0.0;

  friend bool operator==(const FractionEntry&, const FractionEntry&) = default;
};

struct SkewSample {
  uint64_t group = 0;   // group id (subgroup mode) or interval (multitrack)
  uint64_t window = 0;  // window index within the run
  uint64_t skew_us = 0;

  friend bool operator==(const SkewSample&, const SkewSample&) = default;
};

struct SubscriberReport {
  uint64_t subscriber_id = 0;
  std::string mode;
  uint64_t objects_delivered = 0;
  uint64_t objects_decoded = 0;
  uint64_t objects_dependency_discarded = 0;
  uint64_t objects_corrupt = 0;
  uint64_t objects_expired = 0;
  uint64_t objects_dropped_unsubscribed = 0;
  uint64_t objects_queued_end = 0;
  uint64_t objects_inflight_end = 0;
  uint64_t events_delivered = 0;
  uint64_t events_decoded = 0;
  uint64_t events_dependency_discarded = 0;
  uint64_t events_expired = 0;
  double delivered_event_fraction = 0.0;
  LatencyStats object_latency;
  LatencyStats event_latency;  // oldest-event latency of decoded objects
  uint64_t control_messages = 0;
  std::vector<FractionEntry> per_subgroup;
  std::vector<FractionEntry> per_track;
  std::vector<SkewSample> skew_series;
  uint64_t max_skew_us = 0;
  uint64_t bytes_delivered = 0;
  double bandwidth_mbps = 0.0;

  friend bool operator==(const SubscriberReport&, const SubscriberReport&) = default;
};

struct RunReport {
  std::string scenario_id;
  uint64_t seed = 0;
  std::string mode;
  uint64_t source_events = 0;
  uint64_t truncated_events = 0;
  uint64_t published_objects = 0;
  uint64_t published_events = 0;
  uint64_t published_bytes = 0;
  std::vector<SubscriberReport> subscribers;
  nlohmann::ordered_json config_echo;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

namespace detail {

inline std::tuple<uint64_t, uint32_t, uint64_t> object_key(const ObjectHeader& h,
                                                           uint32_t track_id) {
  return {h.group_id, track_id, h.object_id};
}

}  // namespace detail

inline RunReport aggregate(const RunLog& log) {
  RunReport report;
  report.scenario_id = log.scenario_id;
  report.seed = log.seed;
  report.mode = log.mode == SubscriptionMode::kSubgroup ? "subgroup" : "multitrack";
  report.source_events = log.source_events;
  report.truncated_events = log.truncated_events;
  report.config_echo = log.config_echo;

  std::map<std::tuple<uint64_t, uint32_t, uint64_t>, const PublishedObjectLog*> by_key;
  std::map<uint64_t, uint64_t> published_events_by_subgroup;
  std::map<uint64_t, uint64_t> published_events_by_track;
  for (const PublishedObjectLog& p : log.published) {
    ++report.published_objects;
    report.published_events += p.header.event_count;
    report.published_bytes += p.wire_bytes;
    by_key[detail::object_key(p.header, p.track_id)] = &p;
    if (log.mode == SubscriptionMode::kSubgroup)
      published_events_by_subgroup[p.header.subgroup_id] += p.header.event_count;
    else
      published_events_by_track[p.track_id] += p.header.event_count;
  }
  if (report.published_events + log.truncated_events != log.source_events)
    throw AggregationError("published + truncated events (" +
                           std::to_string(report.published_events + log.truncated_events) +
                           ") do not add up to source events (" +
                           std::to_string(log.source_events) + ")");

  for (const SubscriberRunLog& sub : log.subscribers) {
    SubscriberReport r;
    r.subscriber_id = sub.subscriber_id;
    r.mode = sub.mode == SubscriptionMode::kSubgroup ? "subgroup" : "multitrack";
    r.control_messages = sub.controls.size();
    r.bytes_delivered = sub.bytes_delivered;
    r.bandwidth_mbps = sub.egress_mbps;
    r.objects_queued_end = sub.queued_objects_end;
    r.objects_inflight_end = sub.inflight_objects_end;

    std::vector<uint64_t> object_latencies;
    std::vector<uint64_t> event_latencies;
    std::map<uint64_t, uint64_t> delivered_events_by_subgroup;
    std::map<uint64_t, uint64_t> delivered_events_by_track;
    // (group, window) -> [min, max] arrival for the skew series.
    std::map<std::pair<uint64_t, uint64_t>, std::pair<uint64_t, uint64_t>> arrival_span;

    for (const ObjectRecord& a : sub.arrivals) {
      ++r.objects_delivered;
      r.events_delivered += a.header.event_count;
      object_latencies.push_back(a.object_latency_us);
      switch (a.outcome) {
        case DecodeOutcome::kDecoded:
          ++r.objects_decoded;
          r.events_decoded += a.header.event_count;
          if (a.has_event_latency) event_latencies.push_back(a.oldest_event_latency_us);
          break;
        case DecodeOutcome::kDependencyDiscarded:
          ++r.objects_dependency_discarded;
          r.events_dependency_discarded += a.header.event_count;
          break;
        case DecodeOutcome::kCorrupt:
          ++r.objects_corrupt;
          break;
      }
      auto it = by_key.find(detail::object_key(a.header, a.track_id));
      if (it == by_key.end())
        throw AggregationError("subscriber " + std::to_string(sub.subscriber_id) +
                               " received object " + std::to_string(a.header.object_id) +
                               " of group " + std::to_string(a.header.group_id) +
                               " that the publisher log does not contain");
      const PublishedObjectLog& pub = *it->second;
      if (sub.mode == SubscriptionMode::kSubgroup)
        delivered_events_by_subgroup[a.header.subgroup_id] += a.header.event_count;
      else
        delivered_events_by_track[a.track_id] += a.header.event_count;
      auto [span_it, fresh] = arrival_span.try_emplace(
          std::pair{pub.header.group_id, pub.window_index},
          std::pair{a.arrival_us, a.arrival_us});
      if (!fresh) {
        span_it->second.first = std::min(span_it->second.first, a.arrival_us);
        span_it->second.second = std::max(span_it->second.second, a.arrival_us);
      }
    }

    for (const DropRecord& d : sub.drops) {
      if (d.reason == DropReason::kTimeoutExpired) {
        ++r.objects_expired;
        r.events_expired += d.header.event_count;
      } else {
        ++r.objects_dropped_unsubscribed;
      }
    }

    uint64_t accounted = r.objects_delivered + r.objects_expired +
                         r.objects_dropped_unsubscribed + r.objects_queued_end +
                         r.objects_inflight_end;
    if (accounted != report.published_objects)
      throw AggregationError(
          "conservation failure for subscriber " + std::to_string(sub.subscriber_id) +
          ": delivered+expired+unsubscribed+queued+inflight = " + std::to_string(accounted) +
          " but published = " + std::to_string(report.published_objects));

    r.delivered_event_fraction =
        log.source_events == 0
            ? 1.0
            : static_cast<double>(r.events_decoded) / static_cast<double>(log.source_events);
    r.object_latency = compute_latency_stats(std::move(object_latencies));
    r.event_latency = compute_latency_stats(std::move(event_latencies));

    auto fractions = [](const std::map<uint64_t, uint64_t>& published,
                        const std::map<uint64_t, uint64_t>& delivered) {
      std::vector<FractionEntry> out;
      for (const auto& [key, pub_events] : published) {
        FractionEntry e;
        e.key = key;
        e.published_events = pub_events;
        auto it = delivered.find(key);
        e.delivered_events = it == delivered.end() ? 0 : it->second;
        e.fraction = pub_events == 0 ? 1.0
                                     : static_cast<double>(e.delivered_events) /
                                           static_cast<double>(pub_events);
        out.push_back(e);
      }
      return out;
    };
    r.per_subgroup = fractions(published_events_by_subgroup, delivered_events_by_subgroup);
    r.per_track = fractions(published_events_by_track, delivered_events_by_track);

    for (const auto& [key, span] : arrival_span) {
      SkewSample s;
      s.group = key.first;
      s.window = key.second;
      s.skew_us = span.second - span.first;
      r.skew_series.push_back(s);
      r.max_skew_us = std::max(r.max_skew_us, s.skew_us);
    }

    report.subscribers.push_back(std::move(r));
  }
  return report;
}

// --- JSON export / import ---

namespace detail {

inline nlohmann::ordered_json to_json(const LatencyStats& s) {
  return {{"count", s.count}, {"mean_us", s.mean_us},   {"p50_us", s.p50_us},
          {"p95_us", s.p95_us}, {"p99_us", s.p99_us}, {"max_us", s.max_us}};
}

inline LatencyStats latency_from_json(const nlohmann::ordered_json& j) {
  LatencyStats s;
  s.count = j.at("count");
  s.mean_us = j.at("mean_us");
  s.p50_us = j.at("p50_us");
  s.p95_us = j.at("p95_us");
  s.p99_us = j.at("p99_us");
  s.max_us = j.at("max_us");
  return s;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["scenario_id"] = r.scenario_id;
  j["seed"] = r.seed;
  j["mode"] = r.mode;
  j["source_events"] = r.source_events;
  j["truncated_events"] = r.truncated_events;
  j["published_objects"] = r.published_objects;
  j["published_events"] = r.published_events;
  j["published_bytes"] = r.published_bytes;
  j["subscribers"] = nlohmann::ordered_json::array();
  for (const SubscriberReport& s : r.subscribers) {
    nlohmann::ordered_json js;
    js["subscriber_id"] = s.subscriber_id;
    js["mode"] = s.mode;
    js["objects"] = {{"delivered", s.objects_delivered},
                     {"decoded", s.objects_decoded},
                     {"dependency_discarded", s.objects_dependency_discarded},
                     {"corrupt", s.objects_corrupt},
                     {"expired", s.objects_expired},
                     {"dropped_unsubscribed", s.objects_dropped_unsubscribed},
                     {"queued_at_end", s.objects_queued_end},
                     {"inflight_at_end", s.objects_inflight_end}};
    js["events"] = {{"delivered", s.events_delivered},
                    {"decoded", s.events_decoded},
                    {"dependency_discarded", s.events_dependency_discarded},
                    {"expired", s.events_expired}};
    js["delivered_event_fraction"] = s.delivered_event_fraction;
    js["object_latency"] = detail::to_json(s.object_latency);
    js["event_latency"] = detail::to_json(s.event_latency);
    js["control_messages"] = s.control_messages;
    auto fractions = [](const std::vector<FractionEntry>& entries, const char* key_name) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const FractionEntry& e : entries)
        arr.push_back({{key_name, e.key},
                       {"published_events", e.published_events},
                       {"delivered_events", e.delivered_events},
                       {"fraction", e.fraction}});
      return arr;
    };
    js["per_subgroup"] = fractions(s.per_subgroup, "subgroup");
    js["per_track"] = fractions(s.per_track, "track");
    nlohmann::ordered_json skew = nlohmann::ordered_json::array();
    for (const SkewSample& k : s.skew_series)
      skew.push_back({{"group", k.group}, {"window", k.window}, {"skew_us", k.skew_us}});
    js["skew_series"] = std::move(skew);
    js["max_skew_us"] = s.max_skew_us;
    js["bytes_delivered"] = s.bytes_delivered;
    js["bandwidth_mbps"] = s.bandwidth_mbps;
    j["subscribers"].push_back(std::move(js));
  }
  j["config_echo"] = r.config_echo;
  return j;
}

inline std::string export_json(const RunReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline RunReport report_from_json(const nlohmann::ordered_json& j) {
  RunReport r;
  r.scenario_id = j.at("scenario_id");
  r.seed = j.at("seed");
  r.mode = j.at("mode");
  r.source_events = j.at("source_events");
  r.truncated_events = j.at("truncated_events");
  r.published_objects = j.at("published_objects");
  r.published_events = j.at("published_events");
  r.published_bytes = j.at("published_bytes");
  for (const auto& js : j.at("subscribers")) {
    SubscriberReport s;
    s.subscriber_id = js.at("subscriber_id");
    s.mode = js.at("mode");
    const auto& objects = js.at("objects");
    s.objects_delivered = objects.at("delivered");
    s.objects_decoded = objects.at("decoded");
    s.objects_dependency_discarded = objects.at("dependency_discarded");
    s.objects_corrupt = objects.at("corrupt");
    s.objects_expired = objects.at("expired");
    s.objects_dropped_unsubscribed = objects.at("dropped_unsubscribed");
    s.objects_queued_end = objects.at("queued_at_end");
    s.objects_inflight_end = objects.at("inflight_at_end");
    const auto& events = js.at("events");
    s.events_delivered = events.at("delivered");
    s.events_decoded = events.at("decoded");
    s.events_dependency_discarded = events.at("dependency_discarded");
    s.events_expired = events.at("expired");
    s.delivered_event_fraction = js.at("delivered_event_fraction");
    s.object_latency = detail::latency_from_json(js.at("object_latency"));
    s.event_latency = detail::latency_from_json(js.at("event_latency"));
    s.control_messages = js.at("control_messages");
    for (const auto& e : js.at("per_subgroup"))
      s.per_subgroup.push_back({e.at("subgroup").get<uint64_t>(),
                                e.at("published_events").get<uint64_t>(),
                                e.at("delivered_events").get<uint64_t>(),
                                e.at("fraction").get<double>()});
    for (const auto& e : js.at("per_track"))
      s.per_track.push_back({e.at("track").get<uint64_t>(),
                             e.at("published_events").get<uint64_t>(),
                             e.at("delivered_events").get<uint64_t>(),
                             e.at("fraction").get<double>()});
    for (const auto& k : js.at("skew_series"))
      s.skew_series.push_back({k.at("group").get<uint64_t>(),
                               k.at("window").get<uint64_t>(),
                               k.at("skew_us").get<uint64_t>()});
    s.max_skew_us = js.at("max_skew_us");
    s.bytes_delivered = js.at("bytes_delivered");
    s.bandwidth_mbps = js.at("bandwidth_mbps");
    r.subscribers.push_back(std::move(s));
  }
  r.config_echo = j.at("config_echo");
  return r;
}

inline RunReport parse_report_json(const std::string& text) {
  return report_from_json(nlohmann::ordered_json::parse(text));
}

// --- CSV export ---

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "scenario_id,subscriber_id,mode,bandwidth_mbps,delivered_event_fraction,"
    "mean_obj_latency_us,p95_obj_latency_us,control_msgs,max_skew_us";

inline std::string export_csv_rows(const RunReport& r) {
  std::string out;
  for (const SubscriberReport& s : r.subscribers) {
    out += r.scenario_id;
    out += ',' + std::to_string(s.subscriber_id);
    out += ',' + s.mode;
    out += ',' + detail::format_double(s.bandwidth_mbps);
    out += ',' + detail::format_double(s.delivered_event_fraction);
    out += ',' + detail::format_double(s.object_latency.mean_us);
    out += ',' + std::to_string(s.object_latency.p95_us);
    out += ',' + std::to_string(s.control_messages);
    out += ',' + std::to_string(s.max_skew_us);
    out += '\n';
  }
  return out;
}

inline std::string export_csv(const RunReport& r) {
  return std::string(kCsvHeader) + "\n" + export_csv_rows(r);
}

}  // namespace evstream
