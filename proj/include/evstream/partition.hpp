#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "evstream/errors.hpp"
#include "evstream/types.hpp"
#include "evstream/wire.hpp"

// Publisher-side segmentation of the live event stream into transport
// objects: subgroup partitioning (priority tiers inside one track, subgroup 0
// highest) and the legacy multi-track scheme it replaces.

namespace evstream {

enum class SubgroupAssignment { kSequential, kStriped };

struct SubgroupConfig {
  uint32_t events_per_object = 250;  // E
  uint64_t window_ms = 50;           // T: subgroup ids reset every window
  uint64_t group_ms = 1000;          // G: chain contexts reset every group
  uint32_t base_objects_per_window = 1;  // c0: subgroup 0's per-window allotment
  uint32_t growth_factor = 1;            // f: capacity multiplier per subgroup step
  uint16_t max_subgroups = 0;            // 0 = unbounded; overflow lands in the last
  PayloadMode payload = PayloadMode::kPlain;
  SubgroupAssignment assignment = SubgroupAssignment::kSequential;

  uint64_t window_us() const { return window_ms * 1000; }
  uint64_t group_us() const { return group_ms * 1000; }
  uint64_t windows_per_group() const { return group_ms / window_ms; }
};

inline void validate_config(const SubgroupConfig& c) {
  if (c.events_per_object < 1) throw ValidationError("events_per_object must be >= 1");
  if (c.window_ms < 1) throw ValidationError("window_ms must be >= 1");
  if (c.group_ms < c.window_ms || c.group_ms % c.window_ms != 0)
    throw ValidationError("group_ms must be a positive multiple of window_ms");
  if (c.base_objects_per_window < 1) throw ValidationError("c0 must be >= 1");
  if (c.growth_factor < 1) throw ValidationError("growth factor must be >= 1");
}

struct TrackConfig {
  uint32_t events_per_object = 250;  // E: per track, per interval
  uint32_t track_count = 5;          // N
  uint64_t interval_ms = 50;

  uint64_t interval_us() const { return interval_ms * 1000; }
};

inline void validate_config(const TrackConfig& c) {
  if (c.events_per_object < 1) throw ValidationError("events_per_object must be >= 1");
  if (c.track_count < 1 || c.track_count > 64)
    throw ValidationError("track_count must be in [1, 64]");
  if (c.interval_ms < 1) throw ValidationError("interval_ms must be >= 1");
}

// A transport object: identity plus encoded payload (up to E events).
// track_id routes legacy multitrack objects; emit_time_us is stamped by the
// publisher at window flush and travels as simulation metadata, not wire bytes.
struct EventObject {
  ObjectHeader header;
  std::vector<uint8_t> payload;  // payload bytes only, no header
  uint32_t track_id = 0;
  uint64_t emit_time_us = 0;

  size_t wire_size() const { return kObjectHeaderSize + payload.size(); }

  std::vector<uint8_t> to_wire() const {
    std::vector<uint8_t> out;
    out.reserve(wire_size());
    append_header(out, header);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }
};

struct PartitionedBatch {
  uint64_t window_index = 0;
  std::vector<EventObject> objects;  // ascending object_id
  uint64_t publisher_truncated_count = 0;  // legacy mode only
};

namespace detail {

inline uint64_t sat_mul(uint64_t a, uint64_t b) {
  if (a != 0 && b > std::numeric_limits<uint64_t>::max() / a)
    return std::numeric_limits<uint64_t>::max();
  return a * b;
}

inline uint64_t sat_add(uint64_t a, uint64_t b) {
  return a > std::numeric_limits<uint64_t>::max() - b
             ? std::numeric_limits<uint64_t>::max()
             : a + b;
}

}  // namespace detail

// Objects subgroup s may carry per window: c0 * f^s. Nondecreasing in s, so
// every subgroup offers at least as many objects as the one before it.
inline uint64_t subgroup_capacity(uint32_t s, const SubgroupConfig& cfg) {
  uint64_t cap = cfg.base_objects_per_window;
  for (uint32_t i = 0; i < s; ++i) cap = detail::sat_mul(cap, cfg.growth_factor);
  return cap;
}

namespace detail {

// Sequential fill: object j of the window goes to the smallest subgroup whose
// cumulative capacity exceeds j, clamped to max_subgroups-1.
inline std::vector<uint16_t> assign_sequential(uint64_t count, const SubgroupConfig& cfg) {
  std::vector<uint16_t> out(count);
  uint32_t s = 0;
  uint64_t cumulative = subgroup_capacity(0, cfg);
  for (uint64_t j = 0; j < count; ++j) {
    while (cumulative <= j &&
           (cfg.max_subgroups == 0 || s + 1 < cfg.max_subgroups)) {
      ++s;
      cumulative = sat_add(cumulative, subgroup_capacity(s, cfg));
    }
    out[j] = static_cast<uint16_t>(s);
  }
  return out;
}

// Striped alternative: deal objects round-robin over the minimal subgroup
// prefix that can hold the window, skipping subgroups at capacity. Spreads
// each subgroup's slice across the window instead of front-loading subgroup 0.
inline std::vector<uint16_t> assign_striped(uint64_t count, const SubgroupConfig& cfg) {
  uint32_t active = 1;
  uint64_t cumulative = subgroup_capacity(0, cfg);
  while (cumulative < count && (cfg.max_subgroups == 0 || active < cfg.max_subgroups)) {
    cumulative = sat_add(cumulative, subgroup_capacity(active, cfg));
    ++active;
  }
  std::vector<uint64_t> remaining(active);
  for (uint32_t s = 0; s < active; ++s) remaining[s] = subgroup_capacity(s, cfg);
  remaining[active - 1] = std::numeric_limits<uint64_t>::max();  // clamp absorbs overflow

  std::vector<uint16_t> out(count);
  uint32_t cursor = 0;
  for (uint64_t j = 0; j < count; ++j) {
    while (remaining[cursor] == 0) cursor = (cursor + 1) % active;
    out[j] = static_cast<uint16_t>(cursor);
    --remaining[cursor];
    cursor = (cursor + 1) % active;
  }
  return out;
}

}  // namespace detail

// Splits each T-window's events, in temporal order, into ceil(n/E) objects and
// assigns them to subgroups per the capacity schedule. Lossless: every event
// of the window lands in exactly one object. Single-owner state: per-group
// object counter plus the encoder chain context.
class SubgroupPartitioner {
 public:
  explicit SubgroupPartitioner(const SubgroupConfig& cfg) : cfg_(cfg) {
    validate_config(cfg);
  }

  // `events` must all satisfy window_index == t / T.
  PartitionedBatch flush_window(std::span<const Event> events, uint64_t window_index) {
    const uint64_t window_us = cfg_.window_us();
    for (const Event& e : events)
      if (e.t / window_us != window_index)
        throw ValidationError("event at t=" + std::to_string(e.t) +
                              " outside window " + std::to_string(window_index));

    const uint64_t group_id = window_index / cfg_.windows_per_group();
    if (!group_started_ || group_id != current_group_) {
      current_group_ = group_id;
      next_object_id_ = 0;
      group_started_ = true;
      chain_.forget_before(group_id);
    }

    PartitionedBatch batch;
    batch.window_index = window_index;
    if (events.empty()) return batch;

    const uint64_t object_count =
        (events.size() + cfg_.events_per_object - 1) / cfg_.events_per_object;
    std::vector<uint16_t> subgroups =
        cfg_.assignment == SubgroupAssignment::kSequential
            ? detail::assign_sequential(object_count, cfg_)
            : detail::assign_striped(object_count, cfg_);

    batch.objects.reserve(object_count);
    for (uint64_t j = 0; j < object_count; ++j) {
      size_t begin = j * cfg_.events_per_object;
      size_t end = std::min(events.size(), begin + cfg_.events_per_object);
      ObjectHeader header;
      header.group_id = group_id;
      header.subgroup_id = subgroups[j];
      header.object_id = next_object_id_++;
      header.event_count = static_cast<uint32_t>(end - begin);
      header.flags = cfg_.payload == PayloadMode::kChained ? kFlagChained : 0;
      std::vector<uint8_t> wire =
          encode_object(header, events.subspan(begin, end - begin), cfg_.payload, chain_);
      EventObject obj;
      obj.header = header;
      obj.payload.assign(wire.begin() + kObjectHeaderSize, wire.end());
      batch.objects.push_back(std::move(obj));
    }
    return batch;
  }

  const SubgroupConfig& config() const { return cfg_; }

 private:
  SubgroupConfig cfg_;
  uint64_t current_group_ = 0;
  bool group_started_ = false;
  uint64_t next_object_id_ = 0;
  ChainContext chain_;
};

// Legacy scheme: per interval, the first N*E events fill N consecutive chunks
// of up to E (chunk i -> track i); anything beyond N*E is dropped at the
// publisher and counted.
class TrackPartitioner {
 public:
  explicit TrackPartitioner(const TrackConfig& cfg) : cfg_(cfg) {
    validate_config(cfg);
    next_object_id_.resize(cfg.track_count, 0);
  }

  PartitionedBatch flush_interval(std::span<const Event> events, uint64_t interval_index) {
    const uint64_t interval_us = cfg_.interval_us();
    for (const Event& e : events)
      if (e.t / interval_us != interval_index)
        throw ValidationError("event at t=" + std::to_string(e.t) +
                              " outside interval " + std::to_string(interval_index));

    PartitionedBatch batch;
    batch.window_index = interval_index;
    const uint64_t carried = std::min<uint64_t>(
        events.size(),
        static_cast<uint64_t>(cfg_.events_per_object) * cfg_.track_count);
    batch.publisher_truncated_count = events.size() - carried;

    for (uint32_t track = 0; track < cfg_.track_count; ++track) {
      size_t begin = static_cast<size_t>(track) * cfg_.events_per_object;
      if (begin >= carried) break;
      size_t end = std::min<size_t>(carried, begin + cfg_.events_per_object);
      ObjectHeader header;
      header.group_id = interval_index;
      header.subgroup_id = 0;
      header.object_id = next_object_id_[track]++;
      header.event_count = static_cast<uint32_t>(end - begin);
      ChainContext unused;
      std::vector<uint8_t> wire =
          encode_object(header, events.subspan(begin, end - begin), PayloadMode::kPlain, unused);
      EventObject obj;
      obj.header = header;
      obj.payload.assign(wire.begin() + kObjectHeaderSize, wire.end());
      obj.track_id = track;
      batch.objects.push_back(std::move(obj));
    }
    return batch;
  }

  const TrackConfig& config() const { return cfg_; }

 private:
  TrackConfig cfg_;
  std::vector<uint64_t> next_object_id_;
};

}  // namespace evstream
