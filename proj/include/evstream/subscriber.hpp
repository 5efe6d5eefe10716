#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "evstream/errors.hpp"
#include "evstream/relay.hpp"
#include "evstream/wire.hpp"

// Receiver side: payload decode with chained-dependency discard, per-object
// latency measurement, and the two receiver-driven adaptation controllers.
// Controllers are pure step functions over epoch/interval statistics; the
// scenario harness owns the timers and the stat computation.

namespace evstream {

enum class DecodeOutcome { kDecoded, kDependencyDiscarded, kCorrupt };

// One arrival. object_latency measures the transport (arrival minus publisher
// emission); oldest_event_latency adds the capture-to-flush residual of the
// object's earliest event and is only meaningful for decoded objects.
struct ObjectRecord {
  ObjectHeader header;
  uint32_t track_id = 0;
  DecodeOutcome outcome = DecodeOutcome::kDecoded;
  uint64_t emit_us = 0;
  uint64_t relay_receipt_us = 0;
  uint64_t arrival_us = 0;
  uint64_t object_latency_us = 0;
  bool has_event_latency = false;
  uint64_t oldest_event_latency_us = 0;
  uint64_t wire_bytes = 0;
};

class Receiver {
 public:
  explicit Receiver(uint64_t subscriber_id, bool keep_events = false)
      : id_(subscriber_id), keep_events_(keep_events) {}

  void on_object(const Delivery& d) {
    ObjectRecord rec;
    rec.header = d.object.header;
    rec.track_id = d.object.track_id;
    rec.emit_us = d.object.emit_time_us;
    rec.relay_receipt_us = d.relay_receipt_us;
    rec.arrival_us = d.arrival_us;
    rec.object_latency_us = d.arrival_us - d.object.emit_time_us;
    rec.wire_bytes = d.object.wire_size();
    bytes_delivered_ += rec.wire_bytes;

    try {
      DecodedObject dec = decode_object(d.object.to_wire(), chain_);
      rec.outcome = DecodeOutcome::kDecoded;
      decoded_events_ += dec.events.size();
      if (!dec.events.empty()) {
        rec.has_event_latency = true;
        rec.oldest_event_latency_us = d.arrival_us - dec.events.front().t;
      }
      if (keep_events_)
        events_.insert(events_.end(), dec.events.begin(), dec.events.end());
    } catch (const DependencyError&) {
      rec.outcome = DecodeOutcome::kDependencyDiscarded;
      discarded_events_ += rec.header.event_count;
    } catch (const FormatError&) {
      rec.outcome = DecodeOutcome::kCorrupt;
    }
    records_.push_back(std::move(rec));
  }

  const std::vector<ObjectRecord>& records() const { return records_; }
  const std::vector<Event>& decoded_events() const { return events_; }
  uint64_t decoded_event_count() const { return decoded_events_; }
  uint64_t discarded_event_count() const { return discarded_events_; }
  uint64_t bytes_delivered() const { return bytes_delivered_; }
  uint64_t subscriber_id() const { return id_; }

 private:
  uint64_t id_;
  bool keep_events_;
  ChainContext chain_;
  std::vector<ObjectRecord> records_;
  std::vector<Event> events_;
  uint64_t decoded_events_ = 0;
  uint64_t discarded_events_ = 0;
  uint64_t bytes_delivered_ = 0;
};

// --- delivery-timeout controller (subgroup scheme) ---

struct TimeoutControllerConfig {
  uint64_t target_us = 50'000;        // L*
  uint64_t epoch_us = 1'000'000;
  double decrease_factor = 0.7;       // beta
  double low_watermark = 0.5;         // alpha
  uint64_t increase_step_us = 10'000; // delta
  uint32_t dwell_epochs = 10;         // K
  uint64_t tau_min_us = 1'000;
  uint64_t tau_max_us = 10'000'000;
};

inline void validate_config(const TimeoutControllerConfig& c) {
  if (!(c.decrease_factor > 0.0 && c.decrease_factor < 1.0))
    throw ValidationError("decrease factor must be in (0, 1)");
  if (!(c.low_watermark > 0.0 && c.low_watermark < 1.0))
    throw ValidationError("low watermark must be in (0, 1)");
  if (c.tau_min_us > c.tau_max_us) throw ValidationError("tau_min must be <= tau_max");
  if (c.tau_min_us == 0) throw ValidationError("tau_min must be positive");
  if (c.target_us == 0 || c.epoch_us == 0 || c.increase_step_us == 0 || c.dwell_epochs == 0)
    throw ValidationError("timeout controller parameters must be positive");
}

struct EpochStats {
  bool has_latency = false;
  uint64_t p95_object_latency_us = 0;
  bool has_delivery = false;
  double delivered_fraction = 1.0;
};

// Over the target: multiplicative decrease. Comfortably under it for K
// consecutive epochs while objects are being lost: additive increase. The
// steady state emits nothing.
class TimeoutController {
 public:
  TimeoutController(const TimeoutControllerConfig& cfg, uint64_t initial_timeout_us)
      : cfg_(cfg), tau_(initial_timeout_us) {
    validate_config(cfg);
  }

  std::optional<uint64_t> step(const EpochStats& s) {
    if (!s.has_latency) return std::nullopt;  // silent epoch: no evidence
    if (s.p95_object_latency_us > cfg_.target_us) {
      low_streak_ = 0;
      uint64_t next = std::max<uint64_t>(
          cfg_.tau_min_us,
          static_cast<uint64_t>(std::llround(cfg_.decrease_factor * static_cast<double>(tau_))));
      if (next == tau_) return std::nullopt;  // already at the floor
      tau_ = next;
      return tau_;
    }
    double low_bar = cfg_.low_watermark * static_cast<double>(cfg_.target_us);
    if (static_cast<double>(s.p95_object_latency_us) < low_bar) {
      if (low_streak_ < cfg_.dwell_epochs) ++low_streak_;
      if (low_streak_ >= cfg_.dwell_epochs && s.has_delivery && s.delivered_fraction < 1.0) {
        low_streak_ = 0;
        uint64_t next = std::min(cfg_.tau_max_us, tau_ + cfg_.increase_step_us);
        if (next == tau_) return std::nullopt;  // already at the cap
        tau_ = next;
        return tau_;
      }
      return std::nullopt;
    }
    low_streak_ = 0;
    return std::nullopt;
  }

  uint64_t current() const { return tau_; }
  const TimeoutControllerConfig& config() const { return cfg_; }

 private:
  TimeoutControllerConfig cfg_;
  uint64_t tau_;
  uint32_t low_streak_ = 0;
};

// --- track-set controller (legacy multitrack scheme) ---

struct TrackControllerConfig {
  uint64_t target_us = 50'000;          // L*
  uint64_t check_interval_us = 50'000;
  double resubscribe_threshold = 0.8;   // fraction of L*
  uint32_t dwell_intervals = 2;
};

inline void validate_config(const TrackControllerConfig& c) {
  if (!(c.resubscribe_threshold > 0.0 && c.resubscribe_threshold < 1.0))
    throw ValidationError("resubscribe threshold must be in (0, 1)");
  if (c.target_us == 0 || c.check_interval_us == 0 || c.dwell_intervals == 0)
    throw ValidationError("track controller parameters must be positive");
}

struct IntervalStats {
  bool has_latency = false;
  double mean_latency_us = 0.0;
};

// Unsubscribes the highest track when the interval mean overshoots the
// target; resubscribes the lowest missing track after a calm dwell. This is
// the churny behavior the subgroup scheme replaces.
class TrackController {
 public:
  TrackController(const TrackControllerConfig& cfg, uint32_t total_tracks,
                  uint64_t initial_track_set)
      : cfg_(cfg), total_tracks_(total_tracks), set_(initial_track_set) {
    validate_config(cfg);
    if (total_tracks == 0 || total_tracks > 64)
      throw ValidationError("track count must be in [1, 64]");
    full_ = total_tracks == 64 ? ~0ull : (1ull << total_tracks) - 1;
    set_ &= full_;
    if (set_ == 0) throw ValidationError("initial track set must be nonempty");
  }

  std::optional<uint64_t> step(const IntervalStats& s) {
    if (!s.has_latency) return std::nullopt;
    if (s.mean_latency_us > static_cast<double>(cfg_.target_us)) {
      calm_streak_ = 0;
      if (std::popcount(set_) <= 1) return std::nullopt;
      uint32_t highest = 63 - static_cast<uint32_t>(std::countl_zero(set_));
      set_ &= ~(1ull << highest);
      return set_;
    }
    if (s.mean_latency_us <
        cfg_.resubscribe_threshold * static_cast<double>(cfg_.target_us)) {
      if (calm_streak_ < cfg_.dwell_intervals) ++calm_streak_;
      if (calm_streak_ >= cfg_.dwell_intervals && set_ != full_) {
        calm_streak_ = 0;
        uint32_t lowest_missing = static_cast<uint32_t>(std::countr_one(set_));
        set_ |= 1ull << lowest_missing;
        return set_;
      }
      return std::nullopt;
    }
    calm_streak_ = 0;
    return std::nullopt;
  }

  uint64_t current() const { return set_; }

 private:
  TrackControllerConfig cfg_;
  uint32_t total_tracks_;
  uint64_t set_;
  uint64_t full_;
  uint32_t calm_streak_ = 0;
};

}  // namespace evstream
