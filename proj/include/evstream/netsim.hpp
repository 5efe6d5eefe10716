#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "evstream/errors.hpp"

// Deterministic discrete-event core: integer-microsecond virtual clock,
// (time, insertion-order) scheduling, and links with piecewise-constant
// bandwidth, fixed propagation delay, and one-payload-at-a-time FIFO
// serialization. Single-threaded by contract; whole simulations are
// independent and may run in parallel.

namespace evstream {

struct BandwidthSegment {
  uint64_t start_us = 0;
  uint64_t bits_per_second = 0;
};

struct LinkTrace {
  std::vector<BandwidthSegment> segments;  // sorted; first starts at 0; covers [0, inf)
  uint64_t propagation_delay_us = 0;
  bool infinite = false;  // ideal link: zero serialization time

  static LinkTrace constant(uint64_t bits_per_second, uint64_t propagation_delay_us = 0) {
    LinkTrace t;
    t.segments.push_back({0, bits_per_second});
    t.propagation_delay_us = propagation_delay_us;
    return t;
  }

  static LinkTrace ideal(uint64_t propagation_delay_us = 0) {
    LinkTrace t;
    t.infinite = true;
    t.propagation_delay_us = propagation_delay_us;
    return t;
  }
};

inline void validate_trace(const LinkTrace& t) {
  if (t.infinite) return;
  if (t.segments.empty()) throw ValidationError("link trace needs at least one segment");
  if (t.segments.front().start_us != 0)
    throw ValidationError("link trace must start at t=0");
  uint64_t prev = 0;
  bool first = true;
  for (const BandwidthSegment& s : t.segments) {
    if (s.bits_per_second == 0) throw ValidationError("link bandwidth must be positive");
    if (!first && s.start_us <= prev)
      throw ValidationError("link trace segments must have strictly increasing starts");
    prev = s.start_us;
    first = false;
  }
}

// Microseconds until the last bit of `size_bytes` leaves the sender, starting
// at start_us, integrating bits over the piecewise-constant bandwidth. Exact
// integer arithmetic (bit-microseconds), rounded up at the end.
inline uint64_t transmit_duration(uint64_t size_bytes, const LinkTrace& trace,
                                  uint64_t start_us) {
  if (trace.infinite || size_bytes == 0) return 0;
  // remaining is scaled by 1e6: bits * us / s.
  unsigned __int128 remaining =
      static_cast<unsigned __int128>(size_bytes) * 8 * 1'000'000;

  size_t i = trace.segments.size();
  while (i > 0 && trace.segments[i - 1].start_us > start_us) --i;
  if (i > 0) --i;  // segment containing start_us

  uint64_t t = start_us;
  for (;; ++i) {
    const uint64_t bps = trace.segments[i].bits_per_second;
    const uint64_t seg_end = i + 1 < trace.segments.size()
                                 ? trace.segments[i + 1].start_us
                                 : std::numeric_limits<uint64_t>::max();
    const unsigned __int128 needed = (remaining + bps - 1) / bps;  // ceil, in us
    if (seg_end == std::numeric_limits<uint64_t>::max() ||
        needed <= static_cast<unsigned __int128>(seg_end - t)) {
      return t + static_cast<uint64_t>(needed) - start_us;
    }
    remaining -= static_cast<unsigned __int128>(bps) * (seg_end - t);
    t = seg_end;
  }
}

// Virtual clock plus a (time, insertion-order) action queue. Simultaneous
// actions run in insertion order; scheduling in the past is a logic error.
class Scheduler {
 public:
  uint64_t now() const { return now_; }

  void schedule(uint64_t at, std::function<void()> action) {
    if (at < now_)
      throw std::logic_error("schedule at t=" + std::to_string(at) +
                             " before now=" + std::to_string(now_));
    queue_.push(Item{at, next_seq_++, std::move(action)});
  }

  // Runs every action with time <= t, then advances the clock to t.
  void run_until(uint64_t t) {
    while (!queue_.empty() && queue_.top().at <= t) step();
    if (t > now_) now_ = t;
  }

  void run_all() {
    while (!queue_.empty()) step();
  }

  bool empty() const { return queue_.empty(); }

  // FNV-1a over the executed (time, seq) sequence; equal hashes for equal runs.
  uint64_t trace_hash() const { return hash_; }

 private:
  struct Item {
    uint64_t at;
    uint64_t seq;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void step() {
    // priority_queue::top is const; the action is moved out before pop.
    Item item = std::move(const_cast<Item&>(queue_.top()));
    queue_.pop();
    now_ = item.at;
    mix(item.at);
    mix(item.seq);
    item.action();
  }

  void mix(uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (8 * i)) & 0xff;
      hash_ *= 1099511628211ull;
    }
  }

  std::priority_queue<Item, std::vector<Item>, Later> queue_;
  uint64_t now_ = 0;
  uint64_t next_seq_ = 0;
  uint64_t hash_ = 14695981039346656037ull;
};

// One payload in flight at a time; callers must check idle() before sending.
class Link {
 public:
  explicit Link(LinkTrace trace) : trace_(std::move(trace)) { validate_trace(trace_); }

  bool idle(uint64_t now) const { return now >= busy_until_; }

  struct SendTimes {
    uint64_t completion_us;  // last bit leaves the sender
    uint64_t arrival_us;     // completion + propagation delay
  };

  SendTimes begin_send(uint64_t size_bytes, uint64_t now) {
    if (!idle(now)) throw std::logic_error("link is busy");
    uint64_t completion = now + transmit_duration(size_bytes, trace_, now);
    busy_until_ = completion;
    return {completion, completion + trace_.propagation_delay_us};
  }

  const LinkTrace& trace() const { return trace_; }

 private:
  LinkTrace trace_;
  uint64_t busy_until_ = 0;
};

}  // namespace evstream
