#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evstream/log.hpp"
#include "evstream/netsim.hpp"
#include "evstream/partition.hpp"
#include "evstream/wire.hpp"

// MoQ-like relay: fan-out to per-subscription queues, subgroup-priority
// egress scheduling, delivery-timeout enforcement with silent drops, and the
// legacy per-track behavior including its resubscribe pathology (backlog is
// never cleared by control messages, only sent or expired).

namespace evstream {

enum class SubscriptionMode { kSubgroup, kMultitrack };
enum class DropReason { kTimeoutExpired, kUnsubscribedTrack };
enum class GroupOrder { kOldestFirst, kNewestFirst };

struct DropRecord {
  uint64_t subscriber_id = 0;
  ObjectHeader header;
  uint32_t track_id = 0;
  DropReason reason = DropReason::kTimeoutExpired;
  uint64_t time_us = 0;
};

// Handed to the receiver when the last bit arrives.
struct Delivery {
  EventObject object;
  uint64_t relay_receipt_us = 0;
  uint64_t arrival_us = 0;
};

struct SubscriptionConfig {
  uint64_t subscriber_id = 0;
  SubscriptionMode mode = SubscriptionMode::kSubgroup;
  uint64_t delivery_timeout_us = kInfiniteTimeout;
  uint64_t track_set = ~0ull;  // multitrack only
  LinkTrace egress;
  GroupOrder group_order = GroupOrder::kOldestFirst;
};

class Relay {
 public:
  explicit Relay(Scheduler& sched) : sched_(sched) {}

  using DeliverFn = std::function<void(const Delivery&)>;

  void add_subscription(const SubscriptionConfig& cfg, DeliverFn deliver) {
    subs_.emplace(cfg.subscriber_id, Sub{cfg, std::move(deliver), {}, Link(cfg.egress)});
  }

  // Fan-out: the object joins the matching queue of every active
  // subscription, stamped with its receipt time.
  void ingest(const EventObject& object, uint64_t receipt_time_us) {
    for (auto& [id, sub] : subs_) {
      bool wanted = sub.active;
      if (sub.cfg.mode == SubscriptionMode::kMultitrack)
        wanted = wanted && (sub.cfg.track_set >> object.track_id) & 1;
      if (!wanted) {
        drops_.push_back({id, object.header, object.track_id,
                          DropReason::kUnsubscribedTrack, receipt_time_us});
        continue;
      }
      QueueKey key = queue_key(sub, object);
      auto& queue = sub.queues[key];
      // Subgroup streams are ordered: a publisher never hands a relay an
      // object behind one it already sent on the same stream.
      if (sub.cfg.mode == SubscriptionMode::kSubgroup && !queue.empty() &&
          object.header.object_id <= queue.back().object.header.object_id)
        throw std::logic_error("object " + std::to_string(object.header.object_id) +
                               " ingested out of order within its subgroup");
      queue.push_back(Queued{object, receipt_time_us});
      try_send(sub);
    }
    arm_sweep();
  }

  void on_control(const ControlMessage& msg, uint64_t /*now*/) {
    auto it = subs_.find(msg.subscriber_id);
    if (it == subs_.end()) {
      log_msg(LogLevel::kWarn,
              "control message for unknown subscriber " + std::to_string(msg.subscriber_id));
      return;
    }
    Sub& sub = it->second;
    switch (msg.kind) {
      case ControlKind::kSubscribe:
        sub.active = true;
        sub.cfg.delivery_timeout_us = msg.delivery_timeout_us;
        break;
      case ControlKind::kUpdateTimeout:
        // Applies to every subsequent expiry evaluation, queued backlog included.
        sub.cfg.delivery_timeout_us = msg.delivery_timeout_us;
        break;
      case ControlKind::kSubscribeTracks:
        // Replaces the mask. Queued backlog for any track is deliberately
        // retained: resubscribing cannot reset relay state.
        sub.cfg.track_set = msg.track_set;
        break;
      case ControlKind::kUnsubscribe:
        if (sub.cfg.mode == SubscriptionMode::kMultitrack)
          sub.cfg.track_set &= ~msg.track_set;
        else
          sub.active = false;
        break;
    }
    expire(sub, sched_.now());
    try_send(sub);
  }

  const std::vector<DropRecord>& drops() const { return drops_; }

  struct QueueStats {
    uint64_t queued_objects = 0;
    uint64_t queued_events = 0;
    uint64_t inflight_objects = 0;
    uint64_t inflight_events = 0;
  };

  QueueStats queue_stats(uint64_t subscriber_id) const {
    const Sub& sub = subs_.at(subscriber_id);
    QueueStats stats;
    for (const auto& [key, queue] : sub.queues)
      for (const Queued& q : queue) {
        ++stats.queued_objects;
        stats.queued_events += q.object.header.event_count;
      }
    if (sub.inflight) {
      stats.inflight_objects = 1;
      stats.inflight_events = sub.inflight_events;
    }
    return stats;
  }

  uint64_t delivery_timeout(uint64_t subscriber_id) const {
    return subs_.at(subscriber_id).cfg.delivery_timeout_us;
  }

  uint64_t track_set(uint64_t subscriber_id) const {
    return subs_.at(subscriber_id).cfg.track_set;
  }

 private:
  // Subgroup mode orders queues by (group, subgroup); multitrack by track id.
  // Using one key type keeps a single queue map per subscription.
  using QueueKey = std::pair<uint64_t, uint16_t>;

  struct Queued {
    EventObject object;
    uint64_t receipt_us;
  };

  struct Sub {
    SubscriptionConfig cfg;
    DeliverFn deliver;
    std::map<QueueKey, std::deque<Queued>> queues;
    Link egress;
    bool active = true;
    bool inflight = false;
    uint32_t inflight_events = 0;
  };

  static QueueKey queue_key(const Sub& sub, const EventObject& object) {
    if (sub.cfg.mode == SubscriptionMode::kMultitrack)
      return {object.track_id, 0};
    return {object.header.group_id, object.header.subgroup_id};
  }

  // Silently remove every queued object whose age strictly exceeds the
  // delivery timeout. Receipt times ascend within a queue, so expired entries
  // are a prefix. Objects mid-transmission are never aborted.
  void expire(Sub& sub, uint64_t now) {
    if (sub.cfg.delivery_timeout_us == kInfiniteTimeout) return;
    for (auto it = sub.queues.begin(); it != sub.queues.end();) {
      auto& queue = it->second;
      while (!queue.empty() &&
             now - queue.front().receipt_us > sub.cfg.delivery_timeout_us) {
        const EventObject& obj = queue.front().object;
        drops_.push_back({sub.cfg.subscriber_id, obj.header, obj.track_id,
                          DropReason::kTimeoutExpired, now});
        queue.pop_front();
      }
      it = queue.empty() ? sub.queues.erase(it) : std::next(it);
    }
  }

  // Pick the next object for an idle egress link: after pruning expired
  // heads, the minimum (group, subgroup, object) in subgroup mode — subgroup 0
  // first — or the lowest track id in receipt order for multitrack.
  void try_send(Sub& sub) {
    const uint64_t now = sched_.now();
    if (sub.inflight || !sub.egress.idle(now)) return;
    expire(sub, now);
    if (sub.queues.empty()) return;

    auto it = sub.queues.begin();
    if (sub.cfg.mode == SubscriptionMode::kSubgroup &&
        sub.cfg.group_order == GroupOrder::kNewestFirst) {
      uint64_t newest_group = sub.queues.rbegin()->first.first;
      it = sub.queues.lower_bound({newest_group, 0});
    }
    Queued next = std::move(it->second.front());
    it->second.pop_front();
    if (it->second.empty()) sub.queues.erase(it);

    sub.inflight = true;
    sub.inflight_events = next.object.header.event_count;
    auto times = sub.egress.begin_send(next.object.wire_size(), now);
    Sub* subp = &sub;
    sched_.schedule(times.completion_us, [this, subp] {
      subp->inflight = false;
      subp->inflight_events = 0;
      try_send(*subp);
    });
    sched_.schedule(times.arrival_us,
                    [subp, delivery = Delivery{std::move(next.object), next.receipt_us,
                                               times.arrival_us}] {
                      if (subp->deliver) subp->deliver(delivery);
                    });
  }

  void arm_sweep() {
    if (sweep_armed_) return;
    sweep_armed_ = true;
    sched_.schedule(sched_.now() + kSweepPeriodUs, [this] { sweep(); });
  }

  // Periodic expiry pass so drops are recorded near their deadline even when
  // the link is busy or idle-empty for long stretches. Re-arms only while
  // work remains, letting drained simulations terminate.
  void sweep() {
    sweep_armed_ = false;
    const uint64_t now = sched_.now();
    bool pending = false;
    for (auto& [id, sub] : subs_) {
      expire(sub, now);
      try_send(sub);
      pending = pending || !sub.queues.empty();
    }
    if (pending) arm_sweep();
  }

  static constexpr uint64_t kSweepPeriodUs = 1000;

  Scheduler& sched_;
  std::map<uint64_t, Sub> subs_;
  std::vector<DropRecord> drops_;
  bool sweep_armed_ = false;
};

}  // namespace evstream
