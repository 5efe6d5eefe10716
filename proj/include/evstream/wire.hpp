#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evstream/errors.hpp"
#include "evstream/types.hpp"

// Bit-exact little-endian layouts for events, transport objects, and control
// messages. These are the interchange formats for event files and the
// simulated wire; see README "Wire formats" for byte-level documentation.

namespace evstream {

inline constexpr size_t kPackedEventSize = 8;
inline constexpr size_t kObjectHeaderSize = 23;
inline constexpr size_t kControlMessageSize = 17;

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

// --- unsigned varint, LEB128: 7 bits per byte, high bit = continuation ---

inline void put_varint(std::vector<uint8_t>& out, uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<uint8_t>(v) | 0x80);
    v >>= 7;
  }
  out.push_back(static_cast<uint8_t>(v));
}

// Reads a varint at `pos`, advancing it. Throws FormatError on truncation or
// a value that does not fit 64 bits.
inline uint64_t get_varint(std::span<const uint8_t> bytes, size_t& pos) {
  uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (pos >= bytes.size()) throw FormatError("truncated varint");
    uint8_t b = bytes[pos++];
    v |= static_cast<uint64_t>(b & 0x7f) << shift;
    if ((b & 0x80) == 0) {
      if (shift == 63 && (b & 0x7e) != 0)
        throw FormatError("varint overflows 64 bits");
      return v;
    }
  }
  throw FormatError("varint overflows 64 bits");
}

// --- packed event: t u32 | x u16 (bit 15 zero) | y u15 + p in bit 15 ---

inline std::array<uint8_t, kPackedEventSize> encode_event(const Event& e) {
  if (e.x >= kMaxCoord || e.y >= kMaxCoord || e.p > 1)
    throw ValidationError("event outside packed range: x=" + std::to_string(e.x) +
                          " y=" + std::to_string(e.y) + " p=" + std::to_string(e.p));
  std::array<uint8_t, kPackedEventSize> out{};
  out[0] = static_cast<uint8_t>(e.t);
  out[1] = static_cast<uint8_t>(e.t >> 8);
  out[2] = static_cast<uint8_t>(e.t >> 16);
  out[3] = static_cast<uint8_t>(e.t >> 24);
  out[4] = static_cast<uint8_t>(e.x);
  out[5] = static_cast<uint8_t>(e.x >> 8);
  uint16_t yp = static_cast<uint16_t>(e.y | (static_cast<uint16_t>(e.p) << 15));
  out[6] = static_cast<uint8_t>(yp);
  out[7] = static_cast<uint8_t>(yp >> 8);
  return out;
}

inline Event decode_event(std::span<const uint8_t> bytes) {
  if (bytes.size() != kPackedEventSize)
    throw FormatError("packed event must be exactly 8 bytes, got " +
                      std::to_string(bytes.size()));
  uint16_t xf = detail::get_u16(bytes.data() + 4);
  if (xf & 0x8000) throw FormatError("packed event x field has bit 15 set");
  uint16_t yp = detail::get_u16(bytes.data() + 6);
  Event e;
  e.t = detail::get_u32(bytes.data());
  e.x = xf;
  e.y = static_cast<uint16_t>(yp & 0x7fff);
  e.p = static_cast<uint8_t>(yp >> 15);
  return e;
}

// --- object header: group u64 | subgroup u16 | object u64 | count u32 | flags u8 ---

inline constexpr uint8_t kFlagChained = 0x01;

struct ObjectHeader {
  uint64_t group_id = 0;
  uint16_t subgroup_id = 0;
  uint64_t object_id = 0;  // ascending within a group
  uint32_t event_count = 0;
  uint8_t flags = 0;  // bit 0: chained payload; other bits reserved, zero

  bool chained() const { return (flags & kFlagChained) != 0; }

  friend bool operator==(const ObjectHeader&, const ObjectHeader&) = default;
};

inline void append_header(std::vector<uint8_t>& out, const ObjectHeader& h) {
  detail::put_u64(out, h.group_id);
  detail::put_u16(out, h.subgroup_id);
  detail::put_u64(out, h.object_id);
  detail::put_u32(out, h.event_count);
  out.push_back(h.flags);
}

inline std::vector<uint8_t> encode_header(const ObjectHeader& h) {
  std::vector<uint8_t> out;
  out.reserve(kObjectHeaderSize);
  append_header(out, h);
  return out;
}

inline ObjectHeader decode_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < kObjectHeaderSize)
    throw FormatError("object header truncated: " + std::to_string(bytes.size()) +
                      " of 23 bytes");
  ObjectHeader h;
  h.group_id = detail::get_u64(bytes.data());
  h.subgroup_id = detail::get_u16(bytes.data() + 8);
  h.object_id = detail::get_u64(bytes.data() + 10);
  h.event_count = detail::get_u32(bytes.data() + 18);
  h.flags = bytes[22];
  if (h.flags & ~kFlagChained)
    throw FormatError("object header has reserved flag bits set");
  return h;
}

// --- control messages: kind u8 | subscriber u64 | payload u64 ---

enum class ControlKind : uint8_t {
  kSubscribe = 0,
  kUnsubscribe = 1,
  kUpdateTimeout = 2,
  kSubscribeTracks = 3,
};

struct ControlMessage {
  ControlKind kind = ControlKind::kSubscribe;
  uint64_t subscriber_id = 0;
  // SUBSCRIBE / UPDATE_TIMEOUT: microseconds, or kInfiniteTimeout.
  uint64_t delivery_timeout_us = kInfiniteTimeout;
  // SUBSCRIBE_TRACKS / UNSUBSCRIBE (legacy): bit i = track i.
  uint64_t track_set = 0;

  friend bool operator==(const ControlMessage&, const ControlMessage&) = default;
};

inline bool control_carries_timeout(ControlKind k) {
  return k == ControlKind::kSubscribe || k == ControlKind::kUpdateTimeout;
}

inline std::vector<uint8_t> encode_control(const ControlMessage& m) {
  if (control_carries_timeout(m.kind) && m.delivery_timeout_us == 0)
    throw ValidationError("delivery timeout must be positive or infinite");
  std::vector<uint8_t> out;
  out.reserve(kControlMessageSize);
  out.push_back(static_cast<uint8_t>(m.kind));
  detail::put_u64(out, m.subscriber_id);
  detail::put_u64(out, control_carries_timeout(m.kind) ? m.delivery_timeout_us
                                                       : m.track_set);
  return out;
}

inline ControlMessage decode_control(std::span<const uint8_t> bytes) {
  if (bytes.size() != kControlMessageSize)
    throw FormatError("control message must be exactly 17 bytes, got " +
                      std::to_string(bytes.size()));
  if (bytes[0] > static_cast<uint8_t>(ControlKind::kSubscribeTracks))
    throw FormatError("unknown control kind byte " + std::to_string(bytes[0]));
  ControlMessage m;
  m.kind = static_cast<ControlKind>(bytes[0]);
  m.subscriber_id = detail::get_u64(bytes.data() + 1);
  uint64_t payload = detail::get_u64(bytes.data() + 9);
  if (control_carries_timeout(m.kind)) {
    if (payload == 0) throw FormatError("delivery timeout must be positive or infinite");
    m.delivery_timeout_us = payload;
  } else {
    m.track_set = payload;
  }
  return m;
}

// --- chained payload context ---

// Decoder/encoder state for the delta chain: per (group, subgroup), the id of
// the most recent successfully coded object and the timestamp of its last
// event. Keys include the group id, so a group boundary starts every subgroup
// chain fresh. Single-owner: one context per coding direction per
// subscription, never shared across threads.
class ChainContext {
 public:
  struct Entry {
    uint64_t last_object_id = 0;
    // Empty until the chain has carried at least one event.
    std::optional<uint32_t> last_event_t;
  };

  const Entry* find(uint64_t group_id, uint16_t subgroup_id) const {
    auto it = entries_.find({group_id, subgroup_id});
    return it == entries_.end() ? nullptr : &it->second;
  }

  void store(uint64_t group_id, uint16_t subgroup_id, const Entry& e) {
    entries_[{group_id, subgroup_id}] = e;
  }

  // Drops state for groups older than `group_id`; optional hygiene for long
  // streams, never required for correctness.
  void forget_before(uint64_t group_id) {
    std::erase_if(entries_, [&](const auto& kv) { return kv.first.first < group_id; });
  }

  void clear() { entries_.clear(); }

 private:
  std::map<std::pair<uint64_t, uint16_t>, Entry> entries_;
};

enum class PayloadMode { kPlain, kChained };

// --- object payload codec ---
//
// Plain payload: event_count PackedEvent records.
// Chained payload: varint(predecessor object_id + 1; 0 = first object of this
// (group, subgroup)), then per-event records. A record is the 4
// coordinate/polarity bytes preceded by either an absolute u32 timestamp (the
// first event ever carried by this subgroup within the group) or a varint
// delta from the previous event in the same subgroup chain.

inline std::vector<uint8_t> encode_object(ObjectHeader header,
                                          std::span<const Event> events,
                                          PayloadMode mode, ChainContext& ctx) {
  header.event_count = static_cast<uint32_t>(events.size());
  header.flags = static_cast<uint8_t>(mode == PayloadMode::kChained ? kFlagChained : 0);
  for (size_t i = 1; i < events.size(); ++i)
    if (events[i].t < events[i - 1].t)
      throw ValidationError("object events must be sorted by timestamp");

  std::vector<uint8_t> out;
  out.reserve(kObjectHeaderSize + events.size() * kPackedEventSize + 2);
  append_header(out, header);

  if (mode == PayloadMode::kPlain) {
    for (const Event& e : events) {
      auto packed = encode_event(e);
      out.insert(out.end(), packed.begin(), packed.end());
    }
    return out;
  }

  const ChainContext::Entry* prev = ctx.find(header.group_id, header.subgroup_id);
  put_varint(out, prev == nullptr ? 0 : prev->last_object_id + 1);

  std::optional<uint32_t> last_t = prev == nullptr ? std::nullopt : prev->last_event_t;
  for (const Event& e : events) {
    auto packed = encode_event(e);  // validates ranges
    if (!last_t.has_value()) {
      out.insert(out.end(), packed.begin(), packed.begin() + 4);  // absolute t
    } else {
      put_varint(out, e.t - *last_t);
    }
    out.insert(out.end(), packed.begin() + 4, packed.end());
    last_t = e.t;
  }
  ctx.store(header.group_id, header.subgroup_id, {header.object_id, last_t});
  return out;
}

struct DecodedObject {
  ObjectHeader header;
  std::vector<Event> events;
};

inline DecodedObject decode_object(std::span<const uint8_t> bytes, ChainContext& ctx) {
  ObjectHeader header = decode_header(bytes);
  std::span<const uint8_t> payload = bytes.subspan(kObjectHeaderSize);

  DecodedObject out;
  out.header = header;
  out.events.reserve(header.event_count);

  if (!header.chained()) {
    if (payload.size() != static_cast<size_t>(header.event_count) * kPackedEventSize)
      throw FormatError("plain payload size mismatch: " + std::to_string(payload.size()) +
                        " bytes for " + std::to_string(header.event_count) + " events");
    for (uint32_t i = 0; i < header.event_count; ++i)
      out.events.push_back(decode_event(payload.subspan(i * kPackedEventSize, kPackedEventSize)));
    return out;
  }

  size_t pos = 0;
  uint64_t pred_plus_1 = get_varint(payload, pos);
  const ChainContext::Entry* prev = ctx.find(header.group_id, header.subgroup_id);
  if (pred_plus_1 == 0) {
    if (prev != nullptr)
      throw DependencyError("object claims to start subgroup " +
                            std::to_string(header.subgroup_id) + " of group " +
                            std::to_string(header.group_id) +
                            " but the chain already has object " +
                            std::to_string(prev->last_object_id));
  } else {
    if (prev == nullptr || prev->last_object_id != pred_plus_1 - 1)
      throw DependencyError(
          "object " + std::to_string(header.object_id) + " of group " +
          std::to_string(header.group_id) + " subgroup " +
          std::to_string(header.subgroup_id) + " needs predecessor " +
          std::to_string(pred_plus_1 - 1) +
          (prev == nullptr ? std::string(" but the chain is empty")
                           : " but the chain ends at " + std::to_string(prev->last_object_id)));
  }

  std::optional<uint32_t> last_t = prev == nullptr ? std::nullopt : prev->last_event_t;
  for (uint32_t i = 0; i < header.event_count; ++i) {
    uint32_t t;
    if (!last_t.has_value()) {
      if (pos + 4 > payload.size()) throw FormatError("truncated absolute timestamp");
      t = detail::get_u32(payload.data() + pos);
      pos += 4;
    } else {
      uint64_t delta = get_varint(payload, pos);
      uint64_t wide = static_cast<uint64_t>(*last_t) + delta;
      if (wide > std::numeric_limits<uint32_t>::max())
        throw FormatError("timestamp delta overflows 32 bits");
      t = static_cast<uint32_t>(wide);
    }
    if (pos + 4 > payload.size()) throw FormatError("truncated event record");
    uint16_t xf = detail::get_u16(payload.data() + pos);
    if (xf & 0x8000) throw FormatError("event record x field has bit 15 set");
    uint16_t yp = detail::get_u16(payload.data() + pos + 2);
    pos += 4;
    Event e;
    e.t = t;
    e.x = xf;
    e.y = static_cast<uint16_t>(yp & 0x7fff);
    e.p = static_cast<uint8_t>(yp >> 15);
    out.events.push_back(e);
    last_t = t;
  }
  if (pos != payload.size())
    throw FormatError("chained payload has " + std::to_string(payload.size() - pos) +
                      " trailing bytes");
  ctx.store(header.group_id, header.subgroup_id, {header.object_id, last_t});
  return out;
}

}  // namespace evstream
