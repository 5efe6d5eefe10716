#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "evstream/errors.hpp"

namespace evstream {

// Exclusive upper bound on pixel coordinates; x and y must fit 15 bits so an
// event packs into 8 bytes (polarity rides in the y-field high bit).
inline constexpr uint32_t kMaxCoord = 1u << 15;

// Sentinel for "no delivery timeout".
inline constexpr uint64_t kInfiniteTimeout = std::numeric_limits<uint64_t>::max();

// One sensor sample: pixel (x, y) crossed its log-intensity threshold at
// microsecond timestamp t, in direction p (1 = brighter, 0 = darker).
struct Event {
  uint32_t t = 0;  // microseconds since stream start
  uint16_t x = 0;
  uint16_t y = 0;
  uint8_t p = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

struct SensorGeometry {
  uint16_t width = 0;
  uint16_t height = 0;

  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

inline void validate_geometry(const SensorGeometry& g) {
  if (g.width == 0 || g.height == 0)
    throw ValidationError("sensor geometry must be at least 1x1");
  if (g.width > kMaxCoord || g.height > kMaxCoord)
    throw ValidationError("sensor geometry exceeds " + std::to_string(kMaxCoord) +
                          " pixels per axis");
}

inline bool event_in_geometry(const Event& e, const SensorGeometry& g) {
  return e.x < g.width && e.y < g.height;
}

}  // namespace evstream
