#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evstream/errors.hpp"
#include "evstream/rng.hpp"
#include "evstream/types.hpp"
#include "evstream/wire.hpp"

// Event stream sources: synthetic generation (Poisson arrivals with optional
// burst intervals), CSV / packed-binary ingestion, and publisher-side random
// dropping. All pure or single-owner; reproducible per seed.

namespace evstream {

enum class SourceKind { kConstantPoisson, kBursty, kFile };
enum class FileFormat { kCsv, kPackedBinary };

struct BurstInterval {
  uint64_t start_us = 0;
  uint64_t end_us = 0;
  double rate_multiplier = 1.0;

  friend bool operator==(const BurstInterval&, const BurstInterval&) = default;
};

struct SourceModel {
  SourceKind kind = SourceKind::kConstantPoisson;
  double rate_eps = 0.0;  // mean events per second outside bursts
  std::vector<BurstInterval> bursts;
  uint64_t seed = 0;
  SensorGeometry geometry{1280, 720};
  // kFile only:
  std::string path;
  FileFormat format = FileFormat::kCsv;
};

inline void validate_model(const SourceModel& m) {
  validate_geometry(m.geometry);
  if (m.kind == SourceKind::kFile) {
    if (m.path.empty()) throw ValidationError("file source requires a path");
    return;
  }
  if (m.rate_eps < 0) throw ValidationError("source rate must be nonnegative");
  uint64_t prev_end = 0;
  bool first = true;
  for (const BurstInterval& b : m.bursts) {
    if (b.start_us >= b.end_us)
      throw ValidationError("burst interval must have start < end");
    if (!first && b.start_us < prev_end)
      throw ValidationError("burst intervals must be sorted and non-overlapping");
    if (b.rate_multiplier < 0)
      throw ValidationError("burst rate multiplier must be nonnegative");
    prev_end = b.end_us;
    first = false;
  }
}

// Incremental inhomogeneous-Poisson walker. Produces events in timestamp
// order; equal (model, bound) sequences are identical across runs and
// platforms. Used directly by the scenario runner so long runs never
// materialize the whole stream.
class StreamGenerator {
 public:
  explicit StreamGenerator(const SourceModel& model) : model_(model), rng_(model.seed) {
    validate_model(model);
    if (model.kind == SourceKind::kFile)
      throw std::logic_error("StreamGenerator cannot drive a file source");
    // Flatten bursts into a piecewise-constant multiplier over [0, inf).
    segments_.push_back({0, 1.0});
    for (const BurstInterval& b : model.bursts) {
      if (b.start_us > segments_.back().start_us)
        segments_.push_back({b.start_us, b.rate_multiplier});
      else
        segments_.back().multiplier = b.rate_multiplier;  // burst starting at 0
      segments_.push_back({b.end_us, 1.0});
    }
    advance();
  }

  // Events with t < bound_us, in order. Monotone: later calls need later bounds.
  std::vector<Event> take_until(uint64_t bound_us) {
    std::vector<Event> out;
    while (pending_.has_value() && pending_->t < bound_us) {
      out.push_back(*pending_);
      advance();
    }
    return out;
  }

  const std::optional<Event>& peek() const { return pending_; }

 private:
  struct Segment {
    uint64_t start_us;
    double multiplier;
  };

  void advance() {
    pending_.reset();
    if (model_.rate_eps <= 0) return;
    double budget = rng_.next_exp();  // unit-rate exponential to spend
    for (;;) {
      double per_us = model_.rate_eps * segments_[seg_].multiplier / 1e6;
      double seg_end = seg_ + 1 < segments_.size()
                           ? static_cast<double>(segments_[seg_ + 1].start_us)
                           : std::numeric_limits<double>::infinity();
      if (per_us > 0) {
        double needed = budget / per_us;
        if (clock_us_ + needed < seg_end) {
          clock_us_ += needed;
          break;
        }
        budget -= (seg_end - clock_us_) * per_us;
      }
      if (seg_ + 1 >= segments_.size()) return;  // zero rate to infinity
      clock_us_ = seg_end;
      ++seg_;
    }
    if (clock_us_ >= 4294967296.0) return;  // past the 32-bit timestamp horizon
    Event e;
    e.t = static_cast<uint32_t>(clock_us_);
    e.x = static_cast<uint16_t>(rng_.next_below(model_.geometry.width));
    e.y = static_cast<uint16_t>(rng_.next_below(model_.geometry.height));
    e.p = static_cast<uint8_t>(rng_.next_below(2));
    pending_ = e;
  }

  SourceModel model_;
  Rng rng_;
  std::vector<Segment> segments_;
  size_t seg_ = 0;
  double clock_us_ = 0.0;
  std::optional<Event> pending_;
};

// Whole-stream convenience over StreamGenerator.
inline std::vector<Event> generate(const SourceModel& model, uint64_t duration_us) {
  StreamGenerator gen(model);
  return gen.take_until(duration_us);
}

// Each event kept independently with probability keep_probability; order and
// relative content preserved; deterministic per seed.
inline std::vector<Event> random_drop(std::span<const Event> events,
                                      double keep_probability, uint64_t seed) {
  if (!(keep_probability >= 0.0 && keep_probability <= 1.0))
    throw std::invalid_argument("keep probability must be in [0, 1]");
  Rng rng(seed);
  std::vector<Event> out;
  out.reserve(static_cast<size_t>(static_cast<double>(events.size()) * keep_probability));
  for (const Event& e : events)
    if (rng.next_unit() < keep_probability) out.push_back(e);
  return out;
}

namespace detail {

inline uint64_t parse_field(const std::string& line, size_t& pos, const std::string& where) {
  size_t end = line.find(',', pos);
  size_t stop = end == std::string::npos ? line.size() : end;
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + stop, value);
  if (ec != std::errc{} || ptr != line.data() + stop)
    throw ParseError(where + ": expected unsigned integer, got '" +
                     line.substr(pos, stop - pos) + "'");
  pos = end == std::string::npos ? line.size() : end + 1;
  return value;
}

}  // namespace detail

// CSV rows are "t,x,y,p" in decimal; one optional header line. Packed binary
// is a flat sequence of 8-byte PackedEvent records.
inline std::vector<Event> load_events(const std::string& path, FileFormat format,
                                      const SensorGeometry& geometry) {
  validate_geometry(geometry);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");

  std::vector<Event> out;
  uint32_t prev_t = 0;
  auto check = [&](const Event& e, const std::string& where) {
    if (!event_in_geometry(e, geometry))
      throw ValidationError(where + ": event (x=" + std::to_string(e.x) +
                            ", y=" + std::to_string(e.y) + ") outside geometry " +
                            std::to_string(geometry.width) + "x" +
                            std::to_string(geometry.height));
    if (!out.empty() && e.t < prev_t)
      throw ValidationError(where + ": timestamps must be nondecreasing (" +
                            std::to_string(e.t) + " after " + std::to_string(prev_t) + ")");
    prev_t = e.t;
  };

  if (format == FileFormat::kCsv) {
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line_no == 1 && (line[0] < '0' || line[0] > '9')) continue;  // header
      std::string where = path + ":" + std::to_string(line_no);
      size_t pos = 0;
      uint64_t t = detail::parse_field(line, pos, where);
      uint64_t x = detail::parse_field(line, pos, where);
      uint64_t y = detail::parse_field(line, pos, where);
      uint64_t p = detail::parse_field(line, pos, where);
      if (pos < line.size()) throw ParseError(where + ": trailing fields");
      if (t > std::numeric_limits<uint32_t>::max())
        throw ValidationError(where + ": timestamp exceeds 32 bits");
      if (x >= kMaxCoord || y >= kMaxCoord)
        throw ValidationError(where + ": coordinate exceeds 15 bits");
      if (p > 1) throw ValidationError(where + ": polarity must be 0 or 1");
      Event e{static_cast<uint32_t>(t), static_cast<uint16_t>(x),
              static_cast<uint16_t>(y), static_cast<uint8_t>(p)};
      check(e, where);
      out.push_back(e);
    }
    return out;
  }

  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() % kPackedEventSize != 0)
    throw ParseError(path + ": size " + std::to_string(buf.size()) +
                     " is not a multiple of 8");
  out.reserve(buf.size() / kPackedEventSize);
  for (size_t off = 0; off < buf.size(); off += kPackedEventSize) {
    std::string where = path + " @" + std::to_string(off);
    Event e;
    try {
      e = decode_event(std::span<const uint8_t>(buf).subspan(off, kPackedEventSize));
    } catch (const FormatError& err) {
      throw ParseError(where + ": " + err.what());
    }
    check(e, where);
    out.push_back(e);
  }
  return out;
}

inline void save_events(const std::string& path, FileFormat format,
                        std::span<const Event> events) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(path + ": cannot open for writing");
  if (format == FileFormat::kCsv) {
    out << "t,x,y,p\n";
    for (const Event& e : events)
      out << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<unsigned>(e.p) << '\n';
  } else {
    for (const Event& e : events) {
      auto packed = encode_event(e);
      out.write(reinterpret_cast<const char*>(packed.data()),
                static_cast<std::streamsize>(packed.size()));
    }
  }
  if (!out) throw ParseError(path + ": write failed");
}

}  // namespace evstream
