#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempus/replay.hpp"

namespace tempus {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum WindowFlag : std::uint8_t {
  kWindowMerged = 1u << 0,
  kWindowIdle = 1u << 1,
  kWindowClamped = 1u << 2,
};

std::string flags_to_string(std::uint8_t flags);

/// Half-open interval [start, end) of the analysed timeline.
struct Window {
  Nanos start = 0;
  Nanos end = 0;
  std::size_t merged_from = 1;
  std::vector<std::uint32_t> event_counts;
  std::uint8_t flags = 0;

  Nanos length() const { return end - start; }
  bool has(WindowFlag f) const { return (flags & f) != 0; }
};

struct BoundaryClocks {
  Nanos time = 0;
  std::vector<ClockTriple> ranks;
  bool clamped = false;
};

inline constexpr std::uint32_t kDefaultMinEvents = 8;
inline constexpr std::uint32_t kMinEventsFloor = 3;

/// Wait-then-transfer interpolation: inside a segment each clock advances at
/// slope one from its start value and is capped at the segment end value.
/// `t` outside [0, last point] is clamped and reported through `clamped`.
ClockTriple interpolate_clock(const RankTimeline& timeline, Nanos t, bool* clamped = nullptr);

struct WindowPlan {
  std::vector<Window> windows;
  Nanos base_length = 0;      // after doubling
  Nanos requested_length = 0;
  Nanos horizon = 0;          // min(cutoff, total duration)
  std::uint32_t doublings = 0;
};

/// Equidistant tiling of [0, horizon) at `base_length`, doubled while most
/// base windows hold no MPI event on any rank, then merged left to right until
/// every rank has `min_events` event points per window.
WindowPlan plan_windows(const AnnotatedTimeline& timeline, Nanos base_length, std::uint32_t min_events,
                        std::optional<Nanos> cutoff = std::nullopt);

/// Left-to-right merge pass over an existing tiling.
std::vector<Window> merge_windows(std::vector<Window> windows, std::uint32_t min_events);

/// Window edges: every window start plus the last window end.
std::vector<Nanos> window_boundaries(std::span<const Window> windows);

/// Interpolated clocks of every rank at each ascending boundary; OpenMP
/// parallel over ranks.
std::vector<BoundaryClocks> boundary_clocks(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries);

namespace serial {
/// Single-threaded reference for boundary_clocks.
std::vector<BoundaryClocks> boundary_clocks(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries);
}  // namespace serial

}  // namespace tempus
