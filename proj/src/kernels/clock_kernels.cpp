// Data-parallel kernels over the annotated timeline. Each OpenMP kernel has a
// single-threaded twin in namespace serial that the tests compare against.

#include <algorithm>

#include "tempus/discretizer.hpp"
#include "tempus/metrics.hpp"

namespace tempus {

namespace {

/// Forward sweep of one rank over ascending boundaries.
class RankCursor {
 public:
  explicit RankCursor(const RankTimeline& tl) : pts_(tl.points) {}

  ClockTriple at(Nanos t) {
    if (pts_.empty()) return {};
    if (t <= pts_.front().time) return pts_.front().clocks;
    if (t >= pts_.back().time) return pts_.back().clocks;
    while (pts_[idx_ + 1].time <= t) ++idx_;
    const EventPoint& p = pts_[idx_];
    if (p.time == t) return p.clocks;
    const EventPoint& q = pts_[idx_ + 1];
    const Nanos dt = t - p.time;
    return {p.clocks.elapsed + dt, std::min(p.clocks.oom + dt, q.clocks.oom),
            std::min(p.clocks.ideal + dt, q.clocks.ideal)};
  }

 private:
  const std::vector<EventPoint>& pts_;
  std::size_t idx_ = 0;
};

std::vector<BoundaryClocks> prepare(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries) {
  Nanos covered = 0;
  bool first = true;
  for (const auto& r : timeline.ranks) {
    if (r.points.empty()) continue;
    covered = first ? r.points.back().time : std::min(covered, r.points.back().time);
    first = false;
  }
  std::vector<BoundaryClocks> out(boundaries.size());
  for (std::size_t b = 0; b < boundaries.size(); ++b) {
    out[b].time = boundaries[b];
    out[b].clamped = boundaries[b] < 0 || boundaries[b] > covered;
    out[b].ranks.resize(timeline.ranks.size());
  }
  return out;
}

void sweep_rank(const AnnotatedTimeline& timeline, std::size_t r, std::span<const Nanos> boundaries,
                std::vector<BoundaryClocks>& out) {
  RankCursor cursor(timeline.ranks[r]);
  for (std::size_t b = 0; b < boundaries.size(); ++b) out[b].ranks[r] = cursor.at(boundaries[b]);
}

std::vector<WindowMetrics> metrics_from_clocks(const std::vector<BoundaryClocks>& clocks,
                                              std::span<const Window> windows, std::size_t P, bool parallel) {
  std::vector<WindowMetrics> out(windows.size());
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t w = 0; w < n; ++w)
      out[static_cast<std::size_t>(w)] = window_metrics(clocks[static_cast<std::size_t>(w)],
                                                        clocks[static_cast<std::size_t>(w) + 1],
                                                        windows[static_cast<std::size_t>(w)], P);
  } else {
    for (std::ptrdiff_t w = 0; w < n; ++w)
      out[static_cast<std::size_t>(w)] = window_metrics(clocks[static_cast<std::size_t>(w)],
                                                        clocks[static_cast<std::size_t>(w) + 1],
                                                        windows[static_cast<std::size_t>(w)], P);
  }
  return out;
}

std::vector<Nanos> cp_from_clocks(const std::vector<BoundaryClocks>& clocks) {
  std::vector<Nanos> cp(clocks.size(), 0);
  for (std::size_t b = 0; b < clocks.size(); ++b)
    for (const auto& c : clocks[b].ranks) cp[b] = std::max(cp[b], c.ideal);
  return cp;
}

}  // namespace

std::vector<BoundaryClocks> boundary_clocks(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries) {
  auto out = prepare(timeline, boundaries);
  const auto P = static_cast<std::ptrdiff_t>(timeline.ranks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t r = 0; r < P; ++r) sweep_rank(timeline, static_cast<std::size_t>(r), boundaries, out);
  return out;
}

std::vector<WindowMetrics> window_series(const AnnotatedTimeline& timeline, std::span<const Window> windows) {
  const auto bounds = window_boundaries(windows);
  const auto clocks = boundary_clocks(timeline, bounds);
  return metrics_from_clocks(clocks, windows, timeline.rank_count(), true);
}

std::vector<Nanos> critical_path_series(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries) {
  return cp_from_clocks(boundary_clocks(timeline, boundaries));
}

namespace serial {

std::vector<BoundaryClocks> boundary_clocks(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries) {
  auto out = prepare(timeline, boundaries);
  for (std::size_t r = 0; r < timeline.ranks.size(); ++r) sweep_rank(timeline, r, boundaries, out);
  return out;
}

std::vector<WindowMetrics> window_series(const AnnotatedTimeline& timeline, std::span<const Window> windows) {
  const auto bounds = window_boundaries(windows);
  const auto clocks = serial::boundary_clocks(timeline, bounds);
  return metrics_from_clocks(clocks, windows, timeline.rank_count(), false);
}

std::vector<Nanos> critical_path_series(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries) {
  return cp_from_clocks(serial::boundary_clocks(timeline, boundaries));
}

}  // namespace serial

}  // namespace tempus
