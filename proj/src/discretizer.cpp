#include "tempus/discretizer.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace tempus {

std::string flags_to_string(std::uint8_t flags) {
  std::string s;
  auto add = [&s](const char* name) {
    if (!s.empty()) s += '|';
    s += name;
  };
  if (flags & kWindowMerged) add("merged");
  if (flags & kWindowIdle) add("idle");
  if (flags & kWindowClamped) add("clamped");
  return s;
}

ClockTriple interpolate_clock(const RankTimeline& timeline, Nanos t, bool* clamped) {
  const auto& pts = timeline.points;
  if (clamped) *clamped = false;
  if (pts.empty()) return {};
  if (t <= pts.front().time || t >= pts.back().time) {
    const bool before = t < pts.front().time;
    const bool after = t > pts.back().time;
    if (clamped) *clamped = before || after;
    return t <= pts.front().time ? pts.front().clocks : pts.back().clocks;
  }
  auto hi = std::upper_bound(pts.begin(), pts.end(), t, [](Nanos v, const EventPoint& p) { return v < p.time; });
  const EventPoint& q = *hi;
  const EventPoint& p = *(hi - 1);
  if (p.time == t) return p.clocks;
  const Nanos dt = t - p.time;
  return {p.clocks.elapsed + dt, std::min(p.clocks.oom + dt, q.clocks.oom), std::min(p.clocks.ideal + dt, q.clocks.ideal)};
}

namespace {

bool deficient(const Window& w, std::uint32_t min_events) {
  return std::any_of(w.event_counts.begin(), w.event_counts.end(), [&](std::uint32_t c) { return c < min_events; });
}

std::size_t window_count(Nanos horizon, Nanos length) {
  return static_cast<std::size_t>((horizon + length - 1) / length);
}

}  // namespace

std::vector<Window> merge_windows(std::vector<Window> windows, std::uint32_t min_events) {
  std::vector<Window> out;
  out.reserve(windows.size());
  std::size_t i = 0;
  while (i < windows.size()) {
    Window cur = std::move(windows[i++]);
    while (deficient(cur, min_events) && i < windows.size()) {
      const Window& next = windows[i++];
      cur.end = next.end;
      cur.merged_from += next.merged_from;
      cur.flags |= next.flags;
      for (std::size_t r = 0; r < cur.event_counts.size(); ++r) cur.event_counts[r] += next.event_counts[r];
    }
    if (cur.merged_from > 1) cur.flags |= kWindowMerged;
    if (deficient(cur, min_events)) cur.flags |= kWindowIdle;
    out.push_back(std::move(cur));
  }
  return out;
}

WindowPlan plan_windows(const AnnotatedTimeline& timeline, Nanos base_length, std::uint32_t min_events,
                        std::optional<Nanos> cutoff) {
  if (base_length <= 0) throw ConfigError(fmt::format("window length must be positive, got {} ns", base_length));
  if (min_events < 1) throw ConfigError("min_events must be at least 1");
  if (cutoff && *cutoff <= 0) throw ConfigError("cutoff must be positive");

  WindowPlan plan;
  plan.requested_length = base_length;
  plan.horizon = cutoff ? std::min(*cutoff, timeline.total_duration) : timeline.total_duration;
  const Nanos H = plan.horizon;
  if (H <= 0) return plan;

  // Distinct timestamps carrying MPI events on any rank, for the sparsity test.
  std::vector<Nanos> event_times;
  for (const auto& rank : timeline.ranks)
    for (const auto& p : rank.points)
      if (p.mpi_events > 0 && p.time <= H) event_times.push_back(p.time);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());

  Nanos L = std::min(base_length, H);
  while (L < H) {
    const std::size_t n = window_count(H, L);
    std::size_t occupied = 0;
    std::size_t last = n;
    for (Nanos t : event_times) {
      const std::size_t w = std::min(static_cast<std::size_t>(t / L), n - 1);
      if (w != last) {
        ++occupied;
        last = w;
      }
    }
    if (2 * (n - occupied) <= n) break;
    L = std::min(2 * L, H);
    ++plan.doublings;
  }
  plan.base_length = L;

  const std::size_t n = window_count(H, L);
  const std::size_t P = timeline.ranks.size();
  std::vector<Window> base(n);
  for (std::size_t w = 0; w < n; ++w) {
    base[w].start = static_cast<Nanos>(w) * L;
    base[w].end = std::min(base[w].start + L, H);
    base[w].event_counts.assign(P, 0);
  }
  for (std::size_t r = 0; r < P; ++r)
    for (const auto& p : timeline.ranks[r].points) {
      if (p.mpi_events == 0) continue;
      if (p.time > H) break;
      const std::size_t w = std::min(static_cast<std::size_t>(p.time / L), n - 1);
      base[w].event_counts[r] += p.mpi_events;
    }
  plan.windows = merge_windows(std::move(base), min_events);
  return plan;
}

std::vector<Nanos> window_boundaries(std::span<const Window> windows) {
  std::vector<Nanos> b;
  if (windows.empty()) return b;
  b.reserve(windows.size() + 1);
  for (const auto& w : windows) b.push_back(w.start);
  b.push_back(windows.back().end);
  return b;
}

}  // namespace tempus
