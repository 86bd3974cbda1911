#include "tempus/metrics.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace tempus {

double WindowMetrics::raw_efficiency() const {
  if (rank_count == 0 || length() <= 0) return 0.0;
  return static_cast<double>(sum_oom) / (static_cast<double>(rank_count) * static_cast<double>(length()));
}

WindowMetrics window_metrics(const BoundaryClocks& clocks_a, const BoundaryClocks& clocks_b, const Window& window,
                             std::size_t rank_count) {
  WindowMetrics m;
  m.window = window;
  m.rank_count = rank_count;
  m.delta_oom.resize(rank_count);
  Nanos cp_a = 0, cp_b = 0;
  for (std::size_t r = 0; r < rank_count; ++r) {
    const Nanos d = clocks_b.ranks[r].oom - clocks_a.ranks[r].oom;
    m.delta_oom[r] = d;
    m.sum_oom += d;
    m.max_oom = std::max(m.max_oom, d);
    cp_a = std::max(cp_a, clocks_a.ranks[r].ideal);
    cp_b = std::max(cp_b, clocks_b.ranks[r].ideal);
  }
  m.delta_cp = cp_b - cp_a;
  if (clocks_a.clamped || clocks_b.clamped) m.window.flags |= kWindowClamped;

  const Nanos E = window.length();
  m.defined = m.max_oom > 0 && m.delta_cp > 0 && E > 0;
  if (!m.defined) {
    m.window.flags |= kWindowIdle;
    return m;
  }
  const double P = static_cast<double>(rank_count);
  m.load_balance = static_cast<double>(m.sum_oom) / (P * static_cast<double>(m.max_oom));
  m.serialisation = static_cast<double>(m.max_oom) / static_cast<double>(m.delta_cp);
  m.transfer = static_cast<double>(m.delta_cp) / static_cast<double>(E);
  m.efficiency = m.raw_efficiency();
  return m;
}

GlobalMetrics global_metrics(const AnnotatedTimeline& timeline) {
  return global_metrics(timeline, timeline.total_duration);
}

GlobalMetrics global_metrics(const AnnotatedTimeline& timeline, Nanos horizon) {
  GlobalMetrics g;
  const std::size_t P = timeline.rank_count();
  if (P == 0) throw DataError("trace has no ranks");
  g.t_compute.resize(P);
  for (std::size_t r = 0; r < P; ++r) {
    const ClockTriple c = horizon >= timeline.ranks[r].final_point().time ? timeline.ranks[r].final_point().clocks
                                                                         : interpolate_clock(timeline.ranks[r], horizon);
    g.t_compute[r] = c.oom;
    g.sum_compute += c.oom;
    g.max_compute = std::max(g.max_compute, c.oom);
    g.runtime_ideal = std::max(g.runtime_ideal, c.ideal);
    g.runtime_observed = std::max(g.runtime_observed, c.elapsed);
  }
  if (g.max_compute <= 0) throw DataError("trace contains no computation outside MPI");
  const double Pd = static_cast<double>(P);
  g.load_balance = static_cast<double>(g.sum_compute) / (Pd * static_cast<double>(g.max_compute));
  g.serialisation = static_cast<double>(g.max_compute) / static_cast<double>(g.runtime_ideal);
  g.transfer = static_cast<double>(g.runtime_ideal) / static_cast<double>(g.runtime_observed);
  g.efficiency = static_cast<double>(g.sum_compute) / (Pd * static_cast<double>(g.runtime_observed));
  if (g.serialisation > 1.0) throw DataError(fmt::format("global serialisation {} exceeds 1", g.serialisation));
  return g;
}

}  // namespace tempus
