#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tempus/discretizer.hpp"

namespace tempus {

/// The trace holds nothing the efficiency model can be evaluated on.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Load balance, serialisation and transfer over one window. The integer
/// numerators are kept so invariants can be checked exactly.
struct WindowMetrics {
  Window window;
  std::vector<Nanos> delta_oom;
  Nanos sum_oom = 0;
  Nanos max_oom = 0;
  Nanos delta_cp = 0;
  std::size_t rank_count = 0;
  bool defined = false;
  std::optional<double> load_balance;
  std::optional<double> serialisation;
  std::optional<double> transfer;
  std::optional<double> efficiency;

  Nanos length() const { return window.length(); }
  /// (sum delta_oom / P) / length, defined whenever the window is non-empty.
  double raw_efficiency() const;
};

struct GlobalMetrics {
  double load_balance = 0;
  double serialisation = 0;
  double transfer = 0;
  double efficiency = 0;
  std::vector<Nanos> t_compute;
  Nanos sum_compute = 0;
  Nanos max_compute = 0;
  Nanos runtime_ideal = 0;
  Nanos runtime_observed = 0;
};

WindowMetrics window_metrics(const BoundaryClocks& clocks_a, const BoundaryClocks& clocks_b, const Window& window,
                             std::size_t rank_count);

/// Factors from the final clocks (or the clocks at `horizon`).
GlobalMetrics global_metrics(const AnnotatedTimeline& timeline);
GlobalMetrics global_metrics(const AnnotatedTimeline& timeline, Nanos horizon);

/// Per-window metrics for a tiling; OpenMP parallel over ranks then windows.
std::vector<WindowMetrics> window_series(const AnnotatedTimeline& timeline, std::span<const Window> windows);

/// CP(t) = max over ranks of the interpolated ideal clock.
std::vector<Nanos> critical_path_series(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries);

namespace serial {
std::vector<WindowMetrics> window_series(const AnnotatedTimeline& timeline, std::span<const Window> windows);
std::vector<Nanos> critical_path_series(const AnnotatedTimeline& timeline, std::span<const Nanos> boundaries);
}  // namespace serial

}  // namespace tempus
