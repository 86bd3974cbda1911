#pragma once

#include <cstdint>
#include <stdexcept>
#include <span>
#include <vector>

#include "tempus/trace_model.hpp"

namespace tempus {

/// Elapsed, out-of-MPI and ideal-network (critical path) clocks at one point.
struct ClockTriple {
  Nanos elapsed = 0;
  Nanos oom = 0;
  Nanos ideal = 0;

  friend bool operator==(const ClockTriple&, const ClockTriple&) = default;
};

inline constexpr std::int64_t kDefaultEagerLimitBytes = 65536;

struct ReplayConfig {
  std::int64_t eager_limit_bytes = kDefaultEagerLimitBytes;
  /// Abort on dependency cycles and collective mismatches instead of degrading.
  bool strict_mode = false;
};

struct EventPoint {
  Nanos time = 0;
  ClockTriple clocks;
  /// MPI entry/exit events collapsed into this point; 0 for sentinels.
  std::uint32_t mpi_events = 0;
};

/// One rank's event points in strictly increasing time, from the start
/// sentinel at 0 to the end sentinel at the trace duration.
struct RankTimeline {
  std::vector<EventPoint> points;

  const EventPoint& final_point() const { return points.back(); }
};

struct AnnotatedTimeline {
  std::vector<RankTimeline> ranks;
  Nanos total_duration = 0;

  std::size_t rank_count() const { return ranks.size(); }
};

/// Strict-mode abort, or a broken replay precondition.
class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReplayResult {
  AnnotatedTimeline timeline;
  AnomalyLog anomalies;
  /// Message statuses after degradation, parallel to trace.messages.
  std::vector<MessageStatus> message_status;
};

/// Causal replay with extended Lamport clocks: ideal clocks stop inside MPI
/// and are raised to the partner's value at message terminations.
ReplayResult replay(const Trace& trace, const ReplayConfig& config = {});

struct PtpSync {
  Nanos receiver_exit_ideal = 0;
  Nanos sender_exit_floor = 0;
};

/// Zero-latency, infinite-bandwidth point-to-point rule. Messages above the
/// eager limit also hold the sender until the receiver has arrived.
PtpSync synchronize_ptp(const PtpMessage& message, Nanos sender_clock_at_send_begin, Nanos receiver_clock_at_entry,
                        const ReplayConfig& config);

/// Synchronising collective: every participant leaves with the max entry.
Nanos synchronize_collective(const CollectiveOp& op, std::span<const Nanos> entry_ideals);

/// Demotes a causality-violating message to a local operation.
void degrade_faulty(PtpMessage& message, AnomalyLog& log, const std::string& reason = "reversed send/receive pair");

/// True when `message` must be treated as local: its receive completes before
/// a collective (shared by both endpoints) that the send follows.
bool violates_causality(const Trace& trace, const PtpMessage& message);

}  // namespace tempus
