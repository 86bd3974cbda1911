#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tempus {

/// All timestamps and durations are integer nanoseconds.
using Nanos = std::int64_t;
using Rank = std::int32_t;
using CommunicatorId = std::int64_t;

inline constexpr CommunicatorId kWorldCommunicator = 0;

enum class TimeUnit { nanoseconds, microseconds };

struct TraceMeta {
  Nanos total_duration = 0;
  std::int32_t rank_count = 1;
  TimeUnit time_unit = TimeUnit::nanoseconds;
  std::string source_name;
};

enum class CallClass { point_to_point, collective, other_mpi };

struct MpiRegion {
  Rank rank = 0;
  Nanos entry_time = 0;
  Nanos exit_time = 0;
  CallClass call_class = CallClass::other_mpi;
  std::int64_t call_id = 0;
  std::size_t region_seq = 0;

  Nanos duration() const { return exit_time - entry_time; }
};

enum class MessageStatus { valid, faulty_local };

struct PtpMessage {
  Rank sender = 0;
  Rank receiver = 0;
  Nanos send_begin = 0;
  Nanos recv_end = 0;
  std::int64_t size_bytes = 0;
  std::int64_t tag = 0;
  MessageStatus status = MessageStatus::valid;
};

struct CollectiveParticipant {
  Rank rank = 0;
  Nanos entry_time = 0;
  Nanos exit_time = 0;
  std::size_t region_seq = 0;
};

struct CollectiveOp {
  CommunicatorId communicator_id = kWorldCommunicator;
  std::size_t occurrence_index = 0;
  std::vector<CollectiveParticipant> participants;
};

struct CommunicatorDef {
  CommunicatorId communicator_id = kWorldCommunicator;
  std::vector<Rank> members;
};

enum class AnomalyKind : std::size_t {
  reversed_ptp,
  unmatched_send,
  unmatched_recv,
  nonmonotonic_timestamp,
  malformed_record,
  collective_mismatch,
};

inline constexpr std::size_t kAnomalyKindCount = 6;

const char* to_string(AnomalyKind kind);
const char* to_string(CallClass call_class);

struct Anomaly {
  AnomalyKind kind;
  std::string location;
  std::string detail;
};

class AnomalyLog {
 public:
  void add(AnomalyKind kind, std::string location, std::string detail);
  void append(const AnomalyLog& other);

  const std::vector<Anomaly>& entries() const { return entries_; }
  std::size_t count(AnomalyKind kind) const { return counters_[static_cast<std::size_t>(kind)]; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<Anomaly> entries_;
  std::array<std::size_t, kAnomalyKindCount> counters_{};
};

/// Canonical MPI-only trace. Regions are stored per rank in program order.
struct Trace {
  TraceMeta meta;
  std::vector<std::vector<MpiRegion>> regions;
  std::vector<PtpMessage> messages;
  std::vector<CollectiveOp> collectives;
  std::vector<CommunicatorDef> communicators;

  std::size_t region_count() const;
  /// Membership of a communicator; the world communicator is implicit.
  std::vector<Rank> members_of(CommunicatorId id) const;
  bool has_communicator(CommunicatorId id) const;
};

struct Violation {
  std::string invariant;
  std::string location;
};

using ValidationReport = std::vector<Violation>;

/// Checks every model invariant; never throws and never mutates.
ValidationReport validate_trace(const Trace& trace);

/// Index of the region of `regions` containing a send origin at `t`
/// (earliest region with entry <= t <= exit), or -1 when `t` is not covered.
std::ptrdiff_t find_send_region(const std::vector<MpiRegion>& regions, Nanos t);
/// Index of the region containing a receive completion at `t`
/// (earliest region with exit >= t), or -1 when `t` is not covered.
std::ptrdiff_t find_recv_region(const std::vector<MpiRegion>& regions, Nanos t);

}  // namespace tempus
