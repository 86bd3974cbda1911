#include "tempus/replay.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace tempus {

PtpSync synchronize_ptp(const PtpMessage& message, Nanos sender_clock_at_send_begin, Nanos receiver_clock_at_entry,
                        const ReplayConfig& config) {
  if (message.status != MessageStatus::valid)
    throw std::invalid_argument("synchronize_ptp called on a faulty_local message");
  PtpSync out;
  out.receiver_exit_ideal = std::max(receiver_clock_at_entry, sender_clock_at_send_begin);
  out.sender_exit_floor = message.size_bytes <= config.eager_limit_bytes
                              ? sender_clock_at_send_begin
                              : std::max(sender_clock_at_send_begin, receiver_clock_at_entry);
  return out;
}

Nanos synchronize_collective(const CollectiveOp& op, std::span<const Nanos> entry_ideals) {
  if (entry_ideals.size() != op.participants.size())
    throw std::invalid_argument(fmt::format("collective has {} participants but {} entry clocks",
                                            op.participants.size(), entry_ideals.size()));
  if (entry_ideals.empty()) return 0;
  return *std::max_element(entry_ideals.begin(), entry_ideals.end());
}

void degrade_faulty(PtpMessage& message, AnomalyLog& log, const std::string& reason) {
  if (message.status == MessageStatus::faulty_local) return;
  message.status = MessageStatus::faulty_local;
  log.add(AnomalyKind::reversed_ptp, fmt::format("message {}->{} tag {}", message.sender, message.receiver, message.tag),
          fmt::format("{} (send {}, receive end {}); treated as local", reason, message.send_begin, message.recv_end));
}

namespace {

/// Per communicator and rank, the occurrences a rank took part in, in
/// program order.
class CollectiveIndex {
 public:
  explicit CollectiveIndex(const Trace& trace) {
    const auto P = static_cast<std::size_t>(trace.meta.rank_count);
    for (const auto& op : trace.collectives) {
      auto& per_rank = index_[op.communicator_id];
      if (per_rank.empty()) per_rank.resize(P);
      for (const auto& p : op.participants) {
        if (p.rank < 0 || static_cast<std::size_t>(p.rank) >= P) continue;
        per_rank[static_cast<std::size_t>(p.rank)].push_back({op.occurrence_index, static_cast<std::ptrdiff_t>(p.region_seq)});
      }
    }
    for (auto& [id, per_rank] : index_)
      for (auto& spans : per_rank)
        std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.region_seq < b.region_seq; });
  }

  /// The receive region precedes occurrence n on the receiver while the send
  /// region follows occurrence m >= n on the sender (program order, so ties
  /// between zero-length calls do not count).
  bool crosses(const PtpMessage& m, std::ptrdiff_t send_region, std::ptrdiff_t recv_region) const {
    if (send_region < 0 || recv_region < 0 || m.sender == m.receiver) return false;
    for (const auto& [id, per_rank] : index_) {
      const auto& rs = per_rank[static_cast<std::size_t>(m.receiver)];
      const auto& ss = per_rank[static_cast<std::size_t>(m.sender)];
      if (rs.empty() || ss.empty()) continue;
      auto first_after_recv =
          std::partition_point(rs.begin(), rs.end(), [&](const Span& s) { return s.region_seq <= recv_region; });
      if (first_after_recv == rs.end()) continue;
      auto first_not_before_send =
          std::partition_point(ss.begin(), ss.end(), [&](const Span& s) { return s.region_seq < send_region; });
      if (first_not_before_send == ss.begin()) continue;
      if (std::prev(first_not_before_send)->occurrence >= first_after_recv->occurrence) return true;
    }
    return false;
  }

 private:
  struct Span {
    std::size_t occurrence;
    std::ptrdiff_t region_seq;
  };
  std::map<CommunicatorId, std::vector<std::vector<Span>>> index_;
};

enum class DepKind : std::uint8_t { message_in, rendezvous_out, collective };

struct Dep {
  DepKind kind;
  std::uint32_t id;
};

struct Blocker {
  Rank rank = -1;
  std::size_t region = 0;
  Dep dep{DepKind::message_in, 0};
};

class Replayer {
 public:
  Replayer(const Trace& trace, const ReplayConfig& config) : trace_(trace), config_(config) {
    P_ = static_cast<std::size_t>(trace.meta.rank_count);
    if (trace.regions.size() != P_) throw ReplayError("trace has no region list for every rank");
    for (std::size_t r = 0; r < P_; ++r) {
      const auto& regs = trace.regions[r];
      for (std::size_t k = 0; k < regs.size(); ++k) {
        if (regs[k].entry_time > regs[k].exit_time || (k + 1 < regs.size() && regs[k].exit_time > regs[k + 1].entry_time))
          throw ReplayError(fmt::format("rank {} regions are not ordered at region {}", r, k));
      }
    }
  }

  ReplayResult run() {
    classify_messages();
    classify_collectives();
    build_dependencies();
    sweep();
    ReplayResult out;
    out.timeline = build_timeline();
    out.anomalies = std::move(log_);
    out.message_status = std::move(status_);
    return out;
  }

 private:
  bool syncs(CallClass c) const { return c != CallClass::other_mpi; }

  void degrade(std::size_t m, AnomalyKind kind, const std::string& reason) {
    if (status_[m] == MessageStatus::faulty_local) return;
    const auto& msg = trace_.messages[m];
    if (config_.strict_mode)
      throw ReplayError(fmt::format("strict mode: message {} ({}->{}): {}", m, msg.sender, msg.receiver, reason));
    status_[m] = MessageStatus::faulty_local;
    if (kind == AnomalyKind::reversed_ptp) {
      PtpMessage copy = msg;
      degrade_faulty(copy, log_, reason);
    } else {
      log_.add(kind, fmt::format("message {}->{} tag {}", msg.sender, msg.receiver, msg.tag),
               fmt::format("{}; treated as local", reason));
    }
  }

  void classify_messages() {
    const auto& msgs = trace_.messages;
    status_.resize(msgs.size());
    send_region_.assign(msgs.size(), -1);
    recv_region_.assign(msgs.size(), -1);
    CollectiveIndex index(trace_);
    for (std::size_t m = 0; m < msgs.size(); ++m) {
      const auto& msg = msgs[m];
      status_[m] = msg.status;
      if (status_[m] != MessageStatus::valid) continue;
      if (msg.sender < 0 || static_cast<std::size_t>(msg.sender) >= P_ || msg.receiver < 0 ||
          static_cast<std::size_t>(msg.receiver) >= P_)
        throw ReplayError(fmt::format("message {} endpoint out of range", m));
      if (msg.send_begin > msg.recv_end) {
        degrade(m, AnomalyKind::reversed_ptp, "receive completes before the send starts");
        continue;
      }
      send_region_[m] = find_send_region(trace_.regions[static_cast<std::size_t>(msg.sender)], msg.send_begin);
      recv_region_[m] = find_recv_region(trace_.regions[static_cast<std::size_t>(msg.receiver)], msg.recv_end);
      if (send_region_[m] < 0) {
        degrade(m, AnomalyKind::unmatched_send, "send origin outside any MPI region of the sender");
        continue;
      }
      if (recv_region_[m] < 0) {
        degrade(m, AnomalyKind::unmatched_recv, "receive completion outside any MPI region of the receiver");
        continue;
      }
      if (index.crosses(msg, send_region_[m], recv_region_[m]))
        degrade(m, AnomalyKind::reversed_ptp, "receive completes before a collective the send follows");
    }
  }

  void classify_collectives() {
    const auto& ops = trace_.collectives;
    op_active_.assign(ops.size(), true);
    for (std::size_t o = 0; o < ops.size(); ++o) {
      const auto& op = ops[o];
      std::string problem;
      if (!trace_.has_communicator(op.communicator_id)) {
        problem = "communicator undefined";
      } else {
        auto members = trace_.members_of(op.communicator_id);
        std::vector<Rank> present;
        for (const auto& p : op.participants) present.push_back(p.rank);
        std::sort(members.begin(), members.end());
        std::sort(present.begin(), present.end());
        if (members != present)
          problem = fmt::format("{} participants for {} members", op.participants.size(), members.size());
      }
      for (const auto& p : op.participants) {
        if (!problem.empty()) break;
        const auto& regs = trace_.regions[static_cast<std::size_t>(p.rank)];
        if (p.region_seq >= regs.size() || regs[p.region_seq].entry_time != p.entry_time)
          problem = fmt::format("participant rank {} does not map to a region", p.rank);
      }
      if (problem.empty()) continue;
      if (config_.strict_mode)
        throw ReplayError(fmt::format("strict mode: collective {} occurrence {}: {}", op.communicator_id,
                                      op.occurrence_index, problem));
      op_active_[o] = false;
      log_.add(AnomalyKind::collective_mismatch,
               fmt::format("communicator {} occurrence {}", op.communicator_id, op.occurrence_index),
               problem + "; synchronisation skipped");
    }
  }

  void build_dependencies() {
    std::vector<std::vector<std::pair<std::size_t, Dep>>> pending(P_);
    const auto& msgs = trace_.messages;
    for (std::size_t m = 0; m < msgs.size(); ++m) {
      if (status_[m] != MessageStatus::valid) continue;
      const auto s = static_cast<std::size_t>(msgs[m].sender);
      const auto d = static_cast<std::size_t>(msgs[m].receiver);
      const auto sk = static_cast<std::size_t>(send_region_[m]);
      const auto rk = static_cast<std::size_t>(recv_region_[m]);
      const auto& sreg = trace_.regions[s][sk];
      const auto& rreg = trace_.regions[d][rk];
      if (!syncs(sreg.call_class) || !syncs(rreg.call_class)) continue;
      pending[d].push_back({rk, Dep{DepKind::message_in, static_cast<std::uint32_t>(m)}});
      // Rendezvous coupling only when the receiver had physically arrived
      // before the sender left.
      if (msgs[m].size_bytes > config_.eager_limit_bytes && rreg.entry_time <= sreg.exit_time)
        pending[s].push_back({sk, Dep{DepKind::rendezvous_out, static_cast<std::uint32_t>(m)}});
    }
    for (std::size_t o = 0; o < trace_.collectives.size(); ++o) {
      if (!op_active_[o]) continue;
      for (const auto& p : trace_.collectives[o].participants)
        pending[static_cast<std::size_t>(p.rank)].push_back({p.region_seq, Dep{DepKind::collective, static_cast<std::uint32_t>(o)}});
    }

    dep_begin_.resize(P_);
    deps_.resize(P_);
    for (std::size_t r = 0; r < P_; ++r) {
      const std::size_t n = trace_.regions[r].size();
      auto& begin = dep_begin_[r];
      begin.assign(n + 1, 0);
      for (const auto& [k, dep] : pending[r]) ++begin[k + 1];
      std::partial_sum(begin.begin(), begin.end(), begin.begin());
      std::vector<std::uint32_t> fill(begin.begin(), begin.end() - 1);
      deps_[r].resize(pending[r].size());
      for (const auto& [k, dep] : pending[r]) deps_[r][fill[k]++] = dep;
    }
  }

  /// Returns false and fills `blocker` when a required partner clock is not yet fixed.
  bool try_exit(std::size_t r, std::size_t k, Nanos& value, Blocker& blocker) {
    const auto& reg = trace_.regions[r][k];
    const Nanos entry = entry_ideal_[r][k];
    value = entry;
    for (std::uint32_t i = dep_begin_[r][k]; i < dep_begin_[r][k + 1]; ++i) {
      const Dep dep = deps_[r][i];
      switch (dep.kind) {
        case DepKind::message_in: {
          if (status_[dep.id] != MessageStatus::valid) break;
          const auto& msg = trace_.messages[dep.id];
          const auto s = static_cast<std::size_t>(msg.sender);
          const auto j = static_cast<std::size_t>(send_region_[dep.id]);
          if (cursor_[s] < j) {
            blocker = {msg.sender, j, dep};
            return false;
          }
          PtpMessage valid = msg;
          valid.status = MessageStatus::valid;
          value = std::max(value, synchronize_ptp(valid, entry_ideal_[s][j], entry, config_).receiver_exit_ideal);
          break;
        }
        case DepKind::rendezvous_out: {
          if (status_[dep.id] != MessageStatus::valid) break;
          const auto& msg = trace_.messages[dep.id];
          const auto d = static_cast<std::size_t>(msg.receiver);
          const auto j = static_cast<std::size_t>(recv_region_[dep.id]);
          if (cursor_[d] < j) {
            blocker = {msg.receiver, j, dep};
            return false;
          }
          PtpMessage valid = msg;
          valid.status = MessageStatus::valid;
          value = std::max(value, synchronize_ptp(valid, entry, entry_ideal_[d][j], config_).sender_exit_floor);
          break;
        }
        case DepKind::collective: {
          if (!op_active_[dep.id]) break;
          const auto& op = trace_.collectives[dep.id];
          scratch_op_.participants.clear();
          scratch_entries_.clear();
          for (const auto& p : op.participants) {
            const auto pr = static_cast<std::size_t>(p.rank);
            // Participants that physically arrived after this rank left
            // cannot have held it back.
            if (p.entry_time > reg.exit_time) continue;
            if (cursor_[pr] < p.region_seq) {
              blocker = {p.rank, p.region_seq, dep};
              return false;
            }
            scratch_op_.participants.push_back(p);
            scratch_entries_.push_back(entry_ideal_[pr][p.region_seq]);
          }
          value = std::max(value, synchronize_collective(scratch_op_, scratch_entries_));
          break;
        }
      }
    }
    return true;
  }

  bool advance(std::size_t r) {
    const auto& regs = trace_.regions[r];
    bool progressed = false;
    while (cursor_[r] < regs.size()) {
      const std::size_t k = cursor_[r];
      Nanos value = 0;
      Blocker b;
      if (!try_exit(r, k, value, b)) {
        blocked_[r] = b;
        waiters_[static_cast<std::size_t>(b.rank)].push_back(r);
        return progressed;
      }
      exit_ideal_[r][k] = value;
      if (k + 1 < regs.size()) {
        const Nanos gap = regs[k + 1].entry_time - regs[k].exit_time;
        entry_ideal_[r][k + 1] = value + gap;
        entry_oom_[r][k + 1] = entry_oom_[r][k] + gap;
      }
      ++cursor_[r];
      progressed = true;
    }
    return progressed;
  }

  void break_cycle(std::size_t start) {
    std::vector<int> seen(P_, -1);
    std::size_t x = start;
    int step = 0;
    while (seen[x] < 0) {
      seen[x] = step++;
      x = static_cast<std::size_t>(blocked_[x].rank);
    }
    std::vector<std::size_t> cycle;
    std::size_t y = x;
    do {
      cycle.push_back(y);
      y = static_cast<std::size_t>(blocked_[y].rank);
    } while (y != x);

    std::string listing;
    for (std::size_t c : cycle)
      listing += fmt::format("{}rank {} region {}", listing.empty() ? "" : " -> ", c, cursor_[c]);
    if (config_.strict_mode) throw ReplayError("strict mode: dependency cycle: " + listing);

    for (std::size_t c : cycle) {
      const Dep dep = blocked_[c].dep;
      if (dep.kind == DepKind::collective) {
        const auto& op = trace_.collectives[dep.id];
        op_active_[dep.id] = false;
        log_.add(AnomalyKind::collective_mismatch,
                 fmt::format("communicator {} occurrence {}", op.communicator_id, op.occurrence_index),
                 "dependency cycle (" + listing + "); synchronisation skipped");
      } else {
        degrade(dep.id, AnomalyKind::reversed_ptp, "dependency cycle (" + listing + ")");
      }
    }
  }

  void sweep() {
    cursor_.assign(P_, 0);
    blocked_.assign(P_, Blocker{});
    waiters_.assign(P_, {});
    entry_ideal_.resize(P_);
    exit_ideal_.resize(P_);
    entry_oom_.resize(P_);
    for (std::size_t r = 0; r < P_; ++r) {
      const auto& regs = trace_.regions[r];
      entry_ideal_[r].assign(regs.size(), 0);
      exit_ideal_[r].assign(regs.size(), 0);
      entry_oom_[r].assign(regs.size(), 0);
      if (!regs.empty()) {
        entry_ideal_[r][0] = regs[0].entry_time;
        entry_oom_[r][0] = regs[0].entry_time;
      }
    }

    std::deque<std::size_t> queue;
    std::vector<char> queued(P_, 1);
    for (std::size_t r = 0; r < P_; ++r) queue.push_back(r);
    while (true) {
      while (!queue.empty()) {
        const std::size_t r = queue.front();
        queue.pop_front();
        queued[r] = 0;
        if (advance(r)) {
          auto woken = std::move(waiters_[r]);
          waiters_[r].clear();
          for (std::size_t w : woken)
            if (!queued[w]) {
              queued[w] = 1;
              queue.push_back(w);
            }
        }
      }
      std::size_t stuck = P_;
      for (std::size_t r = 0; r < P_; ++r)
        if (cursor_[r] < trace_.regions[r].size()) {
          stuck = r;
          break;
        }
      if (stuck == P_) break;
      break_cycle(stuck);
      for (auto& w : waiters_) w.clear();
      for (std::size_t r = 0; r < P_; ++r)
        if (cursor_[r] < trace_.regions[r].size() && !queued[r]) {
          queued[r] = 1;
          queue.push_back(r);
        }
    }
  }

  AnnotatedTimeline build_timeline() const {
    AnnotatedTimeline tl;
    tl.total_duration = trace_.meta.total_duration;
    tl.ranks.resize(P_);
    for (std::size_t r = 0; r < P_; ++r) {
      const auto& regs = trace_.regions[r];
      auto& pts = tl.ranks[r].points;
      pts.reserve(2 * regs.size() + 2);
      auto push = [&pts](Nanos t, Nanos oom, Nanos ideal, std::uint32_t events) {
        if (!pts.empty() && pts.back().time == t) {
          pts.back().clocks = {t, oom, ideal};
          pts.back().mpi_events += events;
        } else {
          pts.push_back({t, {t, oom, ideal}, events});
        }
      };
      push(0, 0, 0, 0);
      Nanos last_time = 0, last_oom = 0, last_ideal = 0;
      for (std::size_t k = 0; k < regs.size(); ++k) {
        push(regs[k].entry_time, entry_oom_[r][k], entry_ideal_[r][k], 1);
        push(regs[k].exit_time, entry_oom_[r][k], exit_ideal_[r][k], 1);
        last_time = regs[k].exit_time;
        last_oom = entry_oom_[r][k];
        last_ideal = exit_ideal_[r][k];
      }
      const Nanos end = std::max(tl.total_duration, last_time);
      push(end, last_oom + (end - last_time), last_ideal + (end - last_time), 0);
    }
    return tl;
  }

  const Trace& trace_;
  ReplayConfig config_;
  std::size_t P_ = 0;
  AnomalyLog log_;
  std::vector<MessageStatus> status_;
  std::vector<std::ptrdiff_t> send_region_;
  std::vector<std::ptrdiff_t> recv_region_;
  std::vector<char> op_active_;
  std::vector<std::vector<std::uint32_t>> dep_begin_;
  std::vector<std::vector<Dep>> deps_;
  std::vector<std::size_t> cursor_;
  std::vector<Blocker> blocked_;
  std::vector<std::vector<std::size_t>> waiters_;
  std::vector<std::vector<Nanos>> entry_ideal_;
  std::vector<std::vector<Nanos>> exit_ideal_;
  std::vector<std::vector<Nanos>> entry_oom_;
  CollectiveOp scratch_op_;
  std::vector<Nanos> scratch_entries_;
};

}  // namespace

bool violates_causality(const Trace& trace, const PtpMessage& message) {
  if (message.send_begin > message.recv_end) return true;
  const auto& sregs = trace.regions[static_cast<std::size_t>(message.sender)];
  const auto& rregs = trace.regions[static_cast<std::size_t>(message.receiver)];
  return CollectiveIndex(trace).crosses(message, find_send_region(sregs, message.send_begin),
                                        find_recv_region(rregs, message.recv_end));
}

ReplayResult replay(const Trace& trace, const ReplayConfig& config) {
  if (config.eager_limit_bytes < 0) throw ReplayError("eager_limit_bytes must be non-negative");
  return Replayer(trace, config).run();
}

}  // namespace tempus
