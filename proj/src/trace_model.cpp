#include "tempus/trace_model.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

namespace tempus {

const char* to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::reversed_ptp: return "reversed_ptp";
    case AnomalyKind::unmatched_send: return "unmatched_send";
    case AnomalyKind::unmatched_recv: return "unmatched_recv";
    case AnomalyKind::nonmonotonic_timestamp: return "nonmonotonic_timestamp";
    case AnomalyKind::malformed_record: return "malformed_record";
    case AnomalyKind::collective_mismatch: return "collective_mismatch";
  }
  return "unknown";
}

const char* to_string(CallClass call_class) {
  switch (call_class) {
    case CallClass::point_to_point: return "point_to_point";
    case CallClass::collective: return "collective";
    case CallClass::other_mpi: return "other_mpi";
  }
  return "unknown";
}

void AnomalyLog::add(AnomalyKind kind, std::string location, std::string detail) {
  entries_.push_back({kind, std::move(location), std::move(detail)});
  ++counters_[static_cast<std::size_t>(kind)];
}

void AnomalyLog::append(const AnomalyLog& other) {
  for (const auto& e : other.entries_) add(e.kind, e.location, e.detail);
}

std::size_t Trace::region_count() const {
  std::size_t n = 0;
  for (const auto& r : regions) n += r.size();
  return n;
}

bool Trace::has_communicator(CommunicatorId id) const {
  if (id == kWorldCommunicator) return true;
  return std::any_of(communicators.begin(), communicators.end(),
                     [id](const CommunicatorDef& c) { return c.communicator_id == id; });
}

std::vector<Rank> Trace::members_of(CommunicatorId id) const {
  for (const auto& c : communicators)
    if (c.communicator_id == id) return c.members;
  std::vector<Rank> world;
  if (id == kWorldCommunicator) {
    world.reserve(static_cast<std::size_t>(meta.rank_count));
    for (Rank r = 0; r < meta.rank_count; ++r) world.push_back(r);
  }
  return world;
}

std::ptrdiff_t find_send_region(const std::vector<MpiRegion>& regions, Nanos t) {
  // Zero-length calls can share a timestamp with the next region; the send
  // belongs to the first of them in program order.
  return find_recv_region(regions, t);
}

std::ptrdiff_t find_recv_region(const std::vector<MpiRegion>& regions, Nanos t) {
  auto it = std::lower_bound(regions.begin(), regions.end(), t,
                             [](const MpiRegion& r, Nanos v) { return r.exit_time < v; });
  if (it == regions.end() || it->entry_time > t) return -1;
  return it - regions.begin();
}

namespace {

std::ptrdiff_t find_covering(const std::vector<MpiRegion>& regions, Nanos t) {
  // Linear fallback for validation: regions may be unsorted in a broken trace.
  for (std::size_t i = 0; i < regions.size(); ++i)
    if (regions[i].entry_time <= t && t <= regions[i].exit_time) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

bool sorted_by_entry(const std::vector<MpiRegion>& regions) {
  return std::is_sorted(regions.begin(), regions.end(),
                        [](const MpiRegion& a, const MpiRegion& b) { return a.entry_time < b.entry_time; });
}

}  // namespace

ValidationReport validate_trace(const Trace& trace) {
  ValidationReport report;
  auto flag = [&report](std::string invariant, std::string location) {
    report.push_back({std::move(invariant), std::move(location)});
  };

  const auto& meta = trace.meta;
  if (meta.rank_count < 1) flag("rank_count >= 1", "meta");
  if (trace.regions.size() != static_cast<std::size_t>(std::max(meta.rank_count, 0)))
    flag("one region list per rank", fmt::format("regions.size()={}", trace.regions.size()));

  Nanos max_time = 0;
  for (std::size_t r = 0; r < trace.regions.size(); ++r) {
    const auto& regions = trace.regions[r];
    const bool sorted = sorted_by_entry(regions);
    for (std::size_t k = 0; k < regions.size(); ++k) {
      const auto& reg = regions[k];
      max_time = std::max(max_time, reg.exit_time);
      if (reg.rank != static_cast<Rank>(r))
        flag("region rank matches owner", fmt::format("rank {} region {}", r, reg.region_seq));
      if (reg.region_seq != k)
        flag("region_seq equals program order", fmt::format("rank {} region index {} seq {}", r, k, reg.region_seq));
      if (reg.entry_time < 0) flag("timestamps non-negative", fmt::format("rank {} region {}", r, reg.region_seq));
      if (reg.entry_time > reg.exit_time)
        flag("entry_time <= exit_time", fmt::format("rank {} region {}", r, reg.region_seq));
      if (k + 1 < regions.size() && reg.exit_time > regions[k + 1].entry_time)
        flag("regions non-overlapping",
             fmt::format("rank {} regions {} and {}", r, reg.region_seq, regions[k + 1].region_seq));
    }
    if (!sorted) flag("entry order equals region_seq order", fmt::format("rank {}", r));
  }

  auto rank_ok = [&](Rank r) { return r >= 0 && r < meta.rank_count && static_cast<std::size_t>(r) < trace.regions.size(); };
  for (std::size_t i = 0; i < trace.messages.size(); ++i) {
    const auto& m = trace.messages[i];
    max_time = std::max({max_time, m.send_begin, m.recv_end});
    if (!rank_ok(m.sender) || !rank_ok(m.receiver)) {
      flag("message endpoints in range", fmt::format("message {}", i));
      continue;
    }
    if (m.size_bytes < 0) flag("size_bytes >= 0", fmt::format("message {}", i));
    if (m.status == MessageStatus::valid && m.send_begin > m.recv_end)
      flag("valid message has send_begin <= recv_end", fmt::format("message {} ({}->{})", i, m.sender, m.receiver));
    if (find_covering(trace.regions[static_cast<std::size_t>(m.sender)], m.send_begin) < 0)
      flag("send_begin inside a sender region", fmt::format("message {} rank {} t={}", i, m.sender, m.send_begin));
    if (find_covering(trace.regions[static_cast<std::size_t>(m.receiver)], m.recv_end) < 0)
      flag("recv_end inside a receiver region", fmt::format("message {} rank {} t={}", i, m.receiver, m.recv_end));
  }

  std::set<CommunicatorId> seen_ids;
  for (const auto& c : trace.communicators) {
    const auto loc = fmt::format("communicator {}", c.communicator_id);
    if (!seen_ids.insert(c.communicator_id).second) flag("communicator ids unique", loc);
    if (c.members.empty()) flag("communicator members non-empty", loc);
    std::set<Rank> uniq(c.members.begin(), c.members.end());
    if (uniq.size() != c.members.size()) flag("communicator members duplicate-free", loc);
    for (Rank m : c.members)
      if (m < 0 || m >= meta.rank_count) flag("communicator member < rank_count", loc);
  }

  std::map<CommunicatorId, std::set<std::size_t>> occurrences;
  for (std::size_t i = 0; i < trace.collectives.size(); ++i) {
    const auto& op = trace.collectives[i];
    const auto loc = fmt::format("collective {} (comm {}, occurrence {})", i, op.communicator_id, op.occurrence_index);
    if (!occurrences[op.communicator_id].insert(op.occurrence_index).second)
      flag("occurrence_index unique per communicator", loc);
    if (!trace.has_communicator(op.communicator_id)) {
      flag("collective communicator defined", loc);
      continue;
    }
    auto members = trace.members_of(op.communicator_id);
    std::multiset<Rank> present;
    for (const auto& p : op.participants) {
      present.insert(p.rank);
      max_time = std::max(max_time, p.exit_time);
      if (p.entry_time > p.exit_time) flag("participant entry <= exit", loc);
    }
    for (Rank m : members)
      if (present.count(m) != 1) flag("every member participates exactly once", fmt::format("{} rank {}", loc, m));
    for (Rank p : present)
      if (std::find(members.begin(), members.end(), p) == members.end())
        flag("participants are members", fmt::format("{} rank {}", loc, p));
  }

  // The n-th occurrence on a communicator must be the n-th collective of that
  // communicator at every member.
  std::map<std::pair<CommunicatorId, Rank>, std::vector<std::pair<std::size_t, Nanos>>> per_member;
  for (const auto& op : trace.collectives)
    for (const auto& p : op.participants)
      per_member[{op.communicator_id, p.rank}].emplace_back(op.occurrence_index, p.entry_time);
  for (auto& [key, seq] : per_member) {
    std::sort(seq.begin(), seq.end());
    for (std::size_t i = 1; i < seq.size(); ++i)
      if (seq[i].second < seq[i - 1].second)
        flag("occurrence order consistent with program order",
             fmt::format("communicator {} rank {} occurrence {}", key.first, key.second, seq[i].first));
  }

  if (meta.total_duration < max_time)
    flag("total_duration >= max timestamp", fmt::format("total_duration={} max={}", meta.total_duration, max_time));
  return report;
}

}  // namespace tempus
