#include "tempus/prv_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace tempus {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

bool to_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

/// Splits on `sep` at parenthesis depth zero.
std::vector<std::string_view> split_top(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    else if (s[i] == ')') --depth;
    else if (s[i] == sep && depth == 0) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(s.substr(start));
  return parts;
}

std::int64_t unit_scale(TimeUnit u) { return u == TimeUnit::microseconds ? 1000 : 1; }

}  // namespace

TraceMeta parse_header(std::string_view line, std::optional<TimeUnit> unit_override) {
  line = trim(line);
  constexpr std::string_view kMagic = "#Paraver";
  if (line.substr(0, kMagic.size()) != kMagic) throw IngestError(1, "header does not start with #Paraver");

  std::string_view rest = line.substr(kMagic.size());
  // Date field "(dd/mm/yy at hh:mm)" contains ':' and is skipped as a unit.
  const auto open = rest.find('(');
  const auto close = rest.find(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw IngestError(1, "header lacks the (date) field");
  rest = rest.substr(close + 1);
  if (rest.empty() || rest.front() != ':') throw IngestError(1, "header lacks the duration field");
  rest.remove_prefix(1);

  auto parts = split_top(rest, ':');
  if (parts.size() < 4) throw IngestError(1, "header needs duration:nodes:applications:task-list");

  TraceMeta meta;
  std::string_view duration = trim(parts[0]);
  TimeUnit unit = unit_override.value_or(TimeUnit::nanoseconds);
  if (duration.size() > 3 && duration.substr(duration.size() - 3) == "_ns") {
    unit = TimeUnit::nanoseconds;
    duration.remove_suffix(3);
  } else if (duration.size() > 3 && duration.substr(duration.size() - 3) == "_us") {
    unit = TimeUnit::microseconds;
    duration.remove_suffix(3);
  }
  std::int64_t raw_duration = 0;
  if (!to_int(duration, raw_duration) || raw_duration < 0)
    throw IngestError(1, fmt::format("header duration field '{}' is not a non-negative integer", parts[0]));
  meta.time_unit = unit;
  meta.total_duration = raw_duration * unit_scale(unit);

  std::int64_t n_appl = 0;
  if (!to_int(trim(parts[2]), n_appl) || n_appl < 1) throw IngestError(1, "header application count malformed");
  if (n_appl != 1) throw IngestError(1, "only single-application traces are supported");

  // Task list "N(threads:node,...)" optionally followed by ",<communicator count>".
  std::string_view apps = trim(parts[3]);
  const auto lp = apps.find('(');
  const auto rp = apps.find(')');
  std::int64_t n_tasks = 0;
  if (lp == std::string_view::npos || rp == std::string_view::npos || rp < lp ||
      !to_int(apps.substr(0, lp), n_tasks) || n_tasks < 1)
    throw IngestError(1, fmt::format("header task list '{}' malformed", apps));
  auto entries = split_top(apps.substr(lp + 1, rp - lp - 1), ',');
  if (static_cast<std::int64_t>(entries.size()) != n_tasks)
    throw IngestError(1, fmt::format("header declares {} tasks but lists {}", n_tasks, entries.size()));
  for (auto e : entries) {
    const auto colon = e.find(':');
    std::int64_t threads = 0;
    if (!to_int(trim(e.substr(0, colon)), threads) || threads < 1)
      throw IngestError(1, fmt::format("header task entry '{}' malformed", e));
    if (threads != 1)
      throw IngestError(1, fmt::format("task with {} threads: only MPI-only (one thread per task) traces are supported",
                                       threads));
  }
  if (n_tasks > std::numeric_limits<std::int32_t>::max()) throw IngestError(1, "too many tasks");
  meta.rank_count = static_cast<std::int32_t>(n_tasks);
  return meta;
}

bool parse_record_line(std::string_view line, std::size_t line_number, RawRecord& out, AnomalyLog& log) {
  line = trim(line);
  out.fields.clear();
  out.line_number = line_number;
  auto reject = [&](const char* why) {
    log.add(AnomalyKind::malformed_record, fmt::format("line {}", line_number), why);
    return false;
  };
  if (line.empty() || line.front() == '#') {
    out.kind = RecordKind::comment;
    return true;
  }

  std::size_t pos = line.find(':');
  if (pos == std::string_view::npos) return reject("no ':' separated fields");
  std::string_view head = line.substr(0, pos);
  if (head == "c") out.kind = RecordKind::communicator_def;
  else if (head == "1") out.kind = RecordKind::state;
  else if (head == "2") out.kind = RecordKind::event;
  else if (head == "3") out.kind = RecordKind::communication;
  else return reject("unknown record kind");

  std::size_t start = pos + 1;
  while (true) {
    const std::size_t next = line.find(':', start);
    std::string_view tok = line.substr(start, next == std::string_view::npos ? std::string_view::npos : next - start);
    std::int64_t v = 0;
    if (!to_int(tok, v)) return reject("non-integer field");
    out.fields.push_back(v);
    if (next == std::string_view::npos) break;
    start = next + 1;
  }

  const std::size_t n = out.fields.size();
  switch (out.kind) {
    case RecordKind::state:
      if (n != 7) return reject("state record needs 7 fields");
      break;
    case RecordKind::event:
      if (n < 7 || (n - 5) % 2 != 0) return reject("event record needs 5 + 2k fields");
      break;
    case RecordKind::communication:
      if (n != 14) return reject("communication record needs 14 fields");
      break;
    case RecordKind::communicator_def:
      if (n < 3 || out.fields[2] < 0 || n != 3 + static_cast<std::size_t>(out.fields[2]))
        return reject("communicator line member count mismatch");
      break;
    case RecordKind::comment:
      break;
  }
  return true;
}

std::pair<std::vector<RawRecord>, AnomalyLog> parse_records(std::istream& lines, const TraceMeta&,
                                                            std::size_t first_line_number) {
  std::vector<RawRecord> records;
  AnomalyLog log;
  std::string line;
  std::size_t line_number = first_line_number;
  RawRecord rec;
  while (std::getline(lines, line)) {
    if (parse_record_line(line, line_number, rec, log)) records.push_back(rec);
    ++line_number;
  }
  if (lines.bad()) throw TraceIoError("read failure while scanning records");
  return {std::move(records), std::move(log)};
}

struct TraceBuilder::Impl {
  struct OpenRegion {
    bool open = false;
    CallClass call_class = CallClass::other_mpi;
    std::int64_t call_id = 0;
    Nanos entry = 0;
    std::size_t line = 0;
  };
  struct PendingComm {
    Nanos time = -1;
    CommunicatorId id = kWorldCommunicator;
  };

  TraceMeta meta;
  IngestOptions options;
  std::int64_t scale = 1;
  Trace trace;
  AnomalyLog log;
  IngestStats stats;
  std::vector<Nanos> last_time;
  std::vector<OpenRegion> open;
  std::vector<PendingComm> pending_comm;
  // Communicator attribution of each collective region, parallel to trace.regions.
  std::vector<std::vector<std::pair<std::size_t, CommunicatorId>>> coll_comm;
  std::vector<Nanos> running_time;
  Nanos max_time = 0;

  Impl(TraceMeta m, IngestOptions o) : meta(std::move(m)), options(o) {
    scale = unit_scale(meta.time_unit);
    const auto P = static_cast<std::size_t>(meta.rank_count);
    trace.meta = meta;
    trace.regions.resize(P);
    last_time.assign(P, 0);
    open.resize(P);
    pending_comm.resize(P);
    coll_comm.resize(P);
    running_time.assign(P, 0);
  }

  Rank rank_of(std::int64_t task, std::int64_t thread, std::size_t line) const {
    if (task < 1 || task > meta.rank_count)
      throw IngestError(line, fmt::format("task {} outside 1..{}", task, meta.rank_count));
    if (thread != 1)
      throw IngestError(line, fmt::format("thread {}: only MPI-only traces are supported", thread));
    return static_cast<Rank>(task - 1);
  }

  void close_region(Rank r, Nanos t) {
    auto& o = open[static_cast<std::size_t>(r)];
    auto& regions = trace.regions[static_cast<std::size_t>(r)];
    MpiRegion reg;
    reg.rank = r;
    reg.entry_time = o.entry;
    reg.exit_time = t;
    reg.call_class = o.call_class;
    reg.call_id = o.call_id;
    reg.region_seq = regions.size();
    regions.push_back(reg);
    o.open = false;
  }

  CallClass class_of(std::int64_t type, bool& known) const {
    known = true;
    if (type == options.p2p_event_type) return CallClass::point_to_point;
    if (type == options.collective_event_type) return CallClass::collective;
    if (type == options.other_mpi_event_type) return CallClass::other_mpi;
    known = false;
    return CallClass::other_mpi;
  }

  void attribute_comm(Rank r, Nanos t, CommunicatorId id) {
    const auto ri = static_cast<std::size_t>(r);
    auto& o = open[ri];
    auto& regions = trace.regions[ri];
    if (o.open && o.call_class == CallClass::collective && o.entry == t) {
      pending_comm[ri] = {t, id};
      return;
    }
    // A zero-length collective may already be closed within the same record.
    if (!regions.empty() && regions.back().call_class == CallClass::collective && regions.back().entry_time == t &&
        !coll_comm[ri].empty() && coll_comm[ri].back().first == regions.back().region_seq) {
      coll_comm[ri].back().second = id;
      return;
    }
    pending_comm[ri] = {t, id};
  }

  void on_event(const RawRecord& rec) {
    const auto& f = rec.fields;
    const Rank r = rank_of(f[2], f[3], rec.line_number);
    const auto ri = static_cast<std::size_t>(r);
    Nanos t = f[4] * scale;
    if (t < last_time[ri]) {
      log.add(AnomalyKind::nonmonotonic_timestamp, fmt::format("line {}", rec.line_number),
              fmt::format("rank {} time {} precedes {}; clamped", r, t, last_time[ri]));
      t = last_time[ri];
    }
    last_time[ri] = t;
    max_time = std::max(max_time, t);

    bool landed = false;
    bool anomalous = false;
    for (std::size_t i = 5; i + 1 < f.size(); i += 2) {
      const std::int64_t type = f[i];
      const std::int64_t value = f[i + 1];
      if (type == options.communicator_event_type) {
        attribute_comm(r, t, value);
        landed = true;
        continue;
      }
      bool known = false;
      const CallClass cls = class_of(type, known);
      if (!known) {
        ++stats.ignored_event_pairs;
        continue;
      }
      auto& o = open[ri];
      if (value > 0) {
        if (o.open) {
          log.add(AnomalyKind::unmatched_send, fmt::format("line {}", o.line),
                  fmt::format("rank {} region opened at {} never closed before {}", r, o.entry, t));
          close_region(r, t);
        }
        o = {true, cls, value, t, rec.line_number};
        landed = true;
      } else {
        if (!o.open) {
          log.add(AnomalyKind::unmatched_recv, fmt::format("line {}", rec.line_number),
                  fmt::format("rank {} exit event at {} without an open region", r, t));
          anomalous = true;
          continue;
        }
        const bool was_collective = o.call_class == CallClass::collective;
        const Nanos entry = o.entry;
        close_region(r, t);
        if (was_collective) {
          CommunicatorId id = kWorldCommunicator;
          if (pending_comm[ri].time == entry) id = pending_comm[ri].id;
          pending_comm[ri].time = -1;
          coll_comm[ri].emplace_back(trace.regions[ri].back().region_seq, id);
        }
        landed = true;
      }
    }
    if (landed) ++stats.consumed;
    else if (anomalous) ++stats.rejected;
    else ++stats.ignored;
  }

  void on_communication(const RawRecord& rec) {
    const auto& f = rec.fields;
    const Rank s = rank_of(f[2], f[3], rec.line_number);
    const Rank d = rank_of(f[8], f[9], rec.line_number);
    PtpMessage m;
    m.sender = s;
    m.receiver = d;
    m.send_begin = f[4] * scale;
    const Nanos psend = f[5] * scale;
    m.recv_end = f[11] * scale;
    m.size_bytes = f[12];
    m.tag = f[13];
    max_time = std::max({max_time, m.send_begin, psend, f[10] * scale, m.recv_end});
    if (m.send_begin > m.recv_end || psend > m.recv_end) {
      m.status = MessageStatus::faulty_local;
      log.add(AnomalyKind::reversed_ptp, fmt::format("line {}", rec.line_number),
              fmt::format("{}->{} send {} after receive completion {}", s, d, std::max(m.send_begin, psend),
                          m.recv_end));
    }
    trace.messages.push_back(m);
    ++stats.consumed;
  }

  void on_state(const RawRecord& rec) {
    const auto& f = rec.fields;
    const Rank r = rank_of(f[2], f[3], rec.line_number);
    const Nanos begin = f[4] * scale;
    const Nanos end = f[5] * scale;
    max_time = std::max(max_time, end);
    if (f[6] == 1 && end > begin) running_time[static_cast<std::size_t>(r)] += end - begin;
    ++stats.consumed;
  }

  void on_communicator(const RawRecord& rec) {
    const auto& f = rec.fields;
    CommunicatorDef def;
    def.communicator_id = f[1];
    for (std::size_t i = 3; i < f.size(); ++i) {
      if (f[i] < 1 || f[i] > meta.rank_count)
        throw IngestError(rec.line_number, fmt::format("communicator member task {} out of range", f[i]));
      def.members.push_back(static_cast<Rank>(f[i] - 1));
    }
    auto it = std::find_if(trace.communicators.begin(), trace.communicators.end(),
                           [&](const CommunicatorDef& c) { return c.communicator_id == def.communicator_id; });
    if (it != trace.communicators.end()) *it = std::move(def);
    else trace.communicators.push_back(std::move(def));
    ++stats.communicator_defs;
  }

  void add(const RawRecord& rec) {
    switch (rec.kind) {
      case RecordKind::comment: ++stats.comments; return;
      case RecordKind::communicator_def: on_communicator(rec); return;
      case RecordKind::event: ++stats.records; on_event(rec); return;
      case RecordKind::communication: ++stats.records; on_communication(rec); return;
      case RecordKind::state: ++stats.records; on_state(rec); return;
    }
  }

  Trace finish() {
    for (std::size_t r = 0; r < open.size(); ++r) {
      if (!open[r].open) continue;
      log.add(AnomalyKind::unmatched_send, fmt::format("line {}", open[r].line),
              fmt::format("rank {} region opened at {} never closed; closed at {}", r, open[r].entry, last_time[r]));
      const bool was_collective = open[r].call_class == CallClass::collective;
      const Nanos entry = open[r].entry;
      close_region(static_cast<Rank>(r), last_time[r]);
      if (was_collective) {
        CommunicatorId id = pending_comm[r].time == entry ? pending_comm[r].id : kWorldCommunicator;
        coll_comm[r].emplace_back(trace.regions[r].back().region_seq, id);
      }
    }

    std::map<std::pair<CommunicatorId, std::size_t>, CollectiveOp> ops;
    for (std::size_t r = 0; r < coll_comm.size(); ++r) {
      std::map<CommunicatorId, std::size_t> occurrence;
      for (auto [seq, comm] : coll_comm[r]) {
        const std::size_t occ = occurrence[comm]++;
        auto& op = ops[{comm, occ}];
        op.communicator_id = comm;
        op.occurrence_index = occ;
        const auto& reg = trace.regions[r][seq];
        op.participants.push_back({static_cast<Rank>(r), reg.entry_time, reg.exit_time, seq});
      }
    }
    trace.collectives.clear();
    trace.collectives.reserve(ops.size());
    for (auto& [key, op] : ops) trace.collectives.push_back(std::move(op));

    trace.meta.total_duration = std::max(trace.meta.total_duration, max_time);
    return std::move(trace);
  }
};

TraceBuilder::TraceBuilder(TraceMeta meta, IngestOptions options)
    : impl_(std::make_unique<Impl>(std::move(meta), options)) {}
TraceBuilder::~TraceBuilder() = default;
TraceBuilder::TraceBuilder(TraceBuilder&&) noexcept = default;
TraceBuilder& TraceBuilder::operator=(TraceBuilder&&) noexcept = default;

void TraceBuilder::add(const RawRecord& record) { impl_->add(record); }
Trace TraceBuilder::finish() { return impl_->finish(); }
AnomalyLog& TraceBuilder::anomalies() { return impl_->log; }
const IngestStats& TraceBuilder::stats() const { return impl_->stats; }
const std::vector<Nanos>& TraceBuilder::running_state_time() const { return impl_->running_time; }

std::pair<Trace, AnomalyLog> build_trace(const std::vector<RawRecord>& records, const TraceMeta& meta,
                                         const IngestOptions& options) {
  TraceBuilder builder(meta, options);
  for (const auto& rec : records) builder.add(rec);
  Trace trace = builder.finish();
  return {std::move(trace), std::move(builder.anomalies())};
}

LoadedTrace load_prv(std::istream& in, std::string source_name, const IngestOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(1, "empty trace: missing #Paraver header");
  TraceMeta meta = parse_header(line, options.time_unit_override);
  meta.source_name = std::move(source_name);

  TraceBuilder builder(meta, options);
  RawRecord rec;
  AnomalyLog parse_log;
  std::size_t line_number = 2;
  std::size_t malformed = 0;
  while (std::getline(in, line)) {
    if (parse_record_line(line, line_number, rec, parse_log)) builder.add(rec);
    else ++malformed;
    ++line_number;
  }
  if (in.bad()) throw TraceIoError("read failure in " + meta.source_name);

  LoadedTrace out;
  out.trace = builder.finish();
  out.anomalies = std::move(parse_log);
  out.anomalies.append(builder.anomalies());
  out.stats = builder.stats();
  out.stats.records += malformed;
  out.stats.rejected += malformed;
  out.running_state_time = builder.running_state_time();
  return out;
}

LoadedTrace load_prv_file(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TraceIoError("cannot open trace file " + path.string());
  std::vector<char> buffer(1 << 20);
  in.rdbuf()->pubsetbuf(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  return load_prv(in, path.string(), options);
}

PcfLabels parse_pcf_labels(std::istream& lines, AnomalyLog* log) {
  PcfLabels labels;
  enum class Mode { none, types, values } mode = Mode::none;
  std::vector<std::int64_t> current_types;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(lines, line)) {
    ++line_number;
    std::string_view s = trim(line);
    if (s.empty()) {
      if (mode == Mode::values) {
        mode = Mode::none;
        current_types.clear();
      }
      continue;
    }
    if (s == "EVENT_TYPE") {
      mode = Mode::types;
      current_types.clear();
      continue;
    }
    if (s == "VALUES") {
      if (mode == Mode::types) mode = Mode::values;
      continue;
    }
    if (mode == Mode::none) continue;

    std::istringstream ls{std::string(s)};
    if (mode == Mode::types) {
      std::int64_t gradient = 0, type = 0;
      if (!(ls >> gradient >> type)) {
        mode = Mode::none;
        continue;
      }
      current_types.push_back(type);
    } else {
      std::int64_t value = 0;
      if (!(ls >> value)) {
        mode = Mode::none;
        continue;
      }
      std::string label;
      std::getline(ls >> std::ws, label);
      for (std::int64_t type : current_types) {
        auto [it, inserted] = labels.insert_or_assign({type, value}, label);
        if (!inserted && log)
          log->add(AnomalyKind::malformed_record, fmt::format("pcf line {}", line_number),
                   fmt::format("duplicate value {} for type {}; last definition wins", value, type));
      }
    }
  }
  return labels;
}

}  // namespace tempus
