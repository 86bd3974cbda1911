#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tempus/trace_model.hpp"

namespace tempus {

/// Fatal ingest failure (malformed header, rank out of range, hybrid trace).
class IngestError : public std::runtime_error {
 public:
  IngestError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// The trace file could not be opened or read.
class TraceIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RecordKind { state, event, communication, communicator_def, comment };

struct RawRecord {
  RecordKind kind = RecordKind::comment;
  std::vector<std::int64_t> fields;
  std::size_t line_number = 0;
};

struct IngestOptions {
  /// Applies when the header duration carries no unit suffix.
  std::optional<TimeUnit> time_unit_override;
  std::int64_t p2p_event_type = 50000001;
  std::int64_t collective_event_type = 50000002;
  std::int64_t other_mpi_event_type = 50000003;
  /// Event carrying the communicator id of a collective; its encoding varies
  /// across tracer versions.
  std::int64_t communicator_event_type = 50100004;
};

/// Per-record disposition counters: records == consumed + ignored + rejected.
struct IngestStats {
  std::size_t records = 0;
  std::size_t consumed = 0;
  std::size_t ignored = 0;
  std::size_t rejected = 0;
  std::size_t comments = 0;
  std::size_t communicator_defs = 0;
  std::size_t ignored_event_pairs = 0;
};

TraceMeta parse_header(std::string_view line, std::optional<TimeUnit> unit_override = {});

/// Classifies one record line. Returns false and logs a malformed_record
/// anomaly when the line does not match any supported layout.
bool parse_record_line(std::string_view line, std::size_t line_number, RawRecord& out, AnomalyLog& log);

std::pair<std::vector<RawRecord>, AnomalyLog> parse_records(std::istream& lines, const TraceMeta& meta,
                                                            std::size_t first_line_number = 2);

/// Incremental trace construction; records are fed one at a time so memory
/// tracks the retained model rather than the file.
class TraceBuilder {
 public:
  TraceBuilder(TraceMeta meta, IngestOptions options = {});
  ~TraceBuilder();
  TraceBuilder(TraceBuilder&&) noexcept;
  TraceBuilder& operator=(TraceBuilder&&) noexcept;

  void add(const RawRecord& record);
  /// Closes dangling regions, groups collectives and returns the model.
  Trace finish();

  AnomalyLog& anomalies();
  const IngestStats& stats() const;
  /// Per-rank total of tracer "running" state time, kept for cross-checks.
  const std::vector<Nanos>& running_state_time() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::pair<Trace, AnomalyLog> build_trace(const std::vector<RawRecord>& records, const TraceMeta& meta,
                                         const IngestOptions& options = {});

struct LoadedTrace {
  Trace trace;
  AnomalyLog anomalies;
  IngestStats stats;
  std::vector<Nanos> running_state_time;
};

LoadedTrace load_prv(std::istream& in, std::string source_name, const IngestOptions& options = {});
LoadedTrace load_prv_file(const std::filesystem::path& path, const IngestOptions& options = {});

using PcfLabels = std::map<std::pair<std::int64_t, std::int64_t>, std::string>;

/// Reads EVENT_TYPE / VALUES blocks. Duplicate values: last one wins.
PcfLabels parse_pcf_labels(std::istream& lines, AnomalyLog* log = nullptr);

}  // namespace tempus
