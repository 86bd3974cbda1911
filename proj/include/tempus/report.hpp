#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tempus/discretizer.hpp"
#include "tempus/metrics.hpp"
#include "tempus/prv_ingest.hpp"
#include "tempus/replay.hpp"

namespace tempus {

enum class OutputFormat { csv, json };

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInvalidConfig = 2,
  kExitUnreadableFile = 3,
  kExitMalformedTrace = 4,
  kExitStrictAbort = 5,
  kExitNoData = 6,
};

/// Anomalies were found while strict mode was on.
class StrictAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReferenceGlobal {
  double load_balance = 0;
  double serialisation = 0;
  double transfer = 0;
  double efficiency = 0;
};

struct AnalysisOptions {
  Nanos window_length = 0;
  std::uint32_t min_events = kDefaultMinEvents;
  std::int64_t eager_limit_bytes = kDefaultEagerLimitBytes;
  std::optional<Nanos> cutoff;
  bool strict = false;
};

struct RunConfig {
  std::filesystem::path trace_path;
  std::optional<std::filesystem::path> pcf_path;
  std::filesystem::path output_dir = ".";
  AnalysisOptions analysis;
  OutputFormat format = OutputFormat::csv;
  bool emit_plot = false;
  std::optional<ReferenceGlobal> reference_global;
  std::optional<TimeUnit> time_unit;
};

struct Analysis {
  TraceMeta meta;
  IngestStats stats;
  AnomalyLog anomalies;
  AnnotatedTimeline timeline;
  WindowPlan plan;
  std::vector<WindowMetrics> series;
  GlobalMetrics global;
};

/// "250ms", "1.5s", "40us", "1000ns"; a bare integer is nanoseconds.
Nanos parse_duration(std::string_view text);

/// Rejects configurations that cannot be analysed (ConfigError).
void validate_options(const AnalysisOptions& options);

/// replay -> plan_windows -> window_series -> global_metrics on a loaded trace.
Analysis analyze(LoadedTrace loaded, const AnalysisOptions& options);

std::string emit_series(std::span<const WindowMetrics> series, OutputFormat format);
std::string emit_summary_json(const Analysis& analysis, const std::optional<ReferenceGlobal>& reference);
std::string emit_summary_text(const Analysis& analysis, const std::optional<ReferenceGlobal>& reference);
std::string emit_anomalies_csv(const AnomalyLog& log);
/// Vega-Lite description plotting the series file with dashed global lines.
std::string emit_plot_spec(const Analysis& analysis, OutputFormat format);

/// Full command: analysis plus files under config.output_dir. Errors are
/// reported on `err` and mapped to an ExitCode.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace tempus
