#include "tempus/report.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

namespace tempus {

namespace {

std::string num(double v) { return fmt::format("{:.9g}", v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

std::string seconds(Nanos t) { return num(static_cast<double>(t) / 1e9); }

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

struct Ratio {
  const char* name;
  double computed;
  double reference;
};

std::vector<Ratio> compare(const GlobalMetrics& g, const ReferenceGlobal& r) {
  return {{"load_balance", g.load_balance, r.load_balance},
          {"serialisation", g.serialisation, r.serialisation},
          {"transfer", g.transfer, r.transfer},
          {"efficiency", g.efficiency, r.efficiency}};
}

const char* extension(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "json"; }

}  // namespace

Nanos parse_duration(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
  const std::string_view number = text.substr(0, i);
  const std::string_view unit = text.substr(i);
  if (number.empty()) throw ConfigError(fmt::format("invalid duration '{}'", text));

  double scale;
  if (unit.empty() || unit == "ns") scale = 1;
  else if (unit == "us") scale = 1e3;
  else if (unit == "ms") scale = 1e6;
  else if (unit == "s") scale = 1e9;
  else throw ConfigError(fmt::format("invalid duration unit in '{}' (use ns, us, ms or s)", text));

  if (number.find('.') == std::string_view::npos) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
    if (ec != std::errc{} || p != number.data() + number.size())
      throw ConfigError(fmt::format("invalid duration '{}'", text));
    return v * static_cast<std::int64_t>(scale);
  }
  double v = 0;
  try {
    v = std::stod(std::string(number));
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("invalid duration '{}'", text));
  }
  return std::llround(v * scale);
}

void validate_options(const AnalysisOptions& o) {
  if (o.window_length <= 0) throw ConfigError("window length must be positive");
  if (o.min_events < kMinEventsFloor)
    throw ConfigError(fmt::format("min-events must be at least {}", kMinEventsFloor));
  if (o.eager_limit_bytes < 0) throw ConfigError("eager limit must be non-negative");
  if (o.cutoff && *o.cutoff <= 0) throw ConfigError("cutoff must be positive");
}

Analysis analyze(LoadedTrace loaded, const AnalysisOptions& options) {
  validate_options(options);
  if (options.strict && !loaded.anomalies.empty())
    throw StrictAbort(fmt::format("{} ingest anomalies (first: {} at {})", loaded.anomalies.size(),
                                  to_string(loaded.anomalies.entries().front().kind),
                                  loaded.anomalies.entries().front().location));

  ReplayConfig rc;
  rc.eager_limit_bytes = options.eager_limit_bytes;
  rc.strict_mode = options.strict;
  ReplayResult replayed;
  try {
    replayed = replay(loaded.trace, rc);
  } catch (const ReplayError& e) {
    if (options.strict) throw StrictAbort(e.what());
    throw;
  }
  if (options.strict && !replayed.anomalies.empty())
    throw StrictAbort(fmt::format("{} replay anomalies (first: {} at {})", replayed.anomalies.size(),
                                  to_string(replayed.anomalies.entries().front().kind),
                                  replayed.anomalies.entries().front().location));

  Analysis a;
  a.meta = loaded.trace.meta;
  a.stats = loaded.stats;
  a.anomalies = std::move(loaded.anomalies);
  a.anomalies.append(replayed.anomalies);
  a.timeline = std::move(replayed.timeline);
  a.plan = plan_windows(a.timeline, options.window_length, options.min_events, options.cutoff);
  a.series = window_series(a.timeline, a.plan.windows);
  a.global = global_metrics(a.timeline, a.plan.horizon);
  return a;
}

std::string emit_series(std::span<const WindowMetrics> series, OutputFormat format) {
  fmt::memory_buffer b;
  auto out = std::back_inserter(b);
  if (format == OutputFormat::csv) {
    fmt::format_to(out, "start_ns,end_ns,start_s,end_s,merged_from,flags,load_balance,serialisation,transfer,"
                        "efficiency\n");
    for (const auto& m : series)
      fmt::format_to(out, "{},{},{},{},{},{},{},{},{},{}\n", m.window.start, m.window.end, seconds(m.window.start),
                     seconds(m.window.end), m.window.merged_from, flags_to_string(m.window.flags),
                     opt_num(m.load_balance), opt_num(m.serialisation), opt_num(m.transfer), opt_num(m.efficiency));
    return fmt::to_string(b);
  }
  auto jnum = [](const std::optional<double>& v) { return v ? num(*v) : std::string("null"); };
  fmt::format_to(out, "[");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& m = series[i];
    fmt::format_to(out,
                   "{}\n  {{\"start_ns\": {}, \"end_ns\": {}, \"start_s\": {}, \"end_s\": {}, \"merged_from\": {}, "
                   "\"flags\": \"{}\", \"load_balance\": {}, \"serialisation\": {}, \"transfer\": {}, "
                   "\"efficiency\": {}}}",
                   i ? "," : "", m.window.start, m.window.end, seconds(m.window.start), seconds(m.window.end),
                   m.window.merged_from, flags_to_string(m.window.flags), jnum(m.load_balance),
                   jnum(m.serialisation), jnum(m.transfer), jnum(m.efficiency));
  }
  fmt::format_to(out, "{}]\n", series.empty() ? "" : "\n");
  return fmt::to_string(b);
}

std::string emit_summary_json(const Analysis& a, const std::optional<ReferenceGlobal>& reference) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["source"] = a.meta.source_name;
  j["rank_count"] = a.meta.rank_count;
  j["duration_ns"] = a.meta.total_duration;
  j["horizon_ns"] = a.plan.horizon;
  j["windows"] = {{"requested_length_ns", a.plan.requested_length},
                  {"base_length_ns", a.plan.base_length},
                  {"doublings", a.plan.doublings},
                  {"count", a.series.size()}};
  j["global"] = {{"load_balance", a.global.load_balance},
                 {"serialisation", a.global.serialisation},
                 {"transfer", a.global.transfer},
                 {"efficiency", a.global.efficiency}};
  j["t_compute_ns"] = a.global.t_compute;
  j["runtime_ideal_ns"] = a.global.runtime_ideal;
  j["runtime_observed_ns"] = a.global.runtime_observed;
  ordered_json counts = ordered_json::object();
  for (std::size_t k = 0; k < kAnomalyKindCount; ++k) {
    const auto kind = static_cast<AnomalyKind>(k);
    counts[to_string(kind)] = a.anomalies.count(kind);
  }
  j["anomalies"] = counts;
  j["ingest"] = {{"records", a.stats.records},
                 {"consumed", a.stats.consumed},
                 {"ignored", a.stats.ignored},
                 {"rejected", a.stats.rejected}};
  if (reference) {
    ordered_json cmp = ordered_json::object();
    for (const auto& r : compare(a.global, *reference))
      cmp[r.name] = {{"computed", r.computed}, {"reference", r.reference}, {"difference", r.computed - r.reference}};
    j["reference_comparison"] = cmp;
  }
  return j.dump(2) + "\n";
}

std::string emit_summary_text(const Analysis& a, const std::optional<ReferenceGlobal>& reference) {
  fmt::memory_buffer b;
  auto out = std::back_inserter(b);
  fmt::format_to(out, "trace        {}\n", a.meta.source_name);
  fmt::format_to(out, "ranks        {}\n", a.meta.rank_count);
  fmt::format_to(out, "duration     {} s (analysed to {} s)\n", seconds(a.meta.total_duration), seconds(a.plan.horizon));
  fmt::format_to(out, "windows      {} (base length {} s, {} doublings)\n", a.series.size(),
                 seconds(a.plan.base_length), a.plan.doublings);
  fmt::format_to(out, "runtime      observed {} s, ideal network {} s\n", seconds(a.global.runtime_observed),
                 seconds(a.global.runtime_ideal));
  fmt::format_to(out, "load balance {:.4f}\nserialisation {:.4f}\ntransfer     {:.4f}\nefficiency   {:.4f}\n",
                 a.global.load_balance, a.global.serialisation, a.global.transfer, a.global.efficiency);
  if (reference)
    for (const auto& r : compare(a.global, *reference))
      fmt::format_to(out, "  {:<14} reference {:.4f}  difference {:+.4f}\n", r.name, r.reference,
                     r.computed - r.reference);
  if (a.anomalies.empty()) {
    fmt::format_to(out, "anomalies    none\n");
  } else {
    fmt::format_to(out, "anomalies    {}\n", a.anomalies.size());
    for (std::size_t k = 0; k < kAnomalyKindCount; ++k) {
      const auto kind = static_cast<AnomalyKind>(k);
      if (a.anomalies.count(kind)) fmt::format_to(out, "  {:<24} {}\n", to_string(kind), a.anomalies.count(kind));
    }
  }
  return fmt::to_string(b);
}

std::string emit_anomalies_csv(const AnomalyLog& log) {
  std::string s = "kind,location,detail\n";
  for (const auto& e : log.entries())
    s += fmt::format("{},{},{}\n", to_string(e.kind), csv_quote(e.location), csv_quote(e.detail));
  return s;
}

std::string emit_plot_spec(const Analysis& a, OutputFormat format) {
  using nlohmann::ordered_json;
  const ordered_json metrics = {"load_balance", "serialisation", "transfer", "efficiency"};
  ordered_json globals = ordered_json::array();
  globals.push_back({{"metric", "load_balance"}, {"value", a.global.load_balance}});
  globals.push_back({{"metric", "serialisation"}, {"value", a.global.serialisation}});
  globals.push_back({{"metric", "transfer"}, {"value", a.global.transfer}});
  globals.push_back({{"metric", "efficiency"}, {"value", a.global.efficiency}});

  ordered_json data = {{"url", fmt::format("windows.{}", extension(format))}};
  if (format == OutputFormat::csv) data["format"] = {{"type", "csv"}};
  else data["format"] = {{"type", "json"}};

  const ordered_json color = {{"field", "metric"}, {"type", "nominal"}, {"sort", metrics}};
  ordered_json series_layer = {
      {"data", data},
      {"transform",
       {{{"fold", metrics}, {"as", {"metric", "value"}}},
        {{"filter", "datum.value !== null && datum.value !== ''"}},
        {{"calculate", "(toNumber(datum.start_s) + toNumber(datum.end_s)) / 2"}, {"as", "mid_s"}}}},
      {"mark", {{"type", "line"}, {"point", true}}},
      {"encoding",
       {{"x", {{"field", "mid_s"}, {"type", "quantitative"}, {"title", "time (s)"}}},
        {"y", {{"field", "value"}, {"type", "quantitative"}, {"scale", {{"domain", {0, 1}}}}}},
        {"color", color}}}};
  ordered_json rule_layer = {{"data", {{"values", globals}}},
                             {"mark", {{"type", "rule"}, {"strokeDash", {6, 4}}}},
                             {"encoding", {{"y", {{"field", "value"}, {"type", "quantitative"}}}, {"color", color}}}};

  ordered_json spec = {{"$schema", "https://vega.github.io/schema/vega-lite/v5.json"},
                       {"title", a.meta.source_name},
                       {"width", 800},
                       {"height", 300},
                       {"layer", {series_layer, rule_layer}}};
  return spec.dump(2) + "\n";
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    validate_options(config.analysis);
    IngestOptions io;
    io.time_unit_override = config.time_unit;
    LoadedTrace loaded = load_prv_file(config.trace_path, io);

    if (config.pcf_path) {
      std::ifstream pcf(*config.pcf_path);
      if (!pcf) throw TraceIoError("cannot open " + config.pcf_path->string());
      parse_pcf_labels(pcf, &loaded.anomalies);
    }

    const Analysis a = analyze(std::move(loaded), config.analysis);

    std::filesystem::create_directories(config.output_dir);
    const auto dir = config.output_dir;
    write_file(dir / fmt::format("windows.{}", extension(config.format)), emit_series(a.series, config.format));
    write_file(dir / "summary.json", emit_summary_json(a, config.reference_global));
    write_file(dir / "anomalies.csv", emit_anomalies_csv(a.anomalies));
    if (config.emit_plot) write_file(dir / "plot.vl.json", emit_plot_spec(a, config.format));
    out << emit_summary_text(a, config.reference_global);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: invalid configuration: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const TraceIoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUnreadableFile;
  } catch (const IngestError& e) {
    err << "error: malformed trace: " << e.what() << "\n";
    return kExitMalformedTrace;
  } catch (const StrictAbort& e) {
    err << "error: strict mode: " << e.what() << "\n";
    return kExitStrictAbort;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNoData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace tempus
