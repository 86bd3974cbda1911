// tempus: windowed parallel-efficiency analysis of Paraver MPI traces.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tempus/report.hpp"
#include "tempus/synth.hpp"

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  unexpected failure\n"
    "  2  invalid configuration\n"
    "  3  trace or scenario file unreadable\n"
    "  4  malformed trace (bad header, rank out of range, unsupported layout)\n"
    "  5  strict mode aborted on anomalies\n"
    "  6  trace holds no analysable computation\n"
    "Environment:\n"
    "  TEMPUS_EAGER_LIMIT  default for --eager-limit-bytes\n";

std::int64_t default_eager_limit() {
  if (const char* env = std::getenv("TEMPUS_EAGER_LIMIT")) {
    try {
      return std::stoll(env);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring non-numeric TEMPUS_EAGER_LIMIT='" << env << "'\n";
    }
  }
  return tempus::kDefaultEagerLimitBytes;
}

int generate(const std::string& scenario_path, const std::string& prefix, std::int64_t eager_limit) {
  const auto scenario = tempus::synth::load_scenario_file(scenario_path);
  tempus::synth::GeneratorOptions opt;
  opt.eager_limit_bytes = eager_limit;
  {
    std::ofstream prv(prefix + ".prv", std::ios::binary);
    if (!prv) throw std::runtime_error("cannot write " + prefix + ".prv");
    tempus::synth::write_prv(scenario, prv, opt);
  }
  std::ofstream pcf(prefix + ".pcf", std::ios::binary);
  pcf << tempus::synth::pcf_text();
  return tempus::kExitOk;
}

int expected(const std::string& scenario_path) {
  const auto scenario = tempus::synth::load_scenario_file(scenario_path);
  const auto e = tempus::synth::expected_metrics(scenario);
  std::cout << fmt::format("{:<8} {:>14} {:>14} {:>12} {:>12} {:>12} {:>12}\n", "phase", "start_ns", "end_ns", "LB",
                           "Ser", "Trf", "eff");
  for (std::size_t p = 0; p < e.phases.size(); ++p) {
    const auto& ph = e.phases[p];
    std::cout << fmt::format("{:<8} {:>14} {:>14} {:>12.9g} {:>12.9g} {:>12.9g} {:>12.9g}\n", p, ph.start, ph.end,
                             ph.factors.load_balance, ph.factors.serialisation, ph.factors.transfer,
                             ph.factors.efficiency);
  }
  std::cout << fmt::format("{:<8} {:>14} {:>14} {:>12.9g} {:>12.9g} {:>12.9g} {:>12.9g}\n", "global", 0,
                           e.runtime_observed, e.global.load_balance, e.global.serialisation, e.global.transfer,
                           e.global.efficiency);
  return tempus::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Windowed parallel-efficiency analysis of Paraver MPI traces"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  tempus::RunConfig cfg;
  cfg.analysis.eager_limit_bytes = default_eager_limit();
  std::string trace_path, window_length, cutoff, format = "csv", output_dir = ".", pcf, time_unit;
  std::vector<double> reference;
  std::uint32_t min_events = tempus::kDefaultMinEvents;

  auto* analyze = app.add_subcommand("analyze", "Replay a trace and write windowed metrics");
  analyze->add_option("trace", trace_path, "Paraver .prv trace")->required();
  analyze->add_option("--window-length", window_length, "Window length with unit suffix ns/us/ms/s")->required();
  analyze->add_option("--min-events", min_events, "Minimum MPI events per rank and window (>= 3)")
      ->capture_default_str();
  analyze->add_option("--eager-limit-bytes", cfg.analysis.eager_limit_bytes, "Rendezvous threshold in bytes")
      ->capture_default_str();
  analyze->add_option("--cutoff", cutoff, "Stop the analysis at this time (duration with unit suffix)");
  analyze->add_option("--output-format", format, "Series format")->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  analyze->add_flag("--emit-plot", cfg.emit_plot, "Write a Vega-Lite plot description (plot.vl.json)");
  analyze->add_flag("--strict", cfg.analysis.strict, "Abort on any anomaly instead of degrading");
  analyze->add_option("--reference-global", reference, "Reference LB Ser Trf efficiency to compare against")
      ->expected(4);
  analyze->add_option("--output-dir", output_dir, "Directory for output files")->capture_default_str();
  analyze->add_option("--pcf", pcf, "Companion .pcf file");
  analyze->add_option("--time-unit", time_unit, "Timestamp unit when the header has no suffix")
      ->check(CLI::IsMember({"ns", "us"}));

  std::string scenario_path, prefix;
  auto* gen = app.add_subcommand("generate", "Write a synthetic trace from a scenario file");
  gen->add_option("scenario", scenario_path, "Scenario JSON")->required();
  gen->add_option("--out", prefix, "Output prefix; writes <prefix>.prv and <prefix>.pcf")->required();
  gen->add_option("--eager-limit-bytes", cfg.analysis.eager_limit_bytes, "Rendezvous threshold in bytes");

  auto* exp = app.add_subcommand("expected", "Print the closed-form metrics of a scenario");
  exp->add_option("scenario", scenario_path, "Scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : tempus::kExitInvalidConfig;
  }

  try {
    if (*gen) return generate(scenario_path, prefix, cfg.analysis.eager_limit_bytes);
    if (*exp) return expected(scenario_path);

    cfg.trace_path = trace_path;
    cfg.output_dir = output_dir;
    cfg.format = format == "json" ? tempus::OutputFormat::json : tempus::OutputFormat::csv;
    cfg.analysis.min_events = min_events;
    cfg.analysis.window_length = tempus::parse_duration(window_length);
    if (!cutoff.empty()) cfg.analysis.cutoff = tempus::parse_duration(cutoff);
    if (!pcf.empty()) cfg.pcf_path = pcf;
    if (time_unit == "ns") cfg.time_unit = tempus::TimeUnit::nanoseconds;
    if (time_unit == "us") cfg.time_unit = tempus::TimeUnit::microseconds;
    if (!reference.empty())
      cfg.reference_global = tempus::ReferenceGlobal{reference[0], reference[1], reference[2], reference[3]};
  } catch (const tempus::ConfigError& e) {
    std::cerr << "error: invalid configuration: " << e.what() << "\n";
    return tempus::kExitInvalidConfig;
  } catch (const tempus::synth::ScenarioError& e) {
    std::cerr << "error: scenario " << e.what() << "\n";
    return e.field() == "<file>" ? tempus::kExitUnreadableFile : tempus::kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tempus::kExitFailure;
  }
  return tempus::run(cfg, std::cout, std::cerr);
}
