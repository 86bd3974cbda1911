#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tempus/trace_model.hpp"

namespace tempus::synth {

enum class Pattern { none, ring_exchange, neighbor_stencil, allreduce, serial_chain };

const char* to_string(Pattern p);

enum class Distribution { uniform, linear_imbalance, explicit_values, random };

/// Per-rank compute time of one iteration. The value drawn for a rank is
/// constant across the iterations of a phase.
struct ComputeSpec {
  Distribution distribution = Distribution::uniform;
  Nanos mean_ns = 0;            // uniform, linear_imbalance
  double max_over_mean = 1.0;   // linear_imbalance, in [1, 2]
  std::vector<Nanos> values_ns; // explicit_values, one per rank
  Nanos min_ns = 0;             // random
  Nanos max_ns = 0;             // random
};

struct Phase {
  std::string name;
  std::int64_t iterations = 1;
  ComputeSpec compute;
  Pattern pattern = Pattern::none;
  std::int64_t message_bytes = 0;
  /// Extra time every communication region spends in the recorded trace;
  /// absent from the ideal network.
  Nanos injected_wait_ns = 0;
};

struct Scenario {
  std::int32_t rank_count = 1;
  std::vector<Phase> phases;
  std::uint64_t seed = 0;
};

class ScenarioError : public std::invalid_argument {
 public:
  ScenarioError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

void validate_scenario(const Scenario& scenario);

/// Resolved compute time per phase and rank (random draws use the seed).
std::vector<std::vector<Nanos>> resolve_compute(const Scenario& scenario);

Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario_file(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);

struct GeneratorOptions {
  /// Messages above this size are simulated with rendezvous coupling.
  std::int64_t eager_limit_bytes = 65536;
  bool emit_states = true;
};

struct GeneratedTrace {
  std::string prv;
  std::string pcf;
};

/// Streams the .prv records phase by phase (each phase sorted by time).
void write_prv(const Scenario& scenario, std::ostream& out, const GeneratorOptions& options = {});
std::string pcf_text();
GeneratedTrace generate_trace(const Scenario& scenario, const GeneratorOptions& options = {});

struct Factors {
  double load_balance = 1.0;
  double serialisation = 1.0;
  double transfer = 1.0;
  double efficiency = 1.0;
};

struct PhaseExpectation {
  Nanos start = 0;
  Nanos end = 0;
  Nanos ideal = 0;
  std::vector<Nanos> t_compute;
  Factors factors;
};

struct ExpectedMetrics {
  std::vector<PhaseExpectation> phases;
  std::vector<Nanos> t_compute;
  Nanos runtime_ideal = 0;
  Nanos runtime_observed = 0;
  Factors global;
};

/// Closed-form factors from the construction. Every phase ends in a world
/// barrier, so phases compose additively:
///   ideal = N * max(c)  and  span = N * (max(c) + w)  for none, allreduce,
///                                                     ring and stencil;
///   ideal = N * sum(c)  and  span = N * (sum(c) + P*w) for serial_chain.
ExpectedMetrics expected_metrics(const Scenario& scenario);

}  // namespace tempus::synth
