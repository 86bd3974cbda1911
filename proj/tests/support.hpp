#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tempus/prv_ingest.hpp"
#include "tempus/replay.hpp"
#include "tempus/report.hpp"
#include "tempus/synth.hpp"
#include "tempus/trace_model.hpp"

namespace testing {

using namespace tempus;

inline Trace empty_trace(std::int32_t ranks, Nanos total) {
  Trace t;
  t.meta.rank_count = ranks;
  t.meta.total_duration = total;
  t.regions.resize(static_cast<std::size_t>(ranks));
  return t;
}

inline std::size_t add_region(Trace& t, Rank r, Nanos entry, Nanos exit, CallClass cls = CallClass::point_to_point,
                              std::int64_t call_id = 1) {
  auto& regs = t.regions[static_cast<std::size_t>(r)];
  regs.push_back({r, entry, exit, cls, call_id, regs.size()});
  return regs.size() - 1;
}

inline void add_message(Trace& t, Rank from, Nanos send, Rank to, Nanos recv, std::int64_t bytes = 8,
                        std::int64_t tag = 0) {
  t.messages.push_back({from, to, send, recv, bytes, tag, MessageStatus::valid});
}

/// Adds a world collective; each entry is (rank, entry, exit) and a region is
/// created for it.
inline void add_collective(Trace& t, std::vector<std::tuple<Rank, Nanos, Nanos>> parts,
                           CommunicatorId comm = kWorldCommunicator) {
  CollectiveOp op;
  op.communicator_id = comm;
  std::size_t occ = 0;
  for (const auto& c : t.collectives)
    if (c.communicator_id == comm) ++occ;
  op.occurrence_index = occ;
  for (auto [r, a, b] : parts) {
    const auto seq = add_region(t, r, a, b, CallClass::collective, 10);
    op.participants.push_back({r, a, b, seq});
  }
  t.collectives.push_back(std::move(op));
}

inline LoadedTrace load_text(const std::string& prv, const std::string& name = "test.prv") {
  std::istringstream in(prv);
  return load_prv(in, name);
}

inline LoadedTrace load_scenario(const synth::Scenario& s, const synth::GeneratorOptions& opt = {}) {
  return load_text(synth::generate_trace(s, opt).prv, "generated.prv");
}

inline bool rel_close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max(std::fabs(a), std::fabs(b));
}

/// Random valid scenario with at most `max_ranks` ranks and roughly
/// `max_events` MPI event points in total.
inline synth::Scenario random_scenario(std::mt19937_64& rng, int max_ranks = 16, std::int64_t max_events = 10000) {
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  synth::Scenario s;
  s.rank_count = static_cast<std::int32_t>(pick(1, max_ranks));
  s.seed = rng();
  const int phases = static_cast<int>(pick(1, 4));
  const std::int64_t per_phase = std::max<std::int64_t>(1, max_events / (phases * s.rank_count * 6));
  for (int p = 0; p < phases; ++p) {
    synth::Phase ph;
    ph.iterations = pick(1, std::max<std::int64_t>(1, per_phase));
    ph.pattern = static_cast<synth::Pattern>(pick(0, 4));
    ph.message_bytes = ph.pattern == synth::Pattern::none ? 0 : (pick(0, 1) ? pick(1, 4096) : pick(65537, 1 << 20));
    ph.injected_wait_ns = pick(0, 2) == 0 ? 0 : pick(1, 50000);
    switch (pick(0, 3)) {
      case 0:
        ph.compute.distribution = synth::Distribution::uniform;
        ph.compute.mean_ns = pick(1000, 200000);
        break;
      case 1:
        ph.compute.distribution = synth::Distribution::linear_imbalance;
        ph.compute.mean_ns = pick(1000, 200000);
        ph.compute.max_over_mean = 1.0 + static_cast<double>(pick(0, 100)) / 100.0;
        break;
      case 2:
        ph.compute.distribution = synth::Distribution::explicit_values;
        for (int r = 0; r < s.rank_count; ++r) ph.compute.values_ns.push_back(pick(0, 200000));
        ph.compute.values_ns[0] += 1;
        break;
      default:
        ph.compute.distribution = synth::Distribution::random;
        ph.compute.min_ns = pick(0, 50000);
        ph.compute.max_ns = ph.compute.min_ns + pick(1, 150000);
        break;
    }
    s.phases.push_back(std::move(ph));
  }
  return s;
}

}  // namespace testing
