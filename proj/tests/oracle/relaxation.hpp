#pragma once

#include <vector>

#include "tempus/trace_model.hpp"

namespace oracle {

struct RegionClocks {
  tempus::Nanos entry_ideal = 0;
  tempus::Nanos exit_ideal = 0;
};

struct RelaxationResult {
  std::vector<std::vector<RegionClocks>> regions;
  std::vector<tempus::Nanos> final_ideal;
  std::vector<tempus::Nanos> final_oom;
  tempus::Nanos runtime_ideal = 0;
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Ideal-network replay by repeated relaxation: every constraint is applied to
/// every region until nothing changes. Quadratic but has no scheduling logic,
/// so it checks the topological replay independently. Messages flagged
/// faulty in `skip_message` are ignored.
RelaxationResult relax(const tempus::Trace& trace, std::int64_t eager_limit_bytes,
                       const std::vector<bool>& skip_message = {});

}  // namespace oracle
