#include "tempus/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace tempus::synth {

namespace {

constexpr std::int64_t kP2pType = 50000001;
constexpr std::int64_t kCollectiveType = 50000002;
constexpr std::int64_t kOtherType = 50000003;
constexpr std::int64_t kCommType = 50100004;

// MPI call codes written as event values.
constexpr std::int64_t kSend = 1;
constexpr std::int64_t kRecv = 2;
constexpr std::int64_t kWaitall = 6;
constexpr std::int64_t kBarrier = 8;
constexpr std::int64_t kAllreduce = 10;
constexpr std::int64_t kSendrecv = 41;
constexpr std::int64_t kCommRank = 19;

constexpr std::int64_t kRunningState = 1;

Pattern pattern_from(const std::string& s) {
  if (s == "none") return Pattern::none;
  if (s == "ring_exchange") return Pattern::ring_exchange;
  if (s == "neighbor_stencil") return Pattern::neighbor_stencil;
  if (s == "allreduce") return Pattern::allreduce;
  if (s == "serial_chain") return Pattern::serial_chain;
  throw ScenarioError("pattern", "unknown pattern '" + s + "'");
}

const char* to_string(Distribution d) {
  switch (d) {
    case Distribution::uniform: return "uniform";
    case Distribution::linear_imbalance: return "linear_imbalance";
    case Distribution::explicit_values: return "explicit";
    case Distribution::random: return "random";
  }
  return "uniform";
}

Distribution distribution_from(const std::string& s) {
  if (s == "uniform") return Distribution::uniform;
  if (s == "linear_imbalance") return Distribution::linear_imbalance;
  if (s == "explicit") return Distribution::explicit_values;
  if (s == "random") return Distribution::random;
  throw ScenarioError("compute.distribution", "unknown distribution '" + s + "'");
}

Nanos max_of(const std::vector<Nanos>& v) { return *std::max_element(v.begin(), v.end()); }
Nanos sum_of(const std::vector<Nanos>& v) { return std::accumulate(v.begin(), v.end(), Nanos{0}); }

struct PhaseShape {
  Nanos ideal;
  Nanos span;
};

PhaseShape phase_shape(const Phase& ph, const std::vector<Nanos>& c, std::int32_t P) {
  const Nanos N = ph.iterations;
  const Nanos w = ph.injected_wait_ns;
  if (ph.pattern == Pattern::serial_chain) return {N * sum_of(c), N * (sum_of(c) + P * w)};
  return {N * max_of(c), N * (max_of(c) + w)};
}

Factors factors_of(const std::vector<Nanos>& t_compute, Nanos ideal, Nanos observed) {
  const double P = static_cast<double>(t_compute.size());
  const double sum = static_cast<double>(sum_of(t_compute));
  const double mx = static_cast<double>(max_of(t_compute));
  Factors f;
  f.load_balance = sum / (P * mx);
  f.serialisation = mx / static_cast<double>(ideal);
  f.transfer = static_cast<double>(ideal) / static_cast<double>(observed);
  f.efficiency = sum / (P * static_cast<double>(observed));
  return f;
}

/// One buffered record; sorted by key within a phase before writing.
struct Rec {
  Nanos key;
  std::uint64_t seq;
  char kind;
  std::uint8_t n;
  std::array<std::int64_t, 14> f;
};

class Writer {
 public:
  Writer(std::ostream& out, const GeneratorOptions& opt) : out_(out), opt_(opt) {}

  void state(std::int32_t r, Nanos begin, Nanos end) {
    if (!opt_.emit_states || end <= begin) return;
    push('1', begin, {r + 1, 1, r + 1, 1, begin, end, kRunningState}, 7);
  }
  void enter(std::int32_t r, Nanos t, std::int64_t type, std::int64_t value) {
    push('2', t, {r + 1, 1, r + 1, 1, t, type, value}, 7);
  }
  void enter_collective(std::int32_t r, Nanos t, std::int64_t value, CommunicatorId comm) {
    push('2', t, {r + 1, 1, r + 1, 1, t, kCollectiveType, value, kCommType, comm}, 9);
  }
  void leave(std::int32_t r, Nanos t, std::int64_t type) { push('2', t, {r + 1, 1, r + 1, 1, t, type, 0}, 7); }
  void region(std::int32_t r, Nanos a, Nanos b, std::int64_t type, std::int64_t value) {
    enter(r, a, type, value);
    leave(r, b, type);
  }
  void message(std::int32_t s, Nanos send, std::int32_t d, Nanos posted, Nanos done, std::int64_t bytes,
               std::int64_t tag) {
    push('3', send, {s + 1, 1, s + 1, 1, send, send, d + 1, 1, d + 1, 1, posted, done, bytes, tag}, 14);
  }

  /// Writes every buffered record with key < watermark. The caller
  /// guarantees no later record has a smaller key, so output order matches a
  /// single sort of the whole phase.
  void flush_before(Nanos watermark) {
    if (buf_.size() < kFlushRecords) return;
    std::stable_sort(buf_.begin(), buf_.end(), [](const Rec& a, const Rec& b) { return a.key < b.key; });
    const auto cut = std::partition_point(buf_.begin(), buf_.end(), [&](const Rec& r) { return r.key < watermark; });
    emit(buf_.begin(), cut);
    buf_.erase(buf_.begin(), cut);
    floor_ = watermark;
  }

  void flush() {
    std::stable_sort(buf_.begin(), buf_.end(), [](const Rec& a, const Rec& b) { return a.key < b.key; });
    emit(buf_.begin(), buf_.end());
    buf_.clear();
  }

 private:
  static constexpr std::size_t kFlushRecords = 1u << 16;

  void emit(std::vector<Rec>::const_iterator first, std::vector<Rec>::const_iterator last) {
    fmt::memory_buffer text;
    for (auto it = first; it != last; ++it) {
      text.push_back(it->kind);
      for (std::uint8_t i = 0; i < it->n; ++i) fmt::format_to(std::back_inserter(text), ":{}", it->f[i]);
      text.push_back('\n');
      if (text.size() > (1u << 20)) {
        out_.write(text.data(), static_cast<std::streamsize>(text.size()));
        text.clear();
      }
    }
    out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  }

  void push(char kind, Nanos key, std::initializer_list<std::int64_t> fields, std::uint8_t n) {
    if (key < floor_) throw std::logic_error("synth: record precedes an already written watermark");
    Rec r{key, seq_++, kind, n, {}};
    std::copy(fields.begin(), fields.end(), r.f.begin());
    buf_.push_back(r);
  }

  std::ostream& out_;
  GeneratorOptions opt_;
  std::vector<Rec> buf_;
  std::uint64_t seq_ = 0;
  Nanos floor_ = 0;
};

/// Physical execution of one phase starting with every rank at `t0`.
/// Returns the common time at which the closing barrier exits.
Nanos simulate_phase(Writer& wr, const Phase& ph, const std::vector<Nanos>& c, std::int32_t P, Nanos t0,
                     std::int64_t eager_limit, std::int64_t& tag) {
  const auto Pu = static_cast<std::size_t>(P);
  const Nanos w = ph.injected_wait_ns;
  const bool big = ph.message_bytes > eager_limit;
  std::vector<Nanos> now(Pu, t0), arrive(Pu), leave(Pu);
  auto left = [P](std::int32_t i) { return (i + P - 1) % P; };
  auto right = [P](std::int32_t i) { return (i + 1) % P; };

  Pattern pattern = ph.pattern;
  if (P == 1 && pattern == Pattern::serial_chain) pattern = Pattern::none;

  for (std::int64_t it = 0; it < ph.iterations; ++it, ++tag) {
    switch (pattern) {
      case Pattern::none:
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          const Nanos a = now[iu] + c[iu];
          wr.state(i, now[iu], a);
          wr.region(i, a, a + w, kOtherType, kCommRank);
          now[iu] = a + w;
        }
        break;

      case Pattern::allreduce: {
        Nanos latest = 0;
        for (std::size_t i = 0; i < Pu; ++i) {
          arrive[i] = now[i] + c[i];
          latest = std::max(latest, arrive[i]);
        }
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          wr.state(i, now[iu], arrive[iu]);
          wr.enter_collective(i, arrive[iu], kAllreduce, kWorldCommunicator);
          wr.leave(i, latest + w, kCollectiveType);
          now[iu] = latest + w;
        }
        break;
      }

      case Pattern::ring_exchange: {
        for (std::size_t i = 0; i < Pu; ++i) arrive[i] = now[i] + c[i];
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          Nanos ready = arrive[iu];
          if (P > 1) {
            ready = std::max(ready, arrive[static_cast<std::size_t>(left(i))]);
            if (big) ready = std::max(ready, arrive[static_cast<std::size_t>(right(i))]);
          }
          leave[iu] = ready + w;
        }
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          wr.state(i, now[iu], arrive[iu]);
          wr.region(i, arrive[iu], leave[iu], kP2pType, kSendrecv);
          if (P > 1) {
            const auto ru = static_cast<std::size_t>(right(i));
            wr.message(i, arrive[iu], right(i), arrive[ru], leave[ru], ph.message_bytes, tag);
          }
          now[iu] = leave[iu];
        }
        break;
      }

      case Pattern::neighbor_stencil: {
        for (std::size_t i = 0; i < Pu; ++i) arrive[i] = now[i] + c[i];
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          Nanos ready = arrive[iu];
          if (i > 0) ready = std::max(ready, arrive[iu - 1]);
          if (i + 1 < P) ready = std::max(ready, arrive[iu + 1]);
          leave[iu] = ready + w;
        }
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          const Nanos a = arrive[iu];
          wr.state(i, now[iu], a);
          // Posting calls are folded into the completing wait so that every
          // halo message starts and ends inside one region per rank.
          wr.region(i, a, leave[iu], kP2pType, kWaitall);
          for (std::int32_t j : {i - 1, i + 1}) {
            if (j < 0 || j >= P) continue;
            const auto ju = static_cast<std::size_t>(j);
            wr.message(i, a, j, arrive[ju], leave[ju], ph.message_bytes, tag);
          }
          now[iu] = leave[iu];
        }
        break;
      }

      case Pattern::serial_chain: {
        // Token ring: rank 0 computes and sends, every other rank receives,
        // computes and forwards; rank 0 closes the iteration by receiving.
        Nanos token = 0;
        for (std::int32_t i = 0; i < P; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          Nanos start = now[iu];
          Nanos posted = 0, done = 0;
          if (i > 0) {
            posted = now[iu];
            done = std::max(posted, token) + w;
            wr.region(i, posted, done, kP2pType, kRecv);
            start = done;
          }
          const Nanos send = start + c[iu];
          wr.state(i, start, send);
          wr.region(i, send, send, kP2pType, kSend);
          if (i > 0) {
            // message (i-1) -> i, recorded once the receive window is known
            wr.message(i - 1, token, i, posted, done, ph.message_bytes, tag);
          }
          token = send;
          now[iu] = send;
        }
        const Nanos posted = now[0];
        const Nanos done = std::max(posted, token) + w;
        wr.region(0, posted, done, kP2pType, kRecv);
        wr.message(P - 1, token, 0, posted, done, ph.message_bytes, tag);
        now[0] = done;
        break;
      }
    }
    wr.flush_before(*std::min_element(now.begin(), now.end()));
  }

  const Nanos end = *std::max_element(now.begin(), now.end());
  for (std::int32_t i = 0; i < P; ++i) {
    wr.enter_collective(i, now[static_cast<std::size_t>(i)], kBarrier, kWorldCommunicator);
    wr.leave(i, end, kCollectiveType);
  }
  return end;
}

}  // namespace

const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::none: return "none";
    case Pattern::ring_exchange: return "ring_exchange";
    case Pattern::neighbor_stencil: return "neighbor_stencil";
    case Pattern::allreduce: return "allreduce";
    case Pattern::serial_chain: return "serial_chain";
  }
  return "none";
}

void validate_scenario(const Scenario& s) {
  if (s.rank_count < 1) throw ScenarioError("rank_count", "must be >= 1");
  if (s.phases.empty()) throw ScenarioError("phases", "at least one phase is required");
  for (std::size_t p = 0; p < s.phases.size(); ++p) {
    const auto& ph = s.phases[p];
    const auto field = [p](const char* name) { return fmt::format("phases[{}].{}", p, name); };
    if (ph.iterations < 1) throw ScenarioError(field("iterations"), "must be >= 1");
    if (ph.message_bytes < 0) throw ScenarioError(field("message_bytes"), "must be >= 0");
    if (ph.injected_wait_ns < 0) throw ScenarioError(field("injected_wait_ns"), "must be >= 0");
    if (ph.pattern == Pattern::none && ph.message_bytes != 0)
      throw ScenarioError(field("message_bytes"), "pattern none carries no messages");
    const auto& c = ph.compute;
    switch (c.distribution) {
      case Distribution::uniform:
        if (c.mean_ns < 0) throw ScenarioError(field("compute.mean_ns"), "must be >= 0");
        break;
      case Distribution::linear_imbalance:
        if (c.mean_ns <= 0) throw ScenarioError(field("compute.mean_ns"), "must be > 0");
        if (!(c.max_over_mean >= 1.0 && c.max_over_mean <= 2.0))
          throw ScenarioError(field("compute.max_over_mean"), "must lie in [1, 2]");
        break;
      case Distribution::explicit_values:
        if (c.values_ns.size() != static_cast<std::size_t>(s.rank_count))
          throw ScenarioError(field("compute.values_ns"), "needs one value per rank");
        for (Nanos v : c.values_ns)
          if (v < 0) throw ScenarioError(field("compute.values_ns"), "values must be >= 0");
        break;
      case Distribution::random:
        if (c.min_ns < 0 || c.max_ns < c.min_ns) throw ScenarioError(field("compute"), "need 0 <= min_ns <= max_ns");
        break;
    }
  }
  const auto compute = resolve_compute(s);
  for (std::size_t p = 0; p < s.phases.size(); ++p) {
    const auto shape = phase_shape(s.phases[p], compute[p], s.rank_count);
    if (shape.span <= 0) throw ScenarioError(fmt::format("phases[{}]", p), "phase duration must be positive");
  }
}

std::vector<std::vector<Nanos>> resolve_compute(const Scenario& s) {
  std::mt19937_64 rng(s.seed);
  const auto P = static_cast<std::size_t>(std::max(s.rank_count, 1));
  std::vector<std::vector<Nanos>> out;
  for (const auto& ph : s.phases) {
    const auto& c = ph.compute;
    std::vector<Nanos> v(P, c.mean_ns);
    switch (c.distribution) {
      case Distribution::uniform: break;
      case Distribution::linear_imbalance: {
        const Nanos hi = std::llround(c.max_over_mean * static_cast<double>(c.mean_ns));
        const Nanos lo = 2 * c.mean_ns - hi;
        for (std::size_t i = 0; i < P && P > 1; ++i)
          v[i] = lo + (hi - lo) * static_cast<Nanos>(i) / static_cast<Nanos>(P - 1);
        break;
      }
      case Distribution::explicit_values:
        v = c.values_ns;
        v.resize(P, 0);
        break;
      case Distribution::random: {
        std::uniform_int_distribution<Nanos> dist(c.min_ns, c.max_ns);
        for (auto& x : v) x = dist(rng);
        break;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

Scenario parse_scenario(std::string_view json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("<document>", e.what());
  }
  auto need = [](const json& o, const char* key, const std::string& where) -> const json& {
    if (!o.contains(key)) throw ScenarioError(where + key, "missing");
    return o.at(key);
  };
  Scenario s;
  try {
    s.rank_count = need(j, "rank_count", "").get<std::int32_t>();
    s.seed = j.value("seed", std::uint64_t{0});
    const auto& phases = need(j, "phases", "");
    if (!phases.is_array()) throw ScenarioError("phases", "must be an array");
    for (std::size_t p = 0; p < phases.size(); ++p) {
      const auto& pj = phases[p];
      const std::string where = fmt::format("phases[{}].", p);
      Phase ph;
      ph.name = pj.value("name", std::string{});
      ph.iterations = need(pj, "iterations", where).get<std::int64_t>();
      ph.pattern = pattern_from(pj.value("pattern", std::string{"none"}));
      ph.message_bytes = pj.value("message_bytes", std::int64_t{0});
      ph.injected_wait_ns = pj.value("injected_wait_ns", Nanos{0});
      const auto& cj = need(pj, "compute", where);
      ph.compute.distribution = distribution_from(cj.value("distribution", std::string{"uniform"}));
      ph.compute.mean_ns = cj.value("mean_ns", Nanos{0});
      ph.compute.max_over_mean = cj.value("max_over_mean", 1.0);
      ph.compute.values_ns = cj.value("values_ns", std::vector<Nanos>{});
      ph.compute.min_ns = cj.value("min_ns", Nanos{0});
      ph.compute.max_ns = cj.value("max_ns", Nanos{0});
      s.phases.push_back(std::move(ph));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError("<document>", e.what());
  }
  validate_scenario(s);
  return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("<file>", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["rank_count"] = s.rank_count;
  j["seed"] = s.seed;
  j["phases"] = ordered_json::array();
  for (const auto& ph : s.phases) {
    ordered_json pj;
    if (!ph.name.empty()) pj["name"] = ph.name;
    pj["iterations"] = ph.iterations;
    pj["pattern"] = to_string(ph.pattern);
    pj["message_bytes"] = ph.message_bytes;
    pj["injected_wait_ns"] = ph.injected_wait_ns;
    ordered_json cj;
    cj["distribution"] = to_string(ph.compute.distribution);
    switch (ph.compute.distribution) {
      case Distribution::uniform: cj["mean_ns"] = ph.compute.mean_ns; break;
      case Distribution::linear_imbalance:
        cj["mean_ns"] = ph.compute.mean_ns;
        cj["max_over_mean"] = ph.compute.max_over_mean;
        break;
      case Distribution::explicit_values: cj["values_ns"] = ph.compute.values_ns; break;
      case Distribution::random:
        cj["min_ns"] = ph.compute.min_ns;
        cj["max_ns"] = ph.compute.max_ns;
        break;
    }
    pj["compute"] = std::move(cj);
    j["phases"].push_back(std::move(pj));
  }
  return j.dump(2) + "\n";
}

ExpectedMetrics expected_metrics(const Scenario& s) {
  validate_scenario(s);
  const auto compute = resolve_compute(s);
  const auto P = static_cast<std::size_t>(s.rank_count);
  ExpectedMetrics e;
  e.t_compute.assign(P, 0);
  Nanos t = 0;
  for (std::size_t p = 0; p < s.phases.size(); ++p) {
    const auto& ph = s.phases[p];
    const auto shape = phase_shape(ph, compute[p], s.rank_count);
    PhaseExpectation pe;
    pe.start = t;
    pe.end = t + shape.span;
    pe.ideal = shape.ideal;
    pe.t_compute.resize(P);
    for (std::size_t i = 0; i < P; ++i) {
      pe.t_compute[i] = ph.iterations * compute[p][i];
      e.t_compute[i] += pe.t_compute[i];
    }
    if (max_of(pe.t_compute) > 0) pe.factors = factors_of(pe.t_compute, pe.ideal, shape.span);
    else pe.factors = Factors{0, 0, 0, 0};
    e.runtime_ideal += shape.ideal;
    t = pe.end;
    e.phases.push_back(std::move(pe));
  }
  e.runtime_observed = t;
  if (max_of(e.t_compute) > 0) e.global = factors_of(e.t_compute, e.runtime_ideal, e.runtime_observed);
  else e.global = Factors{0, 0, 0, 0};
  return e;
}

void write_prv(const Scenario& s, std::ostream& out, const GeneratorOptions& options) {
  const auto expected = expected_metrics(s);
  const auto compute = resolve_compute(s);
  const std::int32_t P = s.rank_count;

  std::string tasks;
  for (std::int32_t i = 0; i < P; ++i) tasks += (i ? ",1:1" : "1:1");
  out << fmt::format("#Paraver (01/01/25 at 00:00):{}_ns:1({}):1:{}({})\n", expected.runtime_observed, P, P, tasks);

  Writer wr(out, options);
  Nanos t = 0;
  std::int64_t tag = 1;
  for (std::size_t p = 0; p < s.phases.size(); ++p) {
    t = simulate_phase(wr, s.phases[p], compute[p], P, t, options.eager_limit_bytes, tag);
    wr.flush();
    if (t != expected.phases[p].end)
      throw std::logic_error(fmt::format("phase {} simulated end {} differs from closed form {}", p, t,
                                         expected.phases[p].end));
  }
}

std::string pcf_text() {
  return fmt::format(
      "DEFAULT_OPTIONS\n\nLEVEL               THREAD\nUNITS               NANOSEC\n\n"
      "STATES\n0    Idle\n1    Running\n\n"
      "EVENT_TYPE\n0    {}    MPI Point-to-point\nVALUES\n0   Outside MPI\n{}   MPI_Send\n{}   MPI_Recv\n"
      "{}   MPI_Waitall\n{}   MPI_Sendrecv\n\n"
      "EVENT_TYPE\n0    {}    MPI Collective Comm\nVALUES\n0   Outside MPI\n{}   MPI_Barrier\n{}   MPI_Allreduce\n\n"
      "EVENT_TYPE\n0    {}    MPI Other\nVALUES\n0   Outside MPI\n{}   MPI_Comm_rank\n\n"
      "EVENT_TYPE\n0    {}    MPI Communicator\n\n",
      kP2pType, kSend, kRecv, kWaitall, kSendrecv, kCollectiveType, kBarrier, kAllreduce, kOtherType,
      kCommRank, kCommType);
}

GeneratedTrace generate_trace(const Scenario& s, const GeneratorOptions& options) {
  std::ostringstream prv;
  write_prv(s, prv, options);
  return {prv.str(), pcf_text()};
}

}  // namespace tempus::synth
