#include <doctest.h>

#include <algorithm>

#include "oracle/relaxation.hpp"
#include "support.hpp"

using namespace testing;

namespace {

ClockTriple at(const RankTimeline& tl, Nanos t) {
  for (const auto& p : tl.points)
    if (p.time == t) return p.clocks;
  FAIL("no event point at ", t);
  return {};
}

void check_point_invariants(const AnnotatedTimeline& tl) {
  for (std::size_t r = 0; r < tl.ranks.size(); ++r) {
    const auto& pts = tl.ranks[r].points;
    REQUIRE(!pts.empty());
    CHECK(pts.front().time == 0);
    CHECK(pts.front().clocks == ClockTriple{});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& c = pts[i].clocks;
      CHECK(0 <= c.oom);
      CHECK(c.oom <= c.ideal);
      CHECK(c.ideal <= c.elapsed);
      if (i == 0) continue;
      const auto& p = pts[i - 1];
      CHECK(p.time < pts[i].time);
      CHECK(c.elapsed - p.clocks.elapsed == pts[i].time - p.time);
      CHECK(c.oom >= p.clocks.oom);
      CHECK(c.ideal >= p.clocks.ideal);
    }
  }
}

}  // namespace

TEST_SUITE("replay") {

TEST_CASE("single rank: compute, MPI, compute") {
  auto t = empty_trace(1, 180);
  add_region(t, 0, 100, 150);
  const auto res = replay(t);
  const auto fin = res.timeline.ranks[0].final_point().clocks;
  CHECK(fin.elapsed == 180);
  CHECK(fin.oom == 130);
  CHECK(fin.ideal == 130);
  CHECK(at(res.timeline.ranks[0], 150) == ClockTriple{150, 100, 100});
  check_point_invariants(res.timeline);
}

TEST_CASE("small message raises the receiver to the sender's clock") {
  auto t = empty_trace(2, 200);
  add_region(t, 0, 100, 110);
  add_region(t, 1, 60, 150);
  add_message(t, 0, 100, 1, 150, 1024);
  const auto res = replay(t);
  CHECK(res.anomalies.empty());
  CHECK(at(res.timeline.ranks[1], 60).ideal == 60);
  CHECK(at(res.timeline.ranks[1], 150).ideal == 100);
  CHECK(at(res.timeline.ranks[0], 110).ideal == 100);
  CHECK(res.timeline.ranks[0].final_point().clocks.ideal == 190);
  CHECK(res.timeline.ranks[1].final_point().clocks == ClockTriple{200, 110, 150});
  check_point_invariants(res.timeline);
}

TEST_CASE("rendezvous holds the sender until the receiver arrives") {
  auto t = empty_trace(2, 300);
  add_region(t, 0, 60, 130);   // large send posted early
  add_region(t, 1, 100, 130);  // receiver arrives later
  add_message(t, 0, 60, 1, 130, 1 << 20);
  SUBCASE("above the eager limit") {
    const auto res = replay(t);
    CHECK(at(res.timeline.ranks[0], 130).ideal == 100);
    CHECK(at(res.timeline.ranks[1], 130).ideal == 100);
  }
  SUBCASE("eager") {
    ReplayConfig cfg;
    cfg.eager_limit_bytes = 1 << 21;
    const auto res = replay(t, cfg);
    CHECK(at(res.timeline.ranks[0], 130).ideal == 60);
    CHECK(at(res.timeline.ranks[1], 130).ideal == 100);
  }
}

TEST_CASE("synchronize_ptp rules") {
  PtpMessage small{0, 1, 0, 0, 1024, 0, MessageStatus::valid};
  PtpMessage big{0, 1, 0, 0, 1000000, 0, MessageStatus::valid};
  const ReplayConfig cfg;
  auto s = synchronize_ptp(small, 100, 60, cfg);
  CHECK(s.receiver_exit_ideal == 100);
  CHECK(s.sender_exit_floor == 100);
  s = synchronize_ptp(big, 100, 60, cfg);
  CHECK(s.receiver_exit_ideal == 100);
  CHECK(s.sender_exit_floor == 100);
  s = synchronize_ptp(big, 60, 100, cfg);
  CHECK(s.receiver_exit_ideal == 100);
  CHECK(s.sender_exit_floor == 100);
  s = synchronize_ptp(small, 60, 100, cfg);
  CHECK(s.sender_exit_floor == 60);
  PtpMessage faulty = small;
  faulty.status = MessageStatus::faulty_local;
  CHECK_THROWS(synchronize_ptp(faulty, 1, 2, cfg));
}

TEST_CASE("synchronize_collective rules") {
  CollectiveOp op;
  op.participants.resize(3);
  const std::vector<Nanos> e{5, 7, 6};
  CHECK(synchronize_collective(op, e) == 7);
  CollectiveOp one;
  one.participants.resize(1);
  const std::vector<Nanos> e1{42};
  CHECK(synchronize_collective(one, e1) == 42);
  CHECK_THROWS(synchronize_collective(op, e1));
}

TEST_CASE("sequential collectives keep their occurrence") {
  auto t = empty_trace(2, 20);
  add_collective(t, {{0, 1, 9}, {1, 9, 9}});
  add_collective(t, {{0, 10, 12}, {1, 12, 12}});
  const auto res = replay(t);
  CHECK(res.anomalies.empty());
  CHECK(at(res.timeline.ranks[0], 9).ideal == 9);
  CHECK(at(res.timeline.ranks[1], 9).ideal == 9);
  CHECK(at(res.timeline.ranks[0], 12).ideal == 12);
  CHECK(at(res.timeline.ranks[1], 12).ideal == 12);
  REQUIRE(t.collectives.size() == 2);
  CHECK(t.collectives[1].occurrence_index == 1);
}

TEST_CASE("collective on a sub-communicator ignores non-members") {
  auto t = empty_trace(3, 100);
  t.communicators.push_back({3, {0, 1}});
  add_region(t, 2, 0, 80);
  add_collective(t, {{0, 10, 50}, {1, 50, 50}}, 3);
  const auto res = replay(t);
  CHECK(at(res.timeline.ranks[0], 50).ideal == 50);
  CHECK(res.timeline.ranks[2].final_point().clocks.ideal == 20);
}

TEST_CASE("degrade_faulty") {
  AnomalyLog log;
  PtpMessage m{0, 1, 50, 40, 8, 0, MessageStatus::valid};
  degrade_faulty(m, log);
  CHECK(m.status == MessageStatus::faulty_local);
  CHECK(log.count(AnomalyKind::reversed_ptp) == 1);
}

TEST_CASE("reversed pair and collective crossing are treated as local") {
  auto t = empty_trace(2, 100);
  add_region(t, 1, 20, 30);                       // receive completes at 30
  add_collective(t, {{0, 35, 40}, {1, 35, 40}});  // world collective
  add_region(t, 0, 45, 50);                       // send begins at 45
  add_message(t, 0, 45, 1, 30);
  CHECK(violates_causality(t, t.messages[0]));
  auto ok = empty_trace(2, 100);
  add_region(ok, 0, 10, 20);
  add_region(ok, 1, 15, 30);
  add_message(ok, 0, 10, 1, 30);
  CHECK_FALSE(violates_causality(ok, ok.messages[0]));

  SUBCASE("send after receive in time") {
    const auto res = replay(t);
    CHECK(res.anomalies.count(AnomalyKind::reversed_ptp) == 1);
    CHECK(res.message_status[0] == MessageStatus::faulty_local);
    CHECK(at(res.timeline.ranks[1], 30).ideal == 20);
    check_point_invariants(res.timeline);
  }
  SUBCASE("crossing with send_begin <= recv_end") {
    // Rank 1 completes the receive (at 50) before entering the barrier at 60,
    // rank 0 sends at 40 after leaving the barrier at 20: skewed clocks.
    auto c = empty_trace(2, 200);
    add_region(c, 1, 30, 50);
    add_collective(c, {{0, 10, 20}, {1, 60, 70}});
    add_region(c, 0, 40, 45);
    add_message(c, 0, 40, 1, 50);
    CHECK(violates_causality(c, c.messages[0]));
    const auto res = replay(c);
    CHECK(res.anomalies.count(AnomalyKind::reversed_ptp) == 1);
    check_point_invariants(res.timeline);
  }
  SUBCASE("healthy message is untouched") {
    const auto res = replay(ok);
    CHECK(res.anomalies.empty());
    CHECK(res.message_status[0] == MessageStatus::valid);
  }
}

TEST_CASE("program-order crossing on a shared communicator") {
  // recv completes in region 0 of rank 1, the send starts after both ranks
  // passed the barrier, with send_begin == recv_end.
  auto t = empty_trace(2, 100);
  add_region(t, 1, 10, 30);
  add_collective(t, {{0, 30, 30}, {1, 30, 30}});
  add_region(t, 0, 30, 40);
  add_message(t, 0, 30, 1, 30);
  const auto res = replay(t);
  // The earliest region containing the send is the barrier itself, which is
  // not after the barrier, so the message stays valid.
  CHECK(res.anomalies.empty());
}

TEST_CASE("dependency cycle is degraded, or fatal in strict mode") {
  // Rank 0 runs A then B, rank 1 runs B then A on two communicators that
  // both contain the two ranks. Only a timestamp tie lets each first
  // collective count the other rank's second one as a participant.
  auto x = empty_trace(2, 100);
  x.communicators.push_back({1, {0, 1}});
  x.communicators.push_back({2, {0, 1}});
  const auto a0 = add_region(x, 0, 10, 20, CallClass::collective);
  const auto b0 = add_region(x, 0, 20, 30, CallClass::collective);
  const auto b1 = add_region(x, 1, 10, 20, CallClass::collective);
  const auto a1 = add_region(x, 1, 20, 30, CallClass::collective);
  x.collectives.push_back({1, 0, {{0, 10, 20, a0}, {1, 20, 30, a1}}});
  x.collectives.push_back({2, 0, {{0, 20, 30, b0}, {1, 10, 20, b1}}});
  REQUIRE(validate_trace(x).empty());

  const auto degraded = replay(x);
  CHECK(degraded.anomalies.size() >= 1);
  check_point_invariants(degraded.timeline);

  ReplayConfig strict;
  strict.strict_mode = true;
  try {
    replay(x, strict);
    FAIL("strict replay should abort");
  } catch (const ReplayError& e) {
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }
}

TEST_CASE("self-synchronisation identity") {
  auto t = empty_trace(3, 1000);
  for (Rank r = 0; r < 3; ++r) {
    add_region(t, r, 100 + r * 10, 200, CallClass::other_mpi);
    add_region(t, r, 300, 450 - r * 20);
  }
  const auto res = replay(t);
  for (const auto& rank : res.timeline.ranks)
    for (const auto& p : rank.points) CHECK(p.clocks.ideal == p.clocks.oom);
}

TEST_CASE("other-MPI regions never synchronise") {
  auto t = empty_trace(2, 200);
  add_region(t, 0, 100, 110, CallClass::other_mpi);
  add_region(t, 1, 10, 150, CallClass::other_mpi);
  add_message(t, 0, 100, 1, 150);
  const auto res = replay(t);
  CHECK(at(res.timeline.ranks[1], 150).ideal == 10);
}

TEST_CASE("tied event times collapse to one point") {
  auto t = empty_trace(1, 100);
  add_region(t, 0, 10, 10);
  add_region(t, 0, 10, 20);
  add_region(t, 0, 20, 20);
  const auto res = replay(t);
  const auto& pts = res.timeline.ranks[0].points;
  REQUIRE(pts.size() == 4);  // 0, 10, 20, 100
  CHECK(pts[1].mpi_events == 3);
  CHECK(pts[2].mpi_events == 3);
  CHECK(pts[3].mpi_events == 0);
}

TEST_CASE("eager limit validation") {
  ReplayConfig cfg;
  cfg.eager_limit_bytes = -1;
  CHECK_THROWS_AS(replay(empty_trace(1, 10), cfg), ReplayError);
}

TEST_CASE("replay matches the relaxation oracle on random generated traces") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 30; ++i) {
    const auto s = random_scenario(rng, 6, 2000);
    CAPTURE(synth::scenario_to_json(s));
    const auto loaded = load_scenario(s);
    const auto res = replay(loaded.trace);
    REQUIRE(res.anomalies.empty());
    check_point_invariants(res.timeline);
    const auto oracle = oracle::relax(loaded.trace, kDefaultEagerLimitBytes);
    REQUIRE(oracle.converged);
    for (std::size_t r = 0; r < res.timeline.ranks.size(); ++r) {
      CHECK(res.timeline.ranks[r].final_point().clocks.ideal == oracle.final_ideal[r]);
      CHECK(res.timeline.ranks[r].final_point().clocks.oom == oracle.final_oom[r]);
      for (std::size_t k = 0; k < loaded.trace.regions[r].size(); ++k) {
        const auto& reg = loaded.trace.regions[r][k];
        const auto& pts = res.timeline.ranks[r].points;
        // The last point at exit_time carries the clocks after every region
        // collapsed there; compare region exits that are not tied.
        const bool tied = k + 1 < loaded.trace.regions[r].size() &&
                          loaded.trace.regions[r][k + 1].entry_time == reg.exit_time;
        if (tied) continue;
        auto it = std::find_if(pts.begin(), pts.end(), [&](const EventPoint& p) { return p.time == reg.exit_time; });
        REQUIRE(it != pts.end());
        CHECK(it->clocks.ideal == oracle.regions[r][k].exit_ideal);
      }
    }
  }
}

TEST_CASE("raising the eager limit never increases a final ideal clock") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 20; ++i) {
    auto s = random_scenario(rng, 6, 2000);
    for (auto& ph : s.phases)
      if (ph.pattern != synth::Pattern::none) ph.message_bytes = 100000;
    const auto loaded = load_scenario(s);
    ReplayConfig tight, loose;
    tight.eager_limit_bytes = 0;
    loose.eager_limit_bytes = 1 << 30;
    const auto a = replay(loaded.trace, tight);
    const auto b = replay(loaded.trace, loose);
    for (std::size_t r = 0; r < a.timeline.ranks.size(); ++r)
      CHECK(b.timeline.ranks[r].final_point().clocks.ideal <= a.timeline.ranks[r].final_point().clocks.ideal);
  }
}

TEST_CASE("replay is deterministic") {
  std::mt19937_64 rng(5);
  const auto s = random_scenario(rng, 8, 3000);
  const auto loaded = load_scenario(s);
  const auto a = replay(loaded.trace), b = replay(loaded.trace);
  for (std::size_t r = 0; r < a.timeline.ranks.size(); ++r) {
    REQUIRE(a.timeline.ranks[r].points.size() == b.timeline.ranks[r].points.size());
    for (std::size_t i = 0; i < a.timeline.ranks[r].points.size(); ++i)
      CHECK(a.timeline.ranks[r].points[i].clocks == b.timeline.ranks[r].points[i].clocks);
  }
}

}
