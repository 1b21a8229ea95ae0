#include <doctest.h>

#include <random>

#include "e2es/error.hpp"
#include "e2es/ran_nssmf.hpp"
#include "e2es/ran_sim.hpp"
#include "partition_oracle.hpp"
#include "support.hpp"

using namespace e2es;

TEST_SUITE("test_ran_nssmf") {

namespace {

CellState cell_with(std::map<std::string, RanRequirement> slices) {
  CellState c;
  c.enb_id = "enb-1";
  c.total_rrb = 100;
  c.default_slice = "default";
  c.participating_slices = std::move(slices);
  return c;
}

void check_feasible(const RanPartition& p, const CellState& c, double floor) {
  double sum = 0;
  for (const auto& [id, s] : p.shares) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0 + 1e-12);
    sum += s;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& [id, r] : c.participating_slices) {
    REQUIRE(p.shares.count(id));
    CHECK(p.shares.at(id) >= r.min_rrb_fraction - 1e-12);
    CHECK((r.latency_class == LatencyClass::Strict) == (p.priority_slices.count(id) == 1));
  }
  CHECK(p.shares.at(c.default_slice) >= (c.participating_slices.empty() ? 1.0 : floor) - 1e-12);
}

}  // namespace

TEST_CASE("no dedicated slices gives the default slice everything") {
  auto p = compute_partition(cell_with({}), 0.1);
  CHECK(p.shares == std::map<std::string, double>{{"default", 1.0}});
}

TEST_CASE("floor 0.2, A(min 0.1, w 1), B(min 0, w 3)") {
  auto c = cell_with({{"A", {0.1, 1.0, LatencyClass::Relaxed, 0}}, {"B", {0.0, 3.0, LatencyClass::Relaxed, 0}}});
  auto p = compute_partition(c, 0.2);
  // Hand arithmetic: residual 1 - 0.2 - 0.1 = 0.7, split 1:3.
  CHECK(p.shares.at("default") == doctest::Approx(0.2));
  CHECK(p.shares.at("A") == doctest::Approx(0.1 + 0.7 * 0.25));
  CHECK(p.shares.at("B") == doctest::Approx(0.7 * 0.75));
}

TEST_CASE("over-subscribed minimums are infeasible") {
  auto c = cell_with({{"A", {0.4, 1, LatencyClass::Relaxed, 0}},
                      {"B", {0.3, 1, LatencyClass::Relaxed, 0}},
                      {"C", {0.25, 1, LatencyClass::Relaxed, 0}}});
  try {
    compute_partition(c, 0.2);
    FAIL("expected INFEASIBLE");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("feasibility closure over random requirement sets") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    auto inst = test::random_instance(rng);
    auto c = inst.cell();
    check_feasible(compute_partition(c, inst.floor), c, inst.floor);
  }
}

TEST_CASE("weights are scale invariant") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    auto inst = test::random_instance(rng);
    auto c = inst.cell();
    auto base = compute_partition(c, inst.floor);
    const double k = 0.01 + (rng() % 1000) / 7.0;
    for (auto& [id, r] : c.participating_slices) r.weight *= k;
    auto scaled = compute_partition(c, inst.floor);
    for (const auto& [id, s] : base.shares) CHECK(scaled.shares.at(id) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("raising a weight never lowers that slice's share") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    auto inst = test::random_instance(rng);
    auto c = inst.cell();
    auto before = compute_partition(c, inst.floor);
    auto& r = c.participating_slices.begin()->second;
    r.weight *= 1.0 + (rng() % 100) / 10.0;
    auto after = compute_partition(c, inst.floor);
    const auto& id = c.participating_slices.begin()->first;
    CHECK(after.shares.at(id) >= before.shares.at(id) - 1e-12);
  }
}

TEST_CASE("adding a slice never raises another slice's share") {
  std::mt19937_64 rng(14);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    auto inst = test::random_instance(rng);
    auto c = inst.cell();
    auto before = compute_partition(c, inst.floor);
    RanRequirement extra{(rng() % 10) / 100.0, 0.1 + (rng() % 50) / 10.0, LatencyClass::Relaxed, 0};
    c.participating_slices["new"] = extra;
    RanPartition after;
    try {
      after = compute_partition(c, inst.floor);
    } catch (const Error&) {
      continue;
    }
    ++checked;
    for (const auto& [id, s] : before.shares) CHECK(after.shares.at(id) <= s + 1e-12);
  }
  CHECK(checked > 100);
}

TEST_CASE("at least as good as exhaustive search on the 1/100 grid") {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 100; ++i) {
    auto inst = test::random_instance(rng);
    auto p = compute_partition(inst.cell(), inst.floor);
    auto oracle = test::brute_force_shares(inst);
    // Every grid point is feasible, so the exact optimum can only do better.
    std::vector<double> ours;
    for (std::size_t k = 0; k < oracle.size(); ++k) ours.push_back(p.shares.at("s" + std::to_string(k)));
    CHECK(test::objective(inst, ours) >= test::objective(inst, oracle) - 1e-9);
  }
}

TEST_CASE("southbound messages round-trip") {
  RanPartition p;
  p.enb_id = "enb-1";
  p.version = 7;
  p.shares = {{"default", 0.2}, {"A", 0.8}};
  p.priority_slices = {"A"};
  auto back = southbound::parse_set_partition(Json::parse(southbound::set_partition(p).dump()));
  CHECK(back.version == 7);
  CHECK(back.shares == p.shares);
  CHECK(back.priority_slices == p.priority_slices);

  StatsReport r;
  r.seq = 3;
  r.ues = {{"u1", "A", 12}};
  r.granted_shares = {{"A", 0.5}};
  auto rb = southbound::parse_stats_report(Json::parse(southbound::stats_report(r).dump()));
  CHECK(rb.seq == 3);
  CHECK(rb.ues == r.ues);
  CHECK(rb.granted_shares == r.granted_shares);
  CHECK(southbound::hello("enb-1", 100).at("type") == "HELLO");
  CHECK(southbound::nack(3, "VERSION_CONFLICT held=5").at("type") == "NACK");
}

TEST_CASE("stats ingestion ordering and registration") {
  RanNssmf ran(RanConfig{}, 0.1);
  StatsReport r;
  r.seq = 1;
  CHECK_THROWS_AS(ran.ingest_stats("enb-1", r), Error);

  ran.register_enb("enb-1", 100);
  CHECK(ran.cell("enb-1").total_rrb == 100);
  r.seq = 7;
  r.ues = {{"u1", "sliceX", 10}};
  CHECK(ran.ingest_stats("enb-1", r));
  CHECK(ran.cell("enb-1").attached_ues == r.ues);
  StatsReport old;
  old.seq = 5;
  CHECK_FALSE(ran.ingest_stats("enb-1", old));
  CHECK(ran.cell("enb-1").attached_ues == r.ues);

  // Re-registration replaces capabilities and restarts the sequence.
  ran.register_enb("enb-1", 50);
  CHECK(ran.cell("enb-1").total_rrb == 50);
  CHECK(ran.ingest_stats("enb-1", old));
}

TEST_CASE("enforcement against a live agent") {
  RanConfig rc;
  rc.enforce_max_attempts = 2;
  rc.enforce_backoff = 0.01;
  rc.ack_timeout = 0.5;
  rc.traffic_enabled = false;
  RanNssmf ran(rc, 0.1);
  HostPort addr = ran.listen({"127.0.0.1", 0});

  // No agent yet: unreachable after the configured attempts.
  ran.register_enb("enb-1", 100);
  RanPartition p;
  p.enb_id = "enb-1";
  p.version = 1;
  p.shares = {{"default", 1.0}};
  CHECK_THROWS_WITH_AS(ran.enforce_partition(p), doctest::Contains("AGENT_UNREACHABLE"), Error);

  EnbAgentConfig ac;
  ac.enb_id = "enb-1";
  ac.ran = rc;
  EnbAgent agent(ac);
  agent.connect(addr);
  REQUIRE(ran.wait_for_agents({"enb-1"}, 5.0));

  ran.set_default_slice("default");
  auto applied = ran.add_slice("enb-1", "A", {0.1, 1.0, LatencyClass::Strict, 0});
  CHECK(agent.partition_version() == applied.version);
  // Takes effect at the next subframe boundary.
  agent.schedule_subframe({});
  CHECK(agent.active_partition().shares == applied.shares);
  CHECK(ran.current_partition("enb-1").version == applied.version);

  // Another controller got a newer version in first; ours is stale.
  RanPartition newer = applied;
  newer.version = applied.version + 10;
  CHECK(agent.apply_partition(southbound::set_partition(newer)).at("type") == "ACK");
  RanPartition stale = applied;
  stale.version = applied.version + 1;
  try {
    ran.enforce_partition(stale);
    FAIL("expected VERSION_CONFLICT");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionConflict);
  }
  CHECK(agent.partition_version() == newer.version);
  // The controller moves past the version the agent holds.
  auto after = ran.remove_slice("enb-1", "A");
  CHECK(after.version > newer.version);
  CHECK(agent.partition_version() == after.version);
  CHECK(after.shares == std::map<std::string, double>{{"default", 1.0}});

  // On-demand stats reflect attachments.
  auto cell = ran.request_stats("enb-1", 2.0);
  CHECK(cell.attached_ues.empty());
  agent.disconnect();
  ran.stop();
}

}  // TEST_SUITE
