#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "support.hpp"

using namespace lisa;
using lisa::test::SpecBuilder;

TEST_CASE("arming a feedback draws the categorical over outcomes", "[env]") {
  AgentSpec spec = lisa::test::load_benchmark("asv_dtmc.lisa");
  EnvLayout lay = EnvLayout::of(spec);
  ActionId wfi = spec.find_action("wait_for_instructions");

  auto dist = arm_feedback_distribution(spec, lay, wfi);
  REQUIRE(dist.size() == 2);
  // continue := 5 with 0.6, abort := 5 with 0.4
  auto [b, e] = lay.action_fb[static_cast<size_t>(wfi)];
  (void)e;
  CHECK(dist[0].first == 0.6);
  CHECK(dist[0].second == std::pair<int, int>{b, 5});
  CHECK(dist[1].first == 0.4);
  CHECK(dist[1].second == std::pair<int, int>{b + 1, 5});
}

TEST_CASE("a certain feedback arms a unit countdown", "[env]") {
  SpecBuilder bld;
  bld.percept("go", DelayedBernoulli{1, 1, 0});
  ActionId act = bld.action("act", {{"done", DelayedBernoulli{1, 1, 0}}});
  (void)act;
  AgentSpec spec = bld.finish();
  EnvLayout lay = EnvLayout::of(spec);
  auto dist = arm_feedback_distribution(spec, lay, 0);
  REQUIRE(dist.size() == 1);
  CHECK(dist[0].first == 1.0);
  CHECK(dist[0].second.second == 1);
}

TEST_CASE("(0.5,3,1) feedback expands to none plus three equal delays", "[env]") {
  SpecBuilder bld;
  ActionId act = bld.action("act", {{"fb", DelayedBernoulli{0.5, 3, 1}}});
  AgentSpec spec = bld.finish();
  EnvLayout lay = EnvLayout::of(spec);
  auto dist = arm_feedback_distribution(spec, lay, act);

  // Oracle: direct enumeration of the categorical-by-uniform product.
  auto oracle = lisa::test::enumerate_arm(spec.actions[0]);
  double none = 0, per_delay = 0;
  for (const auto& o : oracle)
    if (o.feedback < 0) none = o.prob;
    else per_delay = o.prob;
  CHECK(none == 0.5);
  CHECK(per_delay == Catch::Approx(0.5 / 3).epsilon(1e-14));

  REQUIRE(dist.size() == 4);  // delays 2,3,4 plus the none remainder
  double sum = 0;
  int delay_arms = 0;
  for (auto& [p, fd] : dist) {
    sum += p;
    if (fd.first >= 0) {
      ++delay_arms;
      CHECK(p == Catch::Approx(0.5 / 3).epsilon(1e-14));
      CHECK((fd.second >= 2 && fd.second <= 4));
    } else {
      CHECK(p == 0.5);
    }
  }
  CHECK(delay_arms == 3);
  CHECK(sum == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("ambient percept resamples exactly at its cadence", "[env]") {
  // (0.5,10,0): the atom may change only at cycles 10, 20, 30, ...
  AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Sea state is too high. {[],[0.5,10,0]}

EXECUTABLE PLANS
If ^[Sea state is too high] while true then
	+^[Noted].
)");
  RunOptions opts;
  opts.cycles = 100;
  opts.seed = 4242;
  CycleTrace trace = run(spec, opts);
  AtomId sea = spec.find_atom("sea_state_is_too_high");
  int boundary_changes = 0;
  for (const CycleRecord& rec : trace.records) {
    bool changed = rec.state.agent.changed[static_cast<size_t>(sea)] != 0;
    if (changed) {
      CHECK(rec.t % 10 == 0);
      ++boundary_changes;
    }
  }
  // with p=0.5 the 10 boundaries flip about half the time; seeded run is
  // deterministic, just require that some boundary fired
  CHECK(boundary_changes >= 1);
}

TEST_CASE("ambient boundary branches are a fair coin", "[env]") {
  AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Sea state is too high. {[],[0.5,10,0]}

EXECUTABLE PLANS
If ^[Sea state is too high] while true then
	+^[Noted].
)");
  EnvLayout lay = EnvLayout::of(spec);
  SysState s = initial_state(spec, lay);
  s.env.pc[0] = 1;  // at the boundary
  TickContext ctx = begin_tick(spec, lay, s.agent.beliefs, s.agent.changed, s.agent.lambdas, s.env);
  auto branches = enumerate_tick(ctx);
  REQUIRE(branches.size() == 2);
  AtomId sea = spec.find_atom("sea_state_is_too_high");
  int activations = 0;
  for (const TickBranch& br : branches) {
    CHECK(br.prob == 0.5);
    CHECK(br.env.pc[0] == 10);  // re-armed for the next boundary
    for (auto& [atom, value] : br.changes)
      if (atom == sea && value) ++activations;
  }
  CHECK(activations == 1);

  SECTION("off the boundary the tick is deterministic") {
    s.env.pc[0] = 7;
    TickContext quiet =
        begin_tick(spec, lay, s.agent.beliefs, s.agent.changed, s.agent.lambdas, s.env);
    auto qb = enumerate_tick(quiet);
    REQUIRE(qb.size() == 1);
    CHECK(qb[0].prob == 1.0);
    CHECK(qb[0].env.pc[0] == 6);
    CHECK(qb[0].changes.empty());
  }
}

TEST_CASE("conditional percept activates exactly one cycle after its condition", "[env]") {
  // gw turns true at cycle 3 with certainty; lwr is conditioned on gw with
  // (1,1,0), so it must hold at cycle 4 and not before.
  AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Gw. {[],[1,3,0]}
Lwr. {[Gw],[1,1,0]}

EXECUTABLE PLANS
If ^[Lwr] while true then
	+^[Noted].
)");
  RunOptions opts;
  opts.cycles = 6;
  opts.seed = 1;
  CycleTrace trace = run(spec, opts);
  AtomId gw = spec.find_atom("gw");
  AtomId lwr = spec.find_atom("lwr");
  auto at = [&](int t, AtomId a) {
    return trace.records[static_cast<size_t>(t - 1)].state.agent.beliefs[static_cast<size_t>(a)] != 0;
  };
  CHECK_FALSE(at(2, gw));
  CHECK(at(3, gw));
  CHECK_FALSE(at(3, lwr));
  CHECK(at(4, lwr));  // exactly one cycle later
}

TEST_CASE("zero-probability percept never activates", "[env]") {
  AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Never. {[],[0,2,0]}

EXECUTABLE PLANS
If ^[Never] while true then
	+^[Noted].
)");
  RunOptions opts;
  opts.cycles = 40;
  opts.seed = 5;
  CycleTrace trace = run(spec, opts);
  AtomId never = spec.find_atom("never");
  for (const CycleRecord& rec : trace.records)
    CHECK(rec.state.agent.beliefs[static_cast<size_t>(never)] == 0);
}

TEST_CASE("tick branch distributions sum to one", "[env][property]") {
  // Walk random reachable states of the benchmark and re-enumerate their
  // ticks; every distribution must be exact within 1e-12.
  AgentSpec spec = lisa::test::load_benchmark("asv_dtmc.lisa");
  EnvLayout lay = EnvLayout::of(spec);
  Rng rng(31337);
  SysState s = initial_state(spec, lay);
  for (int step = 0; step < 300; ++step) {
    std::vector<Event> events = events_of(s.agent);
    auto desires = applicable_plans(spec, events, s.agent.beliefs);
    Selection sel = select_first_declared(desires, s.agent.lambdas);
    ActOutcome act = execute_step(spec, s.agent, sel.starts);
    TickContext ctx =
        begin_tick(spec, lay, s.agent.beliefs, s.agent.changed, act.lambdas, s.env);
    double sum = 0;
    for (const TickBranch& br : enumerate_tick(ctx)) sum += br.prob;
    REQUIRE(std::abs(sum - 1.0) < 1e-12);
    s = sample_cycle(spec, lay, s, sel.starts, rng).next;
  }
}

TEST_CASE("expected delay of a symmetric support equals mu", "[env]") {
  for (int mu = 1; mu <= 6; ++mu)
    for (int sigma = 0; sigma < mu; ++sigma) {
      DelayedBernoulli d{0.7, mu, sigma};
      double mean = 0;
      for (int k = d.lo(); k <= d.hi(); ++k) mean += static_cast<double>(k) / d.support();
      CHECK(mean == Catch::Approx(static_cast<double>(mu)).margin(1e-12));
    }
}

TEST_CASE("Monte Carlo activation frequency of (0.6,5,0) converges", "[env]") {
  SpecBuilder bld;
  ActionId act = bld.action("act", {{"fb", DelayedBernoulli{0.6, 5, 0}}});
  AgentSpec spec = bld.finish();
  EnvLayout lay = EnvLayout::of(spec);
  auto dist = arm_feedback_distribution(spec, lay, act);

  Rng rng(20240601);
  const int n = 100000;
  int activations = 0;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform(), acc = 0;
    int picked = -1;
    for (size_t j = 0; j < dist.size(); ++j) {
      acc += dist[j].first;
      if (u < acc) {
        picked = dist[j].second.first;
        break;
      }
    }
    if (picked >= 0) ++activations;
  }
  double freq = static_cast<double>(activations) / n;
  CHECK(freq > 0.59);
  CHECK(freq < 0.61);
}

TEST_CASE("an unconsumed outcome remainder blocks the plan for good", "[env]") {
  // fb arrives with 0.5, otherwise the categorical draws "none" and the
  // invocation never completes: reaching `noted` has probability exactly 0.5.
  AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Go. {[],[1,2,0]}

ACTIONS
Act. {fb[0.5,1,0]}

EXECUTABLE PLANS
If ^[Go] while true then
	[Act.]
	+^[Noted].
)");
  BuildResult br = build(spec);
  pctl::CheckResult r = pctl::check(br.model, pctl::parse_query("P=? [ F noted=1 ]"));
  CHECK(r.value == Catch::Approx(0.5).margin(1e-9));
}
