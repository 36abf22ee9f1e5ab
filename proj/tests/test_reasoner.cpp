#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "support.hpp"

using namespace lisa;
using lisa::test::SpecBuilder;

TEST_CASE("belief update applies external changes, mentals, then rules", "[reasoner]") {
  SpecBuilder b;
  AtomId a = b.percept("a", DelayedBernoulli{1, 1, 0});
  AtomId m = b.atom("m", AtomKind::Mental);
  b.rule(Formula::literal(a, false), {RuleEffect{m, true}});
  b.plan(Event{a, true}, Formula::truth(), {SpecBuilder::add(m)});
  AgentSpec spec = b.finish();

  SECTION("direct set") {
    std::vector<uint8_t> beliefs(spec.atom_count(), 0);
    AgentSpec no_rules = spec;
    no_rules.rules.clear();
    BeliefUpdate out = belief_update(no_rules, beliefs, {{a, true}}, {});
    CHECK(out.beliefs[static_cast<size_t>(a)] == 1);
  }

  SECTION("rules fire in the same cycle, matching the sweep oracle") {
    std::vector<uint8_t> beliefs(spec.atom_count(), 0);
    BeliefUpdate out = belief_update(spec, beliefs, {{a, true}}, {});
    CHECK(out.beliefs[static_cast<size_t>(m)] == 1);  // same cycle as +a
    std::vector<uint8_t> direct = beliefs;
    direct[static_cast<size_t>(a)] = 1;
    CHECK(out.beliefs == lisa::test::naive_rule_fixpoint(spec, direct));
    CHECK_FALSE(out.fired_rules.empty());
  }

  SECTION("chained rules reach the fixpoint in one update") {
    SpecBuilder c;
    AtomId x = c.percept("x", DelayedBernoulli{1, 1, 0});
    AtomId m1 = c.atom("m1", AtomKind::Mental);
    AtomId m2 = c.atom("m2", AtomKind::Mental);
    c.rule(Formula::literal(x, false), {RuleEffect{m1, true}});
    c.rule(Formula::literal(m1, false), {RuleEffect{m2, true}});
    c.plan(Event{x, true}, Formula::truth(), {SpecBuilder::add(m1)});
    AgentSpec chained = c.finish();
    std::vector<uint8_t> beliefs(chained.atom_count(), 0);
    BeliefUpdate out = belief_update(chained, beliefs, {{x, true}}, {});
    CHECK(out.beliefs[static_cast<size_t>(m2)] == 1);
    std::vector<uint8_t> direct = beliefs;
    direct[static_cast<size_t>(x)] = 1;
    CHECK(out.beliefs == lisa::test::naive_rule_fixpoint(chained, direct));
  }

  SECTION("oscillating rules raise a rule-cycle error naming the rules") {
    SpecBuilder c;
    AtomId x = c.percept("x", DelayedBernoulli{1, 1, 0});
    AtomId m1 = c.atom("m1", AtomKind::Mental);
    c.rule(Formula::literal(x, false), {RuleEffect{m1, true}});
    c.rule(Formula::literal(m1, false), {RuleEffect{m1, false}});
    c.plan(Event{x, true}, Formula::truth(), {SpecBuilder::add(m1)});
    AgentSpec bad = c.finish();
    std::vector<uint8_t> beliefs(bad.atom_count(), 0);
    CHECK_THROWS_WITH(belief_update(bad, beliefs, {{x, true}}, {}),
                      Catch::Matchers::ContainsSubstring("rule_"));
  }
}

TEST_CASE("belief review produces the event set", "[reasoner]") {
  std::vector<uint8_t> before = {0, 1, 0};
  SECTION("single addition") {
    std::vector<uint8_t> after = {1, 1, 0};
    std::vector<uint8_t> ch = belief_review(before, after);
    CHECK(ch == std::vector<uint8_t>{1, 0, 0});
  }
  SECTION("identity") {
    CHECK(belief_review(before, before) == std::vector<uint8_t>(3, 0));
  }
  SECTION("mixed polarity") {
    std::vector<uint8_t> after = {1, 0, 0};
    AgentState st;
    st.beliefs = after;
    st.changed = belief_review(before, after);
    std::vector<Event> ev = events_of(st);
    REQUIRE(ev.size() == 2);
    CHECK((ev[0].atom == 0 && ev[0].added));
    CHECK((ev[1].atom == 1 && !ev[1].added));
  }
}

TEST_CASE("applicable plans gather per-event desire sets", "[reasoner]") {
  SpecBuilder b;
  AtomId e1 = b.percept("e1", DelayedBernoulli{1, 1, 0});
  AtomId ctx = b.atom("ctx", AtomKind::Mental);
  AtomId m = b.atom("m", AtomKind::Mental);
  PlanId p1 = b.plan(Event{e1, true}, Formula::truth(), {SpecBuilder::add(m)});
  PlanId p2 = b.plan(Event{e1, true}, Formula::literal(ctx, false), {SpecBuilder::remove(m)});
  AgentSpec spec = b.finish();

  std::vector<uint8_t> beliefs(spec.atom_count(), 0);
  beliefs[static_cast<size_t>(e1)] = 1;

  SECTION("one matching plan with true context") {
    std::vector<std::vector<PlanId>> d =
        applicable_plans(spec, {Event{e1, true}}, beliefs);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == std::vector<PlanId>{p1});  // p2's context is false
  }
  SECTION("two plans on one event once the context holds") {
    beliefs[static_cast<size_t>(ctx)] = 1;
    std::vector<std::vector<PlanId>> d =
        applicable_plans(spec, {Event{e1, true}}, beliefs);
    CHECK(d[0] == std::vector<PlanId>{p1, p2});
  }
  SECTION("matching trigger with false context yields an empty set") {
    std::vector<std::vector<PlanId>> d =
        applicable_plans(spec, {Event{e1, false}}, beliefs);
    REQUIRE(d.size() == 1);
    CHECK(d[0].empty());
  }
}

TEST_CASE("plan selection collapses duplicates and respects running plans", "[reasoner]") {
  std::vector<int32_t> lambdas = {0, 0};

  SECTION("singleton sets select directly") {
    Selection s = select_first_declared({{0}, {1}}, lambdas);
    CHECK(s.starts == std::vector<PlanId>{0, 1});
  }
  SECTION("first-declared breaks ties") {
    Selection s = select_first_declared({{0, 1}}, lambdas);
    CHECK(s.starts == std::vector<PlanId>{0});
  }
  SECTION("a plan selected for two events executes once") {
    Selection s = select_first_declared({{0}, {0}}, lambdas);
    CHECK(s.starts == std::vector<PlanId>{0});
  }
  SECTION("already intended plans are not restarted") {
    std::vector<int32_t> running = {2, 0};
    Selection s = select_first_declared({{0}, {1}}, running);
    CHECK(s.starts == std::vector<PlanId>{1});
  }
  SECTION("uniform random stays within the desire set") {
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
      Selection s = select_uniform_random({{0, 1}}, lambdas, rng);
      REQUIRE(s.starts.size() == 1);
      CHECK((s.starts[0] == 0 || s.starts[0] == 1));
    }
  }
}

TEST_CASE("intentions advance one step per cycle and reset on completion", "[reasoner]") {
  SpecBuilder b;
  AtomId go = b.percept("go", DelayedBernoulli{1, 2, 0});
  AtomId m1 = b.atom("m1", AtomKind::Mental);
  AtomId m2 = b.atom("m2", AtomKind::Mental);
  AtomId m3 = b.atom("m3", AtomKind::Mental);
  b.plan(Event{go, true}, Formula::truth(),
         {SpecBuilder::add(m1), SpecBuilder::add(m2), SpecBuilder::add(m3)});
  AgentSpec spec = b.finish();
  RunOptions opts;
  opts.cycles = 8;
  CycleTrace tr = run(spec, opts);
  // +go at cycle 2 starts the plan in the next plan phase; mental steps
  // take one cycle each; lambda wraps to 0 on completion
  std::vector<int32_t> expect = {0, 0, 1, 2, 3, 0, 1, 2};
  for (int t = 1; t <= 8; ++t)
    CHECK(tr.records[static_cast<size_t>(t - 1)].state.agent.lambdas[0] == expect[t - 1]);
  // each mental lands the cycle after its step dispatched
  CHECK(tr.records[2].state.agent.beliefs[static_cast<size_t>(m1)] == 1);  // cycle 3
  CHECK(tr.records[3].state.agent.beliefs[static_cast<size_t>(m2)] == 1);  // cycle 4
  CHECK(tr.records[4].state.agent.beliefs[static_cast<size_t>(m3)] == 1);  // cycle 5
}

TEST_CASE("external steps block until their feedback arrives", "[reasoner]") {
  AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Go. {[],[1,2,0]}

ACTIONS
Act. {done[1,4,0]}

EXECUTABLE PLANS
If ^[Go] while true then
	[Act.]
	+^[Noted].
)");
  RunOptions opts;
  opts.cycles = 10;
  CycleTrace tr = run(spec, opts);
  AtomId done = spec.find_atom("done");
  // start after the +go of cycle 2, arm at tick 3 with mu=4 -> done at cycle 6
  for (int t = 3; t <= 6; ++t)
    CHECK(tr.records[static_cast<size_t>(t - 1)].state.agent.lambdas[0] == 1);
  CHECK(tr.records[5].state.agent.beliefs[static_cast<size_t>(done)] == 1);
  CHECK(tr.records[5].state.agent.lambdas[0] == 1);  // advance happens next f_act
  CHECK(tr.records[6].state.agent.lambdas[0] == 2);
}

TEST_CASE("run on a planless spec yields empty-event states", "[reasoner]") {
  SpecBuilder b;
  AtomId m = b.atom("idle_note", AtomKind::Mental);
  (void)m;
  AgentSpec spec = b.finish();
  RunOptions opts;
  opts.cycles = 5;
  CycleTrace tr = run(spec, opts);
  REQUIRE(tr.records.size() == 5);
  for (const CycleRecord& rec : tr.records) {
    CHECK(events_of(rec.state.agent).empty());
    CHECK(rec.desires.empty());
  }
}

TEST_CASE("runs are deterministic per seed", "[reasoner]") {
  AgentSpec spec = lisa::test::load_benchmark("asv_dtmc.lisa");
  RunOptions opts;
  opts.cycles = 50;
  opts.seed = 77;
  CycleTrace a = run(spec, opts);
  CycleTrace b = run(spec, opts);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].state == b.records[i].state);

  opts.seed = 78;
  CycleTrace c = run(spec, opts);
  bool differs = false;
  for (size_t i = 0; i < a.records.size(); ++i)
    differs = differs || !(a.records[i].state == c.records[i].state);
  CHECK(differs);
}

TEST_CASE("events live exactly one cycle", "[reasoner][property]") {
  AgentSpec spec = lisa::test::load_benchmark("asv_dtmc.lisa");
  RunOptions opts;
  opts.cycles = 80;
  opts.seed = 3;
  CycleTrace tr = run(spec, opts);
  for (size_t i = 0; i + 1 < tr.records.size(); ++i) {
    const AgentState& now = tr.records[i].state.agent;
    const AgentState& next = tr.records[i + 1].state.agent;
    for (size_t a = 0; a < now.changed.size(); ++a)
      if (now.changed[a] && next.changed[a])
        CHECK(now.beliefs[a] != next.beliefs[a]);  // only a fresh flip re-raises
  }
}

TEST_CASE("initial actions run as intentions created at t=0", "[reasoner]") {
  SECTION("external initial action arms the environment") {
    AgentSpec spec = parse_or_throw(R"(
PERCEPTION PROCESS
Unused. {[],[0,2,0]}

ACTIONS
Boot. {ready[1,3,0]}

INITIAL ACTIONS
[Boot.]

EXECUTABLE PLANS
If ^[Ready] while true then
	+^[Started].
)");
    RunOptions opts;
    opts.cycles = 6;
    CycleTrace tr = run(spec, opts);
    AtomId ready = spec.find_atom("ready");
    AtomId started = spec.find_atom("started");
    // armed at tick 1 with mu=3 -> ready at cycle 3, started at cycle 5
    CHECK(tr.records[1].state.agent.beliefs[static_cast<size_t>(ready)] == 0);
    CHECK(tr.records[2].state.agent.beliefs[static_cast<size_t>(ready)] == 1);
    CHECK(tr.records[4].state.agent.beliefs[static_cast<size_t>(started)] == 1);
  }
  SECTION("internal initial action lands at cycle one") {
    SpecBuilder b;
    b.percept("p0", DelayedBernoulli{0, 3, 0});
    AtomId m = b.atom("m", AtomKind::Mental);
    b.plan(Event{m, true}, Formula::truth(), {SpecBuilder::add(b.atom("m2", AtomKind::Mental))});
    b.initial_action(SpecBuilder::add(m));
    AgentSpec spec = b.finish();
    RunOptions opts;
    opts.cycles = 4;
    CycleTrace tr = run(spec, opts);
    CHECK(tr.records[0].state.agent.beliefs[static_cast<size_t>(m)] == 1);
    std::vector<Event> ev = events_of(tr.records[0].state.agent);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].atom == m);
  }
}

TEST_CASE("interrupt steps reset the target plan", "[reasoner]") {
  SpecBuilder b;
  AtomId go = b.percept("go", DelayedBernoulli{1, 2, 0});
  AtomId kill = b.percept("kill", DelayedBernoulli{1, 5, 0});
  ActionId slow = b.action("slow", {{"slow_done", DelayedBernoulli{1, 30, 0}}});
  PlanId victim = b.plan(Event{go, true}, Formula::truth(), {SpecBuilder::ext(slow)});
  b.plan(Event{kill, true}, Formula::truth(), {SpecBuilder::interrupt(victim)});
  AgentSpec spec = b.finish();

  RunOptions opts;
  opts.cycles = 12;
  CycleTrace tr = run(spec, opts);
  // victim starts after the +go of cycle 2 and waits on its 30-cycle feedback
  CHECK(tr.records[2].state.agent.lambdas[0] == 1);
  // +kill at cycle 5 starts the interrupter; the reset lands one cycle later
  CHECK(tr.records[5].state.agent.lambdas[1] == 1);
  CHECK(tr.records[6].state.agent.lambdas[0] == 0);
  // interrupted plans emit no feedback: slow_done never appears
  AtomId sd = spec.find_atom("slow_done");
  for (const CycleRecord& rec : tr.records)
    CHECK(rec.state.agent.beliefs[static_cast<size_t>(sd)] == 0);
}

TEST_CASE("case-study benchmark simulates end to end", "[reasoner]") {
  AgentSpec spec = lisa::test::load_benchmark("asv_dtmc.lisa");
  RunOptions opts;
  opts.cycles = 120;
  opts.seed = 2024;
  CycleTrace tr = run(spec, opts);
  AtomId sea = spec.find_atom("sea_state_is_too_high");
  for (const CycleRecord& rec : tr.records)
    if (rec.state.agent.changed[static_cast<size_t>(sea)]) CHECK(rec.t % 10 == 0);
  // initial action (activate park mode) arms at tick 1 and lands at cycle 2
  AtomId park = spec.find_atom("park_mode");
  CHECK(tr.records[1].state.agent.beliefs[static_cast<size_t>(park)] == 1);

  // sampling follows the declared (0.5,10,0) model: across many boundaries
  // the flip rate stays near one half
  RunOptions longer;
  longer.cycles = 2000;
  longer.seed = 11;
  CycleTrace lt = run(spec, longer);
  int boundaries = 0, flips = 0;
  for (const CycleRecord& rec : lt.records)
    if (rec.t % 10 == 0) {
      ++boundaries;
      flips += rec.state.agent.changed[static_cast<size_t>(sea)] ? 1 : 0;
    }
  REQUIRE(boundaries == 200);
  double rate = static_cast<double>(flips) / boundaries;
  CHECK(rate > 0.35);
  CHECK(rate < 0.65);
}
