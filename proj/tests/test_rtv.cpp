#include <catch2/catch_amalgamated.hpp>

#include "generators.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lisa;

namespace {

struct SelectorFixture {
  AgentSpec spec;
  BuildResult built;
  StateLookup lookup;
  StateCodec codec;

  explicit SelectorFixture(const std::string& name, BuildKind kind = BuildKind::Auto)
      : spec(lisa::test::load_benchmark(name)),
        built(build(spec, BuildOptions{kind, {}, 0})),
        lookup(built.model),
        codec(spec, EnvLayout::of(spec)) {}

  rtv::SelectorContext context(const std::string& objective, bool maximize = true) {
    rtv::SelectorContext ctx;
    ctx.spec = &spec;
    ctx.model = &built.model;
    ctx.lookup = &lookup;
    ctx.codec = &codec;
    ctx.cfg.objective = pctl::parse_query(objective);
    ctx.cfg.maximize = maximize;
    return ctx;
  }

  /// State holding the first +go_signal event (the two-candidate decision point).
  SysState decision_state() {
    EnvLayout lay = EnvLayout::of(spec);
    RunOptions opts;
    opts.cycles = 1;
    CycleTrace tr = run(spec, opts);
    return tr.records[0].state;
  }
};

}  // namespace

TEST_CASE("the verified selector picks the higher-valued candidate", "[rtv]") {
  SelectorFixture fx("selector_demo.lisa");
  REQUIRE(fx.built.model.kind == ProbModel::Kind::Mdp);
  SysState state = fx.decision_state();
  std::vector<Event> events = events_of(state.agent);
  REQUIRE(events.size() == 1);
  auto desires = applicable_plans(fx.spec, events, state.agent.beliefs);
  REQUIRE(desires[0].size() == 2);

  rtv::SelectorContext ctx = fx.context("Pmax=? [ F<=2 success=1 ]");
  rtv::SelectResult res = rtv::verified_select(ctx, state, desires);
  CHECK_FALSE(res.degraded);
  REQUIRE(res.selection.per_event[0] == 0);  // plan_1, the 0.9 action
  REQUIRE(res.scores.size() == 2);
  double v1 = -1, v2 = -1;
  for (auto& [e, plan, v] : res.scores) {
    if (plan == 0) v1 = v;
    if (plan == 1) v2 = v;
  }
  CHECK(v1 == Catch::Approx(0.9).margin(1e-9));
  CHECK(v2 == Catch::Approx(0.4).margin(1e-9));

  SECTION("the hand-built two-choice oracle agrees with the q-values") {
    // s0 --c0--> {0.9 goal, 0.1 sink}; --c1--> {0.4 goal, 0.6 sink}
    ProbModel m;
    m.kind = ProbModel::Kind::Mdp;
    m.initial = 0;
    m.vars.push_back(ModelVar{"goal", 0, 1, 1, 0, 0});
    m.words_per_state = 1;
    m.packed = {0, 1, 0};
    m.state_choice_off = {0, 2, 3, 4};
    m.choice_trans_off = {0, 2, 4, 5, 6};
    m.trans_dst = {1, 2, 1, 2, 1, 2};
    m.trans_prob = {0.9, 0.1, 0.4, 0.6, 1.0, 1.0};
    pctl::Query q = pctl::parse_query("Pmax=? [ F goal=1 ]");
    pctl::PathValues pv = pctl::prob_values(m, *q.formula.path, pctl::Direction::Max, {});
    CHECK(rtv::detail::q_value(m, 0, 0, pv) == Catch::Approx(0.9).margin(1e-12));
    CHECK(rtv::detail::q_value(m, 0, 1, pv) == Catch::Approx(0.4).margin(1e-12));
  }

  SECTION("minimizing flips the argmax") {
    rtv::SelectorContext min_ctx = fx.context("Pmax=? [ F<=2 success=1 ]", false);
    rtv::SelectResult min_res = rtv::verified_select(min_ctx, state, desires);
    CHECK(min_res.selection.per_event[0] == 1);
  }
}

TEST_CASE("equal candidate values fall back to the lowest plan id", "[rtv]") {
  SelectorFixture fx("selector_tie.lisa");
  SysState state = fx.decision_state();
  auto desires = applicable_plans(fx.spec, events_of(state.agent), state.agent.beliefs);
  REQUIRE(desires[0].size() == 2);
  rtv::SelectResult res =
      rtv::verified_select(fx.context("Pmax=? [ F<=2 success=1 ]"), state, desires);
  CHECK_FALSE(res.degraded);
  CHECK(res.selection.per_event[0] == 0);
}

TEST_CASE("singleton desire sets bypass the model entirely", "[rtv]") {
  rtv::SelectorContext empty_ctx;  // no model attached on purpose
  empty_ctx.cfg.objective = pctl::parse_query("P=? [ F x ]");
  SysState state;
  state.agent.lambdas = {0};
  std::vector<std::vector<PlanId>> desires = {{0}};
  rtv::SelectResult res = rtv::verified_select(empty_ctx, state, desires);
  CHECK_FALSE(res.degraded);
  CHECK(res.selection.starts == std::vector<PlanId>{0});
}

TEST_CASE("degraded modes fall back to first-declared with a note", "[rtv]") {
  SelectorFixture fx("selector_demo.lisa");
  SysState state = fx.decision_state();
  auto desires = applicable_plans(fx.spec, events_of(state.agent), state.agent.beliefs);

  SECTION("a live state outside the model") {
    SysState off = state;
    off.agent.beliefs.assign(off.agent.beliefs.size(), 1);  // impossible valuation
    rtv::SelectResult res =
        rtv::verified_select(fx.context("Pmax=? [ F<=2 success=1 ]"), off, desires);
    CHECK(res.degraded);
    CHECK(res.selection.per_event[0] == 0);
    REQUIRE_FALSE(res.notes.empty());
  }

  SECTION("an unevaluable objective") {
    rtv::SelectResult res =
        rtv::verified_select(fx.context("Pmax=? [ F<=2 no_such_atom=1 ]"), state, desires);
    CHECK(res.degraded);
    CHECK(res.selection.per_event[0] == 0);
  }

  SECTION("a reward objective is rejected up front") {
    rtv::SelectorContext ctx = fx.context("Pmax=? [ F<=2 success=1 ]");
    ctx.cfg.objective = pctl::parse_query("R=? [ C<=3 ]");
    rtv::SelectResult res = rtv::verified_select(ctx, state, desires);
    CHECK(res.degraded);
  }
}

TEST_CASE("selector argmax matches exhaustive candidate evaluation", "[rtv][property]") {
  SelectorFixture fx("selector_demo.lisa");
  SysState state = fx.decision_state();
  auto desires = applicable_plans(fx.spec, events_of(state.agent), state.agent.beliefs);
  rtv::SelectorContext ctx = fx.context("Pmax=? [ F<=4 success=1 ]");
  rtv::SelectResult res = rtv::verified_select(ctx, state, desires);

  // exhaustive: evaluate every candidate's fixed-first-choice value directly
  pctl::Query q = pctl::parse_query("Pmax=? [ F<=4 success=1 ]");
  pctl::PathValues pv = pctl::prob_values(fx.built.model, *q.formula.path, pctl::Direction::Max,
                                          {});
  std::optional<uint32_t> idx = fx.lookup.find(fx.codec.encode(state));
  REQUIRE(idx);
  std::vector<Choice> choices = enumerate_choices(desires, state.agent.lambdas);
  PlanId best = -1;
  double best_v = -1;
  for (PlanId cand : desires[0]) {
    double v = -1;
    for (size_t c = 0; c < choices.size(); ++c) {
      const auto& opts = choices[c].event_options[0];
      if (std::find(opts.begin(), opts.end(), cand) == opts.end()) continue;
      v = std::max(v, rtv::detail::q_value(fx.built.model, *idx,
                                           fx.built.model.state_choice_off[*idx] + c, pv));
    }
    if (v > best_v) {
      best_v = v;
      best = cand;
    }
  }
  CHECK(res.selection.per_event[0] == best);
}

TEST_CASE("the verification skill toggles its targets by threshold", "[rtv]") {
  SelectorFixture fx("skill_demo.lisa");
  REQUIRE_FALSE(fx.spec.skill.queries.empty());
  SysState s0 = initial_state(fx.spec, EnvLayout::of(fx.spec));

  SECTION("a passing query queues the positive note") {
    VerificationSkill skill;
    skill.cadence = 1;
    skill.queries.push_back(SkillQuery{"P=? [ F<=6 finished=1 ]", 'g', 0.0,
                                       fx.spec.find_atom("confident_of_success")});
    rtv::SkillResult r =
        rtv::skill_step(fx.spec, fx.built.model, fx.lookup, fx.codec, s0, skill);
    CHECK_FALSE(r.degraded);
    REQUIRE(r.changes.size() == 1);
    CHECK(r.changes[0].add);
  }

  SECTION("a failing query queues the negative note") {
    VerificationSkill skill;
    skill.cadence = 1;
    skill.queries.push_back(SkillQuery{"P=? [ F<=6 finished=1 ]", '>', 1.0,
                                       fx.spec.find_atom("confident_of_success")});
    rtv::SkillResult r =
        rtv::skill_step(fx.spec, fx.built.model, fx.lookup, fx.codec, s0, skill);
    REQUIRE(r.changes.size() == 1);
    CHECK_FALSE(r.changes[0].add);
  }

  SECTION("skill steps are idempotent at a fixed state") {
    rtv::SkillResult a =
        rtv::skill_step(fx.spec, fx.built.model, fx.lookup, fx.codec, s0, fx.spec.skill);
    rtv::SkillResult b =
        rtv::skill_step(fx.spec, fx.built.model, fx.lookup, fx.codec, s0, fx.spec.skill);
    REQUIRE(a.changes.size() == b.changes.size());
    for (size_t i = 0; i < a.changes.size(); ++i) {
      CHECK(a.changes[i].atom == b.changes[i].atom);
      CHECK(a.changes[i].add == b.changes[i].add);
    }
  }

  SECTION("a state outside the model degrades without aborting") {
    SysState off = s0;
    off.agent.beliefs.assign(off.agent.beliefs.size(), 1);
    rtv::SkillResult r =
        rtv::skill_step(fx.spec, fx.built.model, fx.lookup, fx.codec, off, fx.spec.skill);
    CHECK(r.degraded);
    CHECK(r.changes.empty());
    REQUIRE_FALSE(r.notes.empty());
  }
}

TEST_CASE("the skill feeds mental notes into the running agent", "[rtv]") {
  SelectorFixture fx("skill_demo.lisa");
  RunOptions opts;
  opts.cycles = 10;
  opts.seed = 42;
  opts.model = &fx.built.model;
  opts.lookup = &fx.lookup;
  opts.codec = &fx.codec;
  CycleTrace tr = run(fx.spec, opts);
  AtomId conf = fx.spec.find_atom("confident_of_success");
  REQUIRE(conf >= 0);
  bool seen = false;
  for (const CycleRecord& rec : tr.records)
    seen = seen || rec.state.agent.beliefs[static_cast<size_t>(conf)] != 0;
  CHECK(seen);

  SECTION("with no queries the skill never interferes") {
    AgentSpec plain = fx.spec;
    plain.skill.queries.clear();
    RunOptions quiet;
    quiet.cycles = 10;
    quiet.seed = 42;
    CycleTrace a = run(plain, quiet);
    RunOptions with_model = quiet;
    with_model.model = &fx.built.model;
    with_model.lookup = &fx.lookup;
    with_model.codec = &fx.codec;
    CycleTrace b = run(plain, with_model);
    REQUIRE(a.records.size() == b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i)
      CHECK(a.records[i].state == b.records[i].state);
  }
}
