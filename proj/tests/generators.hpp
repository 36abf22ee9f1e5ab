#pragma once

// Seeded random generators for property-style tests: small agent specs with
// controlled trigger structure, and small explicit models with guaranteed
// contraction (every non-absorbing choice leaks into an absorbing state, so
// value iteration at epsilon=1e-12 is accurate far below 1e-9).

#include "support.hpp"

namespace lisa::test {

struct GeneratedSpec {
  AgentSpec spec;
  AtomId mission_atom = -1;
};

/// Random spec with pairwise-distinct trigger events (DTMC-eligible shape):
/// at most 6 plans and 8 belief atoms, every percept annotated, no initial
/// beliefs (keeps B0 trivially rule-closed), rule antecedents positive.
inline GeneratedSpec random_distinct_trigger_spec(Rng& rng) {
  SpecBuilder b;
  int n_percepts = 1 + static_cast<int>(rng.below(2));
  std::vector<AtomId> percepts;
  for (int i = 0; i < n_percepts; ++i) {
    double p = 0.25 * static_cast<double>(1 + rng.below(4));  // 0.25..1.0
    int mu = 1 + static_cast<int>(rng.below(3));
    int sigma = mu > 1 && rng.below(2) ? 1 : 0;
    percepts.push_back(
        b.percept("p" + std::to_string(i), DelayedBernoulli{p, mu, sigma}));
  }
  int n_actions = 1 + static_cast<int>(rng.below(2));
  std::vector<ActionId> actions;
  for (int i = 0; i < n_actions; ++i) {
    std::vector<std::pair<std::string, DelayedBernoulli>> fbs;
    int nf = 1 + static_cast<int>(rng.below(2));
    double budget = 1.0;
    for (int f = 0; f < nf; ++f) {
      double p = std::min(budget, 0.25 * static_cast<double>(1 + rng.below(4)));
      budget -= p;
      int mu = 1 + static_cast<int>(rng.below(3));
      fbs.emplace_back("f" + std::to_string(i) + "_" + std::to_string(f),
                       DelayedBernoulli{p, mu, 0});
    }
    actions.push_back(b.action("act" + std::to_string(i), fbs));
  }
  // Mental atoms are interned lazily at their first use, so the printed
  // document declares exactly the atoms the spec references (a parsed spec
  // never contains unreferenced mentals).
  int n_mentals = 1 + static_cast<int>(rng.below(2));
  auto mental = [&b](int i) { return b.atom("m" + std::to_string(i), AtomKind::Mental); };
  auto random_mental = [&]() { return mental(static_cast<int>(rng.below(n_mentals))); };
  AtomId mission = b.atom("mission_complete", AtomKind::Mental);

  // One positive rule feeding mission_complete, so the Table-I-style query
  // is meaningful on generated specs.
  b.rule(Formula::literal(percepts[rng.below(percepts.size())], false),
         {RuleEffect{mission, true}});

  auto random_ctx_atom = [&]() {
    if (rng.below(2)) return percepts[rng.below(percepts.size())];
    return random_mental();
  };

  // Distinct trigger events, described before interning so unpicked mental
  // triggers never enter the atom set.
  struct TriggerDesc {
    int percept = -1;  // index into `percepts`, or -1 for a mental
    int mental = -1;
    bool added = true;
  };
  std::vector<TriggerDesc> trigger_pool;
  for (size_t i = 0; i < percepts.size(); ++i) {
    trigger_pool.push_back({static_cast<int>(i), -1, true});
    trigger_pool.push_back({static_cast<int>(i), -1, false});
  }
  for (int i = 0; i < n_mentals; ++i) trigger_pool.push_back({-1, i, true});
  for (size_t i = trigger_pool.size(); i > 1; --i)
    std::swap(trigger_pool[i - 1], trigger_pool[rng.below(i)]);

  int n_plans = 1 + static_cast<int>(rng.below(6));
  n_plans = std::min<int>(n_plans, static_cast<int>(trigger_pool.size()));
  for (int i = 0; i < n_plans; ++i) {
    Formula ctx = Formula::truth();
    if (rng.below(3) == 0) ctx = Formula::literal(random_ctx_atom(), rng.below(2) == 0);
    std::vector<ActionRef> body;
    int steps = 1 + static_cast<int>(rng.below(3));
    for (int s = 0; s < steps; ++s) {
      switch (rng.below(3)) {
        case 0:
          body.push_back(SpecBuilder::ext(actions[rng.below(actions.size())]));
          break;
        case 1:
          body.push_back(SpecBuilder::add(rng.below(4) == 0 ? mission : random_mental()));
          break;
        default:
          body.push_back(SpecBuilder::remove(random_mental()));
          break;
      }
    }
    const TriggerDesc& td = trigger_pool[static_cast<size_t>(i)];
    AtomId trig_atom = td.percept >= 0 ? percepts[static_cast<size_t>(td.percept)]
                                       : mental(td.mental);
    b.plan(Event{trig_atom, td.added}, ctx, std::move(body));
  }
  if (rng.below(3) == 0) b.initial_action(SpecBuilder::ext(actions[0]));

  GeneratedSpec g;
  g.spec = b.finish();
  g.mission_atom = mission;
  return g;
}

/// Random spec with at least one guaranteed trigger clash that fires: a
/// (1,1,0) blinker percept toggles every cycle and two plans share the
/// (+blinker, true) triggering condition, so the first +blinker state has
/// two startable candidates.
inline GeneratedSpec random_clashing_spec(Rng& rng) {
  SpecBuilder b;
  AtomId blinker = b.percept("tick", DelayedBernoulli{1.0, 1, 0});
  AtomId mission = b.atom("mission_complete", AtomKind::Mental);
  ActionId a0 = b.action("act_a", {{"fb_a", DelayedBernoulli{0.5, 2, 0}}});
  ActionId a1 = b.action("act_b", {{"fb_b", DelayedBernoulli{0.75, 1, 0}}});
  b.rule(Formula::literal(b.atom("fb_a", AtomKind::Feedback), false), {RuleEffect{mission, true}});

  b.plan(Event{blinker, true}, Formula::truth(), {SpecBuilder::ext(a0)});
  b.plan(Event{blinker, true}, Formula::truth(),
         {SpecBuilder::ext(a1), SpecBuilder::add(mission)});
  // A few extra distinct-trigger plans for variety.
  int extra = static_cast<int>(rng.below(3));
  std::vector<AtomId> pool = {b.atom("fb_a", AtomKind::Feedback),
                              b.atom("fb_b", AtomKind::Feedback), mission};
  for (int i = 0; i < extra; ++i) {
    AtomId t = pool[static_cast<size_t>(i)];
    b.plan(Event{t, true}, Formula::truth(),
           {rng.below(2) ? SpecBuilder::add(b.atom("m_extra", AtomKind::Mental))
                         : SpecBuilder::ext(a0)});
  }
  GeneratedSpec g;
  g.spec = b.finish();
  g.mission_atom = mission;
  return g;
}

/// Random explicit model: two absorbing states (goal and sink); every
/// non-absorbing choice gives at least 0.2 probability to an absorbing
/// state. Integer-weight probabilities keep oracle and checker on the same
/// exact doubles.
inline ProbModel random_markov_model(Rng& rng, uint32_t max_states, bool mdp,
                                     uint32_t max_choice_states = 6) {
  uint32_t S = 3 + static_cast<uint32_t>(rng.below(max_states > 3 ? max_states - 2 : 1));
  uint32_t goal = S - 1, sink = S - 2;
  ProbModel m;
  m.kind = mdp ? ProbModel::Kind::Mdp : ProbModel::Kind::Dtmc;
  m.initial = 0;
  ModelVar gv;
  gv.name = "goal";
  gv.lo = 0;
  gv.hi = 1;
  gv.bits = 1;
  gv.word = 0;
  gv.shift = 0;
  m.vars.push_back(gv);
  m.words_per_state = 1;
  m.packed.assign(S, 0);
  m.packed[goal] = 1;

  uint32_t choice_states_left = max_choice_states;
  m.state_choice_off.push_back(0);
  for (uint32_t s = 0; s < S; ++s) {
    uint32_t n_choices = 1;
    if (mdp && s != goal && s != sink && choice_states_left > 0 && rng.below(2)) {
      n_choices = 2;
      choice_states_left -= 1;
    }
    for (uint32_t c = 0; c < n_choices; ++c) {
      m.choice_trans_off.push_back(m.trans_dst.size());
      if (s == goal || s == sink) {
        m.trans_dst.push_back(s);
        m.trans_prob.push_back(1.0);
        continue;
      }
      // successors: one absorbing with weight 3, up to two others with
      // weights 1..6 (total <= 15, so the absorbing share is >= 0.2)
      std::vector<std::pair<uint32_t, int>> succ;
      succ.emplace_back(rng.below(2) ? goal : sink, 3);
      int extra = 1 + static_cast<int>(rng.below(2));
      for (int i = 0; i < extra; ++i) {
        uint32_t dst = static_cast<uint32_t>(rng.below(S));
        bool dup = false;
        for (const auto& sw : succ) dup = dup || sw.first == dst;
        if (!dup) succ.emplace_back(dst, 1 + static_cast<int>(rng.below(6)));
      }
      int total = 0;
      for (const auto& sw : succ) total += sw.second;
      for (const auto& sw : succ) {
        m.trans_dst.push_back(sw.first);
        m.trans_prob.push_back(static_cast<double>(sw.second) / total);
      }
    }
    m.state_choice_off.push_back(m.choice_trans_off.size());
  }
  m.choice_trans_off.push_back(m.trans_dst.size());
  return m;
}

}  // namespace lisa::test
