#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "lisa/agent.hpp"
#include "lisa/env.hpp"

namespace lisa {

/// Full Markov state of the closed loop: the agent triple {B[t], E[t],
/// lambda[t]} plus the environment counter bank that keeps delayed
/// percepts/feedbacks memoryless. lambdas hold the plan indices as of the
/// start of cycle t's plan-update phase, which is where the plan-selection
/// choice attaches (C(s) = D[t]).
struct SysState {
  AgentState agent;
  EnvState env;

  friend bool operator==(const SysState&, const SysState&) = default;
};

inline SysState initial_state(const AgentSpec& spec, const EnvLayout& lay) {
  SysState s;
  s.agent.beliefs = spec.initial_beliefs;
  s.agent.beliefs.resize(spec.atom_count(), 0);
  s.agent.changed.assign(spec.atom_count(), 0);
  s.agent.lambdas.assign(spec.plan_count(), 0);
  for (const Plan& p : spec.plans)
    if (p.initial) s.agent.lambdas[static_cast<size_t>(p.id)] = 1;  // A0 dispatched at t=0
  s.env = initial_env(spec, lay);
  return s;
}

// ---------------------------------------------------------------------------
// f_BU: belief update (external changes, queued mental notes, rules to fixpoint)

struct BeliefUpdate {
  std::vector<uint8_t> beliefs;
  std::vector<int> fired_rules;  // indices into spec.rules, in firing order
};

inline BeliefUpdate belief_update(const AgentSpec& spec, const std::vector<uint8_t>& beliefs,
                                  const std::vector<std::pair<AtomId, bool>>& external_changes,
                                  const std::vector<RuleEffect>& mental_changes) {
  BeliefUpdate out;
  out.beliefs = beliefs;
  for (const auto& [atom, value] : external_changes) {
    if (spec.atom(atom).kind == AtomKind::Mental)
      raise(ErrorCode::Spec, "external change touches mental note '" + spec.atom(atom).name + "'");
    out.beliefs[static_cast<size_t>(atom)] = value ? 1 : 0;
  }
  // Removes first so that a simultaneous add wins deterministically.
  for (const RuleEffect& m : mental_changes)
    if (!m.add) out.beliefs[static_cast<size_t>(m.atom)] = 0;
  for (const RuleEffect& m : mental_changes)
    if (m.add) out.beliefs[static_cast<size_t>(m.atom)] = 1;

  // Logic rules swept to fixpoint; the pass bound |Bm|+1 suffices for any
  // monotone rule set, so exceeding it means the rules oscillate.
  size_t mental_count = 0;
  for (const BeliefAtom& a : spec.atoms)
    if (a.kind == AtomKind::Mental) ++mental_count;
  std::vector<int> last_pass_fired;
  for (size_t pass = 0; pass <= mental_count; ++pass) {
    bool changed = false;
    last_pass_fired.clear();
    for (size_t r = 0; r < spec.rules.size(); ++r) {
      const LogicRule& rule = spec.rules[r];
      if (!satisfies(out.beliefs, rule.antecedent)) continue;
      for (const RuleEffect& eff : rule.consequent) {
        uint8_t want = eff.add ? 1 : 0;
        if (out.beliefs[static_cast<size_t>(eff.atom)] != want) {
          out.beliefs[static_cast<size_t>(eff.atom)] = want;
          changed = true;
          last_pass_fired.push_back(static_cast<int>(r));
        }
      }
    }
    for (int r : last_pass_fired) out.fired_rules.push_back(r);
    if (!changed) return out;
  }
  std::string names;
  for (int r : last_pass_fired) {
    if (!names.empty()) names += ", ";
    names += spec.rules[static_cast<size_t>(r)].name;
  }
  raise(ErrorCode::Spec, "logic rules do not reach a fixpoint (cycle involving: " + names + ")");
}

// ---------------------------------------------------------------------------
// f_BR: belief review

/// E[t] as per-atom changed bits; |E[t]| equals the Hamming distance.
inline std::vector<uint8_t> belief_review(const std::vector<uint8_t>& before,
                                          const std::vector<uint8_t>& after) {
  std::vector<uint8_t> changed(after.size(), 0);
  for (size_t a = 0; a < after.size(); ++a) changed[a] = before[a] != after[a] ? 1 : 0;
  return changed;
}

// ---------------------------------------------------------------------------
// f_P: applicable plans (Desires), one set per event

/// D[t]: for each event (canonical atom order) the plans whose trigger
/// matches it and whose context is satisfied, in declaration order. Plans
/// already intended stay listed; selection will not restart them.
inline std::vector<std::vector<PlanId>> applicable_plans(const AgentSpec& spec,
                                                         const std::vector<Event>& events,
                                                         const std::vector<uint8_t>& beliefs) {
  std::vector<std::vector<PlanId>> desires(events.size());
  for (size_t e = 0; e < events.size(); ++e)
    for (const Plan& p : spec.plans) {
      if (!p.trigger || !(*p.trigger == events[e])) continue;
      if (satisfies(beliefs, p.context)) desires[e].push_back(p.id);
    }
  return desires;
}

// ---------------------------------------------------------------------------
// F_O: plan selection

enum class SelectionPolicy { FirstDeclared, UniformRandom, Verified };

struct Selection {
  std::vector<PlanId> per_event;  // chosen plan per event, -1 where D_k is empty
  std::vector<PlanId> starts;     // deduped, lambda==0 plans to start, ascending
};

inline std::vector<PlanId> effective_starts(const std::vector<PlanId>& chosen,
                                            const std::vector<int32_t>& lambdas) {
  std::vector<PlanId> starts;
  for (PlanId p : chosen)
    if (p >= 0 && lambdas[static_cast<size_t>(p)] == 0) starts.push_back(p);
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  return starts;
}

/// Selects one plan per non-empty desire set. `chooser(event_index, set)`
/// returns the index into the set; duplicates across events collapse and
/// already-running plans are not restarted.
template <typename Chooser>
Selection select_plans(const std::vector<std::vector<PlanId>>& desires,
                       const std::vector<int32_t>& lambdas, Chooser&& chooser) {
  Selection sel;
  sel.per_event.assign(desires.size(), -1);
  for (size_t e = 0; e < desires.size(); ++e) {
    if (desires[e].empty()) continue;
    size_t pick = desires[e].size() == 1 ? 0 : chooser(e, desires[e]);
    sel.per_event[e] = desires[e][std::min(pick, desires[e].size() - 1)];
  }
  sel.starts = effective_starts(sel.per_event, lambdas);
  return sel;
}

inline Selection select_first_declared(const std::vector<std::vector<PlanId>>& desires,
                                       const std::vector<int32_t>& lambdas) {
  return select_plans(desires, lambdas, [](size_t, const std::vector<PlanId>&) { return 0; });
}

inline Selection select_uniform_random(const std::vector<std::vector<PlanId>>& desires,
                                       const std::vector<int32_t>& lambdas, Rng& rng) {
  return select_plans(desires, lambdas, [&rng](size_t, const std::vector<PlanId>& d) {
    return static_cast<size_t>(rng.below(d.size()));
  });
}

/// One non-deterministic alternative of F_O over the product of per-event
/// selections. Alternatives with identical effect on the intention set are
/// collapsed; event_options keeps, per event, every plan whose selection is
/// consistent with this choice (used by the run-time verifier).
struct Choice {
  std::vector<PlanId> starts;
  std::vector<std::vector<PlanId>> event_options;
};

inline std::vector<Choice> enumerate_choices(const std::vector<std::vector<PlanId>>& desires,
                                             const std::vector<int32_t>& lambdas) {
  std::vector<size_t> active;  // indices of non-empty desire sets
  uint64_t combos = 1;
  for (size_t e = 0; e < desires.size(); ++e)
    if (!desires[e].empty()) {
      active.push_back(e);
      combos *= desires[e].size();
      if (combos > 1u << 20)
        raise(ErrorCode::Limit, "plan-selection choice explosion (over 2^20 combinations)");
    }

  std::vector<Choice> out;
  std::map<std::vector<PlanId>, size_t> by_starts;
  std::vector<size_t> odo(active.size(), 0);
  while (true) {
    std::vector<PlanId> chosen(desires.size(), -1);
    for (size_t i = 0; i < active.size(); ++i) chosen[active[i]] = desires[active[i]][odo[i]];
    std::vector<PlanId> starts = effective_starts(chosen, lambdas);
    auto [it, fresh] = by_starts.try_emplace(starts, out.size());
    if (fresh) {
      Choice c;
      c.starts = starts;
      c.event_options.assign(desires.size(), {});
      out.push_back(std::move(c));
    }
    Choice& c = out[it->second];
    for (size_t e = 0; e < desires.size(); ++e)
      if (chosen[e] >= 0) {
        auto& opts = c.event_options[e];
        if (std::find(opts.begin(), opts.end(), chosen[e]) == opts.end())
          opts.push_back(chosen[e]);
      }
    size_t i = 0;
    for (; i < odo.size(); ++i) {
      if (++odo[i] < desires[active[i]].size()) break;
      odo[i] = 0;
    }
    if (i == odo.size() || odo.empty()) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// f_act: execute one step of every intention

struct ActOutcome {
  std::vector<int32_t> lambdas;
  /// Steps dispatched this cycle as (plan, 1-based step index); carries the
  /// transition rewards and determines next cycle's mental-note queue.
  std::vector<std::pair<PlanId, int>> dispatched;
};

/// Advances every intention by at most one step. Completion conditions are
/// evaluated against the entry state, exactly like the emitted [t] guards:
/// mental steps complete once the atom matches the written value, external
/// steps once any feedback atom of the action holds, interrupt steps once
/// the target index reads 0. Interrupt effects override everything else.
inline ActOutcome execute_step(const AgentSpec& spec, const AgentState& st,
                               const std::vector<PlanId>& starts) {
  ActOutcome out;
  out.lambdas = st.lambdas;

  std::vector<uint8_t> interrupted(spec.plan_count(), 0);
  for (const Plan& p : spec.plans) {
    int32_t l = st.lambdas[static_cast<size_t>(p.id)];
    if (l <= 0) continue;
    const ActionRef& step = p.body[static_cast<size_t>(l - 1)];
    if (step.kind == ActionRef::Kind::Interrupt && step.target >= 0)
      interrupted[static_cast<size_t>(step.target)] = 1;
  }

  for (const Plan& p : spec.plans) {
    size_t j = static_cast<size_t>(p.id);
    int32_t l = st.lambdas[j];
    if (l == 0) {
      if (!interrupted[j] && std::binary_search(starts.begin(), starts.end(), p.id)) {
        out.lambdas[j] = 1;
        out.dispatched.emplace_back(p.id, 1);
      }
      continue;
    }
    const ActionRef& step = p.body[static_cast<size_t>(l - 1)];
    bool advance = false;
    switch (step.kind) {
      case ActionRef::Kind::MentalAdd:
        advance = st.beliefs[static_cast<size_t>(step.atom)] != 0;
        break;
      case ActionRef::Kind::MentalRemove:
        advance = st.beliefs[static_cast<size_t>(step.atom)] == 0;
        break;
      case ActionRef::Kind::Interrupt:
        advance = step.target < 0 || st.lambdas[static_cast<size_t>(step.target)] == 0;
        break;
      case ActionRef::Kind::External: {
        const ActionDecl& act = spec.actions[static_cast<size_t>(step.action)];
        for (const FeedbackSpec& fb : act.outcomes)
          if (st.beliefs[static_cast<size_t>(fb.atom)]) {
            advance = true;
            break;
          }
        break;
      }
    }
    if (advance) {
      int32_t nl = l >= p.n_lambda() ? 0 : l + 1;
      out.lambdas[j] = nl;
      if (nl > 0) out.dispatched.emplace_back(p.id, nl);
    }
  }

  // Interrupts win over starts and advances; they were dispatched last cycle.
  for (size_t j = 0; j < interrupted.size(); ++j)
    if (interrupted[j]) out.lambdas[j] = 0;
  // Drop dispatch records cancelled by an interrupt.
  std::erase_if(out.dispatched, [&](const auto& d) {
    return interrupted[static_cast<size_t>(d.first)] != 0;
  });
  return out;
}

/// Mental notes queued for the next belief update: every intention whose
/// index points at an internal note step wrote it this cycle (such steps
/// never survive a cycle, so this is a function of lambda alone).
inline std::vector<RuleEffect> mental_queue(const AgentSpec& spec,
                                            const std::vector<int32_t>& lambdas) {
  std::vector<RuleEffect> q;
  for (const Plan& p : spec.plans) {
    int32_t l = lambdas[static_cast<size_t>(p.id)];
    if (l <= 0) continue;
    const ActionRef& step = p.body[static_cast<size_t>(l - 1)];
    if (step.kind == ActionRef::Kind::MentalAdd) q.push_back({step.atom, true});
    if (step.kind == ActionRef::Kind::MentalRemove) q.push_back({step.atom, false});
  }
  return q;
}

// ---------------------------------------------------------------------------
// Composite transition: f_act under a fixed selection, then one environment
// tick, then f_BU/f_BR of the next cycle.

struct SuccessorSet {
  std::vector<std::pair<double, SysState>> branches;  // duplicates merged
  std::vector<std::pair<PlanId, int>> dispatched;
};

inline SuccessorSet successors(const AgentSpec& spec, const EnvLayout& lay, const SysState& s,
                               const std::vector<PlanId>& starts,
                               std::vector<RuleEffect> extra_mentals = {}) {
  SuccessorSet out;
  ActOutcome act = execute_step(spec, s.agent, starts);
  out.dispatched = act.dispatched;

  std::vector<RuleEffect> mentals = mental_queue(spec, act.lambdas);
  mentals.insert(mentals.end(), extra_mentals.begin(), extra_mentals.end());

  TickContext ctx = begin_tick(spec, lay, s.agent.beliefs, s.agent.changed, act.lambdas, s.env);
  for (TickBranch& br : enumerate_tick(ctx)) {
    BeliefUpdate bu = belief_update(spec, s.agent.beliefs, br.changes, mentals);
    SysState next;
    next.agent.beliefs = std::move(bu.beliefs);
    next.agent.changed = belief_review(s.agent.beliefs, next.agent.beliefs);
    next.agent.lambdas = act.lambdas;
    next.env = std::move(br.env);
    // Merge duplicate successors so each choice is a proper distribution.
    bool merged = false;
    for (auto& [p, st] : out.branches)
      if (st == next) {
        p += br.prob;
        merged = true;
        break;
      }
    if (!merged) out.branches.emplace_back(br.prob, std::move(next));
  }
  return out;
}

/// One sampled reasoning cycle (simulation mode); shares every building
/// block with the exhaustive expansion above so traces and model paths agree.
struct CycleOutcome {
  SysState next;
  std::vector<std::pair<AtomId, bool>> external_changes;
  std::vector<int> fired_rules;
  std::vector<std::pair<PlanId, int>> dispatched;
};

inline CycleOutcome sample_cycle(const AgentSpec& spec, const EnvLayout& lay, const SysState& s,
                                 const std::vector<PlanId>& starts, Rng& rng,
                                 std::vector<RuleEffect> extra_mentals = {}) {
  CycleOutcome out;
  ActOutcome act = execute_step(spec, s.agent, starts);
  out.dispatched = act.dispatched;
  std::vector<RuleEffect> mentals = mental_queue(spec, act.lambdas);
  mentals.insert(mentals.end(), extra_mentals.begin(), extra_mentals.end());

  TickContext ctx = begin_tick(spec, lay, s.agent.beliefs, s.agent.changed, act.lambdas, s.env);
  TickBranch br = sample_tick(ctx, rng);
  out.external_changes = br.changes;
  BeliefUpdate bu = belief_update(spec, s.agent.beliefs, br.changes, mentals);
  out.fired_rules = std::move(bu.fired_rules);
  out.next.agent.beliefs = std::move(bu.beliefs);
  out.next.agent.changed = belief_review(s.agent.beliefs, out.next.agent.beliefs);
  out.next.agent.lambdas = act.lambdas;
  out.next.env = std::move(br.env);
  return out;
}

/// B0 must already be closed under the logic rules; anything else makes s0
/// unreachable from its own definition.
inline void check_initial_consistency(const AgentSpec& spec) {
  BeliefUpdate bu = belief_update(spec, spec.initial_beliefs, {}, {});
  if (bu.beliefs != spec.initial_beliefs) {
    std::string names;
    for (int r : bu.fired_rules) {
      if (!names.empty()) names += ", ";
      names += spec.rules[static_cast<size_t>(r)].name;
    }
    raise(ErrorCode::Spec, "initial beliefs violate logic rules (" + names + ")");
  }
}

}  // namespace lisa
