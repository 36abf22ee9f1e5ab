#pragma once

#include <cassert>
#include <utility>
#include <vector>

#include "lisa/agent.hpp"

namespace lisa {

/// Static layout of the environment-side state: one bounded counter per
/// modelled atom plus a one-bit episode latch per conditional percept and a
/// one-bit "no feedback drawn" latch per action whose outcome probabilities
/// sum below 1.
struct EnvLayout {
  struct PerceptSlot {
    int percept = -1;      // index into AgentSpec::percepts
    int max_counter = 1;   // counters live in [0..max] (ambient: [1..max])
    bool conditional = false;
  };
  struct FeedbackSlot {
    ActionId action = -1;
    AtomId atom = -1;
    int max_counter = 1;   // mu + sigma
    DelayedBernoulli delay;
  };

  std::vector<PerceptSlot> percepts;
  std::vector<FeedbackSlot> feedbacks;              // flattened, action-major
  std::vector<std::pair<int, int>> action_fb;       // action -> [begin,end) in feedbacks
  std::vector<int> action_latch;                    // action -> latch slot or -1
  int latch_count = 0;

  static EnvLayout of(const AgentSpec& spec) {
    EnvLayout lay;
    for (size_t i = 0; i < spec.percepts.size(); ++i) {
      const PerceptDecl& pd = spec.percepts[i];
      PerceptSlot s;
      s.percept = static_cast<int>(i);
      s.conditional = !pd.ambient();
      s.max_counter = std::max(pd.activation.hi(), pd.deactivation.hi());
      lay.percepts.push_back(s);
    }
    lay.action_fb.resize(spec.actions.size(), {0, 0});
    lay.action_latch.resize(spec.actions.size(), -1);
    for (const ActionDecl& a : spec.actions) {
      int begin = static_cast<int>(lay.feedbacks.size());
      for (const FeedbackSpec& fb : a.outcomes) {
        FeedbackSlot s;
        s.action = a.id;
        s.atom = fb.atom;
        s.max_counter = fb.delay.hi();
        s.delay = fb.delay;
        lay.feedbacks.push_back(s);
      }
      lay.action_fb[static_cast<size_t>(a.id)] = {begin, static_cast<int>(lay.feedbacks.size())};
      if (a.none_prob() > 0.0)
        lay.action_latch[static_cast<size_t>(a.id)] = lay.latch_count++;
    }
    return lay;
  }
};

/// Dynamic counter bank. Counter semantics:
///  - ambient percept: renewal counter in [1..max]; fires when it reaches 1,
///    resampling the atom and re-arming with a fresh delay, so consecutive
///    fires are exactly one drawn delay apart.
///  - conditional percept: countdown in [0..max], 0 = idle; armed on a
///    condition episode edge; the atom toggles on the tick the countdown
///    expires (an armed delay of d lands d-1 ticks after the arming tick).
///  - action feedback: countdown in [0..max]; the feedback atom is true
///    exactly while the counter sits at 1 (belief and counter share one
///    variable in emitted models);
///    cleared once no plan waits on the action.
struct EnvState {
  std::vector<int32_t> pc;     // percept counters
  std::vector<uint8_t> ep;     // episode bits (conditional percepts)
  std::vector<int32_t> fc;     // feedback counters
  std::vector<uint8_t> latch;  // per latched action: categorical drew "none"

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

inline EnvState initial_env(const AgentSpec& spec, const EnvLayout& lay) {
  EnvState env;
  env.pc.resize(lay.percepts.size(), 0);
  env.ep.resize(lay.percepts.size(), 0);
  env.fc.resize(lay.feedbacks.size(), 0);
  env.latch.resize(static_cast<size_t>(lay.latch_count), 0);
  for (size_t i = 0; i < lay.percepts.size(); ++i) {
    const PerceptDecl& pd = spec.percepts[static_cast<size_t>(lay.percepts[i].percept)];
    if (pd.ambient()) env.pc[i] = pd.activation.mu;  // first boundary after mu cycles
  }
  return env;
}

/// One probabilistic alternative of a tick factor.
struct TickAlt {
  enum class Op : uint8_t {
    AmbientFire,   // percept slot: set atom to `flag`, re-arm with `delay`
    CondArm,       // percept slot: arm countdown `delay` (-1 = draw missed)
    FeedbackArm,   // feedback slot `idx`: counter := delay, siblings := 0
    FeedbackNone,  // action `idx`: all counters := 0, latch := 1
  };
  double prob = 1.0;
  Op op = Op::AmbientFire;
  int32_t idx = -1;
  int32_t delay = 0;
  bool flag = false;
};

/// A factor is one independent probabilistic event of the tick; the full
/// branch distribution is the product over factors.
struct TickFactor {
  std::vector<TickAlt> alts;
};

/// Everything deterministic about one environment tick, precomputed once;
/// branches are then formed per alternative combination.
struct TickContext {
  const AgentSpec* spec = nullptr;
  const EnvLayout* lay = nullptr;
  EnvState base;                      // after deterministic phase
  std::vector<TickFactor> factors;    // canonical order
  std::vector<uint8_t> beliefs_before;
};

struct TickBranch {
  double prob = 1.0;
  EnvState env;
  std::vector<std::pair<AtomId, bool>> changes;  // signed external changes
};

namespace detail {

inline bool eval_condition(const std::vector<Literal>& cond, const std::vector<uint8_t>& b) {
  for (const Literal& l : cond) {
    bool v = b[static_cast<size_t>(l.atom)] != 0;
    if (l.negated ? v : !v) return false;
  }
  return true;
}

/// True iff some plan sits at a step that dispatched `action` (lambda points
/// at an external step invoking it).
inline bool action_waited_on(const AgentSpec& spec, ActionId action,
                             const std::vector<int32_t>& lambdas) {
  for (const Plan& p : spec.plans) {
    int32_t l = lambdas[static_cast<size_t>(p.id)];
    if (l <= 0) continue;
    const ActionRef& step = p.body[static_cast<size_t>(l - 1)];
    if (step.kind == ActionRef::Kind::External && step.action == action) return true;
  }
  return false;
}

}  // namespace detail

/// Prepares one environment tick from the end-of-cycle snapshot:
/// `beliefs`/`changed` are B[t] and its event bits, `lambdas` the plan
/// indices after this cycle's action execution.
inline TickContext begin_tick(const AgentSpec& spec, const EnvLayout& lay,
                              const std::vector<uint8_t>& beliefs,
                              const std::vector<uint8_t>& changed,
                              const std::vector<int32_t>& lambdas, const EnvState& env) {
  TickContext ctx;
  ctx.spec = &spec;
  ctx.lay = &lay;
  ctx.base = env;
  ctx.beliefs_before = beliefs;

  // Previous-cycle beliefs, for condition edge detection.
  std::vector<uint8_t> prev = beliefs;
  for (size_t a = 0; a < prev.size(); ++a)
    if (changed[a]) prev[a] = prev[a] ? 0 : 1;

  // Percepts, in declaration order.
  for (size_t s = 0; s < lay.percepts.size(); ++s) {
    const EnvLayout::PerceptSlot& slot = lay.percepts[s];
    const PerceptDecl& pd = spec.percepts[static_cast<size_t>(slot.percept)];
    bool atom_true = beliefs[static_cast<size_t>(pd.atom)] != 0;
    if (!slot.conditional) {
      if (ctx.base.pc[s] > 1) {
        ctx.base.pc[s] -= 1;
      } else {
        // Renewal boundary: resample the atom under the regime that governs
        // its current value, re-arm with a delay drawn for the new value.
        const DelayedBernoulli& regime = atom_true ? pd.deactivation : pd.activation;
        TickFactor f;
        for (int pass = 0; pass < 2; ++pass) {
          bool flip = pass == 0;
          double p = flip ? regime.p : 1.0 - regime.p;
          if (p <= 0.0) continue;
          bool post = flip ? !atom_true : atom_true;
          const DelayedBernoulli& next = post ? pd.deactivation : pd.activation;
          for (int d = next.lo(); d <= next.hi(); ++d) {
            TickAlt alt;
            alt.prob = p / next.support();
            alt.op = TickAlt::Op::AmbientFire;
            alt.idx = static_cast<int32_t>(s);
            alt.delay = d;
            alt.flag = post;
            f.alts.push_back(alt);
          }
        }
        ctx.factors.push_back(std::move(f));
      }
      continue;
    }

    // Conditional percept: episode edges first, then the countdown sweep
    // happens per-branch (an armed delay of 1 must fire this very tick).
    bool cond_now = detail::eval_condition(pd.condition, beliefs);
    bool episode = ctx.base.ep[s] != 0;
    if (!episode && cond_now) {
      ctx.base.ep[s] = 1;
      if (!atom_true) {
        const DelayedBernoulli& act = pd.activation;
        TickFactor f;
        if (act.p < 1.0) f.alts.push_back(TickAlt{1.0 - act.p, TickAlt::Op::CondArm,
                                                  static_cast<int32_t>(s), -1, false});
        for (int d = act.lo(); d <= act.hi(); ++d)
          if (act.p > 0.0)
            f.alts.push_back(TickAlt{act.p / act.support(), TickAlt::Op::CondArm,
                                     static_cast<int32_t>(s), d, false});
        if (!f.alts.empty()) ctx.factors.push_back(std::move(f));
      } else {
        ctx.base.pc[s] = 0;  // rising edge cancels a pending deactivation
      }
    } else if (episode && !cond_now) {
      ctx.base.ep[s] = 0;
      if (atom_true) {
        const DelayedBernoulli& de = pd.deactivation;
        TickFactor f;
        if (de.p < 1.0) f.alts.push_back(TickAlt{1.0 - de.p, TickAlt::Op::CondArm,
                                                 static_cast<int32_t>(s), -1, false});
        for (int d = de.lo(); d <= de.hi(); ++d)
          if (de.p > 0.0)
            f.alts.push_back(TickAlt{de.p / de.support(), TickAlt::Op::CondArm,
                                     static_cast<int32_t>(s), d, false});
        if (!f.alts.empty()) ctx.factors.push_back(std::move(f));
      } else {
        ctx.base.pc[s] = 0;  // falling edge cancels a pending activation
      }
    }
  }

  // Action feedbacks, in action order. Exactly one case applies per tick,
  // decided on the counters' pre-tick values (the emitted [p] guards read
  // pre-update values the same way): counting -> decrement; otherwise reset
  // when no plan waits, hold when the draw came up empty, arm when freshly
  // waited on.
  for (const ActionDecl& act : spec.actions) {
    auto [fb_begin, fb_end] = lay.action_fb[static_cast<size_t>(act.id)];
    bool all_low = true;
    for (int i = fb_begin; i < fb_end; ++i)
      if (ctx.base.fc[static_cast<size_t>(i)] > 1) all_low = false;
    if (!all_low) {
      for (int i = fb_begin; i < fb_end; ++i)
        if (ctx.base.fc[static_cast<size_t>(i)] > 1) ctx.base.fc[static_cast<size_t>(i)] -= 1;
      continue;
    }
    int latch_slot = lay.action_latch[static_cast<size_t>(act.id)];
    bool latched = latch_slot >= 0 && ctx.base.latch[static_cast<size_t>(latch_slot)] != 0;
    bool waiting = detail::action_waited_on(spec, act.id, lambdas);

    if (!waiting) {
      if (latch_slot >= 0) ctx.base.latch[static_cast<size_t>(latch_slot)] = 0;
      for (int i = fb_begin; i < fb_end; ++i) ctx.base.fc[static_cast<size_t>(i)] = 0;
      continue;
    }
    if (latched || fb_begin == fb_end) continue;

    // Categorical draw over outcomes happens once, at arming time.
    TickFactor f;
    for (int i = fb_begin; i < fb_end; ++i) {
      const EnvLayout::FeedbackSlot& slot = lay.feedbacks[static_cast<size_t>(i)];
      if (slot.delay.p <= 0.0) continue;
      for (int d = slot.delay.lo(); d <= slot.delay.hi(); ++d)
        f.alts.push_back(TickAlt{slot.delay.p / slot.delay.support(),
                                 TickAlt::Op::FeedbackArm, static_cast<int32_t>(i), d, false});
    }
    if (double np = act.none_prob(); np > 0.0)
      f.alts.push_back(TickAlt{np, TickAlt::Op::FeedbackNone, act.id, 0, false});
    if (!f.alts.empty()) ctx.factors.push_back(std::move(f));
  }

  return ctx;
}

/// Materializes one branch for a fixed choice of alternative per factor.
inline TickBranch make_branch(const TickContext& ctx, const std::vector<size_t>& pick) {
  const AgentSpec& spec = *ctx.spec;
  const EnvLayout& lay = *ctx.lay;
  TickBranch br;
  br.env = ctx.base;
  std::vector<uint8_t> val = ctx.beliefs_before;

  for (size_t fi = 0; fi < ctx.factors.size(); ++fi) {
    const TickAlt& alt = ctx.factors[fi].alts[pick[fi]];
    br.prob *= alt.prob;
    switch (alt.op) {
      case TickAlt::Op::AmbientFire: {
        const PerceptDecl& pd = spec.percepts[static_cast<size_t>(
            lay.percepts[static_cast<size_t>(alt.idx)].percept)];
        val[static_cast<size_t>(pd.atom)] = alt.flag ? 1 : 0;
        br.env.pc[static_cast<size_t>(alt.idx)] = alt.delay;
        break;
      }
      case TickAlt::Op::CondArm:
        if (alt.delay > 0) br.env.pc[static_cast<size_t>(alt.idx)] = alt.delay;
        break;
      case TickAlt::Op::FeedbackArm: {
        ActionId a = lay.feedbacks[static_cast<size_t>(alt.idx)].action;
        auto [b, e] = lay.action_fb[static_cast<size_t>(a)];
        for (int i = b; i < e; ++i) br.env.fc[static_cast<size_t>(i)] = 0;
        br.env.fc[static_cast<size_t>(alt.idx)] = alt.delay;
        break;
      }
      case TickAlt::Op::FeedbackNone: {
        auto [b, e] = lay.action_fb[static_cast<size_t>(alt.idx)];
        for (int i = b; i < e; ++i) br.env.fc[static_cast<size_t>(i)] = 0;
        int slot = lay.action_latch[static_cast<size_t>(alt.idx)];
        br.env.latch[static_cast<size_t>(slot)] = 1;
        break;
      }
    }
  }

  // Conditional-percept countdown sweep (after arming, so delay 1 fires now).
  for (size_t s = 0; s < lay.percepts.size(); ++s) {
    if (!lay.percepts[s].conditional) continue;
    int32_t& c = br.env.pc[s];
    if (c == 1) {
      const PerceptDecl& pd = spec.percepts[static_cast<size_t>(lay.percepts[s].percept)];
      size_t a = static_cast<size_t>(pd.atom);
      val[a] = val[a] ? 0 : 1;
      c = 0;
    } else if (c > 1) {
      c -= 1;
    }
  }

  // Feedback atoms read straight off the counters.
  for (size_t i = 0; i < lay.feedbacks.size(); ++i)
    val[static_cast<size_t>(lay.feedbacks[i].atom)] = br.env.fc[i] == 1 ? 1 : 0;

  for (size_t a = 0; a < val.size(); ++a)
    if (val[a] != ctx.beliefs_before[a])
      br.changes.emplace_back(static_cast<AtomId>(a), val[a] != 0);
  return br;
}

/// Exhaustive branch distribution of one tick; probabilities sum to 1.
inline std::vector<TickBranch> enumerate_tick(const TickContext& ctx) {
  std::vector<TickBranch> out;
  std::vector<size_t> pick(ctx.factors.size(), 0);
  while (true) {
    out.push_back(make_branch(ctx, pick));
    size_t i = 0;
    for (; i < pick.size(); ++i) {
      if (++pick[i] < ctx.factors[i].alts.size()) break;
      pick[i] = 0;
    }
    if (i == pick.size()) break;
  }
  return out;
}

/// One sampled branch of the tick (same distribution as enumerate_tick).
inline TickBranch sample_tick(const TickContext& ctx, Rng& rng) {
  std::vector<size_t> pick(ctx.factors.size(), 0);
  for (size_t fi = 0; fi < ctx.factors.size(); ++fi) {
    const std::vector<TickAlt>& alts = ctx.factors[fi].alts;
    double u = rng.uniform();
    double acc = 0;
    size_t chosen = alts.size() - 1;
    for (size_t i = 0; i < alts.size(); ++i) {
      acc += alts[i].prob;
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    pick[fi] = chosen;
  }
  TickBranch br = make_branch(ctx, pick);
  br.prob = 1.0;  // a sampled branch is taken, not weighted
  return br;
}

/// Distribution over counter initializations for one action invocation,
/// independent of any surrounding cycle; this is the categorical-by-uniform
/// product the environment uses when a dispatched action arms.
inline std::vector<std::pair<double, std::pair<int, int>>> arm_feedback_distribution(
    const AgentSpec& spec, const EnvLayout& lay, ActionId action) {
  // pair: (feedback slot or -1 for none, delay)
  std::vector<std::pair<double, std::pair<int, int>>> out;
  auto [b, e] = lay.action_fb[static_cast<size_t>(action)];
  for (int i = b; i < e; ++i) {
    const EnvLayout::FeedbackSlot& slot = lay.feedbacks[static_cast<size_t>(i)];
    if (slot.delay.p <= 0.0) continue;
    for (int d = slot.delay.lo(); d <= slot.delay.hi(); ++d)
      out.push_back({slot.delay.p / slot.delay.support(), {i, d}});
  }
  if (double np = spec.actions[static_cast<size_t>(action)].none_prob(); np > 0.0)
    out.push_back({np, {-1, 0}});
  return out;
}

}  // namespace lisa
