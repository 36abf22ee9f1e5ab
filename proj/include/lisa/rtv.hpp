#pragma once

#include <tuple>

#include "lisa/pctl.hpp"
#include "lisa/semantics.hpp"

namespace lisa::rtv {

/// Plan-selection objective: a quantitative P query scored per candidate.
struct SelectorConfig {
  pctl::Query objective;
  bool maximize = true;  // argmax of the fixed-first-choice value (argmin otherwise)
};

struct SelectorContext {
  const AgentSpec* spec = nullptr;
  const ProbModel* model = nullptr;
  const StateLookup* lookup = nullptr;
  const StateCodec* codec = nullptr;
  SelectorConfig cfg;
  pctl::CheckOptions opts;
};

struct SelectResult {
  Selection selection;
  bool degraded = false;            // fell back to first-declared
  std::vector<std::string> notes;
  std::vector<std::tuple<size_t, PlanId, double>> scores;  // (event, candidate, value)
};

namespace detail {

/// Mental notes written only by the verification skill are invisible to the
/// design-time model (nothing in the spec writes them), so the model keeps
/// them at their initial value. Projecting them back before the state lookup
/// keeps live states locatable after the skill has injected its results;
/// targets that plans or rules also write are left untouched.
inline SysState project_untracked_targets(const AgentSpec& spec, SysState state) {
  for (const SkillQuery& q : spec.skill.queries) {
    if (q.target < 0) continue;
    bool written = false;
    for (const Plan& p : spec.plans)
      for (const ActionRef& step : p.body)
        if ((step.kind == ActionRef::Kind::MentalAdd ||
             step.kind == ActionRef::Kind::MentalRemove) &&
            step.atom == q.target)
          written = true;
    for (const LogicRule& r : spec.rules)
      for (const RuleEffect& eff : r.consequent)
        if (eff.atom == q.target) written = true;
    if (written) continue;
    size_t a = static_cast<size_t>(q.target);
    state.agent.beliefs[a] = spec.initial_beliefs[a];
    state.agent.changed[a] = 0;
  }
  return state;
}

inline double q_value(const ProbModel& m, uint32_t state, uint64_t choice,
                      const pctl::PathValues& pv) {
  if (pv.kind == pctl::PathFormula::Kind::Until) {
    if (pv.goal[state]) return 1.0;
    if (!pv.left[state]) return 0.0;
  }
  double acc = 0;
  for (uint64_t t = m.choice_trans_off[choice]; t < m.choice_trans_off[choice + 1]; ++t)
    acc += m.trans_prob[t] * pv.continuation[m.trans_dst[t]];
  return acc;
}

}  // namespace detail

/// The model-checking Plan Selection Function: for every desire set with two
/// or more candidates, scores each candidate by the objective value from the
/// current state with this cycle's choice fixed to the candidate (remaining
/// non-determinism resolved per the configured direction) and picks the
/// argmax, ties broken by the lowest plan id. Singleton sets bypass checking;
/// any failure degrades to the first-declared policy with a note.
inline SelectResult verified_select(const SelectorContext& ctx, const SysState& state,
                                    const std::vector<std::vector<PlanId>>& desires) {
  SelectResult res;
  res.selection = select_first_declared(desires, state.agent.lambdas);

  bool needs_check = false;
  for (const auto& d : desires)
    if (d.size() >= 2) needs_check = true;
  if (!needs_check) return res;  // fast path, no model query

  if (!ctx.model || !ctx.lookup || !ctx.codec || !ctx.spec) {
    res.degraded = true;
    res.notes.push_back("selector context incomplete; using first-declared");
    return res;
  }

  std::optional<uint32_t> idx =
      ctx.lookup->find(ctx.codec->encode(detail::project_untracked_targets(*ctx.spec, state)));
  if (!idx) {
    res.degraded = true;
    res.notes.push_back("current state is not in the design-time model; using first-declared");
    return res;
  }

  const pctl::Query& q = ctx.cfg.objective;
  if (q.reward || q.formula.kind != pctl::StateFormula::Kind::Prob ||
      q.formula.quant == pctl::Quant::Bound) {
    res.degraded = true;
    res.notes.push_back("objective must be a quantitative P query; using first-declared");
    return res;
  }

  try {
    pctl::Direction dir = pctl::Direction::Single;
    if (ctx.model->kind == ProbModel::Kind::Mdp)
      dir = ctx.cfg.maximize ? pctl::Direction::Max : pctl::Direction::Min;
    if (q.formula.quant == pctl::Quant::Min) dir = pctl::Direction::Min;
    if (q.formula.quant == pctl::Quant::Max && ctx.model->kind == ProbModel::Kind::Mdp)
      dir = pctl::Direction::Max;
    pctl::PathValues pv = pctl::prob_values(*ctx.model, *q.formula.path, dir, ctx.opts);

    // The model's choice list at this state mirrors enumerate_choices on the
    // same desires (identical deterministic construction).
    std::vector<Choice> choices = enumerate_choices(desires, state.agent.lambdas);
    uint64_t c0 = ctx.model->state_choice_off[*idx];
    uint64_t c1 = ctx.model->state_choice_off[*idx + 1];
    if (c1 - c0 != choices.size()) {
      res.degraded = true;
      res.notes.push_back("model choices disagree with the live desire sets; using first-declared");
      return res;
    }

    for (size_t e = 0; e < desires.size(); ++e) {
      if (desires[e].size() < 2) continue;
      PlanId best = -1;
      double best_v = 0;
      for (PlanId cand : desires[e]) {
        bool any = false;
        double v = 0;
        for (size_t c = 0; c < choices.size(); ++c) {
          const auto& opts_e = choices[c].event_options[e];
          if (std::find(opts_e.begin(), opts_e.end(), cand) == opts_e.end()) continue;
          double qv = detail::q_value(*ctx.model, *idx, c0 + c, pv);
          if (!any) {
            v = qv;
            any = true;
          } else {
            v = ctx.cfg.maximize ? std::max(v, qv) : std::min(v, qv);
          }
        }
        if (!any) continue;
        res.scores.emplace_back(e, cand, v);
        bool better = best < 0 || (ctx.cfg.maximize ? v > best_v : v < best_v);
        if (better) {
          best = cand;
          best_v = v;
        }
      }
      if (best >= 0) res.selection.per_event[e] = best;
    }
    res.selection.starts = effective_starts(res.selection.per_event, state.agent.lambdas);
    return res;
  } catch (const Error& err) {
    res.degraded = true;
    res.selection = select_first_declared(desires, state.agent.lambdas);
    res.notes.push_back(std::string("objective unevaluable (") + err.what() +
                        "); using first-declared");
    return res;
  }
}

// ---------------------------------------------------------------------------
// Verification skill: design-time model queried from the live state, results
// injected as mental notes.

struct SkillResult {
  std::vector<RuleEffect> changes;
  bool degraded = false;
  std::vector<std::string> notes;
};

inline bool skill_cmp(char cmp, double value, double threshold) {
  switch (cmp) {
    case '<': return value < threshold;
    case 'l': return value <= threshold;
    case '>': return value > threshold;
    default: return value >= threshold;
  }
}

/// One skill evaluation at the given live state: for each configured query,
/// check it from the matching model state and queue +target / -target for the
/// next belief update. A state outside the model degrades (skip, note)
/// rather than aborting.
inline SkillResult skill_step(const AgentSpec& spec, const ProbModel& model,
                              const StateLookup& lookup, const StateCodec& codec,
                              const SysState& state, const VerificationSkill& skill,
                              const pctl::CheckOptions& base = {}) {
  SkillResult out;
  if (skill.queries.empty()) return out;
  std::optional<uint32_t> idx =
      lookup.find(codec.encode(detail::project_untracked_targets(spec, state)));
  if (!idx) {
    out.degraded = true;
    out.notes.push_back("live state not found in the design-time model; skill skipped");
    return out;
  }
  for (const SkillQuery& sq : skill.queries) {
    try {
      pctl::Query q = pctl::parse_query(sq.query_text);
      pctl::CheckOptions opts = base;
      opts.from = *idx;
      pctl::CheckResult r = pctl::check(model, q, opts);
      double value = r.value;
      if (r.pair) {
        // Conservative side of a (min,max) sweep for the comparison.
        value = (sq.cmp == '<' || sq.cmp == 'l') ? r.value2 : r.value;
      }
      out.changes.push_back(RuleEffect{sq.target, skill_cmp(sq.cmp, value, sq.threshold)});
    } catch (const Error& err) {
      out.degraded = true;
      out.notes.push_back("skill query '" + sq.query_text + "' failed: " + err.what());
    }
  }
  return out;
}

}  // namespace lisa::rtv
