#pragma once

#include "lisa/rtv.hpp"
#include "lisa/semantics.hpp"

namespace lisa {

/// One transition record: the plan phase consumed the previous state's
/// events (desires/selection), then the environment ticked and beliefs were
/// updated, yielding `state`.
struct CycleRecord {
  int t = 0;  // index of the resulting state
  std::vector<std::vector<PlanId>> desires;
  Selection selection;
  std::vector<std::pair<PlanId, int>> dispatched;
  std::vector<std::pair<AtomId, bool>> external_changes;
  std::vector<int> fired_rules;
  SysState state;
  bool skill_ran = false;
  std::vector<std::string> notes;
};

struct CycleTrace {
  SysState initial;
  std::vector<CycleRecord> records;
};

struct RunOptions {
  int cycles = 10;
  uint64_t seed = 1;
  SelectionPolicy policy = SelectionPolicy::FirstDeclared;
  // Model context, required for the verified policy and the skill.
  const ProbModel* model = nullptr;
  const StateLookup* lookup = nullptr;
  const StateCodec* codec = nullptr;
  std::optional<rtv::SelectorConfig> selector;
  bool run_skill = true;  // honor the spec's RUNTIME VERIFICATION section
  pctl::CheckOptions check;
};

/// Runs the reasoning cycle concretely. Deterministic given (spec, seed,
/// policy): the only random draws are the environment tick and the
/// uniform-random policy, both fed from the one seeded generator. The skill
/// evaluates at its cadence on the just-produced state and its mental-note
/// results enter the following cycle's belief update.
inline CycleTrace run(const AgentSpec& spec, const RunOptions& opts) {
  if (opts.cycles < 1) raise(ErrorCode::Spec, "cycle count must be >= 1");
  check_initial_consistency(spec);
  bool wants_model = opts.policy == SelectionPolicy::Verified ||
                     (opts.run_skill && !spec.skill.queries.empty());
  if (wants_model && (!opts.model || !opts.lookup || !opts.codec))
    raise(ErrorCode::Spec, "verified selection and the skill need a built model");

  EnvLayout lay = EnvLayout::of(spec);
  Rng rng(opts.seed);
  CycleTrace trace;
  trace.initial = initial_state(spec, lay);

  SysState current = trace.initial;
  std::vector<RuleEffect> pending_skill;
  for (int t = 1; t <= opts.cycles; ++t) {
    CycleRecord rec;
    rec.t = t;
    std::vector<Event> events = events_of(current.agent);
    rec.desires = applicable_plans(spec, events, current.agent.beliefs);

    switch (opts.policy) {
      case SelectionPolicy::FirstDeclared:
        rec.selection = select_first_declared(rec.desires, current.agent.lambdas);
        break;
      case SelectionPolicy::UniformRandom:
        rec.selection = select_uniform_random(rec.desires, current.agent.lambdas, rng);
        break;
      case SelectionPolicy::Verified: {
        rtv::SelectorContext ctx;
        ctx.spec = &spec;
        ctx.model = opts.model;
        ctx.lookup = opts.lookup;
        ctx.codec = opts.codec;
        ctx.cfg = opts.selector.value_or(rtv::SelectorConfig{});
        ctx.opts = opts.check;
        rtv::SelectResult sr = rtv::verified_select(ctx, current, rec.desires);
        rec.selection = sr.selection;
        rec.notes = sr.notes;
        break;
      }
    }

    CycleOutcome outcome =
        sample_cycle(spec, lay, current, rec.selection.starts, rng, pending_skill);
    pending_skill.clear();
    rec.dispatched = outcome.dispatched;
    rec.external_changes = outcome.external_changes;
    rec.fired_rules = outcome.fired_rules;
    rec.state = outcome.next;
    current = outcome.next;

    if (opts.run_skill && !spec.skill.queries.empty() && opts.model &&
        t % std::max(1, spec.skill.cadence) == 0) {
      rtv::SkillResult sk =
          rtv::skill_step(spec, *opts.model, *opts.lookup, *opts.codec, current, spec.skill,
                          opts.check);
      pending_skill = sk.changes;
      rec.skill_ran = true;
      for (std::string& n : sk.notes) rec.notes.push_back(std::move(n));
    }
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

/// Line-delimited trace export: cycle index, true beliefs, events, lambdas.
inline std::string trace_line(const AgentSpec& spec, const CycleRecord& rec) {
  std::string out = "cycle=" + std::to_string(rec.t) + " beliefs=";
  bool first = true;
  for (size_t a = 0; a < rec.state.agent.beliefs.size(); ++a)
    if (rec.state.agent.beliefs[a]) {
      if (!first) out += ",";
      out += spec.atom(static_cast<AtomId>(a)).name;
      first = false;
    }
  if (first) out += "-";
  out += " events=";
  first = true;
  for (const Event& e : events_of(rec.state.agent)) {
    if (!first) out += ",";
    out += (e.added ? "+" : "-") + spec.atom(e.atom).name;
    first = false;
  }
  if (first) out += "-";
  out += " lambdas=";
  for (size_t j = 0; j < rec.state.agent.lambdas.size(); ++j) {
    if (j) out += ",";
    out += std::to_string(rec.state.agent.lambdas[j]);
  }
  return out;
}

}  // namespace lisa
