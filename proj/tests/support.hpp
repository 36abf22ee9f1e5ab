#pragma once

#include <algorithm>
#include <set>
#include <sstream>
#include <string>

#include "lisa/lisa.hpp"

namespace lisa::test {

inline std::string source_dir() { return LISA_SOURCE_DIR; }

inline std::string benchmark_path(const std::string& name) {
  return source_dir() + "/benchmarks/" + name;
}

inline AgentSpec load_benchmark(const std::string& name) {
  return parse_or_throw(read_file(benchmark_path(name)));
}

/// Order-independent structural fingerprint of a spec; two specs are
/// structurally identical iff their fingerprints match (atom ids are
/// internal, so everything is keyed by name).
inline std::string fingerprint(const AgentSpec& spec) {
  std::ostringstream os;
  std::set<std::string> atom_lines;
  for (const BeliefAtom& a : spec.atoms)
    atom_lines.insert(std::string(atom_kind_name(a.kind)) + " " + a.name);
  for (const std::string& l : atom_lines) os << "atom " << l << "\n";

  std::set<std::string> initial;
  for (size_t a = 0; a < spec.atoms.size(); ++a)
    if (spec.initial_beliefs[a]) initial.insert(spec.atoms[a].name);
  for (const std::string& n : initial) os << "init " << n << "\n";

  std::set<std::string> percept_lines;
  for (const PerceptDecl& pd : spec.percepts) {
    std::ostringstream p;
    p << "percept " << spec.atom(pd.atom).name << " cond[";
    std::set<std::string> conds;
    for (const Literal& l : pd.condition)
      conds.insert((l.negated ? "~" : "") + spec.atom(l.atom).name);
    for (const std::string& c : conds) p << c << ";";
    p << "] act(" << pd.activation.p << "," << pd.activation.mu << "," << pd.activation.sigma
      << ") de(" << pd.deactivation.p << "," << pd.deactivation.mu << "," << pd.deactivation.sigma
      << ")";
    percept_lines.insert(p.str());
  }
  for (const std::string& l : percept_lines) os << l << "\n";

  for (const ActionDecl& act : spec.actions) {
    os << "action " << act.name << " {";
    for (const FeedbackSpec& fb : act.outcomes)
      os << spec.atom(fb.atom).name << "(" << fb.delay.p << "," << fb.delay.mu << ","
         << fb.delay.sigma << ")";
    os << "}\n";
  }

  for (const LogicRule& r : spec.rules) {
    os << "rule " << normalized_context(spec, r.antecedent) << " =>";
    for (const RuleEffect& e : r.consequent)
      os << " " << (e.add ? "+" : "-") << spec.atom(e.atom).name;
    os << "\n";
  }

  auto step_text = [&](const ActionRef& s) {
    std::string out;
    switch (s.kind) {
      case ActionRef::Kind::External: out = "ext:" + spec.actions[size_t(s.action)].name; break;
      case ActionRef::Kind::MentalAdd: out = "+" + spec.atom(s.atom).name; break;
      case ActionRef::Kind::MentalRemove: out = "-" + spec.atom(s.atom).name; break;
      case ActionRef::Kind::Interrupt: out = "intr:" + std::to_string(s.target); break;
    }
    if (s.reward) out += "{" + format_number(*s.reward) + "}";
    return out;
  };
  for (const ActionRef& s : spec.initial_actions) os << "initact " << step_text(s) << "\n";
  for (const Plan& p : spec.plans) {
    if (p.initial) continue;
    os << "plan " << p.id << " ";
    os << (p.trigger->added ? "+" : "-") << spec.atom(p.trigger->atom).name;
    os << " / " << normalized_context(spec, p.context) << " :";
    for (const ActionRef& s : p.body) os << " " << step_text(s);
    os << "\n";
  }

  std::multiset<std::string> rewards;
  for (const RewardDecl& r : spec.rewards) {
    std::ostringstream p;
    if (r.kind == RewardDecl::Kind::Percept)
      p << "reward atom " << spec.atom(r.atom).name << " " << r.value;
    else
      p << "reward action " << spec.actions[size_t(r.action)].name << " " << r.value;
    rewards.insert(p.str());
  }
  for (const std::string& r : rewards) os << r << "\n";

  if (!spec.skill.queries.empty()) {
    os << "skill every " << spec.skill.cadence << "\n";
    for (const SkillQuery& q : spec.skill.queries)
      os << "skillq {" << q.query_text << "} " << q.cmp << " " << q.threshold << " "
         << spec.atom(q.target).name << "\n";
  }
  return os.str();
}

/// Programmatic spec construction for cases the DSL forbids (and for
/// generators).
class SpecBuilder {
 public:
  AtomId atom(const std::string& name, AtomKind kind) {
    AtomId existing = spec_.find_atom(name);
    if (existing >= 0) return existing;
    spec_.atoms.push_back(BeliefAtom{name, kind, name});
    spec_.initial_beliefs.push_back(0);
    return static_cast<AtomId>(spec_.atoms.size() - 1);
  }

  void initially(AtomId a) { spec_.initial_beliefs[static_cast<size_t>(a)] = 1; }

  AtomId percept(const std::string& name, DelayedBernoulli act,
                 std::optional<DelayedBernoulli> deact = std::nullopt,
                 std::vector<Literal> condition = {}) {
    AtomId a = atom(name, AtomKind::Sensory);
    PerceptDecl pd;
    pd.atom = a;
    pd.activation = act;
    pd.deactivation = deact.value_or(act);
    pd.condition = std::move(condition);
    spec_.percepts.push_back(pd);
    return a;
  }

  ActionId action(const std::string& name,
                  std::vector<std::pair<std::string, DelayedBernoulli>> feedbacks) {
    ActionDecl act;
    ActionId id = static_cast<ActionId>(spec_.actions.size());
    act.id = id;
    act.name = name;
    act.display = name;
    for (auto& [fb, d] : feedbacks) act.outcomes.push_back(FeedbackSpec{atom(fb, AtomKind::Feedback), d});
    spec_.actions.push_back(std::move(act));
    return id;
  }

  void rule(Formula antecedent, std::vector<RuleEffect> effects) {
    LogicRule r;
    r.antecedent = std::move(antecedent);
    r.consequent = std::move(effects);
    r.name = "rule_" + std::to_string(spec_.rules.size() + 1);
    spec_.rules.push_back(std::move(r));
  }

  PlanId plan(std::optional<Event> trigger, Formula context, std::vector<ActionRef> body) {
    Plan p;
    p.id = static_cast<PlanId>(spec_.plans.size());
    p.name = "plan_" + std::to_string(p.id + 1);
    p.trigger = trigger;
    p.context = std::move(context);
    p.body = std::move(body);
    spec_.plans.push_back(std::move(p));
    return p.id;
  }

  void initial_action(ActionRef step) { spec_.initial_actions.push_back(step); }

  static ActionRef ext(ActionId a) {
    ActionRef r;
    r.kind = ActionRef::Kind::External;
    r.action = a;
    return r;
  }
  static ActionRef add(AtomId a) {
    ActionRef r;
    r.kind = ActionRef::Kind::MentalAdd;
    r.atom = a;
    return r;
  }
  static ActionRef remove(AtomId a) {
    ActionRef r;
    r.kind = ActionRef::Kind::MentalRemove;
    r.atom = a;
    return r;
  }
  static ActionRef interrupt(PlanId target) {
    ActionRef r;
    r.kind = ActionRef::Kind::Interrupt;
    r.target = target;
    return r;
  }

  AgentSpec finish() {
    AgentSpec s = spec_;
    s.finalize();
    return s;
  }

 private:
  AgentSpec spec_;
};

}  // namespace lisa::test
