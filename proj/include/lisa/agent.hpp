#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lisa/common.hpp"

namespace lisa {

using AtomId = int32_t;
using PlanId = int32_t;
using ActionId = int32_t;

/// Which side of the belief partition B = {Bs, Ba, Bm} an atom lives on.
enum class AtomKind { Sensory, Feedback, Mental };

inline const char* atom_kind_name(AtomKind k) {
  switch (k) {
    case AtomKind::Sensory: return "percept";
    case AtomKind::Feedback: return "feedback";
    default: return "mental";
  }
}

struct BeliefAtom {
  std::string name;   // sanitized identifier, unique across B
  AtomKind kind = AtomKind::Mental;
  std::string display;  // original sentence text, for pretty-printing
};

struct Literal {
  AtomId atom = -1;
  bool negated = false;

  friend bool operator==(const Literal&, const Literal&) = default;
};

/// Propositional context formula over belief atoms.
struct Formula {
  enum class Kind { True, Lit, And, Or, Not };
  Kind kind = Kind::True;
  Literal lit;
  std::vector<Formula> kids;

  static Formula truth() { return Formula{}; }
  static Formula literal(AtomId atom, bool negated) {
    Formula f;
    f.kind = Kind::Lit;
    f.lit = Literal{atom, negated};
    return f;
  }
  static Formula conj(std::vector<Formula> kids) { return node(Kind::And, std::move(kids)); }
  static Formula disj(std::vector<Formula> kids) { return node(Kind::Or, std::move(kids)); }
  static Formula negate(Formula f) { return node(Kind::Not, {std::move(f)}); }

  bool is_true() const { return kind == Kind::True; }

  void collect_atoms(std::vector<AtomId>& out) const {
    if (kind == Kind::Lit) out.push_back(lit.atom);
    for (const Formula& k : kids) k.collect_atoms(out);
  }

 private:
  static Formula node(Kind kind, std::vector<Formula> kids) {
    Formula f;
    f.kind = kind;
    f.kids = std::move(kids);
    return f;
  }
};

/// B[t] |= c. Valuation indexed by AtomId.
inline bool satisfies(const std::vector<uint8_t>& beliefs, const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::True:
      return true;
    case Formula::Kind::Lit: {
      if (f.lit.atom < 0 || static_cast<size_t>(f.lit.atom) >= beliefs.size())
        raise(ErrorCode::Spec, "context references unknown atom id " + std::to_string(f.lit.atom));
      bool v = beliefs[static_cast<size_t>(f.lit.atom)] != 0;
      return f.lit.negated ? !v : v;
    }
    case Formula::Kind::And:
      for (const Formula& k : f.kids)
        if (!satisfies(beliefs, k)) return false;
      return true;
    case Formula::Kind::Or:
      for (const Formula& k : f.kids)
        if (satisfies(beliefs, k)) return true;
      return false;
    case Formula::Kind::Not:
      return !satisfies(beliefs, f.kids.front());
  }
  return false;
}

/// A signed belief change: +atom (added) or -atom (removed).
struct Event {
  AtomId atom = -1;
  bool added = true;

  friend bool operator==(const Event&, const Event&) = default;
  friend auto operator<=>(const Event& a, const Event& b) {
    if (auto c = a.atom <=> b.atom; c != 0) return c;
    // additions order before removals at the same atom
    return (a.added ? 0 : 1) <=> (b.added ? 0 : 1);
  }
};

/// One plan body step. Internal steps write mental notes (or reset another
/// plan's index); external steps invoke an environment-modelled action.
struct ActionRef {
  enum class Kind { MentalAdd, MentalRemove, External, Interrupt };
  Kind kind = Kind::External;
  AtomId atom = -1;      // MentalAdd / MentalRemove
  ActionId action = -1;  // External
  PlanId target = -1;    // Interrupt
  std::optional<double> reward;

  bool internal() const { return kind != Kind::External; }
};

struct Plan {
  PlanId id = -1;                // 0-based declaration index
  std::string name;              // emitted variable name, "plan_5"
  std::optional<Event> trigger;  // nullopt only for synthetic initial intentions
  Formula context;
  std::vector<ActionRef> body;   // n_lambda >= 1
  bool initial = false;          // true for A0-derived intentions (start at lambda=1)

  int n_lambda() const { return static_cast<int>(body.size()); }
};

/// Logic-based implication rule; consequents only touch mental notes.
struct RuleEffect {
  AtomId atom = -1;
  bool add = true;
};

struct LogicRule {
  Formula antecedent;
  std::vector<RuleEffect> consequent;
  std::string name;  // for rule-cycle diagnostics
};

/// {p, mu, sigma} annotation: Bernoulli(p) gated event whose completion delay
/// is uniform over the integer interval [mu-sigma, mu+sigma].
struct DelayedBernoulli {
  double p = 1.0;
  int mu = 1;
  int sigma = 0;

  int lo() const { return mu - sigma; }
  int hi() const { return mu + sigma; }
  int support() const { return 2 * sigma + 1; }

  friend bool operator==(const DelayedBernoulli&, const DelayedBernoulli&) = default;
};

/// Declared external action with its feedback outcome distribution.
struct FeedbackSpec {
  AtomId atom = -1;
  DelayedBernoulli delay;
};

struct ActionDecl {
  ActionId id = -1;
  std::string name;
  std::string display;
  std::vector<FeedbackSpec> outcomes;
  std::optional<double> reward;  // from a REWARDS entry naming the action

  double none_prob() const {
    double s = 0;
    for (const FeedbackSpec& o : outcomes) s += o.delay.p;
    return s < 1.0 ? 1.0 - s : 0.0;
  }
};

/// Percept process annotation from the PERCEPTION PROCESS section.
struct PerceptDecl {
  AtomId atom = -1;
  std::vector<Literal> condition;  // conjunction; empty means ambient
  DelayedBernoulli activation;
  DelayedBernoulli deactivation;
  std::optional<double> reward;

  bool ambient() const { return condition.empty(); }
};

struct RewardDecl {
  enum class Kind { Percept, Action };
  Kind kind = Kind::Percept;
  AtomId atom = -1;
  ActionId action = -1;
  double value = 0.0;
};

/// Runtime-verification skill line (RUNTIME VERIFICATION section).
struct SkillQuery {
  std::string query_text;  // PCTL source, parsed lazily against the model
  char cmp = '>';          // one of < <= > >= stored as '<','l','>','g'
  double threshold = 0.0;
  AtomId target = -1;      // mental note toggled by the result
};

struct VerificationSkill {
  int cadence = 1;  // run every N cycles
  std::vector<SkillQuery> queries;
};

/// Static agent tuple {F, B, B0, L, A, A0, Pi} plus environment annotations.
struct AgentSpec {
  std::vector<BeliefAtom> atoms;
  std::vector<uint8_t> initial_beliefs;   // valuation over atoms (B0)
  std::vector<LogicRule> rules;
  std::vector<ActionDecl> actions;
  std::vector<ActionRef> initial_actions; // A0, also realized as synthetic plans
  std::vector<Plan> plans;                // user plans first, then synthetics
  std::vector<PerceptDecl> percepts;
  std::vector<RewardDecl> rewards;
  VerificationSkill skill;

  // Derived lookup tables, filled by finalize().
  std::vector<int32_t> percept_of_atom;   // AtomId -> index into percepts or -1
  std::vector<int32_t> action_of_feedback;// AtomId -> owning ActionId or -1
  int user_plan_count = 0;

  AtomId find_atom(std::string_view name) const {
    for (size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i].name == name) return static_cast<AtomId>(i);
    return -1;
  }

  ActionId find_action(std::string_view name) const {
    for (size_t i = 0; i < actions.size(); ++i)
      if (actions[i].name == name) return static_cast<ActionId>(i);
    return -1;
  }

  const BeliefAtom& atom(AtomId id) const { return atoms[static_cast<size_t>(id)]; }

  size_t atom_count() const { return atoms.size(); }
  size_t plan_count() const { return plans.size(); }

  /// Appends synthetic single-step intentions for A0 and builds lookup
  /// tables. Must be called once after all declarations are in place.
  void finalize();
};

/// Dynamic triple {B[t], E[t], lambda[t]}; events are stored as per-atom
/// "changed this cycle" bits (polarity recoverable from the valuation).
struct AgentState {
  std::vector<uint8_t> beliefs;
  std::vector<uint8_t> changed;
  std::vector<int32_t> lambdas;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

inline std::vector<Event> events_of(const AgentState& s) {
  std::vector<Event> out;
  for (size_t a = 0; a < s.changed.size(); ++a)
    if (s.changed[a]) out.push_back(Event{static_cast<AtomId>(a), s.beliefs[a] != 0});
  return out;
}

// ---------------------------------------------------------------------------
// Context normalization (canonical ordered form) and DTMC eligibility.

namespace detail {

inline std::string canonical_context(const AgentSpec& spec, const Formula& f, bool negated) {
  switch (f.kind) {
    case Formula::Kind::True:
      return negated ? "false" : "true";
    case Formula::Kind::Lit: {
      bool neg = f.lit.negated != negated;
      return (neg ? "~" : "") + spec.atom(f.lit.atom).name;
    }
    case Formula::Kind::Not:
      return canonical_context(spec, f.kids.front(), !negated);
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      // De Morgan under negation, flatten, sort, dedupe.
      bool conj = (f.kind == Formula::Kind::And) != negated;
      std::vector<std::string> parts;
      for (const Formula& k : f.kids) parts.push_back(canonical_context(spec, k, negated));
      std::sort(parts.begin(), parts.end());
      parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
      if (parts.size() == 1) return parts.front();
      std::string out = "(";
      for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += conj ? " & " : " | ";
        out += parts[i];
      }
      return out + ")";
    }
  }
  return "?";
}

}  // namespace detail

/// Canonical string for syntactic context equality: conjuncts/disjuncts
/// flattened and sorted, double negation stripped, literals folded.
inline std::string normalized_context(const AgentSpec& spec, const Formula& f) {
  return detail::canonical_context(spec, f, false);
}

struct EligibilityResult {
  bool eligible = true;
  std::vector<std::pair<PlanId, PlanId>> clashes;  // 0-based plan ids
};

/// A spec abstracts to a DTMC when all (trigger event, normalized context)
/// pairs are pairwise distinct. Purely syntactic and symmetric; conservative
/// in that a semantically distinct pair with equal canonical form still
/// counts as a clash (the MDP route is always available).
inline EligibilityResult dtmc_eligibility(const AgentSpec& spec) {
  EligibilityResult res;
  std::vector<std::pair<std::string, PlanId>> keys;
  for (const Plan& p : spec.plans) {
    if (!p.trigger) continue;  // synthetic initial intentions never re-trigger
    std::string key = (p.trigger->added ? "+" : "-") + spec.atom(p.trigger->atom).name +
                      " / " + normalized_context(spec, p.context);
    keys.emplace_back(std::move(key), p.id);
  }
  for (size_t i = 0; i < keys.size(); ++i)
    for (size_t j = i + 1; j < keys.size(); ++j)
      if (keys[i].first == keys[j].first)
        res.clashes.emplace_back(keys[i].second, keys[j].second);
  res.eligible = res.clashes.empty();
  return res;
}

inline void AgentSpec::finalize() {
  user_plan_count = static_cast<int>(plans.size());
  for (size_t i = 0; i < initial_actions.size(); ++i) {
    Plan p;
    p.id = static_cast<PlanId>(plans.size());
    p.name = "init_" + std::to_string(i + 1);
    p.trigger = std::nullopt;
    p.context = Formula::truth();
    p.body = {initial_actions[i]};
    p.initial = true;
    plans.push_back(std::move(p));
  }
  percept_of_atom.assign(atoms.size(), -1);
  action_of_feedback.assign(atoms.size(), -1);
  for (size_t i = 0; i < percepts.size(); ++i)
    percept_of_atom[static_cast<size_t>(percepts[i].atom)] = static_cast<int32_t>(i);
  for (const ActionDecl& a : actions)
    for (const FeedbackSpec& fb : a.outcomes)
      action_of_feedback[static_cast<size_t>(fb.atom)] = a.id;
  for (const RewardDecl& r : rewards) {
    if (r.kind == RewardDecl::Kind::Action && r.action >= 0)
      actions[static_cast<size_t>(r.action)].reward = r.value;
    if (r.kind == RewardDecl::Kind::Percept && r.atom >= 0) {
      int32_t pi = percept_of_atom[static_cast<size_t>(r.atom)];
      if (pi >= 0) percepts[static_cast<size_t>(pi)].reward = r.value;
    }
  }
}

}  // namespace lisa
