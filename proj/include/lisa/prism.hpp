#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lisa/env.hpp"
#include "lisa/pctl.hpp"
#include "lisa/semantics.hpp"

namespace lisa::prism {

namespace detail {

inline std::string guard_text(const AgentSpec& spec, const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::True:
      return "true";
    case Formula::Kind::Lit:
      return spec.atom(f.lit.atom).name + (f.lit.negated ? "=0" : "=1");
    case Formula::Kind::Not:
      return "!(" + guard_text(spec, f.kids.front()) + ")";
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      std::string joiner = f.kind == Formula::Kind::And ? " & " : " | ";
      std::string out;
      for (size_t i = 0; i < f.kids.size(); ++i) {
        if (i) out += joiner;
        const Formula& k = f.kids[i];
        bool wrap = k.kind == Formula::Kind::And || k.kind == Formula::Kind::Or;
        out += wrap ? "(" + guard_text(spec, k) + ")" : guard_text(spec, k);
      }
      return out;
    }
  }
  return "true";
}

/// Positions (plan variable = step index) dispatching the given action.
inline std::vector<std::pair<const Plan*, int>> dispatch_positions(const AgentSpec& spec,
                                                                   ActionId action) {
  std::vector<std::pair<const Plan*, int>> out;
  for (const Plan& p : spec.plans)
    for (size_t k = 0; k < p.body.size(); ++k)
      if (p.body[k].kind == ActionRef::Kind::External && p.body[k].action == action)
        out.emplace_back(&p, static_cast<int>(k + 1));
  return out;
}

inline std::string wait_guard(const AgentSpec& spec, ActionId action) {
  std::string g;
  for (auto& [plan, k] : dispatch_positions(spec, action)) {
    if (!g.empty()) g += " | ";
    g += plan->name + "=" + std::to_string(k);
  }
  return g.empty() ? "false" : "(" + g + ")";
}

/// Advance condition of one plan step ("true" for an unguarded advance).
inline std::string step_guard(const AgentSpec& spec, const ActionRef& step) {
  switch (step.kind) {
    case ActionRef::Kind::MentalAdd:
      return spec.atom(step.atom).name + "=1";
    case ActionRef::Kind::MentalRemove:
      return spec.atom(step.atom).name + "=0";
    case ActionRef::Kind::Interrupt:
      return spec.plans[static_cast<size_t>(step.target)].name + "=0";
    case ActionRef::Kind::External: {
      const ActionDecl& act = spec.actions[static_cast<size_t>(step.action)];
      if (act.outcomes.empty()) return "false";
      std::string g;
      for (size_t i = 0; i < act.outcomes.size(); ++i) {
        if (i) g += " | ";
        g += spec.atom(act.outcomes[i].atom).name + "=1";
      }
      return act.outcomes.size() > 1 ? "(" + g + ")" : g;
    }
  }
  return "true";
}

inline std::string step_comment(const AgentSpec& spec, const ActionRef& step) {
  switch (step.kind) {
    case ActionRef::Kind::External:
      return spec.actions[static_cast<size_t>(step.action)].name;
    case ActionRef::Kind::MentalAdd:
      return "+" + spec.atom(step.atom).name;
    case ActionRef::Kind::MentalRemove:
      return "-" + spec.atom(step.atom).name;
    case ActionRef::Kind::Interrupt:
      return "interrupt " + spec.plans[static_cast<size_t>(step.target)].name;
  }
  return "";
}

/// Start guard of a user plan: DTMC precedence conjuncts (earlier plans
/// sharing the trigger event must be idle), the trigger belief level, and
/// the parenthesized context.
inline std::string start_guard(const AgentSpec& spec, const Plan& plan, bool dtmc) {
  std::vector<std::string> parts;
  if (dtmc) {
    for (const Plan& other : spec.plans) {
      if (other.id >= plan.id || !other.trigger || !plan.trigger) continue;
      if (*other.trigger == *plan.trigger) parts.push_back(other.name + "=0");
    }
  }
  const Event& trig = *plan.trigger;
  parts.push_back(spec.atom(trig.atom).name + (trig.added ? "=1" : "=0"));
  if (!plan.context.is_true()) {
    bool composite = plan.context.kind == Formula::Kind::And ||
                     plan.context.kind == Formula::Kind::Or;
    std::string ctx = guard_text(spec, plan.context);
    parts.push_back(composite ? "(" + ctx + ")" : ctx);
  }
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += " & ";
    out += parts[i];
  }
  return out;
}

/// Guard of the [t] command that dispatches step k of the plan (used for
/// transition rewards): the start command for k=1, the advance into k after.
inline std::string dispatch_guard(const AgentSpec& spec, const Plan& plan, int k, bool dtmc) {
  if (k == 1) {
    if (!plan.trigger) return "false";  // initial intentions start pre-dispatched
    return plan.name + "=0 & (" + start_guard(spec, plan, dtmc) + ")";
  }
  return plan.name + "=" + std::to_string(k - 1) + " & (" +
         step_guard(spec, plan.body[static_cast<size_t>(k - 2)]) + ")";
}

struct Distribution {
  // (probability, update text); update text may be empty for "no change"
  std::vector<std::pair<double, std::string>> branches;

  std::string text() const {
    if (branches.size() == 1 && branches[0].first == 1.0)
      return branches[0].second.empty() ? "true" : branches[0].second;
    std::string out;
    for (size_t i = 0; i < branches.size(); ++i) {
      if (i) out += " + ";
      out += format_shortest(branches[i].first) + ":" +
             (branches[i].second.empty() ? "true" : branches[i].second);
    }
    return out;
  }
};

}  // namespace detail

/// Identifier collision check across every emitted variable name.
inline void check_identifiers(const AgentSpec& spec) {
  std::vector<std::pair<std::string, std::string>> names;  // (name, source)
  for (const BeliefAtom& a : spec.atoms)
    names.emplace_back(a.name, std::string(atom_kind_name(a.kind)) + " '" + a.display + "'");
  for (const Plan& p : spec.plans) names.emplace_back(p.name, "plan variable");
  for (const PerceptDecl& pd : spec.percepts) {
    names.emplace_back(spec.atom(pd.atom).name + "_c", "percept counter");
    if (!pd.ambient()) names.emplace_back(spec.atom(pd.atom).name + "_e", "percept episode bit");
  }
  for (const ActionDecl& a : spec.actions)
    if (a.none_prob() > 0) names.emplace_back(a.name + "_none", "action dispatch latch");
  names.emplace_back("ph", "phase scheduler");
  for (size_t i = 0; i < names.size(); ++i)
    for (size_t j = i + 1; j < names.size(); ++j)
      if (names[i].first == names[j].first)
        raise(ErrorCode::Spec, "identifier collision after sanitization: '" + names[i].first +
                                   "' is both " + names[i].second + " and " + names[j].second);
}

/// Emits PRISM source for the closed loop. The reasoning cycle is realized
/// in two synchronized steps: [p] updates belief variables (environment
/// counters, mental notes, rules), [t] updates plan indices; a two-value
/// phase module alternates them. Plan modules follow the published pattern:
/// one variable per plan, a negative/positive guard pair per index value, no
/// variables for actions.
inline std::string emit(const AgentSpec& spec, ProbModel::Kind kind) {
  check_identifiers(spec);
  for (const BeliefAtom& a : spec.atoms)
    if (a.kind == AtomKind::Sensory) {
      bool has = false;
      for (const PerceptDecl& pd : spec.percepts) has = has || pd.atom == spec.find_atom(a.name);
      if (!has)
        raise(ErrorCode::Spec, "percept '" + a.name + "' has no environment annotation");
    }

  bool dtmc = kind == ProbModel::Kind::Dtmc;
  std::ostringstream os;
  os << (dtmc ? "dtmc" : "mdp") << "\n\n";

  os << "module scheduler\n";
  os << "ph: [0..1] init 0;\n";
  os << "[p] ph=0 -> (ph'=1);\n";
  os << "[t] ph=1 -> (ph'=0);\n";
  os << "endmodule\n\n";

  // Interrupting positions per target plan.
  std::vector<std::string> interrupt_guard(spec.plan_count());
  for (const Plan& p : spec.plans)
    for (size_t k = 0; k < p.body.size(); ++k)
      if (p.body[k].kind == ActionRef::Kind::Interrupt && p.body[k].target >= 0) {
        std::string& g = interrupt_guard[static_cast<size_t>(p.body[k].target)];
        if (!g.empty()) g += " | ";
        g += p.name + "=" + std::to_string(k + 1);
      }

  // Plan modules.
  for (const Plan& plan : spec.plans) {
    os << "module " << plan.name << "\n";
    os << plan.name << ": [0.." << plan.n_lambda() << "] init " << (plan.initial ? 1 : 0)
       << ";\n";
    std::string intr = interrupt_guard[static_cast<size_t>(plan.id)];
    std::string not_intr = intr.empty() ? "" : "!(" + intr + ") & ";
    auto pair = [&](int k, const std::string& g, int next) {
      os << "[t] " << not_intr << plan.name << "=" << k << " & !(" << g << ") -> (" << plan.name
         << "'=" << k << ");\n";
      os << "[t] " << not_intr << plan.name << "=" << k << " & (" << g << ") -> (" << plan.name
         << "'=" << next << ");\n";
    };
    if (plan.trigger) {
      pair(0, detail::start_guard(spec, plan, dtmc), 1);
    } else {
      os << "[t] " << not_intr << plan.name << "=0 -> (" << plan.name << "'=0);\n";
    }
    for (int k = 1; k <= plan.n_lambda(); ++k) {
      const ActionRef& step = plan.body[static_cast<size_t>(k - 1)];
      os << "//" << detail::step_comment(spec, step) << "\n";
      pair(k, detail::step_guard(spec, step), k == plan.n_lambda() ? 0 : k + 1);
    }
    if (!intr.empty()) os << "[t] (" << intr << ") -> (" << plan.name << "'=0);\n";
    os << "endmodule\n\n";
  }

  // Percept modules.
  for (const PerceptDecl& pd : spec.percepts) {
    const std::string atom = spec.atom(pd.atom).name;
    const std::string c = atom + "_c";
    bool init_true = spec.initial_beliefs[static_cast<size_t>(pd.atom)] != 0;
    os << "module " << atom << "\n";
    os << atom << ": [0..1] init " << (init_true ? 1 : 0) << ";\n";
    if (pd.ambient()) {
      int hi = std::max(pd.activation.hi(), pd.deactivation.hi());
      os << c << ": [1.." << hi << "] init " << pd.activation.mu << ";\n";
      os << "[p] " << c << ">1 -> (" << c << "'=" << c << "-1);\n";
      for (int cur = 0; cur <= 1; ++cur) {
        const DelayedBernoulli& regime = cur ? pd.deactivation : pd.activation;
        detail::Distribution dist;
        for (int flip = 1; flip >= 0; --flip) {
          double p = flip ? regime.p : 1.0 - regime.p;
          if (p <= 0.0) continue;
          int post = flip ? 1 - cur : cur;
          const DelayedBernoulli& next = post ? pd.deactivation : pd.activation;
          for (int d = next.lo(); d <= next.hi(); ++d) {
            std::string upd;
            if (post != cur) upd = "(" + atom + "'=" + std::to_string(post) + ") & ";
            upd += "(" + c + "'=" + std::to_string(d) + ")";
            dist.branches.emplace_back(p / next.support(), upd);
          }
        }
        os << "[p] " << c << "=1 & " << atom << "=" << cur << " -> " << dist.text() << ";\n";
      }
    } else {
      int hi = std::max(pd.activation.hi(), pd.deactivation.hi());
      const std::string e = atom + "_e";
      os << c << ": [0.." << hi << "] init 0;\n";
      os << e << ": [0..1] init 0;\n";
      std::string cond;
      for (size_t i = 0; i < pd.condition.size(); ++i) {
        if (i) cond += " & ";
        cond += spec.atom(pd.condition[i].atom).name + (pd.condition[i].negated ? "=0" : "=1");
      }
      std::string cond_p = "(" + cond + ")";
      auto arm_dist = [&](const DelayedBernoulli& trip, int post_value) {
        detail::Distribution dist;
        if (trip.p < 1.0) dist.branches.emplace_back(1.0 - trip.p, "(" + e + "'=" +
                                                     (post_value == 1 ? "1" : "0") + ")");
        for (int d = trip.lo(); d <= trip.hi(); ++d) {
          std::string upd = "(" + e + "'=" + (post_value == 1 ? "1" : "0") + ")";
          if (d == 1)
            upd += " & (" + atom + "'=" + (post_value == 1 ? "1" : "0") + ")";
          else
            upd += " & (" + c + "'=" + std::to_string(d - 1) + ")";
          dist.branches.emplace_back(trip.p / trip.support(), upd);
        }
        return dist;
      };
      // Episode begins: arm activation (atom off) or cancel deactivation.
      os << "[p] " << e << "=0 & " << cond_p << " & " << atom << "=0 & " << c << "=0 -> "
         << arm_dist(pd.activation, 1).text() << ";\n";
      os << "[p] " << e << "=0 & " << cond_p << " & " << atom << "=1 -> (" << e << "'=1) & (" << c
         << "'=0);\n";
      // Episode ends: arm deactivation (atom on) or cancel activation.
      os << "[p] " << e << "=1 & !" << cond_p << " & " << atom << "=1 & " << c << "=0 -> "
         << arm_dist(pd.deactivation, 0).text() << ";\n";
      os << "[p] " << e << "=1 & !" << cond_p << " & " << atom << "=0 -> (" << e << "'=0) & (" << c
         << "'=0);\n";
      // No edge: countdown sweep.
      std::string noedge = "((" + e + "=1 & " + cond_p + ") | (" + e + "=0 & !" + cond_p + "))";
      os << "[p] " << noedge << " & " << c << ">1 -> (" << c << "'=" << c << "-1);\n";
      os << "[p] " << noedge << " & " << c << "=1 & " << atom << "=0 -> (" << atom << "'=1) & ("
         << c << "'=0);\n";
      os << "[p] " << noedge << " & " << c << "=1 & " << atom << "=1 -> (" << atom << "'=0) & ("
         << c << "'=0);\n";
      os << "[p] " << noedge << " & " << c << "=0 -> true;\n";
      // Unreachable leftovers of the case split keep the guard set total.
      os << "[p] " << e << "=0 & " << cond_p << " & " << atom << "=0 & " << c << ">0 -> true;\n";
      os << "[p] " << e << "=1 & !" << cond_p << " & " << atom << "=1 & " << c << ">0 -> true;\n";
    }
    os << "endmodule\n\n";
  }

  // One module per external action, holding its feedback counters.
  for (const ActionDecl& act : spec.actions) {
    os << "module " << act.name << "\n";
    for (const FeedbackSpec& fb : act.outcomes)
      os << spec.atom(fb.atom).name << ": [0.." << fb.delay.hi() << "] init 0;\n";
    double none = act.none_prob();
    if (none > 0) os << act.name << "_none: [0..1] init 0;\n";
    if (!act.outcomes.empty()) {
      os << "//";
      for (size_t i = 0; i < act.outcomes.size(); ++i) {
        const FeedbackSpec& fb = act.outcomes[i];
        if (i) os << " ";
        os << spec.atom(fb.atom).name << "[" << format_number(fb.delay.p) << "," << fb.delay.mu
           << "," << fb.delay.sigma << "]";
      }
      os << "\n";
    }
    std::string wait = detail::wait_guard(spec, act.id);
    std::string all_low;
    for (size_t i = 0; i < act.outcomes.size(); ++i) {
      if (i) all_low += " & ";
      all_low += spec.atom(act.outcomes[i].atom).name + "<=1";
    }
    if (act.outcomes.empty()) all_low = "true";
    for (const FeedbackSpec& fb : act.outcomes) {
      const std::string v = spec.atom(fb.atom).name;
      os << "[p] " << v << ">1 -> (" << v << "'=" << v << "-1);\n";
    }
    // Reset once no plan waits on the action.
    os << "[p] !" << wait << " & (" << all_low << ") -> ";
    {
      std::string upd;
      for (const FeedbackSpec& fb : act.outcomes) {
        if (!upd.empty()) upd += " & ";
        upd += "(" + spec.atom(fb.atom).name + "'=0)";
      }
      if (none > 0) upd += (upd.empty() ? "" : " & ") + std::string("(") + act.name + "_none'=0)";
      os << (upd.empty() ? "true" : upd) << ";\n";
    }
    // Arm: categorical draw over outcomes at dispatch.
    {
      detail::Distribution dist;
      for (const FeedbackSpec& fb : act.outcomes) {
        if (fb.delay.p <= 0.0) continue;
        for (int d = fb.delay.lo(); d <= fb.delay.hi(); ++d) {
          std::string upd = "(" + spec.atom(fb.atom).name + "'=" + std::to_string(d) + ")";
          for (const FeedbackSpec& other : act.outcomes)
            if (other.atom != fb.atom)
              upd += " & (" + spec.atom(other.atom).name + "'=0)";
          dist.branches.emplace_back(fb.delay.p / fb.delay.support(), upd);
        }
      }
      if (none > 0) {
        std::string upd = "(" + act.name + "_none'=1)";
        for (const FeedbackSpec& fb : act.outcomes)
          upd += " & (" + spec.atom(fb.atom).name + "'=0)";
        dist.branches.emplace_back(none, upd);
      }
      std::string latch_free = none > 0 ? " & " + act.name + "_none=0" : "";
      if (!dist.branches.empty())
        os << "[p] " << wait << " & (" << all_low << ")" << latch_free << " -> " << dist.text()
           << ";\n";
      if (none > 0)
        os << "[p] " << wait << " & (" << all_low << ") & " << act.name << "_none=1 -> true;\n";
      if (dist.branches.empty())
        os << "[p] " << wait << " & (" << all_low << ") -> true;\n";
    }
    os << "endmodule\n\n";
  }

  // One module per mental note; plan steps and logic rules write it.
  for (size_t a = 0; a < spec.atoms.size(); ++a) {
    if (spec.atoms[a].kind != AtomKind::Mental) continue;
    const std::string name = spec.atoms[a].name;
    std::string step_set, step_clr, rule_set, rule_clr;
    auto add_or = [](std::string& g, const std::string& part) {
      if (!g.empty()) g += " | ";
      g += part;
    };
    for (const Plan& p : spec.plans)
      for (size_t k = 0; k < p.body.size(); ++k) {
        const ActionRef& step = p.body[k];
        if (step.atom != static_cast<AtomId>(a)) continue;
        if (step.kind == ActionRef::Kind::MentalAdd)
          add_or(step_set, p.name + "=" + std::to_string(k + 1));
        if (step.kind == ActionRef::Kind::MentalRemove)
          add_or(step_clr, p.name + "=" + std::to_string(k + 1));
      }
    for (const LogicRule& r : spec.rules)
      for (const RuleEffect& eff : r.consequent)
        if (eff.atom == static_cast<AtomId>(a))
          add_or(eff.add ? rule_set : rule_clr, "(" + detail::guard_text(spec, r.antecedent) + ")");

    os << "module " << name << "\n";
    os << name << ": [0..1] init " << (spec.initial_beliefs[a] ? 1 : 0) << ";\n";
    std::string preceding;
    auto cmd = [&](const std::string& g, const std::string& upd) {
      if (g.empty()) return;
      os << "[p] " << preceding << "(" << g << ") -> " << upd << ";\n";
      preceding += "!(" + g + ") & ";
    };
    cmd(rule_set, "(" + name + "'=1)");
    cmd(rule_clr, "(" + name + "'=0)");
    cmd(step_set, "(" + name + "'=1)");
    cmd(step_clr, "(" + name + "'=0)");
    os << "[p] " << (preceding.empty() ? "true" : preceding.substr(0, preceding.size() - 3))
       << " -> true;\n";
    os << "endmodule\n\n";
  }

  // Reward structure: percept rewards as state items, action/step rewards as
  // [t] transition items on the dispatching commands.
  bool any_reward = !spec.rewards.empty();
  for (const Plan& p : spec.plans)
    for (const ActionRef& step : p.body) any_reward = any_reward || step.reward.has_value();
  if (any_reward) {
    os << "rewards\n";
    for (const RewardDecl& r : spec.rewards)
      if (r.kind == RewardDecl::Kind::Percept)
        os << spec.atom(r.atom).name << "=1 : " << format_number(r.value) << ";\n";
    for (const Plan& p : spec.plans)
      for (size_t k = 0; k < p.body.size(); ++k) {
        const ActionRef& step = p.body[k];
        double value = step.reward.value_or(0.0);
        if (step.kind == ActionRef::Kind::External && step.action >= 0) {
          const ActionDecl& act = spec.actions[static_cast<size_t>(step.action)];
          if (act.reward) value += *act.reward;
        }
        if (value == 0.0) continue;
        os << "[t] " << detail::dispatch_guard(spec, p, static_cast<int>(k + 1), dtmc) << " : "
           << format_number(value) << ";\n";
      }
    os << "endrewards\n";
  }
  return os.str();
}

inline std::string emit(const AgentSpec& spec) {
  return emit(spec, dtmc_eligibility(spec).eligible ? ProbModel::Kind::Dtmc : ProbModel::Kind::Mdp);
}

/// Property text, with a PRISM state filter when an initial-state override
/// is requested. The condition is evaluated at the plan-update phase point,
/// matching the embedded checker's state convention.
inline std::string emit_query(const pctl::Query& q,
                              std::optional<std::string> from_condition = std::nullopt) {
  std::string body = pctl::to_text(q);
  if (!from_condition) return body;
  return "filter(state, " + body + ", (" + *from_condition + ") & ph=1)";
}

}  // namespace lisa::prism
