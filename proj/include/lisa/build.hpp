#pragma once

#include <chrono>
#include <cstdlib>
#include <thread>
#include <unordered_map>

#include "lisa/model.hpp"

namespace lisa {

enum class BuildKind {
  Auto,        // DTMC iff the triggering conditions are pairwise distinct
  ForceDtmc,   // rejected with the clash report when not eligible
  ForceMdp,    // always sound
  Determinize  // DTMC via the first-declared policy regardless of eligibility
};

struct BuildLimits {
  uint64_t max_states = 5000000;
  int64_t max_depth = -1;  // expansion horizon; -1 = unbounded
};

struct BuildOptions {
  BuildKind kind = BuildKind::Auto;
  BuildLimits limits;
  int workers = 0;  // 0: $LISA_WORKERS, else hardware_concurrency
};

struct BuildStats {
  uint64_t states = 0;
  uint64_t choices = 0;
  uint64_t transitions = 0;
  uint64_t truncated = 0;  // states absorbed at the depth horizon
  double seconds = 0;
  uint64_t mem_bytes = 0;
};

struct BuildResult {
  ProbModel model;
  BuildStats stats;
  EnvLayout layout;
  StateCodec codec;
};

inline int default_workers() {
  if (const char* env = std::getenv("LISA_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

/// Populates reward vectors from the spec's reward declarations: percept
/// rewards become state rewards on every state where the atom holds; action
/// rewards become transition rewards on every choice dispatching a step of
/// that action (plan-step rewards likewise). Dispatches are recovered from
/// the plan-index delta between a choice's source and destination.
inline void attach_rewards(ProbModel& m, const AgentSpec& spec) {
  bool any_state = false, any_choice = false;
  for (const RewardDecl& r : spec.rewards)
    (r.kind == RewardDecl::Kind::Percept ? any_state : any_choice) = true;
  for (const Plan& p : spec.plans)
    for (const ActionRef& step : p.body)
      if (step.reward) any_choice = true;
  if (!any_state && !any_choice) return;

  if (any_state) {
    m.state_reward.assign(m.num_states(), 0.0);
    for (const RewardDecl& r : spec.rewards) {
      if (r.kind != RewardDecl::Kind::Percept) continue;
      if (r.atom < 0 || static_cast<size_t>(r.atom) >= spec.atom_count())
        raise(ErrorCode::Spec, "reward declaration names unknown atom");
      int v = m.var_index(spec.atom(r.atom).name);
      if (v < 0) raise(ErrorCode::Spec, "reward atom missing from model variables");
      for (uint32_t s = 0; s < m.num_states(); ++s)
        if (m.value(s, v) == 1) m.state_reward[s] += r.value;
    }
  }

  if (any_choice) {
    m.choice_reward.assign(m.num_choices(), 0.0);
    std::vector<int> plan_var(spec.plan_count(), -1);
    for (const Plan& p : spec.plans) {
      plan_var[static_cast<size_t>(p.id)] = m.var_index(p.name);
      if (plan_var[static_cast<size_t>(p.id)] < 0)
        raise(ErrorCode::Spec, "plan variable missing from model: " + p.name);
    }
    for (uint32_t s = 0; s < m.num_states(); ++s) {
      for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1]; ++c) {
        if (m.choice_trans_off[c] == m.choice_trans_off[c + 1]) continue;
        uint32_t dst = m.trans_dst[m.choice_trans_off[c]];  // lambdas agree across branches
        double acc = 0;
        for (const Plan& p : spec.plans) {
          int v = plan_var[static_cast<size_t>(p.id)];
          int32_t before = m.value(s, v), after = m.value(dst, v);
          if (after > 0 && after != before) {
            const ActionRef& step = p.body[static_cast<size_t>(after - 1)];
            if (step.reward) acc += *step.reward;
            if (step.kind == ActionRef::Kind::External && step.action >= 0) {
              const auto& act = spec.actions[static_cast<size_t>(step.action)];
              if (act.reward) acc += *act.reward;
            }
          }
        }
        m.choice_reward[c] = acc;
      }
    }
  }
}

namespace detail {

struct ExpandedChoice {
  std::vector<std::pair<double, std::vector<uint64_t>>> succ;
};

struct ExpandedState {
  std::vector<ExpandedChoice> choices;
};

inline ExpandedState expand_state(const AgentSpec& spec, const EnvLayout& lay,
                                  const StateCodec& codec, const SysState& s, bool mdp) {
  ExpandedState out;
  std::vector<Event> events = events_of(s.agent);
  std::vector<std::vector<PlanId>> desires = applicable_plans(spec, events, s.agent.beliefs);

  std::vector<std::vector<PlanId>> start_sets;
  if (mdp) {
    for (Choice& c : enumerate_choices(desires, s.agent.lambdas))
      start_sets.push_back(std::move(c.starts));
  } else {
    start_sets.push_back(select_first_declared(desires, s.agent.lambdas).starts);
  }

  for (const std::vector<PlanId>& starts : start_sets) {
    SuccessorSet succ = successors(spec, lay, s, starts);
    ExpandedChoice ec;
    double total = 0;
    for (auto& [p, st] : succ.branches) {
      total += p;
      ec.succ.emplace_back(p, codec.encode(st));
    }
    if (std::abs(total - 1.0) > 1e-12)
      raise(ErrorCode::Numeric,
            "branch distribution sums to " + format_probability(total) + " (expected 1)");
    out.choices.push_back(std::move(ec));
  }
  return out;
}

}  // namespace detail

/// Exhaustive frontier expansion of the closed loop from s0 = {B0, empty,
/// initial lambdas, idle counters}. FIFO frontier and lexicographic branch
/// order keep state indices stable across runs and worker counts.
inline BuildResult build(const AgentSpec& spec, const BuildOptions& opts = {}) {
  auto t0 = std::chrono::steady_clock::now();
  check_initial_consistency(spec);

  EligibilityResult elig = dtmc_eligibility(spec);
  bool mdp = false;
  switch (opts.kind) {
    case BuildKind::Auto:
      mdp = !elig.eligible;
      break;
    case BuildKind::ForceDtmc:
      if (!elig.eligible) {
        std::string msg = "cannot abstract as DTMC, clashing triggering conditions:";
        for (auto [a, b] : elig.clashes)
          msg += " (" + spec.plans[static_cast<size_t>(a)].name + ", " +
                 spec.plans[static_cast<size_t>(b)].name + ")";
        raise(ErrorCode::Spec, msg);
      }
      break;
    case BuildKind::ForceMdp:
      mdp = true;
      break;
    case BuildKind::Determinize:
      break;
  }

  BuildResult res;
  res.layout = EnvLayout::of(spec);
  res.codec = StateCodec(spec, res.layout);
  ProbModel& m = res.model;
  m.kind = mdp ? ProbModel::Kind::Mdp : ProbModel::Kind::Dtmc;
  m.vars = res.codec.vars();
  m.words_per_state = res.codec.words();
  for (const BeliefAtom& a : spec.atoms) m.labels.push_back(a.name);

  const uint32_t W = m.words_per_state;
  std::unordered_map<std::string, uint32_t> index;
  auto key_of = [W](const uint64_t* w) {
    return std::string(reinterpret_cast<const char*>(w), W * 8);
  };
  std::vector<int64_t> depth;

  auto intern = [&](const std::vector<uint64_t>& words) -> std::pair<uint32_t, bool> {
    auto [it, fresh] = index.try_emplace(key_of(words.data()),
                                         static_cast<uint32_t>(m.packed.size() / W));
    if (fresh) {
      m.packed.insert(m.packed.end(), words.begin(), words.end());
      depth.push_back(0);
    }
    return {it->second, fresh};
  };

  SysState s0 = initial_state(spec, res.layout);
  intern(res.codec.encode(s0));
  m.initial = 0;

  m.state_choice_off.push_back(0);
  int workers = opts.workers > 0 ? opts.workers : default_workers();

  uint64_t next = 0;
  while (next < m.packed.size() / W) {
    uint64_t wave_end = m.packed.size() / W;
    // Expand this wave; pure per-state work, parallel over a chunked range.
    std::vector<detail::ExpandedState> wave(static_cast<size_t>(wave_end - next));
    auto run_chunk = [&](uint64_t lo, uint64_t hi) {
      for (uint64_t i = lo; i < hi; ++i) {
        if (opts.limits.max_depth >= 0 && depth[i] >= opts.limits.max_depth) continue;
        SysState s = res.codec.decode(m.packed.data() + i * W);
        wave[static_cast<size_t>(i - next)] = detail::expand_state(spec, res.layout, res.codec, s, mdp);
      }
    };
    uint64_t count = wave_end - next;
    if (workers <= 1 || count < 64) {
      run_chunk(next, wave_end);
    } else {
      std::vector<std::thread> pool;
      uint64_t chunk = (count + static_cast<uint64_t>(workers) - 1) / static_cast<uint64_t>(workers);
      for (int w = 0; w < workers; ++w) {
        uint64_t lo = next + static_cast<uint64_t>(w) * chunk;
        uint64_t hi = std::min(wave_end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(run_chunk, lo, hi);
      }
      for (std::thread& t : pool) t.join();
    }

    // Deterministic merge in state-index order.
    for (uint64_t i = next; i < wave_end; ++i) {
      detail::ExpandedState& ex = wave[static_cast<size_t>(i - next)];
      if (ex.choices.empty()) {
        // Depth horizon: absorb with a self-loop so rows stay stochastic.
        m.choice_trans_off.push_back(m.trans_dst.size());
        m.trans_dst.push_back(static_cast<uint32_t>(i));
        m.trans_prob.push_back(1.0);
        m.state_choice_off.push_back(m.choice_trans_off.size());
        res.stats.truncated += 1;
        continue;
      }
      for (detail::ExpandedChoice& ch : ex.choices) {
        m.choice_trans_off.push_back(m.trans_dst.size());
        for (auto& [p, words] : ch.succ) {
          auto [idx, fresh] = intern(words);
          if (fresh) {
            depth[idx] = depth[i] + 1;
            if (index.size() > opts.limits.max_states) {
              // Report the belief atoms branching hardest, from recent states.
              std::vector<uint64_t> change_count(spec.atom_count(), 0);
              uint64_t total = m.packed.size() / W;
              uint64_t lo = total > 20000 ? total - 20000 : 0;
              for (uint64_t st = lo; st < total; ++st) {
                SysState d = res.codec.decode(m.packed.data() + st * W);
                for (size_t a = 0; a < d.agent.changed.size(); ++a)
                  if (d.agent.changed[a]) change_count[a] += 1;
              }
              std::vector<size_t> order(spec.atom_count());
              for (size_t a = 0; a < order.size(); ++a) order[a] = a;
              std::sort(order.begin(), order.end(),
                        [&](size_t a, size_t b) { return change_count[a] > change_count[b]; });
              std::string tops;
              for (size_t k = 0; k < std::min<size_t>(5, order.size()); ++k) {
                if (change_count[order[k]] == 0) break;
                if (!tops.empty()) tops += ", ";
                tops += spec.atom(static_cast<AtomId>(order[k])).name;
              }
              raise(ErrorCode::Limit,
                    "state cap exceeded at " + std::to_string(opts.limits.max_states) +
                        " states (frontier " + std::to_string(total - next) +
                        "); most active atoms: " + (tops.empty() ? "n/a" : tops));
            }
          }
          m.trans_dst.push_back(idx);
          m.trans_prob.push_back(p);
        }
      }
      m.state_choice_off.push_back(m.choice_trans_off.size());
    }
    next = wave_end;
  }
  m.choice_trans_off.push_back(m.trans_dst.size());

  res.stats.states = m.num_states();
  res.stats.choices = m.num_choices();
  res.stats.transitions = m.num_transitions();
  attach_rewards(m, spec);
  res.stats.mem_bytes = m.memory_bytes() + index.size() * (W * 8 + 48);
  res.stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace lisa
