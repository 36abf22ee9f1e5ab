#pragma once

#include <chrono>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lisa/build.hpp"
#include "lisa/parser.hpp"
#include "lisa/pctl.hpp"
#include "lisa/prism.hpp"
#include "lisa/reasoner.hpp"
#include "lisa/rtv.hpp"

namespace lisa::cli {

using nlohmann::json;

constexpr int kMachineSchemaVersion = 1;

inline json record(const std::string& kind) {
  json j;
  j["v"] = kMachineSchemaVersion;
  j["record"] = kind;
  return j;
}

inline void print_diagnostics(const std::vector<Diagnostic>& diags, bool machine) {
  for (const Diagnostic& d : diags) {
    if (machine) {
      json j = record("diagnostic");
      j["severity"] = d.severity == Diagnostic::Severity::Error ? "error" : "warning";
      j["code"] = d.code;
      j["line"] = d.span.line;
      j["col"] = d.span.col;
      j["message"] = d.message;
      std::cout << j.dump() << "\n";
    } else {
      std::cerr << format_diagnostic(d) << "\n";
    }
  }
}

struct BuildFlags {
  bool force_mdp = false;
  bool force_dtmc = false;
  bool determinize = false;
  uint64_t max_states = 5000000;
  int64_t max_depth = -1;
  int workers = 0;

  BuildOptions options() const {
    BuildOptions o;
    if (force_mdp) o.kind = BuildKind::ForceMdp;
    else if (force_dtmc) o.kind = BuildKind::ForceDtmc;
    else if (determinize) o.kind = BuildKind::Determinize;
    o.limits.max_states = max_states;
    o.limits.max_depth = max_depth;
    o.workers = workers;
    return o;
  }

  void attach(CLI::App* cmd) {
    cmd->add_flag("--force-mdp", force_mdp, "abstract as an MDP even when DTMC-eligible");
    cmd->add_flag("--force-dtmc", force_dtmc, "require a DTMC; clashing triggers are an error");
    cmd->add_flag("--determinize", determinize,
                  "resolve plan selection by declaration order and build a DTMC");
    cmd->add_option("--max-states", max_states, "state cap for the expansion");
    cmd->add_option("--max-depth", max_depth, "expansion horizon (-1 = unbounded)");
    cmd->add_option("--workers", workers, "expansion worker threads (default: $LISA_WORKERS)");
  }
};

inline AgentSpec load_agent(const std::string& path, bool machine) {
  ParseResult res = parse_document(read_file(path));
  print_diagnostics(res.diagnostics, machine);
  if (!res.ok()) raise(ErrorCode::Spec, "cannot parse '" + path + "'");
  return *std::move(res.spec);
}

inline std::string human_bytes(uint64_t b) {
  char buf[32];
  if (b >= 10ull * 1024 * 1024) std::snprintf(buf, sizeof(buf), "%.1f MB", b / 1048576.0);
  else std::snprintf(buf, sizeof(buf), "%.1f KB", b / 1024.0);
  return buf;
}

// ---------------------------------------------------------------------------

inline int cmd_parse(const std::string& path, bool machine) {
  ParseResult res = parse_document(read_file(path));
  print_diagnostics(res.diagnostics, machine);
  if (!res.ok()) return 1;
  const AgentSpec& spec = *res.spec;
  size_t feedbacks = 0;
  for (const ActionDecl& a : spec.actions) feedbacks += a.outcomes.size();
  size_t mentals = 0;
  for (const BeliefAtom& a : spec.atoms) mentals += a.kind == AtomKind::Mental ? 1 : 0;
  EligibilityResult elig = dtmc_eligibility(spec);
  if (machine) {
    json j = record("summary");
    j["plans"] = spec.user_plan_count;
    j["rules"] = spec.rules.size();
    j["percepts"] = spec.percepts.size();
    j["actions"] = spec.actions.size();
    j["feedbacks"] = feedbacks;
    j["mental_notes"] = mentals;
    j["beliefs"] = spec.atom_count();
    j["dtmc_eligible"] = elig.eligible;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << spec.user_plan_count << " plans, " << spec.rules.size() << " logic rules, "
              << spec.percepts.size() << " percepts, " << spec.actions.size() << " actions with "
              << feedbacks << " feedbacks, " << mentals << " mental notes ("
              << spec.atom_count() << " beliefs total)\n";
    std::cout << "DTMC eligible: " << (elig.eligible ? "yes" : "no");
    if (!elig.eligible) {
      std::cout << " — clashing triggering conditions:";
      for (auto [a, b] : elig.clashes)
        std::cout << " (" << spec.plans[static_cast<size_t>(a)].name << ", "
                  << spec.plans[static_cast<size_t>(b)].name << ")";
    }
    std::cout << "\n";
  }
  return 0;
}

inline int cmd_build(const std::string& path, const BuildFlags& flags, const std::string& out,
                     bool machine) {
  AgentSpec spec = load_agent(path, machine);
  BuildResult res = build(spec, flags.options());
  bool dtmc = res.model.kind == ProbModel::Kind::Dtmc;
  if (!out.empty()) save_model(res.model, out);
  if (machine) {
    json j = record("build");
    j["kind"] = dtmc ? "dtmc" : "mdp";
    j["states"] = res.stats.states;
    j["transitions"] = res.stats.transitions;
    j["choices"] = dtmc ? json() : json(res.stats.choices);
    j["build_seconds"] = res.stats.seconds;
    j["memory_bytes"] = res.stats.mem_bytes;
    j["truncated_states"] = res.stats.truncated;
    if (!out.empty()) j["out"] = out;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "model:       " << (dtmc ? "DTMC" : "MDP") << "\n";
    std::cout << "states:      " << res.stats.states << "\n";
    std::cout << "transitions: " << res.stats.transitions << "\n";
    std::cout << "choices:     " << (dtmc ? "n/a" : std::to_string(res.stats.choices)) << "\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f s", res.stats.seconds);
    std::cout << "build time:  " << buf << "\n";
    std::cout << "memory:      " << human_bytes(res.stats.mem_bytes) << "\n";
    if (res.stats.truncated)
      std::cout << "truncated:   " << res.stats.truncated << " states at the depth horizon\n";
    if (!out.empty()) std::cout << "written:     " << out << "\n";
  }
  return 0;
}

struct ModelSource {
  std::string model_path;
  std::string agent_path;
  BuildFlags flags;

  ProbModel load(bool machine) const {
    if (!model_path.empty()) return load_model(model_path);
    if (agent_path.empty()) raise(ErrorCode::Io, "need --model or --agent");
    AgentSpec spec = load_agent(agent_path, machine);
    return std::move(build(spec, flags.options()).model);
  }
};

inline int cmd_check(const ModelSource& src, const std::string& query_text,
                     const std::string& from_spec, double epsilon, uint64_t max_iters,
                     bool machine) {
  auto t0 = std::chrono::steady_clock::now();
  ProbModel model = src.load(machine);
  pctl::Query q = pctl::parse_query(query_text);
  pctl::CheckOptions opts;
  opts.epsilon = epsilon;
  opts.max_iterations = max_iters;
  std::optional<StateLookup> lookup;
  if (!from_spec.empty()) {
    lookup.emplace(model);
    opts.from = resolve_state_spec(model, *lookup, from_spec);
  }
  pctl::CheckResult r = pctl::check(model, q, opts);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (machine) {
    json j = record("check");
    j["query"] = pctl::to_text(q);
    if (r.qualitative) {
      j["satisfied"] = r.sat_initial;
      if (!r.sat.empty()) {
        size_t n = 0;
        for (uint8_t b : r.sat) n += b;
        j["sat_states"] = n;
      }
    } else if (r.pair) {
      j["value_min"] = r.value;
      j["value_max"] = r.value2;
    } else {
      j["value"] = r.infinite ? json("inf") : json(r.value);
    }
    j["infinite"] = r.infinite;
    j["iterations"] = r.iterations;
    j["residual"] = r.residual;
    j["seconds"] = seconds;
    if (opts.from) j["from"] = *opts.from;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "query:      " << pctl::to_text(q) << "\n";
    if (opts.from) std::cout << "from:       state #" << *opts.from << "\n";
    if (r.qualitative) {
      std::cout << "satisfied:  " << (r.sat_initial ? "true" : "false") << "\n";
      if (!r.sat.empty()) {
        size_t n = 0;
        for (uint8_t b : r.sat) n += b;
        std::cout << "sat states: " << n << " / " << r.sat.size() << "\n";
      }
    } else if (r.pair) {
      std::cout << "value min:  " << format_probability(r.value) << "\n";
      std::cout << "value max:  " << format_probability(r.value2) << "\n";
    } else if (r.infinite) {
      std::cout << "value:      +inf (target not reached almost surely)\n";
    } else {
      std::cout << "value:      " << format_probability(r.value) << "\n";
    }
    std::cout << "iterations: " << r.iterations << "\n";
    std::cout << "residual:   " << format_probability(r.residual) << "\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f s", seconds);
    std::cout << "time:       " << buf << "\n";
  }
  return 0;
}

inline int cmd_emit(const std::string& path, const BuildFlags& flags, const std::string& out,
                    const std::string& query_text, const std::string& from_spec, bool machine) {
  AgentSpec spec = load_agent(path, machine);
  ProbModel::Kind kind;
  if (flags.force_mdp) {
    kind = ProbModel::Kind::Mdp;
  } else if (flags.force_dtmc || flags.determinize) {
    EligibilityResult elig = dtmc_eligibility(spec);
    if (flags.force_dtmc && !elig.eligible) {
      std::string msg = "cannot emit a DTMC, clashing triggering conditions:";
      for (auto [a, b] : elig.clashes)
        msg += " (" + spec.plans[static_cast<size_t>(a)].name + ", " +
               spec.plans[static_cast<size_t>(b)].name + ")";
      raise(ErrorCode::Spec, msg);
    }
    kind = ProbModel::Kind::Dtmc;
  } else {
    kind = dtmc_eligibility(spec).eligible ? ProbModel::Kind::Dtmc : ProbModel::Kind::Mdp;
  }
  std::string text = prism::emit(spec, kind);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out);
    if (!os) raise(ErrorCode::Io, "cannot write '" + out + "'");
    os << text;
  }
  std::string props_path;
  if (!query_text.empty()) {
    pctl::Query q = pctl::parse_query(query_text);
    std::optional<std::string> cond;
    if (!from_spec.empty()) cond = from_spec;
    std::string props = prism::emit_query(q, cond) + "\n";
    if (out.empty()) {
      std::cout << props;
    } else {
      props_path = out;
      if (size_t dot = props_path.rfind('.'); dot != std::string::npos) props_path.erase(dot);
      props_path += ".props";
      std::ofstream os(props_path);
      if (!os) raise(ErrorCode::Io, "cannot write '" + props_path + "'");
      os << props;
    }
  }
  if (machine) {
    json j = record("emit");
    j["kind"] = kind == ProbModel::Kind::Dtmc ? "dtmc" : "mdp";
    if (!out.empty()) j["out"] = out;
    if (!props_path.empty()) j["props"] = props_path;
    std::cout << j.dump() << "\n";
  } else if (!out.empty()) {
    std::cout << "written: " << out << (props_path.empty() ? "" : " and " + props_path) << "\n";
  }
  return 0;
}

inline int cmd_simulate(const std::string& path, int cycles, uint64_t seed,
                        const std::string& policy_name, const ModelSource& model_src,
                        const std::string& objective, bool machine) {
  AgentSpec spec = load_agent(path, machine);
  RunOptions opts;
  opts.cycles = cycles;
  opts.seed = seed;
  if (policy_name == "first") opts.policy = SelectionPolicy::FirstDeclared;
  else if (policy_name == "random") opts.policy = SelectionPolicy::UniformRandom;
  else if (policy_name == "verified") opts.policy = SelectionPolicy::Verified;
  else raise(ErrorCode::Spec, "unknown policy '" + policy_name + "'");

  // The verified policy and the skill need the design-time model.
  std::optional<BuildResult> built;
  std::optional<ProbModel> loaded;
  std::optional<StateLookup> lookup;
  std::optional<StateCodec> codec;
  EnvLayout lay = EnvLayout::of(spec);
  bool wants_model =
      opts.policy == SelectionPolicy::Verified || !spec.skill.queries.empty();
  if (wants_model) {
    if (!model_src.model_path.empty()) {
      loaded = load_model(model_src.model_path);
      opts.model = &*loaded;
    } else {
      BuildOptions bo = model_src.flags.options();
      if (opts.policy == SelectionPolicy::Verified && bo.kind == BuildKind::Auto)
        bo.kind = BuildKind::ForceMdp;  // candidate scoring needs the open choices
      built = build(spec, bo);
      opts.model = &built->model;
    }
    lookup.emplace(*opts.model);
    codec.emplace(spec, lay);
    opts.lookup = &*lookup;
    opts.codec = &*codec;
    if (opts.policy == SelectionPolicy::Verified) {
      rtv::SelectorConfig cfg;
      if (objective.empty())
        raise(ErrorCode::Spec, "--policy verified needs --objective \"<pctl>\"");
      cfg.objective = pctl::parse_query(objective);
      opts.selector = cfg;
    }
  }

  CycleTrace trace = run(spec, opts);
  for (const CycleRecord& rec : trace.records) {
    if (machine) {
      json j = record("cycle");
      j["t"] = rec.t;
      json beliefs = json::array(), events = json::array(), lambdas = json::array();
      for (size_t a = 0; a < rec.state.agent.beliefs.size(); ++a)
        if (rec.state.agent.beliefs[a]) beliefs.push_back(spec.atom(static_cast<AtomId>(a)).name);
      for (const Event& e : events_of(rec.state.agent))
        events.push_back((e.added ? "+" : "-") + spec.atom(e.atom).name);
      for (int32_t l : rec.state.agent.lambdas) lambdas.push_back(l);
      j["beliefs"] = beliefs;
      j["events"] = events;
      j["lambdas"] = lambdas;
      if (!rec.notes.empty()) j["notes"] = rec.notes;
      std::cout << j.dump() << "\n";
    } else {
      std::cout << trace_line(spec, rec) << "\n";
      for (const std::string& n : rec.notes) std::cerr << "note: " << n << "\n";
    }
  }
  return 0;
}

inline int cmd_select(const std::string& agent_path, const ModelSource& model_src,
                      const std::string& state_spec, const std::string& objective,
                      const std::string& direction, bool machine) {
  AgentSpec spec = load_agent(agent_path, machine);
  std::optional<ProbModel> model;
  if (!model_src.model_path.empty()) {
    model = load_model(model_src.model_path);
  } else {
    BuildOptions bo = model_src.flags.options();
    if (bo.kind == BuildKind::Auto) bo.kind = BuildKind::ForceMdp;
    model = std::move(build(spec, bo).model);
  }
  EnvLayout lay = EnvLayout::of(spec);
  StateCodec codec(spec, lay);
  StateLookup lookup(*model);

  uint32_t idx = state_spec.empty() ? model->initial
                                    : resolve_state_spec(*model, lookup, state_spec);
  SysState state = codec.decode(model->state_words(idx));

  rtv::SelectorContext ctx;
  ctx.spec = &spec;
  ctx.model = &*model;
  ctx.lookup = &lookup;
  ctx.codec = &codec;
  ctx.cfg.objective = pctl::parse_query(objective);
  ctx.cfg.maximize = direction != "min";

  std::vector<Event> events = events_of(state.agent);
  std::vector<std::vector<PlanId>> desires = applicable_plans(spec, events, state.agent.beliefs);
  rtv::SelectResult res = rtv::verified_select(ctx, state, desires);

  if (machine) {
    json j = record("selection");
    j["state"] = idx;
    j["degraded"] = res.degraded;
    json evs = json::array();
    for (size_t e = 0; e < desires.size(); ++e) {
      json je;
      je["event"] = (events[e].added ? "+" : "-") + spec.atom(events[e].atom).name;
      json cands = json::array();
      for (PlanId p : desires[e]) {
        json c;
        c["plan"] = spec.plans[static_cast<size_t>(p)].name;
        for (auto& [se, sp, sv] : res.scores)
          if (se == e && sp == p) c["value"] = sv;
        cands.push_back(c);
      }
      je["candidates"] = cands;
      if (res.selection.per_event[e] >= 0)
        je["selected"] = spec.plans[static_cast<size_t>(res.selection.per_event[e])].name;
      evs.push_back(je);
    }
    j["events"] = evs;
    if (!res.notes.empty()) j["notes"] = res.notes;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "state: #" << idx << "\n";
    if (desires.empty()) std::cout << "no events at this state; nothing to select\n";
    for (size_t e = 0; e < desires.size(); ++e) {
      std::cout << "event " << (events[e].added ? "+" : "-") << spec.atom(events[e].atom).name
                << ": ";
      if (desires[e].empty()) {
        std::cout << "no applicable plans\n";
        continue;
      }
      for (PlanId p : desires[e]) {
        std::cout << spec.plans[static_cast<size_t>(p)].name;
        for (auto& [se, sp, sv] : res.scores)
          if (se == e && sp == p) std::cout << "=" << format_probability(sv);
        std::cout << " ";
      }
      if (res.selection.per_event[e] >= 0)
        std::cout << "-> " << spec.plans[static_cast<size_t>(res.selection.per_event[e])].name;
      std::cout << "\n";
    }
    for (const std::string& n : res.notes) std::cerr << "note: " << n << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, char** argv) {
  CLI::App app{"LISA agent-program compiler and probabilistic verifier"};
  app.require_subcommand(1);
  bool machine = false;
  app.add_flag("--machine", machine, "line-delimited JSON records instead of prose");

  int exit_code = 0;
  auto guarded = [&exit_code, &machine](auto fn) {
    return [fn, &exit_code, &machine]() {
      try {
        exit_code = fn();
      } catch (const Error& e) {
        switch (e.code()) {
          case ErrorCode::Limit: exit_code = 2; break;
          case ErrorCode::Numeric: exit_code = 3; break;
          default: exit_code = 1; break;
        }
        if (machine) {
          json j = record("error");
          j["message"] = e.what();
          std::cout << j.dump() << "\n";
        } else {
          std::cerr << "error: " << e.what() << "\n";
        }
      }
    };
  };

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "parse an agent program and report diagnostics");
  static std::string parse_file;
  parse_cmd->add_option("file", parse_file, "agent program (.lisa)")->required();
  parse_cmd->callback(guarded([&]() { return cmd_parse(parse_file, machine); }));

  // build
  auto* build_cmd = app.add_subcommand("build", "build the DTMC/MDP abstraction");
  static std::string build_file, build_out;
  static BuildFlags build_flags;
  build_cmd->add_option("file", build_file, "agent program (.lisa)")->required();
  build_cmd->add_option("--out", build_out, "write the model in the sparse text format");
  build_flags.attach(build_cmd);
  build_cmd->callback(guarded([&]() { return cmd_build(build_file, build_flags, build_out, machine); }));

  // check
  auto* check_cmd = app.add_subcommand("check", "answer a PCTL/reward query");
  static ModelSource check_src;
  static std::string check_query, check_from;
  static double check_eps = 1e-6;
  static uint64_t check_iters = 1000000;
  check_cmd->add_option("--model", check_src.model_path, "model file from `build --out`");
  check_cmd->add_option("--agent", check_src.agent_path, "agent program (built in-process)");
  check_src.flags.attach(check_cmd);
  check_cmd->add_option("--query", check_query, "PCTL query text")->required();
  check_cmd->add_option("--from", check_from, "state override: '#index' or 'var=v,...'");
  check_cmd->add_option("--epsilon", check_eps, "value-iteration residual bound");
  check_cmd->add_option("--max-iterations", check_iters, "value-iteration cap");
  check_cmd->callback(guarded(
      [&]() { return cmd_check(check_src, check_query, check_from, check_eps, check_iters, machine); }));

  // emit-prism
  auto* emit_cmd = app.add_subcommand("emit-prism", "emit PRISM-language source");
  static std::string emit_file, emit_out, emit_query_text, emit_from;
  static BuildFlags emit_flags;
  emit_cmd->add_option("file", emit_file, "agent program (.lisa)")->required();
  emit_cmd->add_option("--out", emit_out, "output .prism/.nm path (stdout when absent)");
  emit_cmd->add_option("--query", emit_query_text, "also emit a .props property file");
  emit_cmd->add_option("--from", emit_from, "property filter condition (PRISM expression)");
  emit_flags.attach(emit_cmd);
  emit_cmd->callback(guarded([&]() {
    return cmd_emit(emit_file, emit_flags, emit_out, emit_query_text, emit_from, machine);
  }));

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run the reasoning cycle concretely");
  static std::string sim_file, sim_policy = "first", sim_objective;
  static int sim_cycles = 10;
  static uint64_t sim_seed = 1;
  static ModelSource sim_src;
  sim_cmd->add_option("file", sim_file, "agent program (.lisa)")->required();
  sim_cmd->add_option("--cycles", sim_cycles, "number of reasoning cycles");
  sim_cmd->add_option("--seed", sim_seed, "random seed");
  sim_cmd->add_option("--policy", sim_policy, "plan selection: first | random | verified");
  sim_cmd->add_option("--model", sim_src.model_path, "design-time model for verified/skill");
  sim_cmd->add_option("--objective", sim_objective, "selector objective (verified policy)");
  sim_src.flags.attach(sim_cmd);
  sim_cmd->callback(guarded([&]() {
    return cmd_simulate(sim_file, sim_cycles, sim_seed, sim_policy, sim_src, sim_objective,
                        machine);
  }));

  // select-plan
  auto* sel_cmd = app.add_subcommand("select-plan", "score applicable plans by model checking");
  static std::string sel_agent, sel_state, sel_objective, sel_direction = "max";
  static ModelSource sel_src;
  sel_cmd->add_option("--agent", sel_agent, "agent program (.lisa)")->required();
  sel_cmd->add_option("--model", sel_src.model_path, "design-time model (built when absent)");
  sel_cmd->add_option("--state", sel_state, "live state: '#index' or 'var=v,...'");
  sel_cmd->add_option("--objective", sel_objective, "quantitative P query")->required();
  sel_cmd->add_option("--direction", sel_direction, "max (default) or min");
  sel_src.flags.attach(sel_cmd);
  sel_cmd->callback(guarded([&]() {
    return cmd_select(sel_agent, sel_src, sel_state, sel_objective, sel_direction, machine);
  }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return exit_code;
}

}  // namespace lisa::cli
