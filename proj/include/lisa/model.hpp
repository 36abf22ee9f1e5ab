#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lisa/env.hpp"
#include "lisa/semantics.hpp"

namespace lisa {

/// Model variable: every belief atom (0/1), an event bit per atom (ev_*),
/// a plan index per plan, and the environment counters/latches.
struct ModelVar {
  std::string name;
  int32_t lo = 0;
  int32_t hi = 1;
  int bits = 1;
  int word = 0;
  int shift = 0;
};

inline int bits_for_range(int32_t lo, int32_t hi) {
  uint32_t span = static_cast<uint32_t>(hi - lo);
  int bits = 1;
  while (span >> bits) ++bits;
  return bits;
}

/// Injective packed encoding of SysState; decode(encode(s)) == s.
class StateCodec {
 public:
  StateCodec() = default;

  StateCodec(const AgentSpec& spec, const EnvLayout& lay) {
    n_atoms_ = spec.atom_count();
    n_plans_ = spec.plan_count();
    for (const EnvLayout::PerceptSlot& s : lay.percepts) conditional_.push_back(s.conditional ? 1 : 0);
    n_feedbacks_ = lay.feedbacks.size();
    n_latches_ = static_cast<size_t>(lay.latch_count);
    for (const BeliefAtom& a : spec.atoms) add(a.name, 0, 1);
    for (const BeliefAtom& a : spec.atoms) add("ev_" + a.name, 0, 1);
    for (const Plan& p : spec.plans) add(p.name, 0, p.n_lambda());
    for (const EnvLayout::PerceptSlot& s : lay.percepts) {
      const PerceptDecl& pd = spec.percepts[static_cast<size_t>(s.percept)];
      add(spec.atom(pd.atom).name + "_c", 0, s.max_counter);
      if (s.conditional) add(spec.atom(pd.atom).name + "_e", 0, 1);
    }
    for (const EnvLayout::FeedbackSlot& s : lay.feedbacks)
      add(spec.atom(s.atom).name + "_c", 0, s.max_counter);
    for (size_t a = 0; a < spec.actions.size(); ++a)
      if (lay.action_latch[a] >= 0) add(spec.actions[a].name + "_none", 0, 1);

    std::unordered_map<std::string, int> seen;
    for (size_t i = 0; i < vars_.size(); ++i) {
      auto [it, fresh] = seen.try_emplace(vars_[i].name, static_cast<int>(i));
      if (!fresh)
        raise(ErrorCode::Spec, "identifier collision after sanitization: '" + vars_[i].name +
                                   "' is produced by two declarations");
    }
  }

  const std::vector<ModelVar>& vars() const { return vars_; }
  uint32_t words() const { return words_; }

  std::vector<uint64_t> encode(const SysState& s) const {
    std::vector<uint64_t> w(words_, 0);
    size_t v = 0;
    for (uint8_t b : s.agent.beliefs) put(w, v++, b);
    for (uint8_t b : s.agent.changed) put(w, v++, b);
    for (int32_t l : s.agent.lambdas) put(w, v++, l);
    for (size_t i = 0; i < s.env.pc.size(); ++i) {
      put(w, v++, s.env.pc[i]);
      if (conditional_[i]) put(w, v++, s.env.ep[i]);
    }
    for (int32_t c : s.env.fc) put(w, v++, c);
    for (uint8_t b : s.env.latch) put(w, v++, b);
    return w;
  }

  SysState decode(const uint64_t* w) const {
    SysState s;
    s.agent.beliefs.resize(n_atoms_);
    s.agent.changed.resize(n_atoms_);
    s.agent.lambdas.resize(n_plans_);
    s.env.pc.resize(conditional_.size());
    s.env.ep.resize(conditional_.size(), 0);
    s.env.fc.resize(n_feedbacks_);
    s.env.latch.resize(n_latches_);
    size_t v = 0;
    for (size_t i = 0; i < n_atoms_; ++i) s.agent.beliefs[i] = static_cast<uint8_t>(get(w, v++));
    for (size_t i = 0; i < n_atoms_; ++i) s.agent.changed[i] = static_cast<uint8_t>(get(w, v++));
    for (size_t i = 0; i < s.agent.lambdas.size(); ++i) s.agent.lambdas[i] = get(w, v++);
    for (size_t i = 0; i < s.env.pc.size(); ++i) {
      s.env.pc[i] = get(w, v++);
      if (conditional_[i]) s.env.ep[i] = static_cast<uint8_t>(get(w, v++));
    }
    for (size_t i = 0; i < s.env.fc.size(); ++i) s.env.fc[i] = get(w, v++);
    for (size_t i = 0; i < s.env.latch.size(); ++i) s.env.latch[i] = static_cast<uint8_t>(get(w, v++));
    return s;
  }

 private:
  void add(std::string name, int32_t lo, int32_t hi) {
    ModelVar var;
    var.name = std::move(name);
    var.lo = lo;
    var.hi = hi;
    var.bits = bits_for_range(lo, hi);
    if (bit_ + var.bits > 64) {
      ++word_;
      bit_ = 0;
    }
    var.word = word_;
    var.shift = bit_;
    bit_ += var.bits;
    words_ = static_cast<uint32_t>(word_ + 1);
    vars_.push_back(std::move(var));
  }

  void put(std::vector<uint64_t>& w, size_t v, int32_t value) const {
    const ModelVar& var = vars_[v];
    w[static_cast<size_t>(var.word)] |=
        (static_cast<uint64_t>(value - var.lo) & ((1ull << var.bits) - 1)) << var.shift;
  }

  int32_t get(const uint64_t* w, size_t v) const {
    const ModelVar& var = vars_[v];
    return static_cast<int32_t>((w[var.word] >> var.shift) & ((1ull << var.bits) - 1)) + var.lo;
  }

  size_t n_atoms_ = 0;
  size_t n_plans_ = 0;
  std::vector<uint8_t> conditional_;  // per percept slot
  size_t n_feedbacks_ = 0;
  size_t n_latches_ = 0;
  std::vector<ModelVar> vars_;
  int word_ = 0;
  int bit_ = 0;
  uint32_t words_ = 1;
};

/// Explicit-state DTMC or MDP in CSR form with the full variable valuation
/// packed per state, so any proposition over beliefs/plan indices can be
/// evaluated without the originating spec.
struct ProbModel {
  enum class Kind { Dtmc, Mdp };
  Kind kind = Kind::Dtmc;
  uint32_t initial = 0;

  std::vector<uint64_t> state_choice_off;  // size S+1
  std::vector<uint64_t> choice_trans_off;  // size C+1
  std::vector<uint32_t> trans_dst;
  std::vector<double> trans_prob;

  std::vector<ModelVar> vars;
  uint32_t words_per_state = 1;
  std::vector<uint64_t> packed;  // S * words_per_state

  std::vector<double> state_reward;   // size S or empty
  std::vector<double> choice_reward;  // size C or empty
  std::vector<std::string> labels;    // names of belief-atom propositions

  size_t num_states() const { return state_choice_off.empty() ? 0 : state_choice_off.size() - 1; }
  size_t num_choices() const { return choice_trans_off.empty() ? 0 : choice_trans_off.size() - 1; }
  size_t num_transitions() const { return trans_dst.size(); }

  int var_index(std::string_view name) const {
    for (size_t i = 0; i < vars.size(); ++i)
      if (vars[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int32_t value(uint32_t state, int var) const {
    const ModelVar& v = vars[static_cast<size_t>(var)];
    const uint64_t* w = packed.data() + static_cast<size_t>(state) * words_per_state;
    return static_cast<int32_t>((w[v.word] >> v.shift) & ((1ull << v.bits) - 1)) + v.lo;
  }

  const uint64_t* state_words(uint32_t state) const {
    return packed.data() + static_cast<size_t>(state) * words_per_state;
  }

  bool has_rewards() const { return !state_reward.empty() || !choice_reward.empty(); }

  uint64_t memory_bytes() const {
    return state_choice_off.size() * 8 + choice_trans_off.size() * 8 + trans_dst.size() * 4 +
           trans_prob.size() * 8 + packed.size() * 8 + state_reward.size() * 8 +
           choice_reward.size() * 8;
  }
};

/// Hash map from packed state words to state index.
class StateLookup {
 public:
  explicit StateLookup(const ProbModel& m) : model_(&m) {
    map_.reserve(m.num_states() * 2);
    for (uint32_t s = 0; s < m.num_states(); ++s) map_.emplace(key(m.state_words(s)), s);
  }

  std::optional<uint32_t> find(const std::vector<uint64_t>& words) const {
    auto it = map_.find(key(words.data()));
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::string key(const uint64_t* w) const {
    return std::string(reinterpret_cast<const char*>(w), model_->words_per_state * 8);
  }

  const ProbModel* model_;
  std::unordered_map<std::string, uint32_t> map_;
};

// ---------------------------------------------------------------------------
// Sparse text format. Probabilities carry 17 significant digits so files are
// bit-exact across platforms; one line per transition: `t src choice dst prob`.

inline void save_model(const ProbModel& m, std::ostream& os) {
  os << "lisa-model 1\n";
  os << "kind " << (m.kind == ProbModel::Kind::Dtmc ? "dtmc" : "mdp") << "\n";
  os << "vars " << m.vars.size() << "\n";
  for (const ModelVar& v : m.vars) os << "var " << v.name << " " << v.lo << " " << v.hi << "\n";
  os << "states " << m.num_states() << " initial " << m.initial << "\n";
  for (uint32_t s = 0; s < m.num_states(); ++s) {
    os << "s";
    for (size_t v = 0; v < m.vars.size(); ++v) os << " " << m.value(s, static_cast<int>(v));
    os << "\n";
  }
  os << "choices " << m.num_choices() << "\n";
  for (uint32_t s = 0; s < m.num_states(); ++s)
    for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1]; ++c)
      os << "c " << s << " " << (c - m.state_choice_off[s]) << " "
         << (m.choice_trans_off[c + 1] - m.choice_trans_off[c]) << "\n";
  os << "transitions " << m.num_transitions() << "\n";
  for (uint32_t s = 0; s < m.num_states(); ++s)
    for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1]; ++c)
      for (uint64_t t = m.choice_trans_off[c]; t < m.choice_trans_off[c + 1]; ++t)
        os << "t " << s << " " << (c - m.state_choice_off[s]) << " " << m.trans_dst[t] << " "
           << format_probability(m.trans_prob[t]) << "\n";
  os << "labels " << m.labels.size() << "\n";
  for (const std::string& l : m.labels) os << "label " << l << "\n";
  size_t nsr = 0, ncr = 0;
  for (double r : m.state_reward)
    if (r != 0.0) ++nsr;
  for (double r : m.choice_reward)
    if (r != 0.0) ++ncr;
  os << "rewards state " << nsr << "\n";
  for (uint32_t s = 0; s < m.state_reward.size(); ++s)
    if (m.state_reward[s] != 0.0) os << "rs " << s << " " << format_probability(m.state_reward[s]) << "\n";
  os << "rewards choice " << ncr << "\n";
  for (uint32_t s = 0; s < m.num_states(); ++s)
    for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1]; ++c)
      if (c < m.choice_reward.size() && m.choice_reward[c] != 0.0)
        os << "rc " << s << " " << (c - m.state_choice_off[s]) << " "
           << format_probability(m.choice_reward[c]) << "\n";
  os << "end\n";
}

inline void save_model(const ProbModel& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) raise(ErrorCode::Io, "cannot write model file '" + path + "'");
  save_model(m, os);
}

namespace detail {

inline void pack_value(const ProbModel& m, std::vector<uint64_t>& words, size_t var, int64_t value) {
  const ModelVar& v = m.vars[var];
  if (value < v.lo || value > v.hi)
    raise(ErrorCode::Io, "model file: value out of range for variable '" + v.name + "'");
  words[static_cast<size_t>(v.word)] |=
      (static_cast<uint64_t>(value - v.lo) & ((1ull << v.bits) - 1)) << v.shift;
}

}  // namespace detail

inline ProbModel load_model(std::istream& is, const std::string& what = "model") {
  auto fail = [&](const std::string& msg) -> void {
    raise(ErrorCode::Io, what + ": " + msg);
  };
  ProbModel m;
  std::string tok;
  int version = 0;
  if (!(is >> tok) || tok != "lisa-model" || !(is >> version) || version != 1)
    fail("not a lisa-model version 1 file");
  size_t nvars = 0, nstates = 0, nchoices = 0, ntrans = 0, nlabels = 0;
  if (!(is >> tok) || tok != "kind" || !(is >> tok)) fail("missing kind");
  m.kind = tok == "mdp" ? ProbModel::Kind::Mdp : ProbModel::Kind::Dtmc;
  if (!(is >> tok) || tok != "vars" || !(is >> nvars)) fail("missing vars");
  int word = 0, bit = 0;
  for (size_t i = 0; i < nvars; ++i) {
    ModelVar v;
    if (!(is >> tok) || tok != "var" || !(is >> v.name >> v.lo >> v.hi)) fail("bad var line");
    v.bits = bits_for_range(v.lo, v.hi);
    if (bit + v.bits > 64) {
      ++word;
      bit = 0;
    }
    v.word = word;
    v.shift = bit;
    bit += v.bits;
    m.vars.push_back(v);
  }
  m.words_per_state = static_cast<uint32_t>(word + 1);
  if (!(is >> tok) || tok != "states" || !(is >> nstates) || !(is >> tok) || tok != "initial" ||
      !(is >> m.initial))
    fail("missing states header");
  m.packed.assign(nstates * m.words_per_state, 0);
  for (size_t s = 0; s < nstates; ++s) {
    if (!(is >> tok) || tok != "s") fail("bad state line");
    std::vector<uint64_t> words(m.words_per_state, 0);
    for (size_t v = 0; v < nvars; ++v) {
      int64_t value;
      if (!(is >> value)) fail("bad state value");
      detail::pack_value(m, words, v, value);
    }
    std::copy(words.begin(), words.end(), m.packed.begin() + s * m.words_per_state);
  }
  if (!(is >> tok) || tok != "choices" || !(is >> nchoices)) fail("missing choices header");
  m.state_choice_off.assign(nstates + 1, 0);
  m.choice_trans_off.assign(nchoices + 1, 0);
  std::vector<uint64_t> choice_sizes(nchoices, 0);
  {
    size_t ci = 0;
    uint64_t prev_state = 0;
    for (size_t i = 0; i < nchoices; ++i, ++ci) {
      uint64_t s, c, n;
      if (!(is >> tok) || tok != "c" || !(is >> s >> c >> n)) fail("bad choice line");
      if (s >= nstates || s < prev_state) fail("choice lines out of order");
      prev_state = s;
      m.state_choice_off[s + 1] += 1;
      choice_sizes[ci] = n;
    }
    for (size_t s = 0; s < nstates; ++s) m.state_choice_off[s + 1] += m.state_choice_off[s];
    for (size_t c = 0; c < nchoices; ++c) m.choice_trans_off[c + 1] = m.choice_trans_off[c] + choice_sizes[c];
  }
  if (!(is >> tok) || tok != "transitions" || !(is >> ntrans)) fail("missing transitions header");
  if (ntrans != m.choice_trans_off[nchoices]) fail("transition count mismatch");
  m.trans_dst.assign(ntrans, 0);
  m.trans_prob.assign(ntrans, 0.0);
  std::vector<uint64_t> fill(nchoices, 0);
  for (size_t i = 0; i < ntrans; ++i) {
    uint64_t s, c, dst;
    double p;
    if (!(is >> tok) || tok != "t" || !(is >> s >> c >> dst >> p)) fail("bad transition line");
    if (s >= nstates) fail("transition from unknown state");
    uint64_t ci = m.state_choice_off[s] + c;
    if (ci >= nchoices) fail("transition names unknown choice");
    uint64_t slot = m.choice_trans_off[ci] + fill[ci]++;
    if (slot >= m.choice_trans_off[ci + 1]) fail("too many transitions in choice");
    m.trans_dst[slot] = static_cast<uint32_t>(dst);
    m.trans_prob[slot] = p;
  }
  if (!(is >> tok) || tok != "labels" || !(is >> nlabels)) fail("missing labels header");
  for (size_t i = 0; i < nlabels; ++i) {
    std::string name;
    if (!(is >> tok) || tok != "label" || !(is >> name)) fail("bad label line");
    m.labels.push_back(name);
  }
  size_t nsr = 0, ncr = 0;
  if (!(is >> tok) || tok != "rewards" || !(is >> tok) || tok != "state" || !(is >> nsr))
    fail("missing state rewards header");
  if (nsr > 0) m.state_reward.assign(nstates, 0.0);
  for (size_t i = 0; i < nsr; ++i) {
    uint64_t s;
    double r;
    if (!(is >> tok) || tok != "rs" || !(is >> s >> r)) fail("bad state reward line");
    m.state_reward[s] = r;
  }
  if (!(is >> tok) || tok != "rewards" || !(is >> tok) || tok != "choice" || !(is >> ncr))
    fail("missing choice rewards header");
  if (ncr > 0) m.choice_reward.assign(nchoices, 0.0);
  for (size_t i = 0; i < ncr; ++i) {
    uint64_t s, c;
    double r;
    if (!(is >> tok) || tok != "rc" || !(is >> s >> c >> r)) fail("bad choice reward line");
    m.choice_reward[m.state_choice_off[s] + c] = r;
  }
  if (!(is >> tok) || tok != "end") fail("missing end marker");
  return m;
}

inline ProbModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorCode::Io, "cannot open model file '" + path + "'");
  return load_model(is, path);
}

/// Resolves a state override: either `#<index>` or a comma-separated list of
/// `var=value` assignments layered over the initial state's valuation. The
/// encoded state must exist in the model.
inline uint32_t resolve_state_spec(const ProbModel& m, const StateLookup& lookup,
                                   const std::string& text) {
  std::string t = text;
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
  if (!t.empty() && t[0] == '#') {
    uint64_t idx = std::stoull(t.substr(1));
    if (idx >= m.num_states())
      raise(ErrorCode::State, "state index " + std::to_string(idx) + " out of range");
    return static_cast<uint32_t>(idx);
  }
  std::vector<int64_t> values(m.vars.size());
  for (size_t v = 0; v < m.vars.size(); ++v) values[v] = m.value(m.initial, static_cast<int>(v));
  std::istringstream ss(t);
  std::string part;
  while (std::getline(ss, part, ',')) {
    size_t eq = part.find('=');
    if (eq == std::string::npos)
      raise(ErrorCode::State, "state spec entry '" + part + "' is not 'var=value'");
    auto trim = [](std::string s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      return s;
    };
    std::string name = trim(part.substr(0, eq));
    int v = m.var_index(name);
    if (v < 0) raise(ErrorCode::State, "unknown variable '" + name + "' in state spec");
    values[static_cast<size_t>(v)] = std::stoll(trim(part.substr(eq + 1)));
  }
  std::vector<uint64_t> words(m.words_per_state, 0);
  for (size_t v = 0; v < m.vars.size(); ++v) detail::pack_value(m, words, v, values[v]);
  std::optional<uint32_t> idx = lookup.find(words);
  if (!idx)
    raise(ErrorCode::State,
          "the requested valuation is not a reachable state of the model");
  return *idx;
}

}  // namespace lisa
