#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lisa/agent.hpp"

namespace lisa {

struct ParseResult {
  std::optional<AgentSpec> spec;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return spec.has_value(); }

  std::string first_error() const {
    for (const Diagnostic& d : diagnostics)
      if (d.severity == Diagnostic::Severity::Error) return format_diagnostic(d);
    return "";
  }
};

namespace dsl {

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

struct FeedbackParse {
  std::string name;
  DelayedBernoulli delay;
};

/// Parses an action feedback block body, `continue[0.6,5,0] abort[0.4,5,0]`.
/// Throws on malformed triples or outcome probabilities summing above 1;
/// the remainder (if any) is the silent no-feedback outcome.
inline std::vector<FeedbackParse> parse_action_feedback(std::string_view block) {
  std::vector<FeedbackParse> out;
  size_t i = 0;
  auto skip_ws = [&] {
    while (i < block.size() && std::isspace(static_cast<unsigned char>(block[i]))) ++i;
  };
  double total = 0;
  while (true) {
    skip_ws();
    if (i >= block.size()) break;
    size_t open = block.find('[', i);
    if (open == std::string_view::npos)
      raise(ErrorCode::Spec, "feedback entry missing '[p,mu,sigma]' triple");
    std::string name = trim(block.substr(i, open - i));
    if (name.empty()) raise(ErrorCode::Spec, "feedback entry has no name");
    size_t close = block.find(']', open);
    if (close == std::string_view::npos) raise(ErrorCode::Spec, "unterminated feedback triple");
    std::string triple(block.substr(open + 1, close - open - 1));
    double p, mu, sigma;
    char extra;
    std::istringstream ss(triple);
    char c1, c2;
    if (!(ss >> p >> c1 >> mu >> c2 >> sigma) || c1 != ',' || c2 != ',' || (ss >> extra))
      raise(ErrorCode::Spec, "malformed feedback triple '[" + triple + "]'");
    if (p < 0.0 || p > 1.0)
      raise(ErrorCode::Spec, "feedback probability " + format_number(p) + " outside [0,1]");
    if (mu < 1 || mu != std::floor(mu)) raise(ErrorCode::Spec, "feedback mu must be an integer >= 1");
    if (sigma < 0 || sigma != std::floor(sigma) || sigma >= mu)
      raise(ErrorCode::Spec, "feedback sigma must be an integer in [0, mu)");
    FeedbackParse fp;
    fp.name = sanitize_identifier(name);
    fp.delay = DelayedBernoulli{p, static_cast<int>(mu), static_cast<int>(sigma)};
    total += p;
    out.push_back(std::move(fp));
    i = close + 1;
  }
  if (total > 1.0 + 1e-12)
    raise(ErrorCode::Spec,
          "feedback outcome probabilities sum to " + format_number(total) + " > 1");
  return out;
}

class DocParser {
 public:
  explicit DocParser(std::string_view text) { split_lines(text); }

  ParseResult run() {
    bucket_sections();
    if (!ok_) return finish();

    require_section("PERCEPTION PROCESS");
    require_section("EXECUTABLE PLANS");
    if (!ok_) return finish();

    parse_percepts();
    parse_actions();
    parse_initial_beliefs();
    parse_initial_actions();
    parse_rules();
    parse_plans();
    parse_rewards_section();
    parse_runtime_verification();
    resolve_percept_conditions();
    validate();
    return finish();
  }

 private:
  struct Line {
    int number = 0;
    std::string text;  // comment-stripped, right-trimmed
  };

  // ---- diagnostics -------------------------------------------------------

  void error(int line, const std::string& code, const std::string& msg) {
    Diagnostic d;
    d.severity = Diagnostic::Severity::Error;
    d.code = code;
    d.span = SourceSpan{line, 1, line, 1};
    d.message = msg;
    diags_.push_back(std::move(d));
    ok_ = false;
  }

  void warning(int line, const std::string& code, const std::string& msg) {
    Diagnostic d;
    d.severity = Diagnostic::Severity::Warning;
    d.code = code;
    d.span = SourceSpan{line, 1, line, 1};
    d.message = msg;
    diags_.push_back(std::move(d));
  }

  ParseResult finish() {
    ParseResult res;
    res.diagnostics = std::move(diags_);
    if (ok_) {
      spec_.finalize();
      res.spec = std::move(spec_);
    }
    return res;
  }

  // ---- lines and sections ------------------------------------------------

  void split_lines(std::string_view text) {
    int n = 0;
    size_t start = 0;
    while (start <= text.size()) {
      size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string line(text.substr(start, end - start));
      ++n;
      if (size_t c = line.find("//"); c != std::string::npos) line.erase(c);
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
      lines_.push_back(Line{n, line});
      if (end == text.size()) break;
      start = end + 1;
    }
  }

  static bool is_section_header(const std::string& t) {
    static const char* names[] = {"PERCEPTION PROCESS", "ACTIONS",          "INITIAL BELIEFS",
                                  "INITIAL ACTIONS",    "LOGIC RULES",      "EXECUTABLE PLANS",
                                  "REWARDS",            "RUNTIME VERIFICATION"};
    for (const char* n : names)
      if (t == n) return true;
    return false;
  }

  void bucket_sections() {
    std::string current;
    for (const Line& l : lines_) {
      std::string t = trim(l.text);
      if (t.empty() || t == "...") continue;
      if (is_section_header(t)) {
        if (sections_.count(t)) {
          error(l.number, "duplicate-section", "section '" + t + "' appears twice");
          return;
        }
        sections_[t] = {};
        current = t;
        continue;
      }
      if (current.empty()) {
        error(l.number, "syntax", "content before any section header: '" + t + "'");
        return;
      }
      sections_[current].push_back(Line{l.number, t});
    }
  }

  void require_section(const std::string& name) {
    if (!sections_.count(name)) error(0, "missing-section", "mandatory section '" + name + "' is missing");
  }

  std::vector<Line> section(const std::string& name) {
    auto it = sections_.find(name);
    if (it == sections_.end()) return {};
    std::vector<Line> out;
    for (const Line& l : it->second)
      if (!l.text.empty() && l.text.back() == ':') continue;  // preamble sentences
      else out.push_back(l);
    return out;
  }

  // ---- atom interning ----------------------------------------------------

  AtomId intern(const std::string& sentence, AtomKind kind_if_new, int line) {
    std::string name = sanitize_identifier(sentence);
    AtomId id = spec_.find_atom(name);
    if (id >= 0) return id;
    BeliefAtom a;
    a.name = name;
    a.kind = kind_if_new;
    a.display = trim(sentence);
    spec_.atoms.push_back(std::move(a));
    spec_.initial_beliefs.push_back(0);
    (void)line;
    return static_cast<AtomId>(spec_.atoms.size() - 1);
  }

  AtomId declare(const std::string& sentence, AtomKind kind, int line, const char* what) {
    std::string name = sanitize_identifier(sentence);
    AtomId id = spec_.find_atom(name);
    if (id >= 0) {
      if (spec_.atom(id).kind != kind) {
        error(line, "kind-conflict", std::string(what) + " '" + name + "' already declared as " +
                                          atom_kind_name(spec_.atom(id).kind));
        return id;
      }
      return id;
    }
    return intern(sentence, kind, line);
  }

  // ---- annotation groups: `{...} {...}` trailers -------------------------

  struct Trailer {
    std::vector<std::string> groups;  // brace contents, in order
    std::string head;                 // text before the first '{'
  };

  std::optional<Trailer> split_trailers(const std::string& text, int line) {
    Trailer t;
    size_t i = text.find('{');
    t.head = trim(text.substr(0, i == std::string::npos ? text.size() : i));
    while (i != std::string::npos) {
      size_t close = text.find('}', i);
      if (close == std::string::npos) {
        error(line, "syntax", "unterminated '{' annotation");
        return std::nullopt;
      }
      t.groups.push_back(trim(text.substr(i + 1, close - i - 1)));
      i = text.find('{', close);
    }
    return t;
  }

  bool parse_triple(const std::string& text, int line, DelayedBernoulli& out) {
    std::istringstream ss(text);
    double p, mu, sigma;
    char c1, c2, extra;
    if (!(ss >> p >> c1 >> mu >> c2 >> sigma) || c1 != ',' || c2 != ',' || (ss >> extra)) {
      error(line, "syntax", "malformed [p,mu,sigma] triple '[" + text + "]'");
      return false;
    }
    if (p < 0.0 || p > 1.0) {
      error(line, "probability-range", "probability " + format_number(p) + " outside [0,1]");
      return false;
    }
    if (mu < 1 || mu != std::floor(mu)) {
      error(line, "delay-range", "mu must be an integer >= 1, got " + format_number(mu));
      return false;
    }
    if (sigma < 0 || sigma != std::floor(sigma) || sigma >= mu) {
      error(line, "delay-range", "sigma must be an integer in [0, mu), got " + format_number(sigma));
      return false;
    }
    out = DelayedBernoulli{p, static_cast<int>(mu), static_cast<int>(sigma)};
    return true;
  }

  // ---- sections ----------------------------------------------------------

  void parse_percepts() {
    for (const Line& l : section("PERCEPTION PROCESS")) {
      auto trailer = split_trailers(l.text, l.number);
      if (!trailer) continue;
      std::string sentence = trailer->head;
      if (sentence.empty() || sentence.back() != '.') {
        error(l.number, "syntax", "percept declaration must be a sentence ending with '.'");
        continue;
      }
      sentence.pop_back();
      AtomId atom = declare(sentence, AtomKind::Sensory, l.number, "percept");
      if (!ok_) continue;
      for (const PerceptDecl& existing : spec_.percepts)
        if (existing.atom == atom) {
          error(l.number, "duplicate-percept",
                "percept '" + spec_.atom(atom).name + "' declared twice");
        }
      if (!ok_) continue;

      PerceptDecl pd;
      pd.atom = atom;
      bool has_dynamics = false;
      for (const std::string& g : trailer->groups) {
        if (!g.empty() && g[0] == '[') {
          // {[cond,...],[p,mu,sigma](,[p,mu,sigma])?}
          std::vector<std::string> lists;
          size_t i = 0;
          while (i < g.size()) {
            if (g[i] == '[') {
              size_t close = g.find(']', i);
              if (close == std::string::npos) {
                error(l.number, "syntax", "unterminated '[' in percept annotation");
                return;
              }
              lists.push_back(trim(g.substr(i + 1, close - i - 1)));
              i = close + 1;
            } else if (g[i] == ',' || std::isspace(static_cast<unsigned char>(g[i]))) {
              ++i;
            } else {
              error(l.number, "syntax", "unexpected character in percept annotation");
              return;
            }
          }
          if (lists.size() < 2 || lists.size() > 3) {
            error(l.number, "syntax",
                  "percept annotation needs a condition list and one or two triples");
            continue;
          }
          // condition list resolved after all declarations are in
          pending_conditions_.push_back({atom, lists[0], l.number});
          if (!parse_triple(lists[1], l.number, pd.activation)) continue;
          if (lists.size() == 3) {
            if (!parse_triple(lists[2], l.number, pd.deactivation)) continue;
          } else {
            pd.deactivation = pd.activation;  // single triple: deactivation defaults
          }
          has_dynamics = true;
        } else {
          // reward trailer
          try {
            double r = std::stod(g);
            if (r < 0) throw std::invalid_argument("negative");
            spec_.rewards.push_back(RewardDecl{RewardDecl::Kind::Percept, atom, -1, r});
          } catch (...) {
            error(l.number, "syntax", "malformed reward annotation '{" + g + "}'");
          }
        }
      }
      if (has_dynamics) {
        spec_.percepts.push_back(pd);
      } else {
        warning(l.number, "percept-no-dynamics",
                "percept '" + spec_.atom(atom).name +
                    "' has no {[...],[p,mu,sigma]} annotation; the closed loop cannot be built");
      }
    }
  }

  void parse_actions() {
    for (const Line& l : section("ACTIONS")) {
      auto trailer = split_trailers(l.text, l.number);
      if (!trailer) continue;
      std::string sentence = trailer->head;
      if (sentence.empty() || sentence.back() != '.') {
        error(l.number, "syntax", "action declaration must be a sentence ending with '.'");
        continue;
      }
      sentence.pop_back();
      std::string name = sanitize_identifier(sentence);
      if (spec_.find_action(name) >= 0) {
        error(l.number, "duplicate-action", "action '" + name + "' declared twice");
        continue;
      }
      if (spec_.find_atom(name) >= 0)
        warning(l.number, "shadowed-name", "action '" + name + "' shares a name with a belief");
      ActionDecl act;
      act.id = static_cast<ActionId>(spec_.actions.size());
      act.name = name;
      act.display = trim(sentence);
      for (const std::string& g : trailer->groups) {
        if (g.find('[') != std::string::npos) {
          try {
            for (const FeedbackParse& fp : parse_action_feedback(g)) {
              AtomId atom = declare(fp.name, AtomKind::Feedback, l.number, "action feedback");
              for (const ActionDecl& other : spec_.actions)
                for (const FeedbackSpec& ofb : other.outcomes)
                  if (ofb.atom == atom)
                    error(l.number, "duplicate-feedback",
                          "feedback '" + fp.name + "' already belongs to action '" + other.name + "'");
              for (const FeedbackSpec& own : act.outcomes)
                if (own.atom == atom)
                  error(l.number, "duplicate-feedback",
                        "feedback '" + fp.name + "' listed twice for action '" + name + "'");
              act.outcomes.push_back(FeedbackSpec{atom, fp.delay});
            }
          } catch (const Error& e) {
            error(l.number, "feedback", e.what());
          }
        } else {
          try {
            double r = std::stod(g);
            if (r < 0) throw std::invalid_argument("negative");
            spec_.rewards.push_back(
                RewardDecl{RewardDecl::Kind::Action, -1, act.id, r});
          } catch (...) {
            error(l.number, "syntax", "malformed reward annotation '{" + g + "}'");
          }
        }
      }
      if (act.outcomes.empty())
        warning(l.number, "action-no-feedback",
                "action '" + name + "' declares no feedbacks; plans invoking it never advance");
      spec_.actions.push_back(std::move(act));
    }
  }

  void parse_initial_beliefs() {
    for (const Line& l : section("INITIAL BELIEFS")) {
      std::string s = trim(l.text);
      if (s.empty() || s.back() != '.') {
        error(l.number, "syntax", "initial belief must be a sentence ending with '.'");
        continue;
      }
      s.pop_back();
      AtomId a = intern(s, AtomKind::Mental, l.number);
      spec_.initial_beliefs[static_cast<size_t>(a)] = 1;
    }
  }

  void parse_initial_actions() {
    for (const Line& l : section("INITIAL ACTIONS")) {
      std::string s = trim(l.text);
      if (!s.empty() && s.back() == '.') s.pop_back();  // optional terminator
      std::optional<ActionRef> step = parse_step(trim(s), l.number, /*allow_interrupt=*/false);
      if (step) spec_.initial_actions.push_back(*step);
    }
  }

  void parse_rules() {
    int idx = 0;
    for (const Line& l : section("LOGIC RULES")) {
      std::string s = trim(l.text);
      if (s.empty()) continue;
      if (s.back() == '.') s.pop_back();
      if (s.rfind("If ", 0) != 0) {
        error(l.number, "syntax", "logic rule must have the form 'If <context> then <effects>.'");
        continue;
      }
      size_t then_pos = find_keyword(s, "then");
      if (then_pos == std::string::npos) {
        error(l.number, "syntax", "logic rule missing 'then'");
        continue;
      }
      std::string ctx_text = trim(s.substr(3, then_pos - 3));
      std::string eff_text = trim(s.substr(then_pos + 4));
      LogicRule rule;
      rule.name = "rule_" + std::to_string(++idx);
      if (!parse_context(ctx_text, l.number, rule.antecedent)) continue;
      bool bad = false;
      for (const std::string& part : split_keyword(eff_text, "and")) {
        std::string p = trim(part);
        bool add = true;
        if (!p.empty() && (p[0] == '+' || p[0] == '-')) {
          add = p[0] == '+';
          p = trim(p.substr(1));
        } else {
          error(l.number, "syntax", "rule effect must start with '+' or '-': '" + p + "'");
          bad = true;
          break;
        }
        std::string sentence;
        if (!extract_belief_ref(p, sentence)) {
          error(l.number, "syntax", "rule effect must name a belief '^[...]': '" + p + "'");
          bad = true;
          break;
        }
        AtomId atom = intern(sentence, AtomKind::Mental, l.number);
        if (spec_.atom(atom).kind != AtomKind::Mental) {
          error(l.number, "rule-consequent",
                "rule consequent '" + spec_.atom(atom).name + "' is not a mental note");
          bad = true;
          break;
        }
        for (const RuleEffect& prev : rule.consequent)
          if (prev.atom == atom && prev.add != add) {
            error(l.number, "rule-conflict",
                  "rule both adds and removes '" + spec_.atom(atom).name + "'");
            bad = true;
          }
        rule.consequent.push_back(RuleEffect{atom, add});
      }
      if (!bad && rule.consequent.empty()) {
        error(l.number, "syntax", "logic rule has no effects");
        bad = true;
      }
      if (!bad) spec_.rules.push_back(std::move(rule));
    }
  }

  void parse_plans() {
    const std::vector<Line> lines = section("EXECUTABLE PLANS");
    size_t i = 0;
    while (i < lines.size()) {
      const Line& l = lines[i];
      std::string s = trim(l.text);
      if (s.rfind("If ", 0) != 0) {
        error(l.number, "syntax", "expected a plan header 'If ^[...] while ... then'");
        return;
      }
      size_t then_pos = find_keyword(s, "then");
      if (then_pos == std::string::npos || trim(s.substr(then_pos + 4)).size() > 0) {
        error(l.number, "syntax", "plan header must end with 'then'");
        return;
      }
      std::string head = trim(s.substr(3, then_pos - 3));
      size_t while_pos = find_keyword(head, "while");
      std::string trig_text = while_pos == std::string::npos ? head : trim(head.substr(0, while_pos));
      std::string ctx_text =
          while_pos == std::string::npos ? "true" : trim(head.substr(while_pos + 5));

      Plan plan;
      plan.id = static_cast<PlanId>(spec_.plans.size());
      plan.name = "plan_" + std::to_string(plan.id + 1);
      bool removed = false;
      if (!trig_text.empty() && trig_text[0] == '~') {
        removed = true;
        trig_text = trim(trig_text.substr(1));
      }
      std::string sentence;
      if (!extract_belief_ref(trig_text, sentence)) {
        error(l.number, "syntax", "plan trigger must be '^[...]' or '~^[...]'");
        return;
      }
      plan.trigger = Event{intern(sentence, AtomKind::Mental, l.number), !removed};
      if (!parse_context(ctx_text, l.number, plan.context)) return;

      // Body: one step per line, last step followed by '.'.
      ++i;
      bool closed = false;
      while (i < lines.size()) {
        std::string b = trim(lines[i].text);
        if (b.rfind("If ", 0) == 0) break;
        bool terminal = false;
        // A '.' after the step (outside brackets) closes the plan.
        if (!b.empty() && b.back() == '.') {
          size_t rb = b.rfind(']');
          size_t rbrace = b.rfind('}');
          size_t last_struct = std::max(rb == std::string::npos ? 0 : rb,
                                        rbrace == std::string::npos ? 0 : rbrace);
          if (b.size() >= 2 && b.size() - 1 > last_struct) {
            terminal = true;
            b.pop_back();
            b = trim(b);
          } else if (b[0] != '[') {  // mental note line ending with '.'
            terminal = true;
            b.pop_back();
            b = trim(b);
          }
        }
        std::optional<ActionRef> step = parse_step(b, lines[i].number, /*allow_interrupt=*/true);
        if (!step) return;
        plan.body.push_back(*step);
        ++i;
        if (terminal) {
          closed = true;
          break;
        }
      }
      if (!closed) {
        error(l.number, "syntax", "plan body not terminated with '.'");
        return;
      }
      if (plan.body.empty()) {
        error(l.number, "empty-plan", "plan has an empty body");
        return;
      }
      spec_.plans.push_back(std::move(plan));
    }
    if (spec_.plans.empty()) error(0, "no-plans", "no plans declared");
  }

  void parse_rewards_section() {
    for (const Line& l : section("REWARDS")) {
      auto trailer = split_trailers(l.text, l.number);
      if (!trailer) continue;
      if (trailer->groups.size() != 1) {
        error(l.number, "syntax", "reward entry needs exactly one '{value}'");
        continue;
      }
      double value = 0;
      try {
        value = std::stod(trailer->groups[0]);
        if (value < 0) throw std::invalid_argument("negative");
      } catch (...) {
        error(l.number, "syntax", "malformed reward value '{" + trailer->groups[0] + "}'");
        continue;
      }
      std::string head = trailer->head;
      if (!head.empty() && head.front() == '[') {
        size_t close = head.find(']');
        if (close == std::string::npos) {
          error(l.number, "syntax", "unterminated '[' in reward entry");
          continue;
        }
        std::string sentence = trim(head.substr(1, close - 1));
        if (!sentence.empty() && sentence.back() == '.') sentence.pop_back();
        ActionId a = spec_.find_action(sanitize_identifier(sentence));
        if (a < 0) {
          error(l.number, "unknown-action", "reward names undeclared action '" + sentence + "'");
          continue;
        }
        spec_.rewards.push_back(RewardDecl{RewardDecl::Kind::Action, -1, a, value});
      } else {
        if (!head.empty() && head.back() == '.') head.pop_back();
        AtomId atom = spec_.find_atom(sanitize_identifier(head));
        if (atom < 0) {
          error(l.number, "unknown-atom", "reward names unknown belief '" + head + "'");
          continue;
        }
        spec_.rewards.push_back(RewardDecl{RewardDecl::Kind::Percept, atom, -1, value});
      }
    }
  }

  void parse_runtime_verification() {
    bool cadence_set = false;
    for (const Line& l : section("RUNTIME VERIFICATION")) {
      std::string s = trim(l.text);
      if (!s.empty() && s.back() == '.') s.pop_back();
      int cadence = spec_.skill.cadence;
      if (s.rfind("Every ", 0) == 0) {
        std::istringstream ss(s.substr(6));
        std::string word;
        if (!(ss >> cadence) || cadence < 1 || !(ss >> word) || word != "cycles") {
          error(l.number, "syntax", "expected 'Every <n> cycles verify {...} <cmp> <p> as ^[...]'");
          continue;
        }
        std::getline(ss, s);
        s = trim(s);
      }
      if (s.rfind("verify", 0) == 0 || s.rfind("Verify", 0) == 0) s = trim(s.substr(6));
      size_t qb = s.find('{'), qe = s.rfind('}');
      if (qb == std::string::npos || qe == std::string::npos || qe <= qb) {
        error(l.number, "syntax", "verification query must be enclosed in '{...}'");
        continue;
      }
      SkillQuery sq;
      sq.query_text = trim(s.substr(qb + 1, qe - qb - 1));
      std::string rest = trim(s.substr(qe + 1));
      std::istringstream ss(rest);
      std::string cmp, as;
      double thr;
      if (!(ss >> cmp >> thr >> as) || as != "as") {
        error(l.number, "syntax", "expected '<cmp> <p> as ^[...]' after the query");
        continue;
      }
      if (cmp == "<") sq.cmp = '<';
      else if (cmp == "<=") sq.cmp = 'l';
      else if (cmp == ">") sq.cmp = '>';
      else if (cmp == ">=") sq.cmp = 'g';
      else {
        error(l.number, "syntax", "comparison must be one of < <= > >=");
        continue;
      }
      if (thr < 0.0 || thr > 1.0) {
        error(l.number, "probability-range", "threshold outside [0,1]");
        continue;
      }
      sq.threshold = thr;
      std::string target;
      std::getline(ss, target);
      std::string sentence;
      if (!extract_belief_ref(trim(target), sentence)) {
        error(l.number, "syntax", "verification target must be '^[...]'");
        continue;
      }
      sq.target = intern(sentence, AtomKind::Mental, l.number);
      if (spec_.atom(sq.target).kind != AtomKind::Mental) {
        error(l.number, "skill-target",
              "verification target '" + spec_.atom(sq.target).name + "' is not a mental note");
        continue;
      }
      if (!cadence_set) {
        spec_.skill.cadence = cadence;
        cadence_set = true;
      } else if (cadence != spec_.skill.cadence) {
        warning(l.number, "skill-cadence", "multiple cadences; using the first one");
      }
      spec_.skill.queries.push_back(std::move(sq));
    }
  }

  // ---- small parsers -----------------------------------------------------

  /// `^[Some sentence]` -> "Some sentence"
  bool extract_belief_ref(const std::string& text, std::string& sentence) {
    std::string t = trim(text);
    if (t.size() < 4 || t[0] != '^' || t[1] != '[' || t.back() != ']') return false;
    sentence = trim(t.substr(2, t.size() - 3));
    return !sentence.empty();
  }

  /// Finds a keyword as a standalone word outside any `^[...]` reference.
  static size_t find_keyword(const std::string& s, const std::string& kw, size_t from = 0) {
    int depth = 0;
    for (size_t i = from; i + kw.size() <= s.size(); ++i) {
      if (s[i] == '[') ++depth;
      if (s[i] == ']' && depth > 0) --depth;
      if (depth > 0) continue;
      if (s.compare(i, kw.size(), kw) != 0) continue;
      bool left_ok = i == 0 || std::isspace(static_cast<unsigned char>(s[i - 1]));
      size_t end = i + kw.size();
      bool right_ok = end == s.size() || std::isspace(static_cast<unsigned char>(s[end]));
      if (left_ok && right_ok) return i;
    }
    return std::string::npos;
  }

  static std::vector<std::string> split_keyword(const std::string& s, const std::string& kw) {
    std::vector<std::string> parts;
    size_t from = 0;
    while (true) {
      size_t p = find_keyword(s, kw, from);
      if (p == std::string::npos) {
        parts.push_back(s.substr(from));
        return parts;
      }
      parts.push_back(s.substr(from, p - from));
      from = p + kw.size();
    }
  }

  /// Context grammar: or-expr of and-exprs of {^[x], ~^[x], true, ~( ... ), ( ... )}.
  struct CtxTokenizer {
    std::string s;
    size_t i = 0;

    void skip() {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }

    std::optional<std::string> next() {
      skip();
      if (i >= s.size()) return std::nullopt;
      char c = s[i];
      if (c == '(' || c == ')' || c == '~') {
        ++i;
        return std::string(1, c);
      }
      if (c == '^') {
        size_t close = s.find(']', i);
        if (close == std::string::npos) return std::nullopt;
        std::string tok = s.substr(i, close - i + 1);
        i = close + 1;
        return tok;
      }
      size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) && s[j] != '(' &&
             s[j] != ')')
        ++j;
      std::string tok = s.substr(i, j - i);
      i = j;
      return tok;
    }
  };

  bool parse_context(const std::string& text, int line, Formula& out) {
    CtxTokenizer tz{text, 0};
    std::vector<std::string> toks;
    while (auto t = tz.next()) toks.push_back(*t);
    size_t pos = 0;
    bool ok = true;
    out = parse_ctx_or(toks, pos, line, ok);
    if (ok && pos != toks.size()) {
      error(line, "syntax", "unexpected token in context: '" + toks[pos] + "'");
      return false;
    }
    return ok;
  }

  Formula parse_ctx_or(const std::vector<std::string>& t, size_t& pos, int line, bool& ok) {
    std::vector<Formula> kids{parse_ctx_and(t, pos, line, ok)};
    while (ok && pos < t.size() && t[pos] == "or") {
      ++pos;
      kids.push_back(parse_ctx_and(t, pos, line, ok));
    }
    return kids.size() == 1 ? std::move(kids.front()) : Formula::disj(std::move(kids));
  }

  Formula parse_ctx_and(const std::vector<std::string>& t, size_t& pos, int line, bool& ok) {
    std::vector<Formula> kids{parse_ctx_term(t, pos, line, ok)};
    while (ok && pos < t.size() && t[pos] == "and") {
      ++pos;
      kids.push_back(parse_ctx_term(t, pos, line, ok));
    }
    return kids.size() == 1 ? std::move(kids.front()) : Formula::conj(std::move(kids));
  }

  Formula parse_ctx_term(const std::vector<std::string>& t, size_t& pos, int line, bool& ok) {
    if (pos >= t.size()) {
      error(line, "syntax", "context ended unexpectedly");
      ok = false;
      return Formula::truth();
    }
    const std::string tok = t[pos];
    if (tok == "true") {
      ++pos;
      return Formula::truth();
    }
    if (tok == "~") {
      ++pos;
      Formula inner = parse_ctx_term(t, pos, line, ok);
      if (inner.kind == Formula::Kind::Lit) {
        inner.lit.negated = !inner.lit.negated;
        return inner;
      }
      return Formula::negate(std::move(inner));
    }
    if (tok == "(") {
      ++pos;
      Formula inner = parse_ctx_or(t, pos, line, ok);
      if (ok && (pos >= t.size() || t[pos] != ")")) {
        error(line, "syntax", "missing ')' in context");
        ok = false;
        return inner;
      }
      ++pos;
      return inner;
    }
    if (tok.size() > 2 && tok[0] == '^') {
      std::string sentence;
      if (extract_belief_ref(tok, sentence)) {
        ++pos;
        return Formula::literal(intern(sentence, AtomKind::Mental, line), false);
      }
    }
    error(line, "syntax", "unexpected token in context: '" + tok + "'");
    ok = false;
    return Formula::truth();
  }

  /// Body step: `[Sentence.]`, `+^[x]`, `-^[x]`, `interrupt(plan_3)`,
  /// each with an optional `{reward}` trailer.
  std::optional<ActionRef> parse_step(std::string text, int line, bool allow_interrupt) {
    ActionRef ref;
    // reward trailer
    if (size_t b = text.find('{'); b != std::string::npos) {
      size_t e = text.find('}', b);
      if (e == std::string::npos) {
        error(line, "syntax", "unterminated '{' reward on plan step");
        return std::nullopt;
      }
      try {
        double r = std::stod(trim(text.substr(b + 1, e - b - 1)));
        if (r < 0) throw std::invalid_argument("negative");
        ref.reward = r;
      } catch (...) {
        error(line, "syntax", "malformed step reward");
        return std::nullopt;
      }
      text = trim(text.substr(0, b));
    }
    if (text.empty()) {
      error(line, "syntax", "empty plan step");
      return std::nullopt;
    }
    if (text[0] == '[') {
      if (text.back() != ']') {
        error(line, "syntax", "unterminated '[' action step");
        return std::nullopt;
      }
      std::string sentence = trim(text.substr(1, text.size() - 2));
      if (!sentence.empty() && sentence.back() == '.') sentence.pop_back();
      ActionId a = spec_.find_action(sanitize_identifier(sentence));
      if (a < 0) {
        error(line, "undeclared-action",
              "undeclared action '" + sanitize_identifier(sentence) + "'");
        return std::nullopt;
      }
      ref.kind = ActionRef::Kind::External;
      ref.action = a;
      return ref;
    }
    if (text[0] == '+' || text[0] == '-') {
      std::string sentence;
      if (!extract_belief_ref(trim(text.substr(1)), sentence)) {
        error(line, "syntax", "mental-note step must be '+^[...]' or '-^[...]'");
        return std::nullopt;
      }
      AtomId atom = intern(sentence, AtomKind::Mental, line);
      if (spec_.atom(atom).kind != AtomKind::Mental) {
        error(line, "mental-kind",
              "mental-note operation targets " + std::string(atom_kind_name(spec_.atom(atom).kind)) +
                  " '" + spec_.atom(atom).name + "'");
        return std::nullopt;
      }
      ref.kind = text[0] == '+' ? ActionRef::Kind::MentalAdd : ActionRef::Kind::MentalRemove;
      ref.atom = atom;
      return ref;
    }
    if (text.rfind("interrupt", 0) == 0) {
      if (!allow_interrupt) {
        error(line, "syntax", "interrupt steps are not allowed here");
        return std::nullopt;
      }
      size_t b = text.find('('), e = text.find(')');
      if (b == std::string::npos || e == std::string::npos || e <= b) {
        error(line, "syntax", "interrupt step must be 'interrupt(plan_k)'");
        return std::nullopt;
      }
      std::string arg = trim(text.substr(b + 1, e - b - 1));
      if (arg.rfind("plan_", 0) == 0) arg = arg.substr(5);
      try {
        int n = std::stoi(arg);
        if (n < 1) throw std::invalid_argument("range");
        ref.kind = ActionRef::Kind::Interrupt;
        ref.target = static_cast<PlanId>(n - 1);  // validated after all plans are read
        pending_interrupts_.push_back({ref.target, line});
        return ref;
      } catch (...) {
        error(line, "syntax", "interrupt target must be a 1-based plan number");
        return std::nullopt;
      }
    }
    error(line, "syntax", "unrecognized plan step '" + text + "'");
    return std::nullopt;
  }

  // ---- late resolution and validation -------------------------------------

  void resolve_percept_conditions() {
    for (const PendingCondition& pc : pending_conditions_) {
      PerceptDecl* decl = nullptr;
      for (PerceptDecl& pd : spec_.percepts)
        if (pd.atom == pc.atom) decl = &pd;
      if (!decl) continue;
      std::string list = trim(pc.raw);
      if (list.empty()) continue;
      std::istringstream ss(list);
      std::string part;
      while (std::getline(ss, part, ',')) {
        std::string p = trim(part);
        if (p.empty()) continue;
        bool neg = false;
        if (p[0] == '~') {
          neg = true;
          p = trim(p.substr(1));
        }
        AtomId atom = intern(p, AtomKind::Mental, pc.line);
        if (spec_.atom(atom).kind == AtomKind::Feedback)
          error(pc.line, "condition-kind",
                "percept condition '" + spec_.atom(atom).name +
                    "' is an action feedback; conditions range over percepts and mental notes");
        decl->condition.push_back(Literal{atom, neg});
      }
    }
  }

  void validate() {
    for (const auto& [target, line] : pending_interrupts_)
      if (target < 0 || static_cast<size_t>(target) >= spec_.plans.size())
        error(line, "interrupt-target",
              "interrupt targets plan " + std::to_string(target + 1) + " but only " +
                  std::to_string(spec_.plans.size()) + " plans are declared");
    // Unused percepts: never referenced by a trigger, context, rule, or condition.
    std::vector<uint8_t> used(spec_.atoms.size(), 0);
    auto mark = [&](const Formula& f) {
      std::vector<AtomId> atoms;
      f.collect_atoms(atoms);
      for (AtomId a : atoms) used[static_cast<size_t>(a)] = 1;
    };
    for (const Plan& p : spec_.plans) {
      if (p.trigger) used[static_cast<size_t>(p.trigger->atom)] = 1;
      mark(p.context);
    }
    for (const LogicRule& r : spec_.rules) mark(r.antecedent);
    for (const PerceptDecl& pd : spec_.percepts)
      for (const Literal& l : pd.condition) used[static_cast<size_t>(l.atom)] = 1;
    for (size_t a = 0; a < spec_.atoms.size(); ++a)
      if (spec_.atoms[a].kind == AtomKind::Sensory && !used[a])
        warning(0, "unused-belief", "percept '" + spec_.atoms[a].name + "' is never used");
  }

  struct PendingCondition {
    AtomId atom;
    std::string raw;
    int line;
  };

  std::vector<Line> lines_;
  std::map<std::string, std::vector<Line>> sections_;
  std::vector<PendingCondition> pending_conditions_;
  std::vector<std::pair<PlanId, int>> pending_interrupts_;
  AgentSpec spec_;
  std::vector<Diagnostic> diags_;
  bool ok_ = true;
};

}  // namespace dsl

inline ParseResult parse_document(std::string_view text) {
  dsl::DocParser p(text);
  return p.run();
}

inline AgentSpec parse_or_throw(std::string_view text) {
  ParseResult res = parse_document(text);
  if (!res.ok()) raise(ErrorCode::Spec, res.first_error());
  return *std::move(res.spec);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Pretty printer (canonical document form; reparsing yields the same spec)

namespace dsl {

inline std::string display_of(const AgentSpec& spec, AtomId a) {
  const BeliefAtom& atom = spec.atom(a);
  return atom.display.empty() ? atom.name : atom.display;
}

inline std::string print_context(const AgentSpec& spec, const Formula& f, bool top = true) {
  switch (f.kind) {
    case Formula::Kind::True:
      return "true";
    case Formula::Kind::Lit:
      return std::string(f.lit.negated ? "~" : "") + "^[" + display_of(spec, f.lit.atom) + "]";
    case Formula::Kind::Not:
      return "~(" + print_context(spec, f.kids.front(), true) + ")";
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      std::string joiner = f.kind == Formula::Kind::And ? " and " : " or ";
      std::string out;
      for (size_t i = 0; i < f.kids.size(); ++i) {
        if (i) out += joiner;
        bool kid_top = f.kids[i].kind != Formula::Kind::And && f.kids[i].kind != Formula::Kind::Or;
        out += kid_top ? print_context(spec, f.kids[i], false)
                       : "(" + print_context(spec, f.kids[i], false) + ")";
      }
      return top ? out : out;
    }
  }
  return "true";
}

inline std::string print_step(const AgentSpec& spec, const ActionRef& step) {
  std::string out;
  switch (step.kind) {
    case ActionRef::Kind::External:
      out = "[" + spec.actions[static_cast<size_t>(step.action)].display + ".]";
      break;
    case ActionRef::Kind::MentalAdd:
      out = "+^[" + display_of(spec, step.atom) + "]";
      break;
    case ActionRef::Kind::MentalRemove:
      out = "-^[" + display_of(spec, step.atom) + "]";
      break;
    case ActionRef::Kind::Interrupt:
      out = "interrupt(plan_" + std::to_string(step.target + 1) + ")";
      break;
  }
  if (step.reward) out += " {" + format_number(*step.reward) + "}";
  return out;
}

}  // namespace dsl

inline std::string pretty_print(const AgentSpec& spec) {
  std::ostringstream os;
  auto triple = [](const DelayedBernoulli& d) {
    return "[" + format_number(d.p) + "," + std::to_string(d.mu) + "," + std::to_string(d.sigma) +
           "]";
  };

  os << "PERCEPTION PROCESS\n";
  os << "Monitor the following booleans:\n";
  std::vector<uint8_t> declared(spec.atoms.size(), 0);
  for (const PerceptDecl& pd : spec.percepts) {
    declared[static_cast<size_t>(pd.atom)] = 1;
    os << dsl::display_of(spec, pd.atom) << ". {[";
    for (size_t i = 0; i < pd.condition.size(); ++i) {
      if (i) os << ", ";
      if (pd.condition[i].negated) os << "~";
      os << dsl::display_of(spec, pd.condition[i].atom);
    }
    os << "]," << triple(pd.activation);
    if (!(pd.deactivation == pd.activation)) os << "," << triple(pd.deactivation);
    os << "}\n";
  }
  for (size_t a = 0; a < spec.atoms.size(); ++a)
    if (spec.atoms[a].kind == AtomKind::Sensory && !declared[a])
      os << dsl::display_of(spec, static_cast<AtomId>(a)) << ".\n";

  if (!spec.actions.empty()) {
    os << "\nACTIONS\n";
    for (const ActionDecl& act : spec.actions) {
      os << act.display << ". {";
      for (size_t i = 0; i < act.outcomes.size(); ++i) {
        if (i) os << " ";
        os << spec.atom(act.outcomes[i].atom).name << triple(act.outcomes[i].delay);
      }
      os << "}\n";
    }
  }

  bool any_initial = false;
  for (uint8_t b : spec.initial_beliefs) any_initial |= b != 0;
  if (any_initial) {
    os << "\nINITIAL BELIEFS\n";
    for (size_t a = 0; a < spec.atoms.size(); ++a)
      if (spec.initial_beliefs[a]) os << dsl::display_of(spec, static_cast<AtomId>(a)) << ".\n";
  }

  if (!spec.initial_actions.empty()) {
    os << "\nINITIAL ACTIONS\n";
    for (const ActionRef& step : spec.initial_actions)
      os << dsl::print_step(spec, step) << "\n";
  }

  if (!spec.rules.empty()) {
    os << "\nLOGIC RULES\n";
    for (const LogicRule& r : spec.rules) {
      os << "If " << dsl::print_context(spec, r.antecedent) << " then ";
      for (size_t i = 0; i < r.consequent.size(); ++i) {
        if (i) os << " and ";
        os << (r.consequent[i].add ? "+" : "-") << "^["
           << dsl::display_of(spec, r.consequent[i].atom) << "]";
      }
      os << ".\n";
    }
  }

  os << "\nEXECUTABLE PLANS\n";
  for (const Plan& p : spec.plans) {
    if (p.initial) continue;
    os << "//Plan " << (p.id + 1) << "\n";
    os << "If " << (p.trigger->added ? "" : "~") << "^[" << dsl::display_of(spec, p.trigger->atom)
       << "] while " << dsl::print_context(spec, p.context) << " then\n";
    for (size_t i = 0; i < p.body.size(); ++i) {
      os << "\t" << dsl::print_step(spec, p.body[i]);
      if (i + 1 == p.body.size()) os << ".";
      os << "\n";
    }
  }

  if (!spec.rewards.empty()) {
    os << "\nREWARDS\n";
    for (const RewardDecl& r : spec.rewards) {
      if (r.kind == RewardDecl::Kind::Percept)
        os << dsl::display_of(spec, r.atom) << ". {" << format_number(r.value) << "}\n";
      else
        os << "[" << spec.actions[static_cast<size_t>(r.action)].display << ".] {"
           << format_number(r.value) << "}\n";
    }
  }

  if (!spec.skill.queries.empty()) {
    os << "\nRUNTIME VERIFICATION\n";
    for (const SkillQuery& q : spec.skill.queries) {
      const char* cmp = q.cmp == '<' ? "<" : q.cmp == 'l' ? "<=" : q.cmp == '>' ? ">" : ">=";
      os << "Every " << spec.skill.cadence << " cycles verify { " << q.query_text << " } " << cmp
         << " " << format_number(q.threshold) << " as ^[" << dsl::display_of(spec, q.target)
         << "].\n";
    }
  }
  return os.str();
}

}  // namespace lisa
