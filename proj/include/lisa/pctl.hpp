#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "lisa/model.hpp"

namespace lisa::pctl {

// ---------------------------------------------------------------------------
// Query AST

enum class Cmp { Eq, Ne, Lt, Le, Gt, Ge };

inline bool cmp_apply(Cmp c, double lhs, double rhs) {
  switch (c) {
    case Cmp::Eq: return lhs == rhs;
    case Cmp::Ne: return lhs != rhs;
    case Cmp::Lt: return lhs < rhs;
    case Cmp::Le: return lhs <= rhs;
    case Cmp::Gt: return lhs > rhs;
    case Cmp::Ge: return lhs >= rhs;
  }
  return false;
}

inline const char* cmp_text(Cmp c) {
  switch (c) {
    case Cmp::Eq: return "=";
    case Cmp::Ne: return "!=";
    case Cmp::Lt: return "<";
    case Cmp::Le: return "<=";
    case Cmp::Gt: return ">";
    case Cmp::Ge: return ">=";
  }
  return "?";
}

enum class Quant { Bound, Value, Min, Max };

struct PathFormula;

struct StateFormula {
  enum class Kind { True, False, Atom, Not, And, Or, Prob };
  Kind kind = Kind::True;
  // Atom: var cmp value (a bare identifier parses as `var != 0`)
  std::string var;
  Cmp cmp = Cmp::Ne;
  int32_t cval = 0;
  std::vector<StateFormula> kids;
  // Prob
  Quant quant = Quant::Bound;
  Cmp bound_cmp = Cmp::Ge;
  double bound = 0;
  std::shared_ptr<PathFormula> path;
};

struct PathFormula {
  enum class Kind { Next, Until };
  Kind kind = Kind::Until;
  StateFormula left;   // unused for Next
  StateFormula right;
  int64_t bound = -1;  // -1 = unbounded; `F phi` is `true U phi`
};

struct Query {
  bool reward = false;
  StateFormula formula;  // when !reward

  Quant quant = Quant::Value;  // reward query quantifier
  Cmp bound_cmp = Cmp::Ge;
  double bound = 0;
  bool cumulative = false;  // R[C<=k] vs R[F target]
  int64_t k = 0;
  StateFormula target;
};

// ---------------------------------------------------------------------------
// Parser

namespace detail {

struct Token {
  enum class Kind { Ident, Number, Sym, End };
  Kind kind = Kind::End;
  std::string text;
  size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
    tok_ = Token{};
    tok_.pos = i_;
    if (i_ >= src_.size()) return;
    char c = src_[i_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i_;
      while (j < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_'))
        ++j;
      tok_.kind = Token::Kind::Ident;
      tok_.text = std::string(src_.substr(i_, j - i_));
      i_ = j;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
      size_t j = i_;
      bool dot = false, exp = false;
      while (j < src_.size()) {
        char d = src_[j];
        if (std::isdigit(static_cast<unsigned char>(d))) { ++j; continue; }
        if (d == '.' && !dot && !exp) { dot = true; ++j; continue; }
        if ((d == 'e' || d == 'E') && !exp && j > i_) {
          exp = true; ++j;
          if (j < src_.size() && (src_[j] == '+' || src_[j] == '-')) ++j;
          continue;
        }
        break;
      }
      tok_.kind = Token::Kind::Number;
      tok_.text = std::string(src_.substr(i_, j - i_));
      i_ = j;
      return;
    }
    static const char* two[] = {"<=", ">=", "!=", "=?"};
    for (const char* s : two)
      if (src_.substr(i_, 2) == s) {
        tok_.kind = Token::Kind::Sym;
        tok_.text = s;
        i_ += 2;
        return;
      }
    tok_.kind = Token::Kind::Sym;
    tok_.text = std::string(1, c);
    i_ += 1;
  }

  std::string_view src_;
  size_t i_ = 0;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  Query parse_query() {
    Query q;
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::Ident && (t.text == "R" || t.text == "Rmin" || t.text == "Rmax")) {
      q = parse_reward();
    } else {
      q.reward = false;
      q.formula = parse_state();
    }
    expect_end();
    return q;
  }

  StateFormula parse_state() { return parse_or(); }

 private:
  [[noreturn]] void fail(const std::string& msg, size_t pos) {
    raise(ErrorCode::Query,
          "query syntax error at column " + std::to_string(pos + 1) + ": " + msg);
  }

  void expect_end() {
    if (lex_.peek().kind != Token::Kind::End)
      fail("unexpected trailing input '" + lex_.peek().text + "'", lex_.peek().pos);
  }

  Token expect_sym(const std::string& s) {
    Token t = lex_.take();
    if (t.kind != Token::Kind::Sym || t.text != s)
      fail("expected '" + s + "', found '" + t.text + "'", t.pos);
    return t;
  }

  bool eat_sym(const std::string& s) {
    if (lex_.peek().kind == Token::Kind::Sym && lex_.peek().text == s) {
      lex_.take();
      return true;
    }
    return false;
  }

  double expect_number() {
    Token t = lex_.take();
    if (t.kind != Token::Kind::Number) fail("expected a number, found '" + t.text + "'", t.pos);
    return std::stod(t.text);
  }

  std::optional<Cmp> peek_cmp() {
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::Sym) return std::nullopt;
    if (t.text == "<") return Cmp::Lt;
    if (t.text == "<=") return Cmp::Le;
    if (t.text == ">") return Cmp::Gt;
    if (t.text == ">=") return Cmp::Ge;
    if (t.text == "=") return Cmp::Eq;
    if (t.text == "!=") return Cmp::Ne;
    return std::nullopt;
  }

  StateFormula parse_or() {
    StateFormula f = parse_and();
    while (eat_sym("|")) {
      StateFormula rhs = parse_and();
      if (f.kind != StateFormula::Kind::Or) {
        StateFormula n;
        n.kind = StateFormula::Kind::Or;
        n.kids.push_back(std::move(f));
        f = std::move(n);
      }
      f.kids.push_back(std::move(rhs));
    }
    return f;
  }

  StateFormula parse_and() {
    StateFormula f = parse_not();
    while (eat_sym("&")) {
      StateFormula rhs = parse_not();
      if (f.kind != StateFormula::Kind::And) {
        StateFormula n;
        n.kind = StateFormula::Kind::And;
        n.kids.push_back(std::move(f));
        f = std::move(n);
      }
      f.kids.push_back(std::move(rhs));
    }
    return f;
  }

  StateFormula parse_not() {
    if (eat_sym("!")) {
      StateFormula n;
      n.kind = StateFormula::Kind::Not;
      n.kids.push_back(parse_not());
      return n;
    }
    return parse_primary();
  }

  StateFormula parse_primary() {
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::Sym && t.text == "(") {
      lex_.take();
      StateFormula f = parse_state();
      expect_sym(")");
      return f;
    }
    if (t.kind != Token::Kind::Ident) fail("expected a formula, found '" + t.text + "'", t.pos);
    if (t.text == "true") {
      lex_.take();
      return StateFormula{};
    }
    if (t.text == "false") {
      lex_.take();
      StateFormula f;
      f.kind = StateFormula::Kind::False;
      return f;
    }
    if (t.text == "P" || t.text == "Pmin" || t.text == "Pmax") return parse_prob();
    if (t.text == "G")
      fail("the G operator is outside the supported grammar; express safety as 1 - reachability",
           t.pos);
    // atomic proposition
    Token id = lex_.take();
    StateFormula f;
    f.kind = StateFormula::Kind::Atom;
    f.var = id.text;
    if (auto c = peek_cmp()) {
      lex_.take();
      Token v = lex_.take();
      if (v.kind != Token::Kind::Number)
        fail("expected an integer after comparison, found '" + v.text + "'", v.pos);
      f.cmp = *c;
      f.cval = static_cast<int32_t>(std::stol(v.text));
    } else {
      f.cmp = Cmp::Ne;  // bare atom: nonzero
      f.cval = 0;
    }
    return f;
  }

  StateFormula parse_prob() {
    Token op = lex_.take();
    StateFormula f;
    f.kind = StateFormula::Kind::Prob;
    if (eat_sym("=?")) {
      f.quant = op.text == "P" ? Quant::Value : (op.text == "Pmin" ? Quant::Min : Quant::Max);
    } else {
      if (op.text != "P")
        fail(op.text + " requires '=?' (bounds are only allowed on plain P)", op.pos);
      auto c = peek_cmp();
      if (!c || *c == Cmp::Eq || *c == Cmp::Ne)
        fail("expected one of < <= > >= after P", lex_.peek().pos);
      lex_.take();
      f.quant = Quant::Bound;
      f.bound_cmp = *c;
      size_t pos = lex_.peek().pos;
      f.bound = expect_number();
      if (f.bound < 0.0 || f.bound > 1.0)
        fail("probability bound " + format_number(f.bound) + " outside [0,1]", pos);
    }
    expect_sym("[");
    f.path = std::make_shared<PathFormula>(parse_path());
    expect_sym("]");
    return f;
  }

  PathFormula parse_path() {
    PathFormula p;
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::Ident && t.text == "X") {
      lex_.take();
      p.kind = PathFormula::Kind::Next;
      p.right = parse_state();
      return p;
    }
    if (t.kind == Token::Kind::Ident && t.text == "F") {
      lex_.take();
      p.kind = PathFormula::Kind::Until;
      p.left = StateFormula{};  // true
      p.bound = parse_optional_bound();
      p.right = parse_state();
      return p;
    }
    p.kind = PathFormula::Kind::Until;
    p.left = parse_state();
    Token u = lex_.take();
    if (u.kind != Token::Kind::Ident || u.text != "U")
      fail("expected 'U' in path formula, found '" + u.text + "'", u.pos);
    p.bound = parse_optional_bound();
    p.right = parse_state();
    return p;
  }

  int64_t parse_optional_bound() {
    if (lex_.peek().kind == Token::Kind::Sym && lex_.peek().text == "<=") {
      lex_.take();
      size_t pos = lex_.peek().pos;
      double k = expect_number();
      if (k < 0 || k != std::floor(k)) fail("step bound must be a non-negative integer", pos);
      return static_cast<int64_t>(k);
    }
    return -1;
  }

  Query parse_reward() {
    Query q;
    q.reward = true;
    Token op = lex_.take();
    if (eat_sym("=?")) {
      q.quant = op.text == "R" ? Quant::Value : (op.text == "Rmin" ? Quant::Min : Quant::Max);
    } else {
      if (op.text != "R") fail(op.text + " requires '=?'", op.pos);
      auto c = peek_cmp();
      if (!c || *c == Cmp::Eq || *c == Cmp::Ne)
        fail("expected one of < <= > >= after R", lex_.peek().pos);
      lex_.take();
      q.quant = Quant::Bound;
      q.bound_cmp = *c;
      q.bound = expect_number();
    }
    expect_sym("[");
    Token t = lex_.take();
    if (t.kind == Token::Kind::Ident && t.text == "C") {
      expect_sym("<=");
      size_t pos = lex_.peek().pos;
      double k = expect_number();
      if (k < 0 || k != std::floor(k)) fail("step bound must be a non-negative integer", pos);
      q.cumulative = true;
      q.k = static_cast<int64_t>(k);
    } else if (t.kind == Token::Kind::Ident && t.text == "F") {
      q.cumulative = false;
      q.target = parse_state();
    } else {
      fail("expected 'C<=k' or 'F phi' in reward query", t.pos);
    }
    expect_sym("]");
    return q;
  }

  Lexer lex_;
};

}  // namespace detail

inline Query parse_query(std::string_view text) {
  detail::Parser p(text);
  return p.parse_query();
}

inline StateFormula parse_state_formula(std::string_view text) {
  detail::Parser p(text);
  StateFormula f = p.parse_state();
  return f;
}

// ---------------------------------------------------------------------------
// Canonical printing (used by the PRISM property emitter and diagnostics)

inline std::string to_text(const StateFormula& f);

inline std::string to_text(const PathFormula& p) {
  if (p.kind == PathFormula::Kind::Next) return "X " + to_text(p.right);
  std::string bound = p.bound >= 0 ? "<=" + std::to_string(p.bound) : "";
  if (p.left.kind == StateFormula::Kind::True) return "F" + bound + " " + to_text(p.right);
  return to_text(p.left) + " U" + bound + " " + to_text(p.right);
}

inline std::string to_text(const StateFormula& f) {
  switch (f.kind) {
    case StateFormula::Kind::True: return "true";
    case StateFormula::Kind::False: return "false";
    case StateFormula::Kind::Atom:
      if (f.cmp == Cmp::Ne && f.cval == 0) return f.var;
      return f.var + cmp_text(f.cmp) + std::to_string(f.cval);
    case StateFormula::Kind::Not: return "!(" + to_text(f.kids.front()) + ")";
    case StateFormula::Kind::And:
    case StateFormula::Kind::Or: {
      std::string joiner = f.kind == StateFormula::Kind::And ? " & " : " | ";
      std::string out = "(";
      for (size_t i = 0; i < f.kids.size(); ++i) {
        if (i) out += joiner;
        out += to_text(f.kids[i]);
      }
      return out + ")";
    }
    case StateFormula::Kind::Prob: {
      std::string head;
      switch (f.quant) {
        case Quant::Bound: head = "P" + std::string(cmp_text(f.bound_cmp)) + format_number(f.bound); break;
        case Quant::Value: head = "P=?"; break;
        case Quant::Min: head = "Pmin=?"; break;
        case Quant::Max: head = "Pmax=?"; break;
      }
      return head + " [ " + to_text(*f.path) + " ]";
    }
  }
  return "?";
}

inline std::string to_text(const Query& q) {
  if (!q.reward) return to_text(q.formula);
  std::string head;
  switch (q.quant) {
    case Quant::Bound: head = "R" + std::string(cmp_text(q.bound_cmp)) + format_number(q.bound); break;
    case Quant::Value: head = "R=?"; break;
    case Quant::Min: head = "Rmin=?"; break;
    case Quant::Max: head = "Rmax=?"; break;
  }
  if (q.cumulative) return head + " [ C<=" + std::to_string(q.k) + " ]";
  return head + " [ F " + to_text(q.target) + " ]";
}

// ---------------------------------------------------------------------------
// Checking

struct CheckResult {
  double value = 0;
  double value2 = std::numeric_limits<double>::quiet_NaN();  // max of a (min,max) sweep
  bool pair = false;
  bool infinite = false;
  bool qualitative = false;
  bool sat_initial = false;
  std::vector<uint8_t> sat;  // satisfying states for qualitative top-level forms
  uint64_t iterations = 0;
  double residual = 0;
};

struct CheckOptions {
  double epsilon = 1e-6;
  uint64_t max_iterations = 1000000;
  std::optional<uint32_t> from;  // state override (PRISM-filter style)
};

enum class Direction { Single, Min, Max };

namespace detail {

using Bits = std::vector<uint8_t>;

inline double backup_choice(const ProbModel& m, uint64_t choice, const std::vector<double>& x) {
  double acc = 0;
  for (uint64_t t = m.choice_trans_off[choice]; t < m.choice_trans_off[choice + 1]; ++t)
    acc += m.trans_prob[t] * x[m.trans_dst[t]];
  return acc;
}

inline double backup_state(const ProbModel& m, uint32_t s, Direction dir,
                           const std::vector<double>& x) {
  uint64_t c0 = m.state_choice_off[s], c1 = m.state_choice_off[s + 1];
  if (dir == Direction::Single || c1 - c0 == 1) return backup_choice(m, c0, x);
  double best = dir == Direction::Max ? -1e300 : 1e300;
  for (uint64_t c = c0; c < c1; ++c) {
    double v = backup_choice(m, c, x);
    best = dir == Direction::Max ? std::max(best, v) : std::min(best, v);
  }
  return best;
}

/// Least fixpoint C = goal  ∪ (region ∩ {s : Qc. exists dst in c with C[dst]}),
/// where Q is "exists choice" (exists_choice) or "for all choices".
inline Bits reachable_set(const ProbModel& m, const Bits& region, const Bits& goal,
                          bool exists_choice) {
  size_t S = m.num_states();
  Bits in(S, 0);
  // Predecessor CSR over choices.
  std::vector<uint32_t> pred_cnt(S + 1, 0);
  for (uint32_t dst : m.trans_dst) pred_cnt[dst + 1] += 1;
  for (size_t i = 0; i < S; ++i) pred_cnt[i + 1] += pred_cnt[i];
  std::vector<std::pair<uint32_t, uint64_t>> preds(m.trans_dst.size());  // (src, choice)
  {
    std::vector<uint32_t> fill(S, 0);
    for (uint32_t s = 0; s < S; ++s)
      for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1]; ++c)
        for (uint64_t t = m.choice_trans_off[c]; t < m.choice_trans_off[c + 1]; ++t) {
          uint32_t dst = m.trans_dst[t];
          preds[pred_cnt[dst] + fill[dst]++] = {s, c};
        }
  }
  std::vector<uint8_t> choice_hit(m.num_choices(), 0);
  std::vector<uint32_t> state_hits(S, 0);
  std::vector<uint32_t> work;
  for (uint32_t s = 0; s < S; ++s)
    if (goal[s]) {
      in[s] = 1;
      work.push_back(s);
    }
  while (!work.empty()) {
    uint32_t v = work.back();
    work.pop_back();
    for (uint32_t pi = pred_cnt[v]; pi < pred_cnt[v + 1]; ++pi) {
      auto [s, c] = preds[pi];
      if (in[s] || !region[s]) continue;
      bool add = false;
      if (exists_choice) {
        add = true;
      } else if (!choice_hit[c]) {
        choice_hit[c] = 1;
        if (++state_hits[s] == m.state_choice_off[s + 1] - m.state_choice_off[s]) add = true;
      }
      if (add) {
        in[s] = 1;
        work.push_back(s);
      }
    }
  }
  return in;
}

/// Greatest fixpoint W ⊆ region with exists-choice whose entire support stays
/// in W (states from which some scheduler surely remains in the region).
inline Bits stay_set(const ProbModel& m, const Bits& region) {
  size_t S = m.num_states();
  Bits w = region;
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t s = 0; s < S; ++s) {
      if (!w[s]) continue;
      bool has = false;
      for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1] && !has; ++c) {
        bool all_in = true;
        for (uint64_t t = m.choice_trans_off[c]; t < m.choice_trans_off[c + 1]; ++t)
          if (!w[m.trans_dst[t]]) {
            all_in = false;
            break;
          }
        has = all_in;
      }
      if (!has) {
        w[s] = 0;
        changed = true;
      }
    }
  }
  return w;
}

/// Pmax = 1 states (Prob1E of PRISM): nested fixpoint.
inline Bits prob1e(const ProbModel& m, const Bits& left, const Bits& goal) {
  size_t S = m.num_states();
  Bits u(S, 1);
  while (true) {
    Bits v(S, 0);
    bool grew = true;
    while (grew) {
      grew = false;
      for (uint32_t s = 0; s < S; ++s) {
        if (v[s]) continue;
        if (goal[s]) {
          v[s] = 1;
          grew = true;
          continue;
        }
        if (!left[s]) continue;
        for (uint64_t c = m.state_choice_off[s]; c < m.state_choice_off[s + 1]; ++c) {
          bool all_u = true, some_v = false;
          for (uint64_t t = m.choice_trans_off[c]; t < m.choice_trans_off[c + 1]; ++t) {
            if (!u[m.trans_dst[t]]) all_u = false;
            if (v[m.trans_dst[t]]) some_v = true;
          }
          if (all_u && some_v) {
            v[s] = 1;
            grew = true;
            break;
          }
        }
      }
    }
    if (v == u) return u;
    u = std::move(v);
  }
}

struct UntilSets {
  Bits prob0, prob1;
};

/// Qualitative precomputation for `left U goal`.
inline UntilSets until_sets(const ProbModel& m, const Bits& left, const Bits& goal, Direction dir) {
  size_t S = m.num_states();
  UntilSets out;
  Bits region_lng(S, 0);  // left and not goal
  Bits bad_end(S, 0);     // neither left nor goal
  for (size_t s = 0; s < S; ++s) {
    region_lng[s] = left[s] && !goal[s];
    bad_end[s] = !left[s] && !goal[s];
  }
  if (m.kind == ProbModel::Kind::Dtmc || dir == Direction::Single) {
    Bits can = reachable_set(m, left, goal, true);
    out.prob0.assign(S, 0);
    for (size_t s = 0; s < S; ++s) out.prob0[s] = !can[s];
    Bits reach_p0 = reachable_set(m, region_lng, out.prob0, true);
    out.prob1.assign(S, 0);
    for (size_t s = 0; s < S; ++s) out.prob1[s] = !reach_p0[s];
    return out;
  }
  if (dir == Direction::Max) {
    Bits can = reachable_set(m, left, goal, true);  // exists scheduler with positive prob
    out.prob0.assign(S, 0);
    for (size_t s = 0; s < S; ++s) out.prob0[s] = !can[s];
    out.prob1 = prob1e(m, left, goal);
    return out;
  }
  // Direction::Min
  Bits all_pos = reachable_set(m, left, goal, false);  // positive under every scheduler
  out.prob0.assign(S, 0);
  for (size_t s = 0; s < S; ++s) out.prob0[s] = !all_pos[s];
  Bits stay = stay_set(m, region_lng);  // some scheduler remains in left&!goal surely
  Bits avoid_target(S, 0);
  for (size_t s = 0; s < S; ++s) avoid_target[s] = bad_end[s] || stay[s];
  Bits bad = reachable_set(m, region_lng, avoid_target, true);
  out.prob1.assign(S, 0);
  for (size_t s = 0; s < S; ++s) out.prob1[s] = !bad[s];
  return out;
}

}  // namespace detail

/// Evaluates a state formula to its satisfying set. Quantitative operators
/// are only legal at the root (handled by check()).
inline std::vector<uint8_t> evaluate_states(const ProbModel& m, const StateFormula& f,
                                            const CheckOptions& opts = {});

/// Full value vector for one path formula under an explicit direction, plus
/// the continuation vector used for one-step Q-values (horizon k-1 for
/// bounded untils, the fixpoint itself otherwise).
struct PathValues {
  std::vector<double> values;
  std::vector<double> continuation;
  std::vector<uint8_t> left, goal;
  PathFormula::Kind kind = PathFormula::Kind::Until;
  int64_t bound = -1;
  uint64_t iterations = 0;
  double residual = 0;
};

inline PathValues prob_values(const ProbModel& m, const PathFormula& p, Direction dir,
                              const CheckOptions& opts = {}) {
  size_t S = m.num_states();
  PathValues out;
  out.kind = p.kind;
  out.bound = p.bound;
  out.goal = evaluate_states(m, p.right, opts);

  if (p.kind == PathFormula::Kind::Next) {
    out.left.assign(S, 1);
    out.continuation.assign(S, 0.0);
    for (size_t s = 0; s < S; ++s) out.continuation[s] = out.goal[s] ? 1.0 : 0.0;
    out.values.assign(S, 0.0);
    for (uint32_t s = 0; s < S; ++s)
      out.values[s] = detail::backup_state(m, s, dir, out.continuation);
    out.iterations = 1;
    return out;
  }

  out.left = evaluate_states(m, p.left, opts);

  if (p.bound >= 0) {
    std::vector<double> x(S, 0.0), prev;
    for (size_t s = 0; s < S; ++s) x[s] = out.goal[s] ? 1.0 : 0.0;
    prev = x;
    for (int64_t i = 0; i < p.bound; ++i) {
      prev = x;
      std::vector<double> nx(S);
      for (uint32_t s = 0; s < S; ++s) {
        if (out.goal[s]) {
          nx[s] = 1.0;
        } else if (!out.left[s]) {
          nx[s] = 0.0;
        } else {
          nx[s] = detail::backup_state(m, s, dir, x);
        }
      }
      x = std::move(nx);
    }
    out.values = std::move(x);
    out.continuation = p.bound == 0 ? out.values : std::move(prev);
    out.iterations = static_cast<uint64_t>(p.bound);
    out.residual = 0;
    return out;
  }

  detail::UntilSets sets = detail::until_sets(m, out.left, out.goal, dir);
  std::vector<double> x(S, 0.0);
  for (size_t s = 0; s < S; ++s) x[s] = sets.prob1[s] ? 1.0 : 0.0;
  double residual = 0;
  uint64_t it = 0;
  for (; it < opts.max_iterations; ++it) {
    residual = 0;
    std::vector<double> nx(S);
    for (uint32_t s = 0; s < S; ++s) {
      if (sets.prob1[s]) {
        nx[s] = 1.0;
      } else if (sets.prob0[s]) {
        nx[s] = 0.0;
      } else {
        nx[s] = detail::backup_state(m, s, dir, x);
        residual = std::max(residual, std::abs(nx[s] - x[s]));
      }
    }
    x = std::move(nx);
    if (residual < opts.epsilon) break;
  }
  if (it >= opts.max_iterations)
    raise(ErrorCode::Numeric, "value iteration did not converge within " +
                                  std::to_string(opts.max_iterations) +
                                  " iterations (residual " + format_probability(residual) + ")");
  out.values = x;
  out.continuation = std::move(x);
  out.iterations = it + 1;
  out.residual = residual;
  return out;
}

inline std::vector<uint8_t> evaluate_states(const ProbModel& m, const StateFormula& f,
                                            const CheckOptions& opts) {
  size_t S = m.num_states();
  std::vector<uint8_t> out(S, 0);
  switch (f.kind) {
    case StateFormula::Kind::True:
      out.assign(S, 1);
      return out;
    case StateFormula::Kind::False:
      return out;
    case StateFormula::Kind::Atom: {
      int v = m.var_index(f.var);
      if (v < 0) raise(ErrorCode::Query, "unknown proposition '" + f.var + "'");
      for (uint32_t s = 0; s < S; ++s)
        out[s] = cmp_apply(f.cmp, m.value(s, v), f.cval) ? 1 : 0;
      return out;
    }
    case StateFormula::Kind::Not: {
      std::vector<uint8_t> kid = evaluate_states(m, f.kids.front(), opts);
      for (size_t s = 0; s < S; ++s) out[s] = kid[s] ? 0 : 1;
      return out;
    }
    case StateFormula::Kind::And: {
      out.assign(S, 1);
      for (const StateFormula& k : f.kids) {
        std::vector<uint8_t> kid = evaluate_states(m, k, opts);
        for (size_t s = 0; s < S; ++s) out[s] = out[s] && kid[s];
      }
      return out;
    }
    case StateFormula::Kind::Or: {
      for (const StateFormula& k : f.kids) {
        std::vector<uint8_t> kid = evaluate_states(m, k, opts);
        for (size_t s = 0; s < S; ++s) out[s] = out[s] || kid[s];
      }
      return out;
    }
    case StateFormula::Kind::Prob: {
      if (f.quant != Quant::Bound)
        raise(ErrorCode::Query, "quantitative P operator is only allowed at the top level");
      Direction dir = Direction::Single;
      if (m.kind == ProbModel::Kind::Mdp)
        dir = (f.bound_cmp == Cmp::Le || f.bound_cmp == Cmp::Lt) ? Direction::Max : Direction::Min;
      PathValues pv = prob_values(m, *f.path, dir, opts);
      for (size_t s = 0; s < S; ++s)
        out[s] = cmp_apply(f.bound_cmp, pv.values[s], f.bound) ? 1 : 0;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rewards

namespace detail {

inline double choice_step_reward(const ProbModel& m, uint32_t s, uint64_t c) {
  double r = m.state_reward.empty() ? 0.0 : m.state_reward[s];
  if (!m.choice_reward.empty()) r += m.choice_reward[c];
  return r;
}

inline std::vector<double> cumulative_reward(const ProbModel& m, int64_t k, Direction dir) {
  size_t S = m.num_states();
  std::vector<double> x(S, 0.0);
  for (int64_t i = 0; i < k; ++i) {
    std::vector<double> nx(S);
    for (uint32_t s = 0; s < S; ++s) {
      uint64_t c0 = m.state_choice_off[s], c1 = m.state_choice_off[s + 1];
      double best = choice_step_reward(m, s, c0) + backup_choice(m, c0, x);
      if (dir != Direction::Single)
        for (uint64_t c = c0 + 1; c < c1; ++c) {
          double q = choice_step_reward(m, s, c) + backup_choice(m, c, x);
          best = dir == Direction::Max ? std::max(best, q) : std::min(best, q);
        }
      nx[s] = best;
    }
    x = std::move(nx);
  }
  return x;
}

struct ReachRewardResult {
  std::vector<double> values;
  Bits infinite;
  uint64_t iterations = 0;
  double residual = 0;
};

inline ReachRewardResult reach_reward(const ProbModel& m, const Bits& goal, Direction dir,
                                      const CheckOptions& opts) {
  size_t S = m.num_states();
  ReachRewardResult out;
  Bits all_left(S, 1);
  // Infinite expected reward wherever the goal is not reached almost surely
  // (under the adversarial resolution for the requested optimum).
  Bits prob1;
  if (m.kind == ProbModel::Kind::Dtmc || dir == Direction::Single) {
    prob1 = until_sets(m, all_left, goal, Direction::Single).prob1;
  } else if (dir == Direction::Max) {
    // Rmax is finite only when every scheduler reaches the goal (Pmin = 1).
    prob1 = until_sets(m, all_left, goal, Direction::Min).prob1;
  } else {
    prob1 = prob1e(m, all_left, goal);
  }
  out.infinite.assign(S, 0);
  for (size_t s = 0; s < S; ++s) out.infinite[s] = !prob1[s];

  std::vector<double> x(S, 0.0);
  double residual = 0;
  uint64_t it = 0;
  for (; it < opts.max_iterations; ++it) {
    residual = 0;
    std::vector<double> nx(S, 0.0);
    for (uint32_t s = 0; s < S; ++s) {
      if (goal[s] || out.infinite[s]) continue;  // goal: 0; infinite: excluded
      uint64_t c0 = m.state_choice_off[s], c1 = m.state_choice_off[s + 1];
      double best = 0;
      bool first = true;
      for (uint64_t c = c0; c < c1; ++c) {
        bool touches_inf = false;
        for (uint64_t t = m.choice_trans_off[c]; t < m.choice_trans_off[c + 1]; ++t)
          if (out.infinite[m.trans_dst[t]]) {
            touches_inf = true;
            break;
          }
        if (touches_inf) {
          if (dir == Direction::Max || dir == Direction::Single) {
            // Unreachable by construction of the infinite set.
            continue;
          }
          continue;  // Rmin avoids choices that can diverge
        }
        double q = choice_step_reward(m, s, c) + backup_choice(m, c, x);
        if (first) {
          best = q;
          first = false;
        } else if (dir == Direction::Max ? q > best : q < best) {
          best = q;
        }
      }
      nx[s] = best;
      residual = std::max(residual, std::abs(nx[s] - x[s]));
    }
    x = std::move(nx);
    if (residual < opts.epsilon) break;
  }
  if (it >= opts.max_iterations)
    raise(ErrorCode::Numeric, "reward iteration did not converge within " +
                                  std::to_string(opts.max_iterations) +
                                  " iterations (residual " + format_probability(residual) + ")");
  out.values = std::move(x);
  out.iterations = it + 1;
  out.residual = residual;
  return out;
}

}  // namespace detail

/// Runs one query against a model. Quantitative queries report the value at
/// the initial state (or the `from` override); qualitative ones report the
/// satisfying set and the verdict at that state. P=?/R=? on an MDP yields the
/// (min, max) pair.
inline CheckResult check(const ProbModel& m, const Query& q, const CheckOptions& opts = {}) {
  CheckResult res;
  uint32_t from = opts.from.value_or(m.initial);
  if (from >= m.num_states())
    raise(ErrorCode::State, "state override " + std::to_string(from) + " is not a model state");
  bool mdp = m.kind == ProbModel::Kind::Mdp;

  if (!q.reward) {
    const StateFormula& f = q.formula;
    if (f.kind == StateFormula::Kind::Prob && f.quant != Quant::Bound) {
      if (!mdp && (f.quant == Quant::Min || f.quant == Quant::Max))
        raise(ErrorCode::Query,
              "type error: Pmin/Pmax quantifier on a DTMC model (use P=?)");
      if (f.quant == Quant::Value && mdp) {
        PathValues lo = prob_values(m, *f.path, Direction::Min, opts);
        PathValues hi = prob_values(m, *f.path, Direction::Max, opts);
        res.value = lo.values[from];
        res.value2 = hi.values[from];
        res.pair = true;
        res.iterations = lo.iterations + hi.iterations;
        res.residual = std::max(lo.residual, hi.residual);
        return res;
      }
      Direction dir = Direction::Single;
      if (mdp) dir = f.quant == Quant::Min ? Direction::Min : Direction::Max;
      PathValues pv = prob_values(m, *f.path, dir, opts);
      res.value = pv.values[from];
      res.iterations = pv.iterations;
      res.residual = pv.residual;
      return res;
    }
    res.qualitative = true;
    res.sat = evaluate_states(m, f, opts);
    res.sat_initial = res.sat[from] != 0;
    res.value = res.sat_initial ? 1.0 : 0.0;
    return res;
  }

  if (!m.has_rewards())
    raise(ErrorCode::Query, "model carries no reward structure");
  if (!mdp && (q.quant == Quant::Min || q.quant == Quant::Max))
    raise(ErrorCode::Query, "type error: Rmin/Rmax quantifier on a DTMC model (use R=?)");

  auto one = [&](Direction dir, CheckResult& into) {
    if (q.cumulative) {
      std::vector<double> x = detail::cumulative_reward(m, q.k, dir);
      into.value = x[from];
      into.iterations += static_cast<uint64_t>(q.k);
      return;
    }
    detail::Bits goal = evaluate_states(m, q.target, opts);
    detail::ReachRewardResult rr = detail::reach_reward(m, goal, dir, opts);
    into.iterations += rr.iterations;
    into.residual = std::max(into.residual, rr.residual);
    if (rr.infinite[from]) {
      into.infinite = true;
      into.value = std::numeric_limits<double>::infinity();
    } else {
      into.value = rr.values[from];
    }
  };

  if (q.quant == Quant::Value && mdp) {
    CheckResult lo, hi;
    one(Direction::Min, lo);
    one(Direction::Max, hi);
    res.value = lo.value;
    res.value2 = hi.value;
    res.pair = true;
    res.infinite = lo.infinite || hi.infinite;
    res.iterations = lo.iterations + hi.iterations;
    res.residual = std::max(lo.residual, hi.residual);
    return res;
  }
  Direction dir = Direction::Single;
  if (mdp) dir = q.quant == Quant::Min ? Direction::Min : Direction::Max;
  one(dir, res);
  if (q.quant == Quant::Bound) {
    res.qualitative = true;
    res.sat_initial = cmp_apply(q.bound_cmp, res.value, q.bound);
  }
  return res;
}

}  // namespace lisa::pctl
