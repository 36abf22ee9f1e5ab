#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lisa {

/// Source position of a token or construct in a .lisa document (1-based).
struct SourceSpan {
  int line = 0;
  int col = 0;
  int end_line = 0;
  int end_col = 0;

  bool valid() const { return line > 0; }
};

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string code;     // stable machine code, e.g. "syntax", "undeclared-action"
  SourceSpan span;
  std::string message;
};

inline std::string format_diagnostic(const Diagnostic& d) {
  std::string out;
  if (d.span.valid()) {
    out += std::to_string(d.span.line) + ":" + std::to_string(d.span.col) + ": ";
  }
  out += d.severity == Diagnostic::Severity::Error ? "error" : "warning";
  out += " [" + d.code + "]: " + d.message;
  return out;
}

/// Error category, mapped to process exit codes by the CLI
/// (user error -> 1, resource limit -> 2, numeric failure -> 3).
enum class ErrorCode {
  Spec,     // malformed or inconsistent agent specification
  Query,    // bad PCTL query or query/model mismatch
  State,    // state override not present in the model
  Io,       // file problems
  Limit,    // state-space explosion / configured cap exceeded
  Numeric,  // iteration did not converge
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

/// Lowercase words joined by underscores, the `sea_state_is_too_high` style.
/// Every belief/action sentence is interned under this form, and it is what
/// the PRISM emitter prints, so it must always be a legal identifier.
inline std::string sanitize_identifier(std::string_view text) {
  std::string out;
  bool pending_sep = false;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out += '_';
      out += static_cast<char>(std::tolower(c));
      pending_sep = false;
    } else {
      pending_sep = true;
    }
  }
  if (out.empty()) out = "x";
  if (std::isdigit(static_cast<unsigned char>(out[0]))) out.insert(out.begin(), '_'), out.insert(out.begin(), 'x');
  return out;
}

/// Shortest round-trippable decimal form; model files pin 17 significant
/// digits so output is bit-exact across platforms.
inline std::string format_probability(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

/// Shortest decimal form that round-trips to the same double (used in
/// emitted PRISM text; model files use the fixed 17-digit form instead).
inline std::string format_shortest(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return format_probability(v);
}

/// Deterministic 64-bit generator (xorshift*); used instead of <random>
/// distributions so traces are reproducible independent of the standard
/// library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed ? seed : 1) {}

  uint64_t next() {
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n ? next() % n : 0; }

  /// Uniform integer in [lo, hi] inclusive.
  int64_t range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

 private:
  uint64_t state_;
};

}  // namespace lisa
