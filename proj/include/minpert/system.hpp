// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "minpert/errors.hpp"
#include "minpert/linalg.hpp"

namespace minpert {

/// Relative singular-value threshold for Jacobian rank decisions. Looser than
/// the QR tolerance because Jacobian entries carry evaluation rounding.
inline constexpr double kRankTol = 1e-10;

inline constexpr double kAnchorTol = 1e-12;

inline constexpr int kDefaultDegreeCap = 6;

// ---------------------------------------------------------------------------
// Polynomial systems F(y, x).
// ---------------------------------------------------------------------------

/// One monomial  coefficient * prod y_i^{y_exponents[i]} * prod x_j^{x_exponents[j]}.
struct PolyTerm {
  double coefficient = 0.0;
  std::vector<int> y_exponents;
  std::vector<int> x_exponents;

  friend bool operator==(const PolyTerm&, const PolyTerm&) = default;
};

/// A system of p polynomial equations in y (R^m) parameterized by x (R^n).
struct ParameterizedSystem {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::vector<PolyTerm>> equations;
  std::string name;

  friend bool operator==(const ParameterizedSystem& a, const ParameterizedSystem& b) {
    return a.m == b.m && a.n == b.n && a.p == b.p && a.equations == b.equations;
  }
};

/// The reference root (y0, x0); F(y0, x0) must vanish to anchor tolerance.
struct Anchor {
  Vector y0;
  Vector x0;
};

struct HypothesisReport {
  double residual_norm = 0.0;
  std::size_t rank_k0 = 0;
  std::size_t rank_j0 = 0;
  bool h5_onto = false;        // d1F(y0,x0) onto  <=>  rank_k0 == p
  bool h6_one_to_one = false;  // d2F(y0,x0) one-to-one  <=>  rank_j0 == n
};

// ---------------------------------------------------------------------------
// Evaluation and exact differentiation.
// ---------------------------------------------------------------------------

namespace detail {

inline double ipow(double base, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

inline void check_point_dims(const ParameterizedSystem& sys, const Vector& y,
                             const Vector& x) {
  if (y.size() != sys.m || x.size() != sys.n)
    throw DimensionError("evaluation point does not match system dimensions");
}

}  // namespace detail

inline Vector eval_f(const ParameterizedSystem& sys, const Vector& y, const Vector& x) {
  detail::check_point_dims(sys, y, x);
  Vector out(sys.p, 0.0);
  for (std::size_t i = 0; i < sys.p; ++i) {
    double acc = 0.0;
    for (const PolyTerm& t : sys.equations[i]) {
      double v = t.coefficient;
      for (std::size_t k = 0; k < sys.m; ++k) v *= detail::ipow(y[k], t.y_exponents[k]);
      for (std::size_t k = 0; k < sys.n; ++k) v *= detail::ipow(x[k], t.x_exponents[k]);
      acc += v;
    }
    out[i] = acc;
  }
  return out;
}

/// p x m Jacobian of F with respect to y, by exact term-wise differentiation.
inline Matrix jacobian_y(const ParameterizedSystem& sys, const Vector& y,
                         const Vector& x) {
  detail::check_point_dims(sys, y, x);
  Matrix jac(sys.p, sys.m);
  for (std::size_t i = 0; i < sys.p; ++i) {
    for (const PolyTerm& t : sys.equations[i]) {
      for (std::size_t k = 0; k < sys.m; ++k) {
        const int e = t.y_exponents[k];
        if (e == 0) continue;
        double v = t.coefficient * e * detail::ipow(y[k], e - 1);
        for (std::size_t q = 0; q < sys.m; ++q)
          if (q != k) v *= detail::ipow(y[q], t.y_exponents[q]);
        for (std::size_t q = 0; q < sys.n; ++q) v *= detail::ipow(x[q], t.x_exponents[q]);
        jac(i, k) += v;
      }
    }
  }
  return jac;
}

/// p x n Jacobian of F with respect to x.
inline Matrix jacobian_x(const ParameterizedSystem& sys, const Vector& y,
                         const Vector& x) {
  detail::check_point_dims(sys, y, x);
  Matrix jac(sys.p, sys.n);
  for (std::size_t i = 0; i < sys.p; ++i) {
    for (const PolyTerm& t : sys.equations[i]) {
      for (std::size_t k = 0; k < sys.n; ++k) {
        const int e = t.x_exponents[k];
        if (e == 0) continue;
        double v = t.coefficient * e * detail::ipow(x[k], e - 1);
        for (std::size_t q = 0; q < sys.n; ++q)
          if (q != k) v *= detail::ipow(x[q], t.x_exponents[q]);
        for (std::size_t q = 0; q < sys.m; ++q) v *= detail::ipow(y[q], t.y_exponents[q]);
        jac(i, k) += v;
      }
    }
  }
  return jac;
}

inline std::size_t numerical_rank(const Matrix& a, double tol = kRankTol) {
  const std::vector<double> sigma = singular_values(a);
  const double largest = sigma.front();
  if (largest == 0.0) return 0;
  std::size_t rank = 0;
  for (double s : sigma)
    if (s > tol * largest) ++rank;
  return rank;
}

inline HypothesisReport check_hypotheses(const ParameterizedSystem& sys,
                                         const Anchor& anchor) {
  HypothesisReport report;
  report.residual_norm = norm2(eval_f(sys, anchor.y0, anchor.x0));
  report.rank_k0 = numerical_rank(jacobian_y(sys, anchor.y0, anchor.x0));
  report.rank_j0 = numerical_rank(jacobian_x(sys, anchor.y0, anchor.x0));
  report.h5_onto = report.rank_k0 == sys.p;
  report.h6_one_to_one = report.rank_j0 == sys.n;
  return report;
}

// ---------------------------------------------------------------------------
// Problem-file parser.
//
//   dims m=2 n=1 p=1
//   anchor y0=(1,0) x0=(1)
//   eq: y1^2 + y2^2 - x1
//
// One eq line per equation. Terms are [sign][coeff][factors...] separated by
// + or -, a factor is y<i> or x<j> with an optional ^<k>, variables are
// 1-indexed and whitespace is insignificant.
// ---------------------------------------------------------------------------

struct ParseOptions {
  int degree_cap = kDefaultDegreeCap;
};

struct ParsedProblem {
  ParameterizedSystem system;
  std::optional<Anchor> anchor;
};

namespace detail {

class LineScanner {
 public:
  LineScanner(const std::string& line, std::size_t lineno)
      : line_(line), lineno_(lineno) {}

  void skip_ws() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_])))
      ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= line_.size();
  }

  char peek() const { return pos_ < line_.size() ? line_[pos_] : '\0'; }

  char take() { return line_[pos_++]; }

  bool consume(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::size_t column() const { return pos_ + 1; }  // 1-based
  std::size_t lineno() const { return lineno_; }

  [[noreturn]] void fail(const std::string& what, std::size_t col = 0) const {
    throw ParseError(what, lineno_, col ? col : column());
  }

  /// Unsigned integer; fails if no digits or absurdly large.
  std::size_t take_uint(const std::string& what) {
    skip_ws();
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected " + what);
    const std::size_t col = column();
    std::size_t v = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      v = 10 * v + (take() - '0');
      if (v > 100000000) fail(what + " too large", col);
    }
    return v;
  }

  /// Unsigned decimal number with optional fraction and exponent, if one
  /// starts here.
  std::optional<double> try_take_number() {
    skip_ws();
    const std::size_t start = pos_;
    auto digits = [&] {
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    };
    digits();
    if (peek() == '.') {
      ++pos_;
      digits();
    }
    if (pos_ == start || (pos_ == start + 1 && line_[start] == '.')) {
      pos_ = start;
      return std::nullopt;
    }
    if (peek() == 'e' || peek() == 'E') {
      const std::size_t mark = pos_;
      ++pos_;
      if (peek() == '+' || peek() == '-') ++pos_;
      if (std::isdigit(static_cast<unsigned char>(peek())))
        digits();
      else
        pos_ = mark;  // the 'e' was not an exponent
    }
    try {
      return std::stod(line_.substr(start, pos_ - start));
    } catch (const std::exception&) {
      fail("number out of range", start + 1);
    }
  }

 private:
  const std::string& line_;
  std::size_t lineno_;
  std::size_t pos_ = 0;
};

inline Vector parse_tuple(LineScanner& sc, const std::string& what) {
  if (!sc.consume('(')) sc.fail("expected '(' after " + what);
  Vector out;
  for (;;) {
    sc.skip_ws();
    double sign = 1.0;
    if (sc.consume('-')) sign = -1.0;
    const std::optional<double> v = sc.try_take_number();
    if (!v) sc.fail("expected number in " + what);
    out.push_back(sign * *v);
    if (sc.consume(')')) break;
    if (!sc.consume(',')) sc.fail("expected ',' or ')' in " + what);
  }
  return out;
}

inline std::vector<PolyTerm> parse_equation(LineScanner& sc, std::size_t m,
                                            std::size_t n, int degree_cap) {
  std::vector<PolyTerm> terms;
  bool first = true;
  while (!sc.at_end()) {
    double sign = 1.0;
    if (sc.consume('-'))
      sign = -1.0;
    else if (sc.consume('+'))
      sign = 1.0;
    else if (!first)
      sc.fail("expected '+' or '-' between terms");

    const std::size_t term_col = sc.column();
    PolyTerm term;
    term.y_exponents.assign(m, 0);
    term.x_exponents.assign(n, 0);

    const std::optional<double> coeff = sc.try_take_number();
    term.coefficient = sign * coeff.value_or(1.0);

    bool saw_factor = false;
    for (;;) {
      sc.skip_ws();
      const char var = sc.peek();
      if (var != 'y' && var != 'x') break;
      const std::size_t var_col = sc.column();
      sc.take();
      const std::size_t index = sc.take_uint("variable index");
      const std::size_t limit = var == 'y' ? m : n;
      if (index < 1 || index > limit)
        throw DimensionError("variable " + std::string(1, var) +
                             std::to_string(index) + " out of range (line " +
                             std::to_string(sc.lineno()) + ", column " +
                             std::to_string(var_col) + ")");
      int exponent = 1;
      sc.skip_ws();
      if (sc.peek() == '^') {
        const std::size_t caret_col = sc.column();
        sc.take();
        sc.skip_ws();
        if (!std::isdigit(static_cast<unsigned char>(sc.peek())))
          sc.fail("expected exponent digits after '^'", caret_col);
        exponent = static_cast<int>(sc.take_uint("exponent"));
      }
      if (var == 'y')
        term.y_exponents[index - 1] += exponent;
      else
        term.x_exponents[index - 1] += exponent;
      saw_factor = true;
    }

    if (!coeff && !saw_factor) sc.fail("expected a term");

    int degree = 0;
    for (int e : term.y_exponents) degree += e;
    for (int e : term.x_exponents) degree += e;
    if (degree > degree_cap)
      sc.fail("term degree " + std::to_string(degree) + " exceeds cap of " +
              std::to_string(degree_cap), term_col);

    terms.push_back(std::move(term));
    first = false;
  }
  if (terms.empty()) sc.fail("empty equation");
  return terms;
}

}  // namespace detail

inline ParsedProblem parse_problem_text(const std::string& text,
                                        const ParseOptions& opts = {}) {
  ParsedProblem out;
  bool have_dims = false;

  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::string line =
        text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    start = end == std::string::npos ? text.size() + 1 : end + 1;
    ++lineno;

    detail::LineScanner sc(line, lineno);
    if (sc.at_end()) continue;

    if (line.compare(sc.column() - 1, 5, "dims ") == 0) {
      for (int i = 0; i < 5; ++i) sc.take();
      if (have_dims) sc.fail("duplicate dims line");
      std::optional<std::size_t> m, n, p;
      while (!sc.at_end()) {
        sc.skip_ws();
        const char key = sc.peek();
        if (key != 'm' && key != 'n' && key != 'p') sc.fail("expected m=, n= or p=");
        sc.take();
        if (!sc.consume('=')) sc.fail("expected '='");
        const std::size_t v = sc.take_uint("dimension");
        if (v == 0) sc.fail("dimension must be positive");
        (key == 'm' ? m : key == 'n' ? n : p) = v;
      }
      if (!m || !n || !p) sc.fail("dims line needs all of m=, n=, p=");
      out.system.m = *m;
      out.system.n = *n;
      out.system.p = *p;
      have_dims = true;
      continue;
    }

    if (line.compare(sc.column() - 1, 7, "anchor ") == 0) {
      for (int i = 0; i < 7; ++i) sc.take();
      if (!have_dims) sc.fail("anchor line before dims line");
      if (out.anchor) sc.fail("duplicate anchor line");
      Anchor anchor;
      for (int slot = 0; slot < 2; ++slot) {
        sc.skip_ws();
        const char key = sc.peek();
        if (key != 'y' && key != 'x') sc.fail("expected y0=(...) or x0=(...)");
        sc.take();
        if (!sc.consume('0')) sc.fail("expected y0 or x0");
        if (!sc.consume('=')) sc.fail("expected '='");
        Vector v = detail::parse_tuple(sc, key == 'y' ? "y0" : "x0");
        (key == 'y' ? anchor.y0 : anchor.x0) = std::move(v);
      }
      if (anchor.y0.size() != out.system.m || anchor.x0.size() != out.system.n)
        throw DimensionError("anchor size does not match dims (line " +
                             std::to_string(lineno) + ")");
      if (!sc.at_end()) sc.fail("trailing text after anchor");
      out.anchor = std::move(anchor);
      continue;
    }

    if (line.compare(sc.column() - 1, 3, "eq:") == 0) {
      for (int i = 0; i < 3; ++i) sc.take();
      if (!have_dims) sc.fail("eq line before dims line");
      out.system.equations.push_back(
          detail::parse_equation(sc, out.system.m, out.system.n, opts.degree_cap));
      continue;
    }

    sc.fail("expected dims, anchor or eq line");
  }

  if (!have_dims) throw ParseError("missing dims line", 1, 1);
  if (out.system.equations.empty()) throw ParseError("no equations", lineno, 1);
  if (out.system.equations.size() != out.system.p)
    throw DimensionError("found " + std::to_string(out.system.equations.size()) +
                         " equations but dims says p=" + std::to_string(out.system.p));
  return out;
}

inline ParameterizedSystem parse_system(const std::string& text,
                                        const ParseOptions& opts = {}) {
  return parse_problem_text(text, opts).system;
}

// ---------------------------------------------------------------------------
// Canonical serialization; parse(serialize(parse(t))) == parse(t).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void append_term_body(std::string& out, const PolyTerm& t) {
  const double c = std::abs(t.coefficient);
  bool any_factor = false;
  for (int e : t.y_exponents) any_factor |= e != 0;
  for (int e : t.x_exponents) any_factor |= e != 0;

  bool need_space = false;
  if (!any_factor || c != 1.0) {
    out += format_double(c);
    need_space = true;
  }
  auto emit = [&](char var, std::size_t index, int e) {
    if (e == 0) return;
    if (need_space) out += ' ';
    out += var;
    out += std::to_string(index + 1);
    if (e != 1) {
      out += '^';
      out += std::to_string(e);
    }
    need_space = true;
  };
  for (std::size_t i = 0; i < t.y_exponents.size(); ++i) emit('y', i, t.y_exponents[i]);
  for (std::size_t j = 0; j < t.x_exponents.size(); ++j) emit('x', j, t.x_exponents[j]);
}

}  // namespace detail

inline std::string serialize(const ParameterizedSystem& sys,
                             const std::optional<Anchor>& anchor = std::nullopt) {
  std::string out = "dims m=" + std::to_string(sys.m) + " n=" + std::to_string(sys.n) +
                    " p=" + std::to_string(sys.p) + "\n";
  if (anchor) {
    auto tuple = [](const Vector& v) {
      std::string s = "(";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += detail::format_double(v[i]);
      }
      return s + ")";
    };
    out += "anchor y0=" + tuple(anchor->y0) + " x0=" + tuple(anchor->x0) + "\n";
  }
  for (const auto& eq : sys.equations) {
    out += "eq:";
    for (std::size_t k = 0; k < eq.size(); ++k) {
      const bool neg = std::signbit(eq[k].coefficient);
      out += k == 0 ? (neg ? " -" : " ") : (neg ? " - " : " + ");
      detail::append_term_body(out, eq[k]);
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builtin registry.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"circle", "linear2x3", "sphere",
                                                 "parabola-underdet"};
  return names;
}

/// Returns a registry problem with a verified anchor; throws UnknownBuiltinError.
inline std::pair<ParameterizedSystem, Anchor> builtin(const std::string& name) {
  std::string text;
  if (name == "circle") {
    text =
        "dims m=2 n=1 p=1\n"
        "anchor y0=(1,0) x0=(1)\n"
        "eq: y1^2 + y2^2 - x1\n";
  } else if (name == "linear2x3") {
    text =
        "dims m=3 n=2 p=2\n"
        "anchor y0=(0.5,-1,0.25) x0=(1,-2)\n"
        "eq: 2 y1 + y2 + x1 - 1\n"
        "eq: y2 - y3 + x2 + 3.25\n";
  } else if (name == "sphere") {
    text =
        "dims m=3 n=1 p=1\n"
        "anchor y0=(1,0,0) x0=(1)\n"
        "eq: y1^2 + y2^2 + y3^2 - x1\n";
  } else if (name == "parabola-underdet") {
    text =
        "dims m=2 n=2 p=1\n"
        "anchor y0=(0,0) x0=(0,0)\n"
        "eq: y2 - y1^2 - x1\n";
  } else {
    throw UnknownBuiltinError("unknown builtin problem '" + name + "'");
  }
  ParsedProblem parsed = parse_problem_text(text);
  parsed.system.name = name;
  return {std::move(parsed.system), std::move(*parsed.anchor)};
}

}  // namespace minpert
