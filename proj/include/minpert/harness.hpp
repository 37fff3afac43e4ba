// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "minpert/errors.hpp"
#include "minpert/nonlinear.hpp"
#include "minpert/problems.hpp"

namespace minpert {

// ---------------------------------------------------------------------------
// Ray sweeps x = x0 + t d with t shrinking geometrically toward zero.
// ---------------------------------------------------------------------------

struct SweepSpec {
  Vector direction;              // unit 2-norm
  std::vector<double> t_values;  // strictly decreasing, positive
  bool include_mu_f = true;
  double mu_f_min_t = 1e-8;  // below this, cancellation dominates mu_f
};

/// Geometric ladder of t values: per_decade points in each decade, starting
/// at t_start; the decade containing t_stop is the last one generated.
inline SweepSpec make_sweep_spec(Vector direction, double t_start = 1e-1,
                                 double t_stop = 1e-6, int per_decade = 3,
                                 bool include_mu_f = true) {
  const double dn = norm2(direction);
  if (!(dn > 0.0)) throw Error("make_sweep_spec: direction must be nonzero");
  if (!(t_start > t_stop) || !(t_stop > 0.0))
    throw Error("make_sweep_spec: need t_start > t_stop > 0");
  if (per_decade < 1) throw Error("make_sweep_spec: per_decade must be >= 1");

  SweepSpec spec;
  spec.direction = scaled(direction, 1.0 / dn);
  spec.include_mu_f = include_mu_f;
  const int decades =
      static_cast<int>(std::lround(std::log10(t_start / t_stop))) + 1;
  for (int d = 0; d < decades; ++d)
    for (int j = 0; j < per_decade; ++j)
      spec.t_values.push_back(
          t_start * std::pow(10.0, -d - static_cast<double>(j) / per_decade));
  return spec;
}

/// One sample of the sweep. Values that could not be computed are NaN and the
/// reason is recorded in `error`; ratios are NaN when mu_f is absent or zero.
struct SweepRow {
  double t = 0.0;
  Vector x;
  double mu_f = std::numeric_limits<double>::quiet_NaN();
  double mu1 = std::numeric_limits<double>::quiet_NaN();
  double mu2 = std::numeric_limits<double>::quiet_NaN();
  double mu3 = std::numeric_limits<double>::quiet_NaN();
  double r1 = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  double r3 = std::numeric_limits<double>::quiet_NaN();
  double gap1 = std::numeric_limits<double>::quiet_NaN();
  double gap2 = std::numeric_limits<double>::quiet_NaN();
  double gap3 = std::numeric_limits<double>::quiet_NaN();
  double diff_quotient = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

/// Evaluates every t of the ladder; per-row failures are recorded in the row
/// rather than aborting the sweep.
inline std::vector<SweepRow> run_sweep(const AnchoredProblem& prob,
                                       const SweepSpec& spec) {
  std::vector<SweepRow> rows;
  rows.reserve(spec.t_values.size());
  for (double t : spec.t_values) {
    SweepRow row;
    row.t = t;
    row.x = add(prob.anchor.x0, scaled(spec.direction, t));

    auto note = [&](const char* tag, const std::exception& e) {
      if (!row.error.empty()) row.error += "; ";
      row.error += std::string(tag) + ": " + e.what();
    };

    try {
      const MuSolution s = mu1(prob, row.x);
      row.mu1 = s.value;
      row.gap1 = std::abs(s.value - s.dual_value) / (1.0 + s.value);
    } catch (const Error& e) {
      note("mu1", e);
    }
    try {
      const MuSolution s = mu2(prob, row.x);
      row.mu2 = s.value;
      row.gap2 = std::abs(s.value - s.dual_value) / (1.0 + s.value);
    } catch (const Error& e) {
      note("mu2", e);
    }
    try {
      const MuSolution s = mu3(prob, row.x);
      row.mu3 = s.value;
      row.gap3 = std::abs(s.value - s.dual_value) / (1.0 + s.value);
    } catch (const Error& e) {
      note("mu3", e);
    }
    if (spec.include_mu_f && t >= spec.mu_f_min_t) {
      try {
        row.mu_f = mu_f(prob, row.x).value;
      } catch (const Error& e) {
        note("mu_f", e);
      }
    }

    if (std::isfinite(row.mu_f) && row.mu_f > 0.0) {
      row.r1 = row.mu1 / row.mu_f;
      row.r2 = row.mu2 / row.mu_f;
      row.r3 = row.mu3 / row.mu_f;
    }
    row.diff_quotient = std::abs(row.mu3 - row.mu2) / t;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Verdicts.
// ---------------------------------------------------------------------------

enum class MuKind { MuF, Mu1, Mu2, Mu3 };

inline const char* mu_kind_name(MuKind kind) {
  switch (kind) {
    case MuKind::MuF:
      return "mu_f";
    case MuKind::Mu1:
      return "mu1";
    case MuKind::Mu2:
      return "mu2";
    case MuKind::Mu3:
      return "mu3";
  }
  return "?";
}

inline double row_value(const SweepRow& row, MuKind kind) {
  switch (kind) {
    case MuKind::MuF:
      return row.mu_f;
    case MuKind::Mu1:
      return row.mu1;
    case MuKind::Mu2:
      return row.mu2;
    case MuKind::Mu3:
      return row.mu3;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

enum class Regime { Asymptotic, DifferentialOnly };

inline const char* regime_name(Regime regime) {
  return regime == Regime::Asymptotic ? "asymptotic" : "differential-only";
}

struct Verdict {
  std::string check_name;
  bool pass = false;
  double worst_value = 0.0;
  double threshold = 0.0;
  Regime regime = Regime::Asymptotic;
  std::string note;
};

namespace detail {

inline int decade_of(double t) {
  return static_cast<int>(std::floor(-std::log10(t) + 1e-9));
}

/// Decade-wise maxima of a per-row deviation, then: pass needs the smallest
/// decade's maximum under the threshold AND no decade-to-decade increase
/// beyond the slack. A monotonicity violation is folded into worst_value so
/// that pass <=> worst_value <= threshold stays true.
inline Verdict squeeze_verdict(const std::map<int, double>& decade_max,
                               std::string check_name, double eps_final,
                               double slack) {
  if (decade_max.size() < 3)
    throw InsufficientDataError(check_name + ": needs rows in at least 3 decades");

  Verdict v;
  v.check_name = std::move(check_name);
  v.threshold = eps_final;
  v.worst_value = decade_max.rbegin()->second;  // smallest t decade

  double prev = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [decade, value] : decade_max) {
    if (!std::isnan(prev) && value > prev + slack) {
      v.worst_value = std::max(v.worst_value, eps_final + (value - prev - slack));
      if (v.note.empty()) v.note = "decade maxima not decreasing";
    }
    prev = value;
  }
  v.pass = v.worst_value <= v.threshold;
  return v;
}

}  // namespace detail

/// Squeeze test for "numerator and denominator become relatively equal as
/// t -> 0": per-decade max of |num/den - 1| must shrink decade over decade
/// and end below eps_final. Rows without both values positive are ignored.
/// Each value carries absolute rounding of order machine epsilon at the
/// problem scale, which is eps/g relative to a denominator of size g;
/// deviations below that measurement floor count as zero.
inline Verdict check_asymptotic_equality(const std::vector<SweepRow>& rows,
                                         MuKind num, MuKind den,
                                         double eps_final = 1e-2,
                                         double slack = 1e-12) {
  std::map<int, double> decade_max;
  for (const SweepRow& row : rows) {
    const double f = row_value(row, num);
    const double g = row_value(row, den);
    if (!std::isfinite(f) || !std::isfinite(g) || g <= 0.0) continue;
    const double floor =
        64.0 * std::numeric_limits<double>::epsilon() * (1.0 + g) / g;
    const double dev = std::max(std::abs(f / g - 1.0) - floor, 0.0);
    auto [it, inserted] = decade_max.try_emplace(detail::decade_of(row.t), dev);
    if (!inserted) it->second = std::max(it->second, dev);
  }
  return detail::squeeze_verdict(
      decade_max,
      std::string("asymptotic ") + mu_kind_name(num) + "/" + mu_kind_name(den),
      eps_final, slack);
}

/// Tests |mu3 - mu2| / t -> 0 (shared differential behavior at x0). The
/// regime is asymptotic when the parameter Jacobian is one-to-one and the
/// mu2/mu3 ratio also passes the squeeze test, else differential-only.
inline Verdict check_differential_equivalence(const std::vector<SweepRow>& rows,
                                              bool h6_one_to_one,
                                              double eps_final = 1e-2,
                                              double slack = 1e-12) {
  std::map<int, double> decade_max;
  for (const SweepRow& row : rows) {
    if (!std::isfinite(row.diff_quotient)) continue;
    // |mu3 - mu2| carries absolute rounding at the problem scale, so the
    // quotient has a 1/t measurement floor
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() *
                         (1.0 + row.mu2 + row.mu3) / row.t;
    const double q = std::max(row.diff_quotient - floor, 0.0);
    auto [it, inserted] = decade_max.try_emplace(detail::decade_of(row.t), q);
    if (!inserted) it->second = std::max(it->second, q);
  }
  Verdict v = detail::squeeze_verdict(decade_max, "differential mu2-mu3",
                                      eps_final, slack);
  v.regime = Regime::DifferentialOnly;
  if (h6_one_to_one) {
    try {
      if (check_asymptotic_equality(rows, MuKind::Mu2, MuKind::Mu3, eps_final, slack)
              .pass)
        v.regime = Regime::Asymptotic;
    } catch (const InsufficientDataError&) {
      // zero values along this ray; stay differential-only
    }
  }
  return v;
}

/// Largest observed slope mu_f / t; the Lipschitz property bounds mu_f by
/// L * ||x - x0|| near the anchor.
inline double estimate_lipschitz(const std::vector<SweepRow>& rows) {
  double slope = std::numeric_limits<double>::quiet_NaN();
  for (const SweepRow& row : rows) {
    if (!std::isfinite(row.mu_f)) continue;
    const double s = row.mu_f / row.t;
    if (std::isnan(slope) || s > slope) slope = s;
  }
  if (std::isnan(slope))
    throw InsufficientDataError("estimate_lipschitz: no rows carry mu_f");
  return slope;
}

// ---------------------------------------------------------------------------
// Report emission: CSV or JSON, deterministic byte-for-byte, numbers with 17
// significant digits.
// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, Json };

using ReportMeta = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string format_report_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string json_number(double v) {
  if (!std::isfinite(v)) return "null";  // JSON has no nan/inf literals
  return format_report_double(v);
}

inline std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

}  // namespace detail

inline std::string emit_report(const std::vector<SweepRow>& rows,
                               const std::vector<Verdict>& verdicts,
                               ReportFormat format, const ReportMeta& meta = {}) {
  using detail::format_report_double;
  using detail::json_number;
  using detail::json_string;

  std::string out;
  if (format == ReportFormat::Csv) {
    for (const auto& [key, value] : meta) out += "# " + key + "=" + value + "\n";
    out += "t,mu_f,mu1,mu2,mu3,r1,r2,r3,gap1,gap2,gap3,diff_quotient\n";
    for (const SweepRow& row : rows) {
      const double fields[] = {row.t,    row.mu_f, row.mu1,  row.mu2,
                               row.mu3,  row.r1,   row.r2,   row.r3,
                               row.gap1, row.gap2, row.gap3, row.diff_quotient};
      for (std::size_t i = 0; i < 12; ++i) {
        if (i) out += ',';
        out += format_report_double(fields[i]);
      }
      out += '\n';
    }
    for (const Verdict& v : verdicts) {
      out += "# verdict name=\"" + v.check_name + "\" pass=" +
             (v.pass ? "1" : "0") + " worst=" + format_report_double(v.worst_value) +
             " threshold=" + format_report_double(v.threshold) +
             " regime=" + regime_name(v.regime);
      if (!v.note.empty()) out += " note=\"" + v.note + "\"";
      out += '\n';
    }
    return out;
  }

  out += "{\n";
  if (!meta.empty()) {
    out += "  \"meta\": {";
    for (std::size_t i = 0; i < meta.size(); ++i) {
      if (i) out += ", ";
      out += json_string(meta[i].first) + ": " + json_string(meta[i].second);
    }
    out += "},\n";
  }
  out += "  \"rows\": [";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const SweepRow& row = rows[k];
    out += k ? ",\n    " : "\n    ";
    out += "{\"t\": " + json_number(row.t) + ", \"x\": [";
    for (std::size_t i = 0; i < row.x.size(); ++i) {
      if (i) out += ", ";
      out += json_number(row.x[i]);
    }
    out += "], \"mu_f\": " + json_number(row.mu_f);
    out += ", \"mu1\": " + json_number(row.mu1);
    out += ", \"mu2\": " + json_number(row.mu2);
    out += ", \"mu3\": " + json_number(row.mu3);
    out += ", \"r1\": " + json_number(row.r1);
    out += ", \"r2\": " + json_number(row.r2);
    out += ", \"r3\": " + json_number(row.r3);
    out += ", \"gap1\": " + json_number(row.gap1);
    out += ", \"gap2\": " + json_number(row.gap2);
    out += ", \"gap3\": " + json_number(row.gap3);
    out += ", \"diff_quotient\": " + json_number(row.diff_quotient);
    out += ", \"error\": " + json_string(row.error) + "}";
  }
  out += rows.empty() ? "],\n" : "\n  ],\n";
  out += "  \"verdicts\": [";
  for (std::size_t k = 0; k < verdicts.size(); ++k) {
    const Verdict& v = verdicts[k];
    out += k ? ",\n    " : "\n    ";
    out += "{\"check_name\": " + json_string(v.check_name);
    out += ", \"pass\": " + std::string(v.pass ? "true" : "false");
    out += ", \"worst_value\": " + json_number(v.worst_value);
    out += ", \"threshold\": " + json_number(v.threshold);
    out += ", \"regime\": " + json_string(regime_name(v.regime));
    out += ", \"note\": " + json_string(v.note) + "}";
  }
  out += verdicts.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

}  // namespace minpert
