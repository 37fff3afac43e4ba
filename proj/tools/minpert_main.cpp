// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0
//
// minpert: minimal root perturbations of parameterized equation systems and
// their linearized estimates, with sweep verdicts for the asymptotic
// equality, differential equivalence, duality and Lipschitz properties.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minpert/minpert.hpp"

namespace {

using namespace minpert;

constexpr int kExitOk = 0;
constexpr int kExitVerdictFailure = 1;
constexpr int kExitInputError = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitUsage = 64;

std::string format_g(double v, int digits = 12) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string format_tuple(const Vector& v, int digits = 12) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_g(v[i], digits);
  }
  return out + ")";
}

Vector parse_comma_list(const std::string& text) {
  Vector out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item =
        text.substr(start, comma == std::string::npos ? std::string::npos
                                                      : comma - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw Error("cannot parse number '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used])))
      ++used;
    if (used != item.size()) throw Error("cannot parse number '" + item + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::pair<ParameterizedSystem, Anchor> load_problem(const std::string& builtin_name,
                                                    const std::string& file) {
  if (!builtin_name.empty()) return builtin(builtin_name);
  std::ifstream in(file);
  if (!in) throw Error("cannot open problem file '" + file + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  ParsedProblem parsed = parse_problem_text(buffer.str());
  if (!parsed.anchor)
    throw Error("problem file '" + file + "' has no anchor line");
  const std::size_t slash = file.find_last_of('/');
  parsed.system.name = slash == std::string::npos ? file : file.substr(slash + 1);
  return {std::move(parsed.system), std::move(*parsed.anchor)};
}

void print_hypothesis_report(const ParameterizedSystem& sys,
                             const HypothesisReport& report) {
  std::cout << "hypothesis check for '" << sys.name << "':\n"
            << "  residual ||F(y0,x0)||  = " << format_g(report.residual_norm) << "\n"
            << "  rank K(x0) = " << report.rank_k0 << " of p=" << sys.p
            << "  (onto: " << (report.h5_onto ? "yes" : "no") << ")\n"
            << "  rank J(x0) = " << report.rank_j0 << " of n=" << sys.n
            << "  (one-to-one: " << (report.h6_one_to_one ? "yes" : "no") << ")\n";
}

/// Loads, verifies the anchor hypotheses and constructs the problem; nullopt
/// means the hypotheses failed and the report has been printed.
std::optional<AnchoredProblem> make_checked_problem(const std::string& builtin_name,
                                                    const std::string& file,
                                                    HypothesisReport* report_out) {
  auto [sys, anchor] = load_problem(builtin_name, file);
  const HypothesisReport report = check_hypotheses(sys, anchor);
  if (report_out) *report_out = report;
  if (report.residual_norm > kAnchorTol || !report.h5_onto) {
    print_hypothesis_report(sys, report);
    return std::nullopt;
  }
  return make_anchored_problem(std::move(sys), std::move(anchor));
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

int run_solve(const std::string& builtin_name, const std::string& file,
              const std::string& x_text, bool no_mu_f) {
  std::optional<AnchoredProblem> prob = make_checked_problem(builtin_name, file, nullptr);
  if (!prob) return kExitInputError;

  const Vector x = parse_comma_list(x_text);
  if (x.size() != prob->system.n)
    throw Error("--x needs " + std::to_string(prob->system.n) + " coordinates");

  const MuEstimates est = compute_mu_estimates(*prob, x, !no_mu_f);
  std::cout << "problem " << prob->system.name << " (m=" << prob->system.m
            << " n=" << prob->system.n << " p=" << prob->system.p << ")\n"
            << "x    = " << format_tuple(est.x) << "\n";
  if (est.mu_f) {
    std::cout << "mu_f = " << format_g(*est.mu_f) << "   y_star = "
              << format_tuple(*est.y_star) << "\n";
  }
  const MuSolution* sols[] = {&est.m1, &est.m2, &est.m3};
  for (int i = 0; i < 3; ++i)
    std::cout << "mu" << i + 1 << "  = " << format_g(sols[i]->value)
              << "   gap" << i + 1 << " = " << format_g(est.gap(i + 1)) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepCliConfig {
  std::string builtin_name;
  std::string file;
  std::string direction = "e1";
  double t_start = 1e-1;
  double t_stop = 1e-6;
  int per_decade = 3;
  std::string checks = "duality,asymptotic,differential,lipschitz";
  bool checks_given = false;
  double eps_final = 1e-2;
  std::string format = "csv";
  std::string out_path;
  bool no_mu_f = false;
};

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    out.push_back(text.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Vector resolve_direction(const std::string& text, std::size_t n,
                         std::optional<std::uint64_t>* seed_out) {
  if (text == "e1") {
    Vector d(n, 0.0);
    d[0] = 1.0;
    return d;
  }
  if (text.rfind("random:", 0) == 0) {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(text.substr(7));
    } catch (const std::exception&) {
      throw Error("bad seed in '" + text + "'");
    }
    *seed_out = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector d(n);
    for (;;) {
      for (double& v : d) v = gauss(rng);
      if (norm2(d) > 1e-6) return d;
    }
  }
  Vector d = parse_comma_list(text);
  if (d.size() != n)
    throw Error("--direction needs " + std::to_string(n) + " coordinates");
  return d;
}

int run_sweep_cmd(const SweepCliConfig& cfg) {
  HypothesisReport hyp;
  std::optional<AnchoredProblem> prob =
      make_checked_problem(cfg.builtin_name, cfg.file, &hyp);
  if (!prob) return kExitInputError;

  // requested checks
  bool want_duality = false, want_asymptotic = false, want_differential = false,
       want_lipschitz = false;
  for (const std::string& c : split_csv(cfg.checks)) {
    if (c == "duality")
      want_duality = true;
    else if (c == "asymptotic")
      want_asymptotic = true;
    else if (c == "differential")
      want_differential = true;
    else if (c == "lipschitz")
      want_lipschitz = true;
    else
      throw CLI::ValidationError("--checks", "unknown check '" + c + "'");
  }
  if (cfg.no_mu_f && want_lipschitz) {
    if (cfg.checks_given)
      throw CLI::ValidationError("--checks",
                                 "lipschitz needs mu_f; drop --no-mu-f");
    want_lipschitz = false;  // defaulted list: silently skip
  }

  std::optional<std::uint64_t> seed;
  const Vector direction =
      resolve_direction(cfg.direction, prob->system.n, &seed);
  const SweepSpec spec = make_sweep_spec(direction, cfg.t_start, cfg.t_stop,
                                         cfg.per_decade, !cfg.no_mu_f);
  const std::vector<SweepRow> rows = run_sweep(*prob, spec);

  std::vector<Verdict> verdicts;
  if (want_duality) {
    Verdict v;
    v.check_name = "duality";
    v.threshold = 1e-9;
    v.worst_value = 0.0;
    for (const SweepRow& row : rows)
      for (double gap : {row.gap1, row.gap2, row.gap3})
        if (std::isfinite(gap)) v.worst_value = std::max(v.worst_value, gap);
    v.pass = v.worst_value <= v.threshold;
    verdicts.push_back(std::move(v));
  }
  if (want_asymptotic) {
    if (!cfg.no_mu_f) {
      verdicts.push_back(
          check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF, cfg.eps_final));
      verdicts.push_back(
          check_asymptotic_equality(rows, MuKind::Mu2, MuKind::MuF, cfg.eps_final));
    }
    verdicts.push_back(
        check_asymptotic_equality(rows, MuKind::Mu2, MuKind::Mu1, cfg.eps_final));
    if (hyp.h6_one_to_one) {
      verdicts.push_back(
          check_asymptotic_equality(rows, MuKind::Mu3, MuKind::Mu2, cfg.eps_final));
    } else {
      Verdict v;
      v.check_name = "asymptotic mu3/mu2";
      v.pass = true;
      v.threshold = cfg.eps_final;
      v.regime = Regime::DifferentialOnly;
      v.note = "not-applicable: parameter Jacobian not one-to-one";
      verdicts.push_back(std::move(v));
    }
  }
  if (want_differential)
    verdicts.push_back(
        check_differential_equivalence(rows, hyp.h6_one_to_one, cfg.eps_final));
  if (want_lipschitz) {
    Verdict v;
    v.check_name = "lipschitz";
    v.worst_value = estimate_lipschitz(rows);
    v.threshold = std::numeric_limits<double>::infinity();
    v.pass = std::isfinite(v.worst_value);
    verdicts.push_back(std::move(v));
  }

  ReportMeta meta;
  meta.emplace_back("problem", prob->system.name);
  meta.emplace_back("direction", cfg.direction);
  if (seed) meta.emplace_back("seed", std::to_string(*seed));
  meta.emplace_back("t_start", format_g(cfg.t_start, 17));
  meta.emplace_back("t_stop", format_g(cfg.t_stop, 17));
  meta.emplace_back("per_decade", std::to_string(cfg.per_decade));
  meta.emplace_back("eps_final", format_g(cfg.eps_final, 17));
  meta.emplace_back("mu_f", cfg.no_mu_f ? "off" : "on");

  const ReportFormat format =
      cfg.format == "json" ? ReportFormat::Json : ReportFormat::Csv;
  const std::string report = emit_report(rows, verdicts, format, meta);

  std::ostream* summary = &std::cout;
  if (cfg.out_path.empty()) {
    std::cout << report;
    summary = &std::cerr;
  } else {
    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) throw Error("cannot write report to '" + cfg.out_path + "'");
    out << report;
  }

  bool all_pass = true;
  for (const Verdict& v : verdicts) {
    all_pass = all_pass && v.pass;
    *summary << (v.pass ? "PASS " : "FAIL ") << v.check_name;
    if (v.check_name == "lipschitz")
      *summary << "  L=" << format_g(v.worst_value);
    else
      *summary << "  worst=" << format_g(v.worst_value)
               << " threshold=" << format_g(v.threshold);
    if (v.check_name.rfind("differential", 0) == 0 ||
        v.regime == Regime::DifferentialOnly)
      *summary << " regime=" << regime_name(v.regime);
    if (!v.note.empty()) *summary << "  [" << v.note << "]";
    *summary << "\n";
  }
  return all_pass ? kExitOk : kExitVerdictFailure;
}

// ---------------------------------------------------------------------------
// lowerbound
// ---------------------------------------------------------------------------

Matrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open matrix file '" + path + "'");
  std::vector<Vector> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    Vector row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof() && ls.fail()) throw Error("bad number in matrix file '" + path + "'");
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error("ragged rows in matrix file '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("matrix file '" + path + "' is empty");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (!std::isfinite(rows[i][j]))
        throw Error("non-finite entry in matrix file '" + path + "'");
      m(i, j) = rows[i][j];
    }
  return m;
}

int run_lowerbound(const std::string& path, const std::string& norm_text,
                   std::size_t samples, std::uint64_t seed) {
  NormKind norm;
  if (norm_text == "one")
    norm = NormKind::One;
  else if (norm_text == "two")
    norm = NormKind::Two;
  else if (norm_text == "infinity")
    norm = NormKind::Infinity;
  else
    throw CLI::ValidationError("--norm", "must be one, two or infinity");

  const Matrix m = read_matrix_file(path);
  const Bracket b = matrix_lower_bound(m, norm, samples, seed);
  if (norm == NormKind::Two)
    std::cout << format_g(b.lo, 17) << "\n";
  else
    std::cout << "[" << format_g(b.lo, 17) << ", " << format_g(b.hi, 17) << "]\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minimal perturbations to roots of parameterized equations"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand(
      "solve", "compute mu_f, mu1, mu2, mu3 and duality gaps at one x");
  std::string solve_builtin, solve_file, solve_x;
  bool solve_no_mu_f = false;
  solve->add_option("--builtin", solve_builtin, "builtin problem name");
  solve->add_option("--problem", solve_file, "problem file path");
  solve->add_option("--x", solve_x, "parameter point, comma separated")->required();
  solve->add_flag("--no-mu-f", solve_no_mu_f, "skip the nonlinear solve");

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "sweep x along a ray toward x0 and verdict the claims");
  SweepCliConfig cfg;
  sweep->add_option("--builtin", cfg.builtin_name, "builtin problem name");
  sweep->add_option("--problem", cfg.file, "problem file path");
  sweep->add_option("--direction", cfg.direction,
                    "comma list, or random:SEED (default: first axis)");
  sweep->add_option("--t-start", cfg.t_start, "largest t (default 1e-1)");
  sweep->add_option("--t-stop", cfg.t_stop, "decade of the smallest t (default 1e-6)");
  sweep->add_option("--per-decade", cfg.per_decade, "samples per decade (default 3)");
  auto* checks_opt = sweep->add_option(
      "--checks", cfg.checks, "subset of duality,asymptotic,differential,lipschitz");
  sweep->add_option("--eps-final", cfg.eps_final,
                    "squeeze tolerance at the smallest decade (default 1e-2)");
  sweep->add_option("--format", cfg.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  sweep->add_option("--out", cfg.out_path, "report path (default: stdout)");
  sweep->add_flag("--no-mu-f", cfg.no_mu_f, "skip the nonlinear solve");

  // lowerbound
  auto* lower = app.add_subcommand(
      "lowerbound", "matrix lower bound of a whitespace-separated matrix file");
  std::string lower_matrix, lower_norm = "two";
  std::size_t lower_samples = 10000;
  std::uint64_t lower_seed = 20240613u;
  lower->add_option("--matrix", lower_matrix, "matrix file, one row per line")
      ->required();
  lower->add_option("--norm", lower_norm, "one, two or infinity (default two)");
  lower->add_option("--samples", lower_samples, "sampling budget for 1/inf norms");
  lower->add_option("--seed", lower_seed, "sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (solve->parsed()) {
      if (solve_builtin.empty() == solve_file.empty())
        throw CLI::ValidationError("solve", "need exactly one of --builtin/--problem");
      return run_solve(solve_builtin, solve_file, solve_x, solve_no_mu_f);
    }
    if (sweep->parsed()) {
      if (cfg.builtin_name.empty() == cfg.file.empty())
        throw CLI::ValidationError("sweep", "need exactly one of --builtin/--problem");
      cfg.checks_given = checks_opt->count() > 0;
      if (!(cfg.t_start > cfg.t_stop) || !(cfg.t_stop > 0.0) || cfg.per_decade < 1)
        throw CLI::ValidationError("sweep", "need t-start > t-stop > 0, per-decade >= 1");
      return run_sweep_cmd(cfg);
    }
    return run_lowerbound(lower_matrix, lower_norm, lower_samples, lower_seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NoConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoConvergence;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}
