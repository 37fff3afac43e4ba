// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <json.hpp>

#include "minpert/harness.hpp"
#include "test_support.hpp"

using namespace minpert;

namespace {

AnchoredProblem builtin_problem(const std::string& name) {
  auto [sys, anchor] = builtin(name);
  return make_anchored_problem(std::move(sys), std::move(anchor));
}

// r(x) quadratic in x, so mu2 and mu3 genuinely differ: F = y1^2 + y2^2 - x1^2
AnchoredProblem quad_parameter_problem() {
  ParsedProblem parsed = parse_problem_text(
      "dims m=2 n=1 p=1\n"
      "anchor y0=(1,0) x0=(1)\n"
      "eq: y1^2 + y2^2 - x1^2\n");
  return make_anchored_problem(std::move(parsed.system), std::move(*parsed.anchor));
}

std::vector<SweepRow> synthetic_ratio_rows(const std::vector<double>& ts,
                                           const std::vector<double>& ratios) {
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    SweepRow row;
    row.t = ts[i];
    row.mu_f = 1.0;
    row.mu1 = ratios[i];
    row.mu2 = row.mu3 = 1.0;
    row.diff_quotient = 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("make_sweep_spec defaults to 18 geometric samples") {
  const SweepSpec spec = make_sweep_spec({1.0});
  REQUIRE(spec.t_values.size() == 18);
  CHECK(spec.t_values.front() == Catch::Approx(1e-1));
  for (std::size_t i = 1; i < spec.t_values.size(); ++i)
    CHECK(spec.t_values[i] < spec.t_values[i - 1]);
  CHECK(spec.direction == Vector{1.0});

  const SweepSpec wide = make_sweep_spec({3.0, -4.0});
  CHECK(norm2(wide.direction) == Catch::Approx(1.0));

  CHECK_THROWS_AS(make_sweep_spec({0.0}), Error);
  CHECK_THROWS_AS(make_sweep_spec({1.0}, 1e-6, 1e-1), Error);
  CHECK_THROWS_AS(make_sweep_spec({1.0}, 1e-1, 1e-6, 0), Error);
}

TEST_CASE("run_sweep reproduces circle closed forms") {
  const AnchoredProblem prob = builtin_problem("circle");
  SweepSpec spec = make_sweep_spec({1.0});
  spec.t_values = {0.21, 0.0201};
  const std::vector<SweepRow> rows = run_sweep(prob, spec);
  REQUIRE(rows.size() == 2);

  CHECK(rows[0].x[0] == Catch::Approx(1.21).margin(1e-15));
  CHECK(rows[0].mu_f == Catch::Approx(0.1).margin(1e-10));
  CHECK(rows[0].mu1 == Catch::Approx(0.105).margin(1e-14));
  CHECK(rows[0].mu2 == Catch::Approx(0.105).margin(1e-14));
  CHECK(rows[0].mu3 == Catch::Approx(0.105).margin(1e-14));
  CHECK(rows[0].r1 == Catch::Approx(1.05).margin(1e-9));
  CHECK(rows[0].gap1 <= 1e-12);
  CHECK(rows[0].error.empty());

  // 1.01^2 = 1.0201, so mu_f = 0.01 exactly and r1 = 1.005
  CHECK(rows[1].mu_f == Catch::Approx(0.01).margin(1e-12));
  CHECK(rows[1].r1 == Catch::Approx(1.005).margin(1e-9));
}

TEST_CASE("run_sweep on the linear system reproduces mu_f exactly") {
  const AnchoredProblem prob = builtin_problem("linear2x3");
  const SweepSpec spec = make_sweep_spec({1.0, 1.0}, 1e-1, 1e-4);
  for (const SweepRow& row : run_sweep(prob, spec)) {
    CHECK(std::abs(row.mu1 - row.mu_f) <= 1e-12);
    CHECK(std::abs(row.mu2 - row.mu_f) <= 1e-12);
    CHECK(std::abs(row.mu3 - row.mu_f) <= 1e-12);
    CHECK(std::abs(row.mu3 - row.mu2) <= 1e-12);
  }
}

TEST_CASE("run_sweep records per-row errors without aborting") {
  // K(x) = [[x1, 0]] loses rank at x = 0
  const ParameterizedSystem sys = parse_system(
      "dims m=2 n=1 p=1\n"
      "eq: y1 x1\n");
  const AnchoredProblem prob = make_anchored_problem(sys, Anchor{{0.0, 0.0}, {1.0}});
  SweepSpec spec = make_sweep_spec({-1.0});
  spec.t_values = {1.0, 0.5};
  spec.include_mu_f = false;
  const std::vector<SweepRow> rows = run_sweep(prob, spec);
  REQUIRE(rows.size() == 2);
  CHECK(std::isnan(rows[0].mu1));  // x = 0: rank deficient
  CHECK_FALSE(rows[0].error.empty());
  CHECK(std::isfinite(rows[0].mu2));
  CHECK(std::isfinite(rows[1].mu1));  // x = 0.5 is fine
  CHECK(rows[1].error.empty());
}

TEST_CASE("asymptotic verdict passes on the circle") {
  const AnchoredProblem prob = builtin_problem("circle");
  const std::vector<SweepRow> rows = run_sweep(prob, make_sweep_spec({1.0}));

  const Verdict v = check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF);
  CHECK(v.pass);
  CHECK(v.worst_value <= 1e-2);
  CHECK(v.check_name == "asymptotic mu1/mu_f");

  // |mu1/mu_f - 1| = (sqrt(1+t) - 1)/2 ~ t/4 at the coarsest decade
  const Verdict coarse = check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF);
  CHECK(coarse.threshold == Catch::Approx(1e-2));

  CHECK(check_asymptotic_equality(rows, MuKind::Mu2, MuKind::Mu1).pass);
  CHECK(check_asymptotic_equality(rows, MuKind::Mu2, MuKind::MuF).pass);
  CHECK(check_asymptotic_equality(rows, MuKind::Mu3, MuKind::Mu2).pass);
}

TEST_CASE("asymptotic verdict fails on a fixed ratio") {
  const std::vector<SweepRow> rows = synthetic_ratio_rows(
      {1e-1, 1e-2, 1e-3, 1e-4}, {1.5, 1.5, 1.5, 1.5});
  const Verdict v = check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF);
  CHECK_FALSE(v.pass);
  CHECK(v.worst_value == Catch::Approx(0.5));
}

TEST_CASE("asymptotic verdict fails when decade maxima bounce") {
  const std::vector<SweepRow> rows = synthetic_ratio_rows(
      {1e-1, 1e-2, 1e-3, 1e-4}, {1.001, 1.005, 1.0002, 1.0001});
  const Verdict v = check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF);
  CHECK_FALSE(v.pass);  // final deviation is small but the squeeze is broken
  CHECK(v.note == "decade maxima not decreasing");
}

TEST_CASE("asymptotic verdict needs three decades") {
  const std::vector<SweepRow> rows =
      synthetic_ratio_rows({1e-1, 1e-2}, {1.1, 1.01});
  CHECK_THROWS_AS(check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF),
                  InsufficientDataError);
}

TEST_CASE("differential verdict on the circle is asymptotic") {
  const AnchoredProblem prob = builtin_problem("circle");
  const std::vector<SweepRow> rows = run_sweep(prob, make_sweep_spec({1.0}));
  const Verdict v = check_differential_equivalence(rows, true);
  CHECK(v.pass);
  CHECK(v.regime == Regime::Asymptotic);
}

TEST_CASE("differential verdict with a genuinely nonlinear residual") {
  const AnchoredProblem prob = quad_parameter_problem();
  const std::vector<SweepRow> rows = run_sweep(prob, make_sweep_spec({1.0}));

  // mu2 = t + t^2/2 and mu3 = t, so the quotient is t/2
  for (const SweepRow& row : rows) {
    CHECK(row.diff_quotient == Catch::Approx(row.t / 2.0).margin(1e-8));
    CHECK(row.diff_quotient > 0.0);
  }
  const Verdict v = check_differential_equivalence(rows, true);
  CHECK(v.pass);
  CHECK(v.regime == Regime::Asymptotic);
  CHECK(check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF).pass);
}

TEST_CASE("dead parameter column reports differential-only") {
  const AnchoredProblem prob = builtin_problem("parabola-underdet");
  const HypothesisReport hyp = check_hypotheses(prob.system, prob.anchor);
  REQUIRE_FALSE(hyp.h6_one_to_one);

  const std::vector<SweepRow> rows =
      run_sweep(prob, make_sweep_spec({1.0, 0.0}));
  const Verdict v = check_differential_equivalence(rows, hyp.h6_one_to_one);
  CHECK(v.pass);
  CHECK(v.regime == Regime::DifferentialOnly);
}

TEST_CASE("estimate_lipschitz on the circle is near one half") {
  const AnchoredProblem prob = builtin_problem("circle");
  const std::vector<SweepRow> rows = run_sweep(prob, make_sweep_spec({1.0}));
  const double slope = estimate_lipschitz(rows);
  CHECK(slope >= 0.45);
  CHECK(slope <= 0.55);
}

TEST_CASE("estimate_lipschitz is constant on the linear system") {
  const AnchoredProblem prob = builtin_problem("linear2x3");
  const std::vector<SweepRow> rows =
      run_sweep(prob, make_sweep_spec({1.0, 0.0}, 1e-1, 1e-4));
  const double slope = estimate_lipschitz(rows);
  for (const SweepRow& row : rows)
    CHECK(row.mu_f / row.t == Catch::Approx(slope).epsilon(1e-9));
}

TEST_CASE("mu_f slopes stay within twice their median along a sweep") {
  for (const std::string& name : {std::string("circle"), std::string("linear2x3"),
                                  std::string("sphere")}) {
    const AnchoredProblem prob = builtin_problem(name);
    Vector d(prob.system.n, 0.0);
    d[0] = 1.0;
    const std::vector<SweepRow> rows = run_sweep(prob, make_sweep_spec(d));
    std::vector<double> slopes;
    for (const SweepRow& row : rows)
      if (std::isfinite(row.mu_f)) slopes.push_back(row.mu_f / row.t);
    REQUIRE(slopes.size() >= 3);
    std::vector<double> sorted = slopes;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    for (double s : slopes) CHECK(s <= 2.0 * median);
  }
}

TEST_CASE("mu_f is skipped below the cancellation threshold") {
  const AnchoredProblem prob = builtin_problem("circle");
  SweepSpec spec = make_sweep_spec({1.0});
  spec.t_values = {1e-2, 1e-9};  // second value sits below mu_f_min_t
  const std::vector<SweepRow> rows = run_sweep(prob, spec);
  REQUIRE(rows.size() == 2);
  CHECK(std::isfinite(rows[0].mu_f));
  CHECK(std::isnan(rows[1].mu_f));
  CHECK(std::isnan(rows[1].r1));
  CHECK(rows[1].error.empty());  // skipped, not failed
  CHECK(std::isfinite(rows[1].mu2));
}

TEST_CASE("estimate_lipschitz edge cases") {
  std::vector<SweepRow> zero_rows;
  for (double t : {1e-1, 1e-2}) {
    SweepRow row;
    row.t = t;
    row.mu_f = 0.0;
    zero_rows.push_back(row);
  }
  CHECK(estimate_lipschitz(zero_rows) == 0.0);

  std::vector<SweepRow> empty_rows(2);
  empty_rows[0].t = 1e-1;
  empty_rows[1].t = 1e-2;
  CHECK_THROWS_AS(estimate_lipschitz(empty_rows), InsufficientDataError);
}

TEST_CASE("csv report shape and determinism") {
  const AnchoredProblem prob = builtin_problem("circle");
  SweepSpec spec = make_sweep_spec({1.0});
  spec.t_values = {0.21, 0.0201};
  const std::vector<SweepRow> rows = run_sweep(prob, spec);

  const std::string csv = emit_report(rows, {}, ReportFormat::Csv);
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 3);  // header + 2 rows
  CHECK(csv.rfind("t,mu_f,mu1,mu2,mu3,r1,r2,r3,gap1,gap2,gap3,diff_quotient\n", 0) == 0);

  const std::string again =
      emit_report(run_sweep(prob, spec), {}, ReportFormat::Csv);
  CHECK(csv == again);

  const std::string empty = emit_report({}, {}, ReportFormat::Csv);
  CHECK(empty == "t,mu_f,mu1,mu2,mu3,r1,r2,r3,gap1,gap2,gap3,diff_quotient\n");

  const std::string with_meta =
      emit_report(rows, {}, ReportFormat::Csv, {{"direction", "1"}, {"seed", "7"}});
  CHECK(with_meta.rfind("# direction=1\n# seed=7\n", 0) == 0);
}

TEST_CASE("json report round-trips through a parser") {
  const AnchoredProblem prob = builtin_problem("circle");
  SweepSpec spec = make_sweep_spec({1.0});
  spec.t_values = {0.21, 0.0201};
  spec.include_mu_f = true;
  std::vector<SweepRow> rows = run_sweep(prob, spec);
  rows[1].mu_f = std::numeric_limits<double>::quiet_NaN();  // absent value
  rows[1].r1 = rows[1].r2 = rows[1].r3 = std::numeric_limits<double>::quiet_NaN();

  std::vector<Verdict> verdicts = {
      check_asymptotic_equality(run_sweep(prob, make_sweep_spec({1.0})),
                                MuKind::Mu1, MuKind::MuF)};

  const std::string text =
      emit_report(rows, verdicts, ReportFormat::Json, {{"problem", "circle"}});
  const nlohmann::json parsed = nlohmann::json::parse(text);

  REQUIRE(parsed.at("rows").size() == 2);
  CHECK(parsed.at("meta").at("problem") == "circle");
  CHECK(parsed.at("rows")[0].at("t").get<double>() == 0.21);
  CHECK(parsed.at("rows")[0].at("mu1").get<double>() ==
        Catch::Approx(0.105).margin(1e-14));
  CHECK(parsed.at("rows")[1].at("mu_f").is_null());
  CHECK(parsed.at("rows")[0].at("x")[0].get<double>() ==
        Catch::Approx(1.21).margin(1e-15));
  CHECK(parsed.at("verdicts")[0].at("check_name") == "asymptotic mu1/mu_f");
  CHECK(parsed.at("verdicts")[0].at("pass").get<bool>());
  CHECK(parsed.at("verdicts")[0].at("regime") == "asymptotic");

  // byte determinism
  CHECK(emit_report(rows, verdicts, ReportFormat::Json, {{"problem", "circle"}}) ==
        text);
}

TEST_CASE("builtin chain of equivalences over random directions") {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const std::string& name : {std::string("circle"), std::string("linear2x3"),
                                  std::string("sphere")}) {
    const AnchoredProblem prob = builtin_problem(name);
    const HypothesisReport hyp = check_hypotheses(prob.system, prob.anchor);
    REQUIRE(hyp.h5_onto);
    REQUIRE(hyp.h6_one_to_one);
    for (int trial = 0; trial < 5; ++trial) {
      Vector d(prob.system.n);
      for (double& v : d) v = gauss(rng);
      if (norm2(d) == 0.0) d[0] = 1.0;
      const std::vector<SweepRow> rows =
          run_sweep(prob, make_sweep_spec(d, 1e-1, 1e-5));

      CHECK(check_asymptotic_equality(rows, MuKind::Mu1, MuKind::MuF).pass);
      CHECK(check_asymptotic_equality(rows, MuKind::Mu2, MuKind::Mu1).pass);
      CHECK(check_asymptotic_equality(rows, MuKind::Mu2, MuKind::MuF).pass);
      CHECK(check_asymptotic_equality(rows, MuKind::Mu3, MuKind::Mu2).pass);
      CHECK(check_differential_equivalence(rows, hyp.h6_one_to_one).pass);
      for (const SweepRow& row : rows) {
        if (std::isfinite(row.gap1)) CHECK(row.gap1 <= 1e-9);
        if (std::isfinite(row.gap2)) CHECK(row.gap2 <= 1e-9);
        if (std::isfinite(row.gap3)) CHECK(row.gap3 <= 1e-9);
      }
    }
  }
}
