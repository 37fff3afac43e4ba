// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "minpert/errors.hpp"
#include "minpert/linalg.hpp"
#include "minpert/problems.hpp"
#include "minpert/system.hpp"

namespace minpert {

struct SolveOptions {
  int max_iter = 200;
  double residual_tol = 1e-12;  // scaled by (1 + ||target||)
  double step_tol = 1e-12;      // relative
  double trust_radius = 100.0;  // admissible ||y_init - y0||
};

/// Iteration record. rate_estimate is the largest observed ratio of
/// successive step norms, ignoring steps already at rounding level; for a
/// geometrically convergent iteration it estimates the contraction factor.
struct SolveTrace {
  std::vector<Vector> iterates;
  std::vector<double> residual_norms;  // one per iterate
  std::vector<double> step_norms;      // one per step taken
  bool converged = false;
  double rate_estimate = 0.0;
};

struct LevelSetResult {
  Vector y;
  SolveTrace trace;
};

namespace detail {

inline double step_rate_estimate(const std::vector<double>& steps, double scale) {
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + scale);
  double rate = 0.0;
  for (std::size_t k = 1; k < steps.size(); ++k)
    if (steps[k] >= floor && steps[k - 1] >= floor)
      rate = std::max(rate, steps[k] / steps[k - 1]);
  return rate;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frozen-Jacobian level-set solver: finds y with F(y, x) = target by the
// fixed-matrix corrections  y <- y + w,  d1F(y0, x) w = -(F(y, x) - target),
// each w the minimum-norm solution. Converges geometrically when x is close
// enough to x0 that the frozen derivative still tracks F.
// ---------------------------------------------------------------------------

inline LevelSetResult frozen_levelset_solve(const ParameterizedSystem& sys,
                                            const Anchor& anchor, const Vector& x,
                                            const Vector& target, const Vector& y_init,
                                            const SolveOptions& opts = {}) {
  if (target.size() != sys.p) throw DimensionError("frozen_levelset_solve: target size");
  if (norm2(sub(y_init, anchor.y0)) > opts.trust_radius)
    throw NoConvergenceError("frozen_levelset_solve: y_init outside trust radius");

  const Matrix k_frozen = jacobian_y(sys, anchor.y0, x);
  const QrFactors kt_qr = householder_qr(k_frozen.transposed());
  const double tol = opts.residual_tol * (1.0 + norm2(target));

  LevelSetResult out;
  out.y = y_init;
  out.trace.iterates.push_back(out.y);
  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    const Vector g = sub(eval_f(sys, out.y, x), target);
    const double gn = norm2(g);
    out.trace.residual_norms.push_back(gn);
    if (!std::isfinite(gn)) break;
    if (gn <= tol) {
      out.trace.converged = true;
      break;
    }
    if (iter == opts.max_iter) break;
    const Vector w = least_norm_solve(kt_qr, scaled(g, -1.0));
    out.y = add(out.y, w);
    out.trace.iterates.push_back(out.y);
    out.trace.step_norms.push_back(norm2(w));
  }
  if (!out.trace.converged)
    throw NoConvergenceError("frozen_levelset_solve: no convergence in " +
                             std::to_string(opts.max_iter) + " iterations");
  out.trace.rate_estimate = detail::step_rate_estimate(out.trace.step_norms, norm2(out.y));
  return out;
}

inline LevelSetResult frozen_levelset_solve(const ParameterizedSystem& sys,
                                            const Anchor& anchor, const Vector& x,
                                            const Vector& target,
                                            const SolveOptions& opts = {}) {
  return frozen_levelset_solve(sys, anchor, x, target, anchor.y0, opts);
}

// ---------------------------------------------------------------------------
// Feasible-point projector: a root of F(., x) near y0. Runs the frozen
// iteration with target 0 and falls back to damped Gauss-Newton steps with
// the current Jacobian when the frozen iteration leaves its contraction
// neighborhood.
// ---------------------------------------------------------------------------

inline LevelSetResult project_to_root(const ParameterizedSystem& sys,
                                      const Anchor& anchor, const Vector& x,
                                      const Vector& y_init,
                                      const SolveOptions& opts = {}) {
  const Vector zero(sys.p, 0.0);
  try {
    return frozen_levelset_solve(sys, anchor, x, zero, y_init, opts);
  } catch (const NoConvergenceError&) {
  } catch (const RankDeficientError&) {
  }

  LevelSetResult out;
  out.y = y_init;
  out.trace.iterates.push_back(out.y);
  double gn = norm2(eval_f(sys, out.y, x));
  out.trace.residual_norms.push_back(gn);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (gn <= opts.residual_tol) {
      out.trace.converged = true;
      break;
    }
    const Vector g = eval_f(sys, out.y, x);
    const Matrix k = jacobian_y(sys, out.y, x);
    Vector w = least_norm_solve(k, scaled(g, -1.0));
    // halve until the residual decreases
    Vector y_next = add(out.y, w);
    double gn_next = norm2(eval_f(sys, y_next, x));
    for (int halvings = 0; halvings < 30 && !(gn_next < gn); ++halvings) {
      w = scaled(w, 0.5);
      y_next = add(out.y, w);
      gn_next = norm2(eval_f(sys, y_next, x));
    }
    if (!(gn_next < gn))
      throw NoConvergenceError("project_to_root: stalled Gauss-Newton step");
    out.y = y_next;
    gn = gn_next;
    out.trace.iterates.push_back(out.y);
    out.trace.residual_norms.push_back(gn);
    out.trace.step_norms.push_back(norm2(w));
  }
  if (gn <= opts.residual_tol) out.trace.converged = true;
  if (!out.trace.converged)
    throw NoConvergenceError("project_to_root: no convergence in " +
                             std::to_string(opts.max_iter) + " iterations");
  out.trace.rate_estimate = detail::step_rate_estimate(out.trace.step_norms, norm2(out.y));
  return out;
}

inline LevelSetResult project_to_root(const ParameterizedSystem& sys,
                                      const Anchor& anchor, const Vector& x,
                                      const SolveOptions& opts = {}) {
  return project_to_root(sys, anchor, x, anchor.y0, opts);
}

// ---------------------------------------------------------------------------
// Exact minimal perturbation mu_F(x) = min ||y - y0|| s.t. F(y, x) = 0 by
// SQP iteration from y0: each step solves the linearized minimum-norm
// problem  min ||y - y0||  s.t.  F(y_k, x) + d1F(y_k, x)(y - y_k) = 0
// in closed form. Two post-checks guard the answer: the value may not exceed
// the projector's feasible distance, and the perturbation must be orthogonal
// to the constraint null space at the solution.
// ---------------------------------------------------------------------------

struct MuFResult {
  double value = 0.0;
  Vector y_star;
  SolveTrace trace;
};

inline MuFResult mu_f(const AnchoredProblem& prob, const Vector& x,
                      const SolveOptions& opts = SolveOptions{.residual_tol = 1e-11}) {
  const ParameterizedSystem& sys = prob.system;
  const Vector& y0 = prob.anchor.y0;

  MuFResult out;
  out.y_star = y0;
  out.trace.iterates.push_back(y0);

  bool converged = false;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Vector fy = eval_f(sys, out.y_star, x);
    const double fn = norm2(fy);
    out.trace.residual_norms.push_back(fn);
    if (!std::isfinite(fn))
      throw NoConvergenceError("mu_f: iterate diverged");

    const Matrix k = jacobian_y(sys, out.y_star, x);
    QrFactors kt_qr;
    try {
      kt_qr = householder_qr(k.transposed());
    } catch (const RankDeficientError&) {
      throw RankDeficientError(
          "mu_f: rank-deficient Jacobian at an iterate (x outside the regular "
          "neighborhood)");
    }
    // constraint in terms of delta = y - y0:  K delta = K (y_k - y0) - F(y_k)
    const Vector b = sub(k * sub(out.y_star, y0), fy);
    const Vector delta = least_norm_solve(kt_qr, b);
    const Vector y_next = add(y0, delta);

    const double step = norm2(sub(y_next, out.y_star));
    out.trace.step_norms.push_back(step);
    out.y_star = y_next;
    out.trace.iterates.push_back(out.y_star);

    const double res_next = norm2(eval_f(sys, out.y_star, x));
    if (step <= opts.step_tol * (1.0 + norm2(out.y_star)) &&
        res_next <= opts.residual_tol) {
      out.trace.residual_norms.push_back(res_next);
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NoConvergenceError("mu_f: no convergence in " +
                             std::to_string(opts.max_iter) + " iterations");
  out.trace.converged = true;
  out.trace.rate_estimate =
      detail::step_rate_estimate(out.trace.step_norms, norm2(out.y_star));
  out.value = norm2(sub(out.y_star, y0));

  // minimality against one feasible point
  const LevelSetResult proj = project_to_root(sys, prob.anchor, x, y0, opts);
  if (out.value > norm2(sub(proj.y, y0)) + 1e-10)
    throw NoConvergenceError("mu_f: solution not minimal against the projector");

  // KKT: y_star - y0 lies in the row space of d1F(y_star, x)
  const Vector delta = sub(out.y_star, y0);
  const QrFactors kt_qr =
      householder_qr(jacobian_y(sys, out.y_star, x).transposed());
  const Vector row_part = kt_qr.q * (kt_qr.q.transposed() * delta);
  if (norm2(sub(delta, row_part)) > 1e-8 * (1.0 + norm2(delta)))
    throw NoConvergenceError("mu_f: KKT orthogonality check failed");

  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracle for mu_F: grid search over y0 + [-radius, radius]^m
// keeping points whose Newton-style distance estimate ||F|| / ||d1F|| is
// within one grid cell, then 1-d refinement along the ray through the best
// candidate. Independent of the SQP path; accurate to about one grid step.
// ---------------------------------------------------------------------------

inline double brute_force_mu_f(const ParameterizedSystem& sys, const Anchor& anchor,
                               const Vector& x, double radius,
                               std::size_t grid_points) {
  if (sys.m > 3) throw DimensionError("brute_force_mu_f: supports m <= 3");
  if (grid_points < 2 || grid_points > 201)
    throw Error("brute_force_mu_f: grid_points must be in [2, 201]");
  if (!(radius > 0.0)) throw Error("brute_force_mu_f: radius must be positive");

  const double h = 2.0 * radius / static_cast<double>(grid_points - 1);
  const double keep_tol = h * std::sqrt(static_cast<double>(sys.m));

  double best_dist = std::numeric_limits<double>::infinity();
  Vector best_y;

  Vector y(sys.m, 0.0);
  std::vector<std::size_t> idx(sys.m, 0);
  for (;;) {
    for (std::size_t k = 0; k < sys.m; ++k)
      y[k] = anchor.y0[k] - radius + static_cast<double>(idx[k]) * h;

    const Vector fy = eval_f(sys, y, x);
    const double kn = jacobian_y(sys, y, x).frobenius_norm();
    const double estimate = norm2(fy) / std::max(kn, 1e-12);
    if (estimate <= keep_tol) {
      const double dist = norm2(sub(y, anchor.y0));
      if (dist < best_dist) {
        best_dist = dist;
        best_y = y;
      }
    }

    std::size_t k = 0;
    while (k < sys.m && ++idx[k] == grid_points) idx[k++] = 0;
    if (k == sys.m) break;
  }

  if (!best_y.size())
    throw NoFeasiblePointError(
        "brute_force_mu_f: no nearly-feasible grid point (grid too coarse or "
        "radius too small)");
  if (best_dist == 0.0) return 0.0;

  // refine along the ray through the best candidate
  const Vector dir = scaled(sub(best_y, anchor.y0), 1.0 / best_dist);
  auto f_at = [&](double s) { return eval_f(sys, add(anchor.y0, scaled(dir, s)), x); };
  const double s_lo = std::max(0.0, best_dist - 2.0 * h);
  const double s_hi = best_dist + 2.0 * h;

  if (sys.p == 1) {
    // bracket a sign change, then bisect
    const int scan = 64;
    double prev_s = s_lo, prev_g = f_at(s_lo)[0];
    for (int i = 1; i <= scan; ++i) {
      const double s = s_lo + (s_hi - s_lo) * static_cast<double>(i) / scan;
      const double g = f_at(s)[0];
      if ((prev_g <= 0.0 && g >= 0.0) || (prev_g >= 0.0 && g <= 0.0)) {
        double a = prev_s, b = s, ga = prev_g;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (a + b);
          const double gm = f_at(mid)[0];
          if ((ga <= 0.0 && gm <= 0.0) || (ga >= 0.0 && gm >= 0.0)) {
            a = mid;
            ga = gm;
          } else {
            b = mid;
          }
        }
        return 0.5 * (a + b);
      }
      prev_s = s;
      prev_g = g;
    }
  }

  // golden-section minimization of ||F|| along the ray
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = s_lo, b = s_hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = norm2(f_at(c)), fd = norm2(f_at(d));
  for (int it = 0; it < 200; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = norm2(f_at(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = norm2(f_at(d));
    }
  }
  const double s_star = 0.5 * (a + b);
  const double kn = jacobian_y(sys, add(anchor.y0, scaled(dir, s_star)), x)
                        .frobenius_norm();
  if (norm2(f_at(s_star)) <= 1e-9 * (1.0 + kn)) return s_star;
  return best_dist;  // tangential or off-ray manifold: fall back to the grid
}

// ---------------------------------------------------------------------------
// All four values at one x.
// ---------------------------------------------------------------------------

inline MuEstimates compute_mu_estimates(const AnchoredProblem& prob, const Vector& x,
                                        bool include_mu_f = true) {
  MuEstimates est;
  est.x = x;
  est.m1 = mu1(prob, x);
  est.m2 = mu2(prob, x);
  est.m3 = mu3(prob, x);
  if (include_mu_f) {
    const MuFResult r = mu_f(prob, x);
    est.mu_f = r.value;
    est.y_star = r.y_star;
  }
  return est;
}

}  // namespace minpert
