// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "minpert/errors.hpp"
#include "minpert/linalg.hpp"
#include "minpert/system.hpp"

namespace minpert {

// ---------------------------------------------------------------------------
// A system anchored at a verified root, with the anchor Jacobians and the QR
// factors of K(x0)^T cached for the frozen solvers and the fast dual path.
// ---------------------------------------------------------------------------

struct AnchoredProblem {
  ParameterizedSystem system;
  Anchor anchor;
  Matrix k0;          // d1F(y0, x0), p x m, full row rank
  Matrix j0;          // d2F(y0, x0), p x n
  QrFactors k0t_qr;   // QR of k0^T
  NormKind norm = NormKind::Two;  // perturbations are measured in this norm
};

/// Validates the anchor residual and Hypothesis 5 (K(x0) onto), then caches
/// the anchor Jacobians and QR factors.
inline AnchoredProblem make_anchored_problem(ParameterizedSystem system, Anchor anchor,
                                             double anchor_tol = kAnchorTol) {
  if (anchor.y0.size() != system.m || anchor.x0.size() != system.n)
    throw DimensionError("anchor size does not match system dimensions");
  const double res = norm2(eval_f(system, anchor.y0, anchor.x0));
  if (!(res <= anchor_tol))
    throw Error("anchor residual " + std::to_string(res) + " exceeds tolerance");

  AnchoredProblem prob;
  prob.k0 = jacobian_y(system, anchor.y0, anchor.x0);
  prob.j0 = jacobian_x(system, anchor.y0, anchor.x0);
  prob.k0t_qr = householder_qr(prob.k0.transposed());  // throws if not onto
  prob.system = std::move(system);
  prob.anchor = std::move(anchor);
  return prob;
}

/// r(x) = F(y0, x), the equation violation at the unperturbed root.
inline Vector residual(const AnchoredProblem& prob, const Vector& x) {
  return eval_f(prob.system, prob.anchor.y0, x);
}

// ---------------------------------------------------------------------------
// The three linearized minimal-perturbation problems. Each solve returns the
// primal value with its minimizer and the dual value with its certificate;
// primal and dual travel independent code paths (least-norm solve vs the
// R^{-T} formula), so their agreement is a checkable invariant rather than an
// identity of the implementation.
// ---------------------------------------------------------------------------

struct MuSolution {
  double value = 0.0;
  Vector delta_y;      // primal minimizer
  double dual_value = 0.0;
  Vector certificate;  // dual maximizer u; empty when the value is zero
};

namespace detail {

inline MuSolution assemble_mu(const QrFactors& kt_qr, const Vector& rhs) {
  // primal: min ||dy|| s.t. K dy = -rhs;  dual: max u^T rhs s.t. ||K^T u|| <= 1
  MuSolution out;
  out.delta_y = least_norm_solve(kt_qr, scaled(rhs, -1.0));
  out.value = norm2(out.delta_y);
  DualMax dual = dual_max_2norm(kt_qr, rhs);
  out.dual_value = dual.value;
  if (out.value > 0.0) out.certificate = std::move(dual.maximizer);
  return out;
}

}  // namespace detail

/// mu1: constraint d1F(y0, x) dy = -F(y0, x). K(x) is re-factored per call.
/// Throws RankDeficientError when x leaves the neighborhood where K(x) is onto.
inline MuSolution mu1(const AnchoredProblem& prob, const Vector& x) {
  const Matrix kx = jacobian_y(prob.system, prob.anchor.y0, x);
  const QrFactors kt_qr = householder_qr(kx.transposed());
  return detail::assemble_mu(kt_qr, residual(prob, x));
}

/// mu2: constraint d1F(y0, x0) dy = -F(y0, x), using the cached QR of K(x0)^T.
inline MuSolution mu2(const AnchoredProblem& prob, const Vector& x) {
  return detail::assemble_mu(prob.k0t_qr, residual(prob, x));
}

/// mu3: constraint d1F(y0, x0) dy = -d2F(y0, x0) (x - x0), the full
/// linearization.
inline MuSolution mu3(const AnchoredProblem& prob, const Vector& x) {
  const Vector dx = sub(x, prob.anchor.x0);
  return detail::assemble_mu(prob.k0t_qr, prob.j0 * dx);
}

/// Relative gap |primal - dual| / (1 + primal) between the two code paths.
inline double duality_gap(const AnchoredProblem& prob, const Vector& x, int which) {
  MuSolution sol;
  switch (which) {
    case 1:
      sol = mu1(prob, x);
      break;
    case 2:
      sol = mu2(prob, x);
      break;
    case 3:
      sol = mu3(prob, x);
      break;
    default:
      throw Error("duality_gap: which must be 1, 2 or 3");
  }
  return std::abs(sol.value - sol.dual_value) / (1.0 + sol.value);
}

// ---------------------------------------------------------------------------
// All four values at one x.
// ---------------------------------------------------------------------------

struct MuEstimates {
  Vector x;
  std::optional<double> mu_f;   // absent when not requested or not converged
  std::optional<Vector> y_star;
  MuSolution m1, m2, m3;

  double gap(int which) const {
    const MuSolution& s = which == 1 ? m1 : which == 2 ? m2 : m3;
    return std::abs(s.value - s.dual_value) / (1.0 + s.value);
  }
};

}  // namespace minpert
