// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "minpert/errors.hpp"

namespace minpert {

using Vector = std::vector<double>;

/// Relative tolerance for the QR rank test: a diagonal of R whose magnitude
/// falls below rank_tol times the largest diagonal marks the input as rank
/// deficient.
inline constexpr double kQrRankTol = 1e-12;

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles.
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_)
        throw DimensionError("from_rows: ragged row list");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Vector column(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool is_zero() const {
    for (double v : data_)
      if (v != 0.0) return false;
    return true;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Vector operator*(const Matrix& a, const Vector& v) {
  if (v.size() != a.cols()) throw DimensionError("matrix-vector size mismatch");
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matrix-matrix size mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Vector helpers and norms.
// ---------------------------------------------------------------------------

enum class NormKind { One, Two, Infinity };

inline double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double vector_norm(const Vector& v, NormKind kind) {
  switch (kind) {
    case NormKind::One: {
      double s = 0.0;
      for (double x : v) s += std::abs(x);
      return s;
    }
    case NormKind::Two:
      return norm2(v);
    case NormKind::Infinity: {
      double s = 0.0;
      for (double x : v) s = std::max(s, std::abs(x));
      return s;
    }
  }
  return 0.0;
}

/// Dual pairing: one <-> infinity, two <-> two.
inline NormKind dual_of(NormKind kind) {
  switch (kind) {
    case NormKind::One:
      return NormKind::Infinity;
    case NormKind::Infinity:
      return NormKind::One;
    case NormKind::Two:
      return NormKind::Two;
  }
  return NormKind::Two;
}

inline std::string norm_name(NormKind kind) {
  switch (kind) {
    case NormKind::One:
      return "one";
    case NormKind::Two:
      return "two";
    case NormKind::Infinity:
      return "infinity";
  }
  return "?";
}

inline Vector sub(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("sub: size mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("add: size mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector scaled(const Vector& a, double c) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

// ---------------------------------------------------------------------------
// Householder QR.
// ---------------------------------------------------------------------------

/// Thin QR factorization a = q * r with orthonormal q (rows x cols) and
/// square upper-triangular r whose diagonal is nonnegative.
struct QrFactors {
  Matrix q;
  Matrix r;
};

/// Householder QR of a tall matrix (rows >= cols, full column rank).
/// The sign convention fixes every diagonal of R to be nonnegative, which
/// makes the factors deterministic. Throws RankDeficientError when some
/// |R[k,k]| falls below rank_tol times the largest diagonal.
inline QrFactors householder_qr(const Matrix& a, double rank_tol = kQrRankTol) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (rows == 0 || cols == 0) throw DimensionError("householder_qr: empty matrix");
  if (rows < cols) throw DimensionError("householder_qr: requires rows >= cols");

  Matrix work = a;
  std::vector<Vector> reflectors;
  reflectors.reserve(cols);

  for (std::size_t k = 0; k < cols; ++k) {
    double colnorm = 0.0;
    for (std::size_t i = k; i < rows; ++i) colnorm += work(i, k) * work(i, k);
    colnorm = std::sqrt(colnorm);

    Vector v(rows - k, 0.0);
    if (colnorm > 0.0) {
      const double alpha = work(k, k) >= 0.0 ? -colnorm : colnorm;
      for (std::size_t i = k; i < rows; ++i) v[i - k] = work(i, k);
      v[0] -= alpha;
      const double vnorm = norm2(v);
      if (vnorm > 0.0)
        for (double& x : v) x /= vnorm;
      // apply H = I - 2 v v^T to the trailing block
      for (std::size_t j = k; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t i = k; i < rows; ++i) s += v[i - k] * work(i, j);
        s *= 2.0;
        for (std::size_t i = k; i < rows; ++i) work(i, j) -= s * v[i - k];
      }
      work(k, k) = alpha;
      for (std::size_t i = k + 1; i < rows; ++i) work(i, k) = 0.0;
    }
    reflectors.push_back(std::move(v));
  }

  Matrix r(cols, cols);
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = i; j < cols; ++j) r(i, j) = work(i, j);

  // q = H_0 H_1 ... H_{cols-1} applied to the leading columns of I
  Matrix q(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) q(j, j) = 1.0;
  for (std::size_t k = cols; k-- > 0;) {
    const Vector& v = reflectors[k];
    if (v.empty()) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < rows; ++i) s += v[i - k] * q(i, j);
      s *= 2.0;
      for (std::size_t i = k; i < rows; ++i) q(i, j) -= s * v[i - k];
    }
  }

  // nonnegative diagonal convention
  for (std::size_t k = 0; k < cols; ++k) {
    if (r(k, k) < 0.0) {
      for (std::size_t j = k; j < cols; ++j) r(k, j) = -r(k, j);
      for (std::size_t i = 0; i < rows; ++i) q(i, k) = -q(i, k);
    }
  }

  double maxdiag = 0.0;
  for (std::size_t k = 0; k < cols; ++k) maxdiag = std::max(maxdiag, r(k, k));
  if (maxdiag == 0.0)
    throw RankDeficientError("householder_qr: zero matrix");
  for (std::size_t k = 0; k < cols; ++k)
    if (r(k, k) <= rank_tol * maxdiag)
      throw RankDeficientError("householder_qr: rank deficient at column " +
                               std::to_string(k));

  return {std::move(q), std::move(r)};
}

/// Forward substitution for r^T w = b with upper-triangular r.
inline Vector solve_rt(const Matrix& r, const Vector& b) {
  const std::size_t n = r.cols();
  if (b.size() != n) throw DimensionError("solve_rt: size mismatch");
  Vector w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < i; ++j) s -= r(j, i) * w[j];
    w[i] = s / r(i, i);
  }
  return w;
}

/// Back substitution for r u = b with upper-triangular r.
inline Vector solve_r(const Matrix& r, const Vector& b) {
  const std::size_t n = r.cols();
  if (b.size() != n) throw DimensionError("solve_r: size mismatch");
  Vector u(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= r(i, j) * u[j];
    u[i] = s / r(i, i);
  }
  return u;
}

// ---------------------------------------------------------------------------
// Minimum-norm solve and its dual.
// ---------------------------------------------------------------------------

/// Minimum 2-norm solution of the underdetermined system a z = b, where a is
/// p x m with p <= m and full row rank. Uses the QR factorization of a^T
/// (z = Q R^{-T} b) rather than normal equations.
inline Vector least_norm_solve(const QrFactors& at_qr, const Vector& b) {
  Vector w = solve_rt(at_qr.r, b);
  return at_qr.q * w;
}

inline Vector least_norm_solve(const Matrix& a, const Vector& b) {
  if (a.rows() > a.cols())
    throw DimensionError("least_norm_solve: requires rows <= cols");
  if (b.size() != a.rows()) throw DimensionError("least_norm_solve: rhs size mismatch");
  return least_norm_solve(householder_qr(a.transposed()), b);
}

/// Value and maximizer of  max u^T s  subject to  ||k^T u||_2 <= 1,
/// computed as ||R^{-T} s||_2 from the QR factorization k^T = QR. The
/// maximizer R^{-1} R^{-T} s / ||R^{-T} s||_2 certifies the value: it is
/// feasible and attains it.
struct DualMax {
  double value = 0.0;
  Vector maximizer;  // u with ||k^T u||_2 <= 1 and u^T s == value
};

inline DualMax dual_max_2norm(const QrFactors& kt_qr, const Vector& s) {
  Vector w = solve_rt(kt_qr.r, s);
  DualMax out;
  out.value = norm2(w);
  if (out.value > 0.0) {
    out.maximizer = solve_r(kt_qr.r, scaled(w, 1.0 / out.value));
  } else {
    out.maximizer.assign(kt_qr.r.cols(), 0.0);
  }
  return out;
}

inline DualMax dual_max_2norm(const Matrix& k, const Vector& s) {
  if (k.rows() > k.cols())
    throw DimensionError("dual_max_2norm: requires rows <= cols");
  if (s.size() != k.rows()) throw DimensionError("dual_max_2norm: rhs size mismatch");
  return dual_max_2norm(householder_qr(k.transposed()), s);
}

// ---------------------------------------------------------------------------
// Singular values by one-sided Jacobi.
// ---------------------------------------------------------------------------

/// All min(rows, cols) singular values, sorted descending.
inline std::vector<double> singular_values(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0)
    throw DimensionError("singular_values: empty matrix");
  Matrix b = a.rows() >= a.cols() ? a : a.transposed();
  const std::size_t n = b.cols(), m = b.rows();

  const double tol = 1e-15;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          alpha += b(k, i) * b(k, i);
          beta += b(k, j) * b(k, j);
          gamma += b(k, i) * b(k, j);
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0)
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double bi = b(k, i), bj = b(k, j);
          b(k, i) = c * bi - s * bj;
          b(k, j) = s * bi + c * bj;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(b.column(j));
  std::sort(sigma.rbegin(), sigma.rend());
  return sigma;
}

inline double smallest_singular_value(const Matrix& a) {
  return singular_values(a).back();
}

// ---------------------------------------------------------------------------
// Matrix lower bound.
// ---------------------------------------------------------------------------

/// Interval estimate [lo, hi]; lo == hi for exact values.
struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
};

/// Definitional sampling estimate of the matrix lower bound of a full-row-rank
/// matrix in the given vector norm: the largest constant c such that every y
/// has a preimage x with c * ||x|| <= ||y||.
///
/// Directions y are sampled on the unit sphere of the requested norm and each
/// gets its minimum 2-norm preimage x. The preimage is exact for the 2-norm;
/// for the 1- and infinity-norms it brackets the minimum-norm preimage through
/// the standard norm inequalities, which is where the interval width comes
/// from. The lower end additionally carries a resolution allowance for the
/// finite sample: with n samples on the (p-1)-sphere the nearest sample to the
/// minimizing direction lies within an angle ~ (1/n)^(1/(p-1)) and the
/// per-direction value is locally quadratic around its minimum.
inline Bracket lower_bound_sampling_bracket(const Matrix& a, NormKind norm,
                                            std::size_t samples = 10000,
                                            std::uint64_t seed = 20240613u) {
  if (a.is_zero()) throw ZeroMatrixError("lower_bound_sampling_bracket: zero matrix");
  const std::size_t p = a.rows();
  const std::size_t m = a.cols();
  const QrFactors at_qr = householder_qr(a.transposed());

  const double sqrt_m = std::sqrt(static_cast<double>(m));
  double lo_min = std::numeric_limits<double>::infinity();
  double hi_min = std::numeric_limits<double>::infinity();

  auto account = [&](const Vector& y) {
    const double yn = vector_norm(y, norm);
    if (yn <= 0.0) return;
    const Vector x = least_norm_solve(at_qr, scaled(y, 1.0 / yn));
    double lo = 0.0, hi = 0.0;
    switch (norm) {
      case NormKind::Two:
        lo = hi = 1.0 / norm2(x);
        break;
      case NormKind::One:
        lo = 1.0 / vector_norm(x, NormKind::One);
        hi = 1.0 / norm2(x);
        break;
      case NormKind::Infinity:
        lo = 1.0 / vector_norm(x, NormKind::Infinity);
        hi = sqrt_m / norm2(x);
        break;
    }
    lo_min = std::min(lo_min, lo);
    hi_min = std::min(hi_min, hi);
  };

  if (p == 1) {
    // the unit sphere is {+1, -1}; both give the same value
    account(Vector{1.0});
    account(Vector{-1.0});
    return {lo_min, hi_min};
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < samples; ++i) {
    Vector y(p);
    for (double& v : y) v = gauss(rng);
    account(y);
  }

  const double resolution =
      std::min(0.5, 0.5 * std::pow(160.0 / static_cast<double>(samples),
                                   2.0 / static_cast<double>(p - 1)));
  return {lo_min * (1.0 - resolution), hi_min};
}

/// Matrix lower bound. For the 2-norm this is the smallest nonzero singular
/// value, returned as a zero-width bracket; for the 1- and infinity-norms no
/// cheap exact formula is available and the sampling bracket is returned.
inline Bracket matrix_lower_bound(const Matrix& a, NormKind norm,
                                  std::size_t samples = 10000,
                                  std::uint64_t seed = 20240613u) {
  if (a.is_zero()) throw ZeroMatrixError("matrix_lower_bound: zero matrix");
  if (norm == NormKind::Two) {
    const std::vector<double> sigma = singular_values(a);
    const double largest = sigma.front();
    double value = 0.0;
    for (double s : sigma)
      if (s > kQrRankTol * largest) value = s;  // smallest above the rank cut
    return {value, value};
  }
  return lower_bound_sampling_bracket(a, norm, samples, seed);
}

}  // namespace minpert
