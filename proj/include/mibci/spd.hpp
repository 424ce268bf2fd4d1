#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mibci/core.hpp"

// Numerics on symmetric positive-definite matrices.  All matrix functions
// go through the symmetric eigendecomposition: for a symmetric M = V L V^T,
// f(M) = V f(L) V^T.

namespace mibci::spd {

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kRidgeEpsilon = 1e-6;

struct KarcherOptions {
  double tol = 1e-8;
  int max_iter = 50;
};

/// Max-norm asymmetry relative to the largest entry.
inline bool is_symmetric(const Matrix& m, double tol = kSymmetryTol) {
  if (m.rows() != m.cols()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Symmetric positive-definite matrix.  Construction checks symmetry and
/// runs a Cholesky factorization to confirm definiteness.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0)
      throw NumericError("SPD matrix must be square and non-empty");
    if (!m_.allFinite()) throw NumericError("SPD matrix has non-finite entries");
    if (!is_symmetric(m_)) throw NumericError("matrix is not symmetric");
    if (Eigen::LLT<Matrix>(m_).info() != Eigen::Success)
      throw NumericError("matrix is not positive definite");
  }

  static SpdMatrix identity(Eigen::Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

  const Matrix& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

 private:
  Matrix m_;
};

/// Symmetric matrix in the tangent space of some reference point.
class TangentVector {
 public:
  explicit TangentVector(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw NumericError("tangent vector must be square");
    if (!is_symmetric(m_)) throw NumericError("tangent vector is not symmetric");
  }

  static TangentVector zero(Eigen::Index n) { return TangentVector(Matrix::Zero(n, n)); }

  const Matrix& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

 private:
  Matrix m_;
};

namespace detail {

inline void require_same_dim(Eigen::Index a, Eigen::Index b) {
  if (a != b)
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
}

struct Eigensystem {
  Vector values;  // ascending
  Matrix vectors;
};

inline Eigensystem eigensystem(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

template <class F>
Matrix spectral_map(const Eigensystem& es, F f) {
  const Vector mapped = es.values.unaryExpr(f);
  return symmetrize(es.vectors * mapped.asDiagonal() * es.vectors.transpose());
}

inline void require_positive(const Eigensystem& es) {
  if (!(es.values.minCoeff() > 0.0))
    throw NumericError("matrix is not positive definite (min eigenvalue " +
                       std::to_string(es.values.minCoeff()) + ")");
}

/// P^{1/2} and P^{-1/2} from one eigendecomposition.
struct Roots {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline Roots roots(const SpdMatrix& p) {
  const Eigensystem es = eigensystem(p.matrix());
  require_positive(es);
  return {spectral_map(es, [](double v) { return std::sqrt(v); }),
          spectral_map(es, [](double v) { return 1.0 / std::sqrt(v); })};
}

/// Generalized symmetric-definite problem A u = lambda B u by Cholesky
/// whitening: B = L L^T, M = L^{-1} A L^{-T}, M = Q diag(lambda) Q^T,
/// u = L^{-T} q.  Eigenvalues are ascending.
struct GeneralizedEigensystem {
  Vector values;
  Matrix vectors;
};

inline GeneralizedEigensystem generalized_eig(const Matrix& a, const Matrix& b) {
  require_same_dim(a.rows(), b.rows());
  const Eigen::LLT<Matrix> llt(b);
  if (llt.info() != Eigen::Success) throw NumericError("Cholesky factorization failed");
  const auto lower = llt.matrixL();
  Matrix tmp = lower.solve(a);                                  // L^{-1} A
  Matrix whitened = lower.solve(tmp.transpose()).transpose();   // L^{-1} A L^{-T}
  const Eigensystem es = eigensystem(symmetrize(whitened));
  Matrix vectors = llt.matrixU().solve(es.vectors);             // L^{-T} Q
  return {es.values, std::move(vectors)};
}

}  // namespace detail

/// X X^T for a channel x sample block.
inline Matrix scatter(const Eigen::Ref<const Matrix>& x) {
  Matrix s = Matrix::Zero(x.rows(), x.rows());
  s.selfadjointView<Eigen::Lower>().rankUpdate(x);
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return s;
}

/// Ridge regularization: C + eps * (tr C / n) I whenever the smallest
/// eigenvalue is below eps * tr C / n.  The eigenvalue test is a Cholesky
/// attempt on the shifted matrix.
inline SpdMatrix regularize(Matrix c, double eps = kRidgeEpsilon) {
  const auto n = c.rows();
  const double floor = eps * c.trace() / static_cast<double>(n);
  if (!(floor > 0.0) || !std::isfinite(floor))
    throw NumericError("degenerate covariance (non-positive trace)");
  Matrix shifted = c;
  shifted.diagonal().array() -= floor;
  if (Eigen::LLT<Matrix>(shifted).info() != Eigen::Success) c.diagonal().array() += floor;
  return SpdMatrix(std::move(c));
}

inline SpdMatrix covariance_from_scatter(const Matrix& scatter_matrix, Eigen::Index n_samples,
                                         double eps = kRidgeEpsilon) {
  if (n_samples < 2) throw NumericError("covariance needs at least 2 samples");
  return regularize(scatter_matrix / static_cast<double>(n_samples - 1), eps);
}

/// Channel covariance X X^T / (N - 1) of a zero-mean (bandpassed) signal,
/// no mean subtraction, ridge-regularized to stay SPD.
inline SpdMatrix covariance(const Eigen::Ref<const Matrix>& x, double eps = kRidgeEpsilon) {
  if (x.cols() < 2) throw NumericError("covariance needs at least 2 samples");
  if (!x.allFinite()) throw NumericError("covariance input contains non-finite samples");
  return covariance_from_scatter(scatter(x), x.cols(), eps);
}

inline SpdMatrix arithmetic_mean(std::span<const SpdMatrix> cs) {
  if (cs.empty()) throw NumericError("mean of an empty set");
  Matrix sum = Matrix::Zero(cs.front().dim(), cs.front().dim());
  for (const auto& c : cs) {
    detail::require_same_dim(c.dim(), sum.rows());
    sum += c.matrix();
  }
  return SpdMatrix(sum / static_cast<double>(cs.size()));
}

inline TangentVector logm(const SpdMatrix& c) {
  const auto es = detail::eigensystem(c.matrix());
  detail::require_positive(es);
  return TangentVector(detail::spectral_map(es, [](double v) { return std::log(v); }));
}

inline SpdMatrix expm(const TangentVector& s) {
  return SpdMatrix(
      detail::spectral_map(detail::eigensystem(s.matrix()), [](double v) { return std::exp(v); }));
}

inline Matrix sqrtm(const SpdMatrix& c) { return detail::roots(c).sqrt; }
inline Matrix invsqrtm(const SpdMatrix& c) { return detail::roots(c).inv_sqrt; }

/// Log map at `ref`: ref^{1/2} logm(ref^{-1/2} C ref^{-1/2}) ref^{1/2}.
inline TangentVector log_map(const SpdMatrix& c, const SpdMatrix& ref) {
  detail::require_same_dim(c.dim(), ref.dim());
  const auto r = detail::roots(ref);
  const Matrix inner = symmetrize(r.inv_sqrt * c.matrix() * r.inv_sqrt);
  const auto es = detail::eigensystem(inner);
  detail::require_positive(es);
  const Matrix l = detail::spectral_map(es, [](double v) { return std::log(v); });
  return TangentVector(symmetrize(r.sqrt * l * r.sqrt));
}

/// Exp map at `ref`: ref^{1/2} expm(ref^{-1/2} S ref^{-1/2}) ref^{1/2}.
inline SpdMatrix exp_map(const TangentVector& s, const SpdMatrix& ref) {
  detail::require_same_dim(s.dim(), ref.dim());
  const auto r = detail::roots(ref);
  const Matrix inner = symmetrize(r.inv_sqrt * s.matrix() * r.inv_sqrt);
  const Matrix e = detail::spectral_map(detail::eigensystem(inner), [](double v) { return std::exp(v); });
  return SpdMatrix(symmetrize(r.sqrt * e * r.sqrt));
}

/// Tr(ref^{-1} S1 ref^{-1} S2).
inline double inner_tangent(const TangentVector& s1, const TangentVector& s2, const SpdMatrix& ref) {
  detail::require_same_dim(s1.dim(), ref.dim());
  detail::require_same_dim(s2.dim(), ref.dim());
  const Eigen::LLT<Matrix> llt(ref.matrix());
  const Matrix a = llt.solve(s1.matrix());
  const Matrix b = llt.solve(s2.matrix());
  return a.cwiseProduct(b.transpose()).sum();
}

inline double dist_euclid(const SpdMatrix& a, const SpdMatrix& b) {
  detail::require_same_dim(a.dim(), b.dim());
  return (a.matrix() - b.matrix()).norm();
}

/// ||logm(A^{-1} B)||_F from the generalized eigenvalues of (B, A).
inline double dist_riemann(const SpdMatrix& a, const SpdMatrix& b) {
  const auto ges = detail::generalized_eig(b.matrix(), a.matrix());
  double sum = 0.0;
  for (double v : ges.values) {
    if (!(v > 0.0)) throw NumericError("non-positive generalized eigenvalue");
    const double l = std::log(v);
    sum += l * l;
  }
  return std::sqrt(sum);
}

struct KarcherResult {
  SpdMatrix mean;
  int iterations = 0;
  double residual = 0.0;  // ||mean of whitened tangent logs||_F at `mean`
};

/// Riemannian (Karcher) mean by fixed-point iteration
///   G <- exp_G( t * mean_i log_G(C_i) ),
/// started from the arithmetic mean, with t chosen by a line search (t = 1
/// is the textbook update).  The residual is the Riemannian norm
/// of the mean tangent vector, ||mean_i logm(G^{-1/2} C_i G^{-1/2})||_F,
/// which is the gradient of the summed squared distances up to a factor.
inline KarcherResult geometric_mean_detailed(std::span<const SpdMatrix> cs,
                                             const KarcherOptions& opts = {}) {
  if (cs.empty()) throw NumericError("mean of an empty set");
  if (!(opts.tol > 0.0)) throw ConfigError("Karcher tolerance must be positive");
  const auto n = cs.front().dim();
  struct State {
    SpdMatrix g;
    detail::Roots r;
    Matrix direction;  // mean of log(G^{-1/2} C G^{-1/2}); its norm is the residual
    double cost = 0.0;  // mean squared Riemannian distance to the set
  };
  const auto evaluate = [&](SpdMatrix g) {
    State st{std::move(g), {}, Matrix::Zero(n, n), 0.0};
    st.r = detail::roots(st.g);
    for (const auto& c : cs) {
      detail::require_same_dim(c.dim(), n);
      const auto es = detail::eigensystem(symmetrize(st.r.inv_sqrt * c.matrix() * st.r.inv_sqrt));
      detail::require_positive(es);
      st.direction += detail::spectral_map(es, [](double v) { return std::log(v); });
      st.cost += es.values.array().log().square().sum();
    }
    st.direction /= static_cast<double>(cs.size());
    st.cost /= static_cast<double>(cs.size());
    return st;
  };

  State cur = evaluate(arithmetic_mean(cs));
  // Updates move along the geodesic G^{1/2} exp(t D) G^{1/2}; t = 1 is the
  // plain fixed-point step.  On widely spread sets that step oscillates, so
  // t comes from a quadratic model of the cost along the geodesic built
  // from its slope at 0 (-2 ||D||^2) and its value at the trial step.
  double step = 1.0;
  for (int iter = 0;; ++iter) {
    const double residual = cur.direction.norm();
    if (residual < opts.tol) return {std::move(cur.g), iter, residual};
    if (iter >= opts.max_iter)
      throw NumericError("Karcher mean did not converge after " + std::to_string(opts.max_iter) +
                         " iterations (residual " + std::to_string(residual) + ")");
    const auto es = detail::eigensystem(cur.direction);
    const auto move = [&](double t) {
      return evaluate(SpdMatrix(symmetrize(
          cur.r.sqrt * detail::spectral_map(es, [t](double v) { return std::exp(t * v); }) *
          cur.r.sqrt)));
    };
    const double slope = 2.0 * residual * residual;
    double t = step;
    State best = move(t);
    // Once the predicted decrease drops under the rounding level of the
    // cost, cost comparisons are noise; keep the last step.
    if (slope * t < 1e-9 * cur.cost) {
      cur = std::move(best);
      continue;
    }
    const double curvature = (best.cost - cur.cost + slope * t) / (t * t);
    if (curvature > 0.0) {
      const double t_model = std::clamp(slope / (2.0 * curvature), 0.125 * t, 4.0 * t);
      if (std::abs(t_model - t) > 0.05 * t) {
        State alt = move(t_model);
        if (alt.cost < best.cost) {
          best = std::move(alt);
          t = t_model;
        }
      }
    }
    while (best.cost > cur.cost && t > 1e-3) {
      t *= 0.5;
      best = move(t);
    }
    cur = std::move(best);
    step = t;
  }
}

inline SpdMatrix geometric_mean(std::span<const SpdMatrix> cs, const KarcherOptions& opts = {}) {
  return geometric_mean_detailed(cs, opts).mean;
}

/// Upper triangle, row-major, off-diagonals scaled by sqrt(2) so that
/// ||vect(C)||_2 == ||C||_F.
inline Vector vect(const Matrix& c) {
  if (!is_symmetric(c)) throw NumericError("vect requires a symmetric matrix");
  const auto n = c.rows();
  Vector v(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    v(k++) = c(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) v(k++) = std::numbers::sqrt2 * c(i, j);
  }
  return v;
}

inline Matrix unvect(const Vector& v) {
  const auto n = static_cast<Eigen::Index>((std::sqrt(8.0 * static_cast<double>(v.size()) + 1.0) - 1.0) / 2.0 + 0.5);
  if (n * (n + 1) / 2 != v.size()) throw std::invalid_argument("length is not triangular");
  Matrix c(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = v(k++);
    for (Eigen::Index j = i + 1; j < n; ++j) c(i, j) = c(j, i) = v(k++) / std::numbers::sqrt2;
  }
  return c;
}

}  // namespace mibci::spd
