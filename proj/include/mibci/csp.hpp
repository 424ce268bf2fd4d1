#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mibci/core.hpp"
#include "mibci/spd.hpp"

namespace mibci::csp {

using spd::SpdMatrix;

inline constexpr int kDefaultFiltersPerSide = 2;

struct GevdResult {
  Vector values;   // descending
  Matrix vectors;  // unit-norm columns, largest-magnitude entry positive
};

/// Scales `v` to unit norm and flips it so its largest-magnitude entry is
/// positive (first such entry on ties).
inline void canonicalize(Eigen::Ref<Vector> v) {
  v.normalize();
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
}

/// C1 u = lambda C2 u with eigenvalues sorted descending.  Ties keep the
/// solver's original order.
inline GevdResult gevd(const SpdMatrix& c1, const SpdMatrix& c2) {
  const auto ges = spd::detail::generalized_eig(c1.matrix(), c2.matrix());
  const auto n = ges.values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ges.values(a) > ges.values(b); });
  GevdResult out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = order[static_cast<std::size_t>(i)];
    out.values(i) = ges.values(src);
    out.vectors.col(i) = ges.vectors.col(src);
    canonicalize(out.vectors.col(i));
  }
  return out;
}

/// Two-class CSP on class-mean covariances: the `per_side` eigenvectors
/// with the largest eigenvalues followed by the `per_side` with the
/// smallest (smallest first).
inline Matrix train_csp_pair(std::span<const SpdMatrix> covs_a, std::span<const SpdMatrix> covs_b,
                             int per_side = kDefaultFiltersPerSide) {
  if (covs_a.empty() || covs_b.empty()) throw DataError("CSP class has no trials");
  if (per_side < 1) throw ConfigError("CSP needs at least one filter per side");
  const SpdMatrix mean_a = spd::arithmetic_mean(covs_a);
  const SpdMatrix mean_b = spd::arithmetic_mean(covs_b);
  const auto n = mean_a.dim();
  if (2 * per_side > n)
    throw ConfigError("CSP asks for " + std::to_string(2 * per_side) + " filters from " +
                      std::to_string(n) + " channels");
  const GevdResult g = gevd(mean_a, mean_b);
  Matrix filters(n, 2 * per_side);
  for (int i = 0; i < per_side; ++i) {
    filters.col(i) = g.vectors.col(i);
    filters.col(per_side + i) = g.vectors.col(n - 1 - i);
  }
  return filters;
}

/// Trial-based convenience overload: each trial is channel x sample.
inline Matrix train_csp_pair(std::span<const Matrix> trials_a, std::span<const Matrix> trials_b,
                             int per_side = kDefaultFiltersPerSide,
                             double eps = spd::kRidgeEpsilon) {
  const auto covs = [eps](std::span<const Matrix> trials) {
    std::vector<SpdMatrix> out;
    out.reserve(trials.size());
    for (const auto& x : trials) out.push_back(spd::covariance(x, eps));
    return out;
  };
  return train_csp_pair(std::span<const SpdMatrix>(covs(trials_a)),
                        std::span<const SpdMatrix>(covs(trials_b)), per_side);
}

/// Spatial filters of one multiscale leaf.
struct CspBank {
  int band = 0;
  int window = 0;
  Matrix filters;                              // n_channels x n_filters
  std::vector<std::pair<int, int>> pair_of;    // class pair behind each column

  Eigen::Index n_filters() const noexcept { return filters.cols(); }
};

/// All unordered class pairs (1,2), (1,3), ..., in lexicographic order.
inline std::vector<std::pair<int, int>> class_pairs(int n_classes) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 1; a <= n_classes; ++a)
    for (int b = a + 1; b <= n_classes; ++b) pairs.emplace_back(a, b);
  return pairs;
}

/// One-vs-one multiclass CSP: per_side * 2 filters for every class pair,
/// concatenated in pair order.  `per_class[k]` holds the covariances of
/// class k + 1.
inline CspBank train_csp_multiclass(std::span<const std::vector<SpdMatrix>> per_class,
                                    int per_side = kDefaultFiltersPerSide) {
  if (per_class.size() < 2) throw DataError("CSP needs at least two classes");
  for (std::size_t k = 0; k < per_class.size(); ++k)
    if (per_class[k].empty())
      throw DataError("CSP class " + std::to_string(k + 1) + " has no trials");
  const auto pairs = class_pairs(static_cast<int>(per_class.size()));
  const auto n = per_class.front().front().dim();
  CspBank bank;
  bank.filters.resize(n, static_cast<Eigen::Index>(pairs.size()) * 2 * per_side);
  Eigen::Index col = 0;
  for (const auto& [a, b] : pairs) {
    const Matrix f = train_csp_pair(std::span<const SpdMatrix>(per_class[a - 1]),
                                    std::span<const SpdMatrix>(per_class[b - 1]), per_side);
    bank.filters.middleCols(col, f.cols()) = f;
    col += f.cols();
    bank.pair_of.insert(bank.pair_of.end(), static_cast<std::size_t>(f.cols()), {a, b});
  }
  return bank;
}

/// Log of normalized spatially filtered variances, computed from the
/// scatter X X^T of the window:
///   f_l = log( w_l^T S w_l / sum_k w_k^T S w_k ).
inline Vector csp_features_from_scatter(const Matrix& filters, const Matrix& scatter) {
  const Vector power = (scatter * filters).cwiseProduct(filters).colwise().sum().transpose();
  const double total = power.sum();
  if (!(total > 0.0) || !std::isfinite(total) || !(power.minCoeff() > 0.0))
    throw NumericError("degenerate window: zero spatially filtered variance");
  return (power / total).array().log().matrix();
}

inline Vector csp_features(const CspBank& bank, const Matrix& x) {
  if (x.rows() != bank.filters.rows())
    throw std::invalid_argument("channel count does not match the CSP bank");
  if (x.cols() < 2) throw NumericError("CSP features need at least 2 samples");
  return csp_features_from_scatter(bank.filters, spd::scatter(x));
}

}  // namespace mibci::csp
