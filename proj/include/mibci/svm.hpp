#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mibci/core.hpp"
#include "mibci/parallel.hpp"
#include "mibci/rng.hpp"

// L2-regularized hinge-loss SVM, one-vs-rest for multiclass.  The bias is
// absorbed as a constant unit feature (the kernel becomes K + 1), which
// removes the equality constraint from the dual: every binary problem is
//   max_a  sum(a) - 1/2 a^T Q a,   0 <= a_i <= C,   Q_ij = y_i y_j (K_ij + 1)
// and is solved by dual coordinate ascent on the Gram matrix.

namespace mibci::svm {

enum class KernelKind { linear, rbf, poly };

inline KernelKind parse_kernel(std::string_view s) {
  if (s == "linear") return KernelKind::linear;
  if (s == "rbf") return KernelKind::rbf;
  if (s == "poly") return KernelKind::poly;
  throw ConfigError("unknown SVM kernel '" + std::string(s) + "'");
}

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::poly: return "poly";
  }
  return "?";
}

/// gamma unset means 1 / (n_features * var(features)).
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  std::optional<double> gamma;
  int degree = 3;
  double coef0 = 1.0;
};

struct SolverOptions {
  double tol = 1e-3;  // duality gap, relative to max(1, primal objective)
  int max_epochs = 20000;
  std::uint64_t seed = 0x53564D5F444341ULL;
};

struct SvmOptions {
  bool standardize = true;
  SolverOptions solver;
};

/// Per-feature z-scoring with population statistics from training data.
/// Constant features keep scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.scale = ((x.rowwise() - s.mean.transpose()).colwise().squaredNorm().transpose() /
               static_cast<double>(x.rows()))
                  .cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
    return s;
  }

  static Standardizer identity(Eigen::Index d) {
    return {Vector::Zero(d), Vector::Ones(d)};
  }

  Matrix apply(const Matrix& x) const {
    return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
        .matrix();
  }
};

struct DualSolution {
  Vector alpha;
  double bias = 0.0;  // sum_i alpha_i y_i
  double gap = 0.0;
  int epochs = 0;
  bool converged = false;
};

/// Dual coordinate ascent for one binary problem.  `gram` is the kernel
/// matrix without the bias term, `y` holds +-1.
inline DualSolution solve_dual(const Matrix& gram, const Vector& y, double c,
                               const SolverOptions& opts = {}) {
  if (!(c > 0.0)) throw ConfigError("SVM regularization C must be positive");
  const auto n = y.size();
  const Matrix gram_b = gram.array() + 1.0;
  DualSolution sol;
  sol.alpha = Vector::Zero(n);
  Vector grad = -Vector::Ones(n);  // Q alpha - 1
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(opts.seed);

  for (sol.epochs = 1; sol.epochs <= opts.max_epochs; ++sol.epochs) {
    rng.shuffle(std::span<Eigen::Index>(order));
    for (const auto i : order) {
      const double g = grad(i);
      const double a = sol.alpha(i);
      const double projected = a <= 0.0 ? std::min(g, 0.0) : (a >= c ? std::max(g, 0.0) : g);
      if (projected == 0.0) continue;
      const double next = std::clamp(a - g / gram_b(i, i), 0.0, c);
      const double delta = next - a;
      if (delta == 0.0) continue;
      sol.alpha(i) = next;
      grad.array() += (delta * y(i)) * y.array() * gram_b.col(i).array();
    }

    // Exact gradient and duality gap once per epoch.
    grad = y.cwiseProduct(gram_b * y.cwiseProduct(sol.alpha)) - Vector::Ones(n);
    const double quad = sol.alpha.dot(grad + Vector::Ones(n));
    const double hinge = (-grad).cwiseMax(0.0).sum();
    const double primal = 0.5 * quad + c * hinge;
    const double dual = sol.alpha.sum() - 0.5 * quad;
    sol.gap = primal - dual;
    if (sol.gap <= opts.tol * std::max(1.0, primal)) {
      sol.converged = true;
      break;
    }
  }
  sol.epochs = std::min(sol.epochs, opts.max_epochs);
  sol.bias = sol.alpha.dot(y);
  return sol;
}

/// Index of the largest score; ties go to the lowest index, which is the
/// lowest class id because classes are kept sorted.
inline Eigen::Index argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < scores.size(); ++k)
    if (scores(k) > scores(best)) best = k;
  return best;
}

inline std::vector<int> labels_from_scores(const Matrix& scores, std::span<const int> classes) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(argmax_lowest(scores.row(i)))];
  return out;
}

inline std::vector<int> sorted_classes(std::span<const int> y) {
  std::vector<int> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

/// One-vs-rest machine over a precomputed kernel.
struct KernelMachine {
  std::vector<int> classes;
  Matrix dual_coef;  // classes x n_train, entries alpha_i * y_i
  Vector bias;       // classes
  double c = 1.0;
  double max_gap = 0.0;
  bool converged = true;
};

inline KernelMachine train_precomputed(const Matrix& gram, std::span<const int> y, double c,
                                       const SolverOptions& opts = {}) {
  if (gram.rows() != gram.cols() || gram.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("Gram matrix does not match the label count");
  if (!gram.allFinite()) throw NumericError("non-finite kernel values");
  KernelMachine m;
  m.classes = sorted_classes(y);
  if (m.classes.size() < 2) throw DataError("SVM training needs at least two classes");
  m.c = c;
  const auto n = gram.rows();
  m.dual_coef.resize(static_cast<Eigen::Index>(m.classes.size()), n);
  m.bias.resize(static_cast<Eigen::Index>(m.classes.size()));
  for (std::size_t k = 0; k < m.classes.size(); ++k) {
    Vector target(n);
    for (Eigen::Index i = 0; i < n; ++i)
      target(i) = y[static_cast<std::size_t>(i)] == m.classes[k] ? 1.0 : -1.0;
    const DualSolution sol = solve_dual(gram, target, c, opts);
    m.dual_coef.row(static_cast<Eigen::Index>(k)) = sol.alpha.cwiseProduct(target).transpose();
    m.bias(static_cast<Eigen::Index>(k)) = sol.bias;
    m.max_gap = std::max(m.max_gap, sol.gap);
    m.converged = m.converged && sol.converged;
  }
  return m;
}

/// Per-class scores from cross kernel values (n_test x n_train).
inline Matrix decision_scores(const KernelMachine& m, const Matrix& cross_gram) {
  if (cross_gram.cols() != m.dual_coef.cols())
    throw std::invalid_argument("cross kernel does not match the training set");
  return (cross_gram * m.dual_coef.transpose()).rowwise() + m.bias.transpose();
}

inline std::vector<int> predict_precomputed(const KernelMachine& m, const Matrix& cross_gram) {
  return labels_from_scores(decision_scores(m, cross_gram), m.classes);
}

namespace detail {

struct KernelParams {
  KernelKind kind = KernelKind::linear;
  double gamma = 1.0;
  int degree = 3;
  double coef0 = 1.0;
};

/// Kernel values from linear inner products and squared row norms.
inline Matrix apply_kernel(const KernelParams& p, Matrix linear, const Vector& sq_rows,
                           const Vector& sq_cols) {
  switch (p.kind) {
    case KernelKind::linear:
      return linear;
    case KernelKind::rbf:
      for (Eigen::Index j = 0; j < linear.cols(); ++j)
        for (Eigen::Index i = 0; i < linear.rows(); ++i)
          linear(i, j) =
              std::exp(-p.gamma * std::max(0.0, sq_rows(i) + sq_cols(j) - 2.0 * linear(i, j)));
      return linear;
    case KernelKind::poly:
      return (p.gamma * linear.array() + p.coef0).pow(p.degree).matrix();
  }
  return linear;
}

inline KernelParams resolve(const KernelSpec& spec, const Matrix& standardized) {
  KernelParams p{spec.kind, 1.0, spec.degree, spec.coef0};
  if (spec.kind == KernelKind::linear) return p;
  if (spec.gamma) {
    p.gamma = *spec.gamma;
  } else {
    const double n = static_cast<double>(standardized.size());
    const double mean = standardized.sum() / n;
    const double var = (standardized.array() - mean).square().sum() / n;
    const auto d = static_cast<double>(standardized.cols());
    p.gamma = var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
  }
  if (!(p.gamma > 0.0)) throw ConfigError("kernel gamma must be positive");
  if (spec.kind == KernelKind::poly && spec.degree < 1)
    throw ConfigError("polynomial degree must be at least 1");
  return p;
}

inline void check_features(const Matrix& x, std::span<const int> y) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("feature rows and labels differ in length");
  if (!x.allFinite()) throw NumericError("non-finite features");
}

}  // namespace detail

struct SvmModel {
  KernelKind kernel = KernelKind::linear;
  double gamma = 1.0;
  int degree = 3;
  double coef0 = 1.0;
  double c = 1.0;
  std::vector<int> classes;
  Standardizer standardizer;
  Matrix weights;          // classes x features (linear only)
  Matrix support_vectors;  // n_sv x features, standardized (kernels only)
  Matrix dual_coef;        // classes x n_sv, alpha * y (kernels only)
  Vector bias;             // classes
  double max_gap = 0.0;
  bool converged = true;

  Eigen::Index n_features() const noexcept { return standardizer.mean.size(); }
};

inline SvmModel train_svm(const Matrix& x, std::span<const int> y, const KernelSpec& kernel,
                          double c, const SvmOptions& opts = {}) {
  detail::check_features(x, y);
  SvmModel model;
  model.standardizer = opts.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols());
  const Matrix xs = model.standardizer.apply(x);
  const auto params = detail::resolve(kernel, xs);
  const Vector sq = xs.rowwise().squaredNorm();
  const Matrix gram = detail::apply_kernel(params, xs * xs.transpose(), sq, sq);
  const KernelMachine machine = train_precomputed(gram, y, c, opts.solver);

  model.kernel = params.kind;
  model.gamma = params.gamma;
  model.degree = params.degree;
  model.coef0 = params.coef0;
  model.c = c;
  model.classes = machine.classes;
  model.bias = machine.bias;
  model.max_gap = machine.max_gap;
  model.converged = machine.converged;
  if (params.kind == KernelKind::linear) {
    model.weights = machine.dual_coef * xs;
    return model;
  }
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    if ((machine.dual_coef.col(i).array() != 0.0).any()) support.push_back(i);
  const auto n_sv = static_cast<Eigen::Index>(support.size());
  model.support_vectors.resize(n_sv, xs.cols());
  model.dual_coef.resize(machine.dual_coef.rows(), n_sv);
  for (Eigen::Index k = 0; k < n_sv; ++k) {
    model.support_vectors.row(k) = xs.row(support[static_cast<std::size_t>(k)]);
    model.dual_coef.col(k) = machine.dual_coef.col(support[static_cast<std::size_t>(k)]);
  }
  return model;
}

inline Matrix decision_scores(const SvmModel& model, const Matrix& x) {
  if (x.cols() != model.n_features())
    throw std::invalid_argument("feature dimension " + std::to_string(x.cols()) +
                                " does not match the model (" +
                                std::to_string(model.n_features()) + ")");
  const Matrix xs = model.standardizer.apply(x);
  if (model.kernel == KernelKind::linear)
    return (xs * model.weights.transpose()).rowwise() + model.bias.transpose();
  const detail::KernelParams params{model.kernel, model.gamma, model.degree, model.coef0};
  const Matrix k = detail::apply_kernel(params, xs * model.support_vectors.transpose(),
                                        xs.rowwise().squaredNorm(),
                                        model.support_vectors.rowwise().squaredNorm());
  return (k * model.dual_coef.transpose()).rowwise() + model.bias.transpose();
}

inline std::vector<int> predict(const SvmModel& model, const Matrix& x) {
  return labels_from_scores(decision_scores(model, x), model.classes);
}

inline double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size() || truth.empty())
    throw std::invalid_argument("accuracy needs equally sized, non-empty label sets");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == predicted[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

/// 11 log-spaced values over [1e-2, 1e3].
inline std::vector<double> default_c_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 10; ++k) grid.push_back(std::pow(10.0, -2.0 + 0.5 * k));
  return grid;
}

/// Fold index per sample.  Each class is shuffled with the seed and dealt
/// round-robin, continuing across classes so fold sizes stay balanced.
inline std::vector<int> stratified_folds(std::span<const int> y, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < y.size(); ++i) members[y[i]].push_back(i);
  std::vector<int> fold(y.size(), -1);
  SplitMix64 rng(seed);
  std::size_t next = 0;
  for (auto& [label, idx] : members) {
    if (idx.size() < static_cast<std::size_t>(k_folds))
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                      " trials, fewer than " + std::to_string(k_folds) + " folds");
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i : idx) fold[i] = static_cast<int>(next++ % static_cast<std::size_t>(k_folds));
  }
  return fold;
}

struct CvReport {
  std::vector<double> grid;
  int k_folds = 0;
  Matrix fold_accuracy;  // folds x grid
  Vector mean_accuracy;  // grid
  std::size_t selected_index = 0;
  double selected_c = 0.0;
};

/// Stratified k-fold grid search over C.  The smallest C among the
/// maximizers of mean validation accuracy is selected.
inline CvReport grid_search_cv(const Matrix& x, std::span<const int> y, const KernelSpec& kernel,
                               std::span<const double> grid, int k_folds, std::uint64_t seed,
                               const SvmOptions& opts = {}, int threads = 1) {
  detail::check_features(x, y);
  if (grid.empty()) throw ConfigError("empty C grid");
  const std::vector<int> fold = stratified_folds(y, k_folds, seed);

  CvReport report;
  report.grid.assign(grid.begin(), grid.end());
  report.k_folds = k_folds;
  report.fold_accuracy.resize(k_folds, static_cast<Eigen::Index>(grid.size()));

  parallel_for(static_cast<std::size_t>(k_folds), threads, [&](std::size_t f) {
    std::vector<Eigen::Index> train_idx, val_idx;
    std::vector<int> y_train, y_val;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fold[i] == static_cast<int>(f)) {
        val_idx.push_back(static_cast<Eigen::Index>(i));
        y_val.push_back(y[i]);
      } else {
        train_idx.push_back(static_cast<Eigen::Index>(i));
        y_train.push_back(y[i]);
      }
    }
    const Matrix x_train = x(train_idx, Eigen::all);
    const Matrix x_val = x(val_idx, Eigen::all);
    const Standardizer st =
        opts.standardize ? Standardizer::fit(x_train) : Standardizer::identity(x.cols());
    const Matrix xs_train = st.apply(x_train);
    const Matrix xs_val = st.apply(x_val);
    const auto params = detail::resolve(kernel, xs_train);
    const Vector sq_train = xs_train.rowwise().squaredNorm();
    const Matrix gram =
        detail::apply_kernel(params, xs_train * xs_train.transpose(), sq_train, sq_train);
    const Matrix cross = detail::apply_kernel(params, xs_val * xs_train.transpose(),
                                              xs_val.rowwise().squaredNorm(), sq_train);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const KernelMachine m = train_precomputed(gram, y_train, grid[g], opts.solver);
      report.fold_accuracy(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(g)) =
          accuracy(y_val, predict_precomputed(m, cross));
    }
  });

  report.mean_accuracy = report.fold_accuracy.colwise().mean().transpose();
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    const auto bi = static_cast<Eigen::Index>(best);
    if (report.mean_accuracy(gi) > report.mean_accuracy(bi) ||
        (report.mean_accuracy(gi) == report.mean_accuracy(bi) && grid[g] < grid[best]))
      best = g;
  }
  report.selected_index = best;
  report.selected_c = grid[best];
  return report;
}

}  // namespace mibci::svm
