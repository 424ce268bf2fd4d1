#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mibci/config.hpp"
#include "mibci/core.hpp"
#include "mibci/csp.hpp"
#include "mibci/dataset.hpp"
#include "mibci/dsp.hpp"
#include "mibci/parallel.hpp"
#include "mibci/riemann.hpp"
#include "mibci/spd.hpp"
#include "mibci/svm.hpp"

// Multiscale feature tree: every trial is bandpass filtered once per band
// over its full length, then sliced into the temporal windows.  Each
// (window, band) leaf yields one feature block; blocks are stacked
// window-major, band-minor.

namespace mibci::pipeline {

using dataset::TrialSet;

struct Leaf {
  int window = 0;
  int band = 0;
};

/// Trained (or, for the identity reference, fixed) per-leaf state.
struct FeatureExtractor {
  FeatureKind kind = FeatureKind::csp;
  double fs = dataset::kDefaultFs;
  int n_channels = 0;
  int n_samples = 0;
  double cov_epsilon = spd::kRidgeEpsilon;
  std::vector<dsp::WindowSpec> windows;
  std::vector<dsp::BandSpec> bands;
  std::vector<dsp::BiquadCascade> cascades;   // one per band
  std::vector<csp::CspBank> banks;            // csp: one per leaf, leaf order
  std::vector<riemann::RiemannRef> refs;      // riemann: one per band

  std::size_t n_leaves() const noexcept { return windows.size() * bands.size(); }

  std::size_t leaf_index(std::size_t window, std::size_t band) const noexcept {
    return window * bands.size() + band;
  }

  Leaf leaf(std::size_t index) const noexcept {
    return {static_cast<int>(index / bands.size()), static_cast<int>(index % bands.size())};
  }

  Eigen::Index per_leaf() const {
    if (kind == FeatureKind::riemann) return static_cast<Eigen::Index>(n_channels) * (n_channels + 1) / 2;
    return banks.empty() ? 0 : banks.front().n_filters();
  }

  Eigen::Index feature_dim() const { return static_cast<Eigen::Index>(n_leaves()) * per_leaf(); }
};

/// Width of the stacked feature vector for a configuration.
inline Eigen::Index expected_feature_dim(const ExperimentConfig& cfg, int n_channels,
                                         int n_classes = dataset::kNumClasses) {
  const auto leaves = static_cast<Eigen::Index>(cfg.window_list().size() * cfg.band_list().size());
  if (cfg.feature == FeatureKind::riemann)
    return leaves * static_cast<Eigen::Index>(n_channels) * (n_channels + 1) / 2;
  const Eigen::Index pairs = static_cast<Eigen::Index>(n_classes) * (n_classes - 1) / 2;
  return leaves * pairs * 2 * cfg.filters_per_side;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Rethrows the active exception with trial/leaf context, keeping its type.
[[noreturn]] inline void rethrow_with_leaf(std::size_t trial, Leaf leaf) {
  const std::string where = "trial " + std::to_string(trial) + ", leaf (window " +
                            std::to_string(leaf.window + 1) + ", band " +
                            std::to_string(leaf.band + 1) + "): ";
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  }
}

/// Scatter X X^T of each window of one band-filtered trial.
inline std::vector<Matrix> window_scatters(const Matrix& filtered,
                                           std::span<const dsp::WindowSpec> windows, double fs) {
  std::vector<Matrix> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    const auto [begin, end] = dsp::window_bounds(w, fs);
    if (begin < 0 || end > filtered.cols() || begin >= end)
      throw DataError("window exceeds the trial bounds");
    out.push_back(spd::scatter(filtered.middleCols(begin, end - begin)));
  }
  return out;
}

inline Eigen::Index window_length(const dsp::WindowSpec& w, double fs) {
  const auto [begin, end] = dsp::window_bounds(w, fs);
  return end - begin;
}

inline Vector leaf_features(const FeatureExtractor& ex, std::size_t window, std::size_t band,
                            const Matrix& scatter) {
  if (ex.kind == FeatureKind::csp)
    return csp::csp_features_from_scatter(ex.banks[ex.leaf_index(window, band)].filters, scatter);
  const auto cov = spd::covariance_from_scatter(scatter, window_length(ex.windows[window], ex.fs),
                                                ex.cov_epsilon);
  return riemann::riemann_features(cov, ex.refs[band]);
}

inline FeatureExtractor blank_extractor(const ExperimentConfig& cfg, const TrialSet& ts) {
  cfg.validate_for(ts.fs, ts.n_samples, ts.n_channels);
  FeatureExtractor ex;
  ex.kind = cfg.feature;
  ex.fs = ts.fs;
  ex.n_channels = ts.n_channels;
  ex.n_samples = ts.n_samples;
  ex.cov_epsilon = cfg.cov_epsilon;
  ex.windows = cfg.window_list();
  ex.bands = cfg.band_list();
  for (const auto& b : ex.bands) ex.cascades.push_back(dsp::design_butter_bandpass(b, ex.fs));
  return ex;
}

}  // namespace detail

struct ExtractorFit {
  FeatureExtractor extractor;
  Matrix train_features;
};

/// Trains every leaf extractor on `train` and returns the training feature
/// matrix alongside.  CSP uses the labels; the Riemannian reference of
/// each band is fitted on the pooled (trial, window) covariances only.
inline ExtractorFit fit_extractor(const ExperimentConfig& cfg, const TrialSet& train) {
  train.validate();
  if (train.size() == 0) throw DataError("training set is empty");
  FeatureExtractor ex = detail::blank_extractor(cfg, train);
  const std::size_t n = train.size();
  const std::size_t n_windows = ex.windows.size();
  const std::size_t n_bands = ex.bands.size();

  std::vector<Matrix> signals(n);
  for (std::size_t i = 0; i < n; ++i) signals[i] = train.trials[i].cast<double>();

  if (ex.kind == FeatureKind::csp) {
    ex.banks.resize(ex.n_leaves());
  }
  std::vector<std::vector<Matrix>> scatters(n);
  Matrix features;
  std::vector<std::optional<riemann::RiemannRef>> refs(n_bands);

  // Per-leaf feature length is known up front for riemann, after the
  // first bank for csp; columns are written once all banks of a band exist.
  std::vector<Matrix> band_blocks(n_bands);
  for (std::size_t b = 0; b < n_bands; ++b) {
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      scatters[i] = detail::window_scatters(dsp::filter_forward(ex.cascades[b], signals[i]),
                                            ex.windows, ex.fs);
    });

    if (ex.kind == FeatureKind::csp) {
      parallel_for(n_windows, cfg.threads, [&](std::size_t w) {
        std::vector<std::vector<spd::SpdMatrix>> per_class(dataset::kNumClasses);
        const auto len = detail::window_length(ex.windows[w], ex.fs);
        try {
          for (std::size_t i = 0; i < n; ++i)
            per_class[static_cast<std::size_t>(train.labels[i] - 1)].push_back(
                spd::covariance_from_scatter(scatters[i][w], len, ex.cov_epsilon));
          csp::CspBank bank = csp::train_csp_multiclass(
              std::span<const std::vector<spd::SpdMatrix>>(per_class), cfg.filters_per_side);
          bank.band = static_cast<int>(b);
          bank.window = static_cast<int>(w);
          ex.banks[ex.leaf_index(w, b)] = std::move(bank);
        } catch (const Error&) {
          detail::rethrow_with_leaf(0, {static_cast<int>(w), static_cast<int>(b)});
        }
      });
    } else {
      std::vector<spd::SpdMatrix> pool;
      pool.reserve(n * n_windows);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t w = 0; w < n_windows; ++w)
          pool.push_back(spd::covariance_from_scatter(
              scatters[i][w], detail::window_length(ex.windows[w], ex.fs), ex.cov_epsilon));
      refs[b].emplace(riemann::fit_reference(pool, *cfg.mean, ex.n_channels, static_cast<int>(b),
                                             cfg.karcher));
      ex.refs.push_back(*refs[b]);
    }

    const Eigen::Index per_leaf = ex.per_leaf();
    band_blocks[b].resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_windows) * per_leaf);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      for (std::size_t w = 0; w < n_windows; ++w) {
        try {
          band_blocks[b].block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(w) * per_leaf, 1, per_leaf) =
              detail::leaf_features(ex, w, b, scatters[i][w]).transpose();
        } catch (const Error&) {
          detail::rethrow_with_leaf(i, {static_cast<int>(w), static_cast<int>(b)});
        }
      }
    });
  }

  const Eigen::Index per_leaf = ex.per_leaf();
  features.resize(static_cast<Eigen::Index>(n), ex.feature_dim());
  for (std::size_t b = 0; b < n_bands; ++b)
    for (std::size_t w = 0; w < n_windows; ++w)
      features.middleCols(static_cast<Eigen::Index>(ex.leaf_index(w, b)) * per_leaf, per_leaf) =
          band_blocks[b].middleCols(static_cast<Eigen::Index>(w) * per_leaf, per_leaf);
  return {std::move(ex), std::move(features)};
}

/// Features of every trial with frozen extractor state.
inline Matrix extract_features(const FeatureExtractor& ex, const TrialSet& ts, int threads = 0) {
  ts.validate();
  if (ts.n_channels != ex.n_channels || ts.n_samples != ex.n_samples || ts.fs != ex.fs)
    throw DataError("trial geometry " + std::to_string(ts.n_channels) + "x" +
                    std::to_string(ts.n_samples) + " @ " + std::to_string(ts.fs) +
                    " Hz does not match the model");
  const Eigen::Index per_leaf = ex.per_leaf();
  Matrix features(static_cast<Eigen::Index>(ts.size()), ex.feature_dim());
  parallel_for(ts.size(), threads, [&](std::size_t i) {
    const Matrix x = ts.trials[i].cast<double>();
    for (std::size_t b = 0; b < ex.bands.size(); ++b) {
      const auto scatters =
          detail::window_scatters(dsp::filter_forward(ex.cascades[b], x), ex.windows, ex.fs);
      for (std::size_t w = 0; w < ex.windows.size(); ++w) {
        try {
          features.block(static_cast<Eigen::Index>(i),
                         static_cast<Eigen::Index>(ex.leaf_index(w, b)) * per_leaf, 1, per_leaf) =
              detail::leaf_features(ex, w, b, scatters[w]).transpose();
        } catch (const Error&) {
          detail::rethrow_with_leaf(i, {static_cast<int>(w), static_cast<int>(b)});
        }
      }
    }
  });
  return features;
}

struct TrainedModel {
  ExperimentConfig config;
  FeatureExtractor extractor;
  svm::SvmModel svm;
  svm::CvReport cv;
  double train_time_s = 0.0;

  Eigen::Index feature_dim() const { return extractor.feature_dim(); }
};

inline svm::SvmOptions svm_options(const ExperimentConfig& cfg) {
  svm::SvmOptions opts;
  opts.solver.tol = cfg.svm_tol;
  return opts;
}

/// Leaf extractors, grid-search CV for C, then the final SVM on all
/// training trials.  Wall-clock time covers all of it (no file I/O).
inline TrainedModel fit(const ExperimentConfig& cfg, const TrialSet& train) {
  const auto start = detail::Clock::now();
  auto [extractor, features] = fit_extractor(cfg, train);
  const auto opts = svm_options(cfg);
  TrainedModel model;
  model.cv = svm::grid_search_cv(features, train.labels, cfg.kernel, cfg.c_grid, cfg.folds,
                                 cfg.seed, opts, cfg.threads);
  model.svm = svm::train_svm(features, train.labels, cfg.kernel, model.cv.selected_c, opts);
  model.config = cfg;
  model.extractor = std::move(extractor);
  model.train_time_s = detail::seconds_since(start);
  return model;
}

struct RunReport {
  std::string subject_id;
  Eigen::MatrixXi confusion;  // rows: true class 1..4, cols: predicted
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  double accuracy = 0.0;  // percent
  double train_time_s = 0.0;
  double test_time_s = 0.0;
  std::vector<int> predictions;
};

/// Accuracy = 100 * N_correct / N_total and the 4x4 confusion matrix.
inline RunReport make_run_report(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size() || truth.empty())
    throw DataError("cannot score an empty or mismatched prediction set");
  RunReport r;
  r.confusion = Eigen::MatrixXi::Zero(dataset::kNumClasses, dataset::kNumClasses);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r.confusion(truth[i] - 1, predicted[i] - 1) += 1;
    r.n_correct += truth[i] == predicted[i];
  }
  r.n_total = truth.size();
  r.accuracy = 100.0 * static_cast<double>(r.n_correct) / static_cast<double>(r.n_total);
  r.predictions.assign(predicted.begin(), predicted.end());
  return r;
}

/// Frozen-state evaluation.  Testing time covers feature extraction and
/// classification of all test trials.
inline RunReport evaluate(const TrainedModel& model, const TrialSet& test) {
  if (test.n_channels != model.extractor.n_channels)
    throw DataError("test set has " + std::to_string(test.n_channels) + " channels, model expects " +
                    std::to_string(model.extractor.n_channels));
  const auto start = detail::Clock::now();
  const Matrix features = extract_features(model.extractor, test, model.config.threads);
  const std::vector<int> predicted = svm::predict(model.svm, features);
  const double elapsed = detail::seconds_since(start);
  RunReport r = make_run_report(test.labels, predicted);
  r.subject_id = test.subject_id;
  r.train_time_s = model.train_time_s;
  r.test_time_s = elapsed;
  return r;
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["subject"] = r.subject_id;
  j["accuracy"] = r.accuracy;
  j["n_correct"] = r.n_correct;
  j["n_total"] = r.n_total;
  j["train_time_s"] = r.train_time_s;
  j["test_time_s"] = r.test_time_s;
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < r.confusion.cols(); ++k) row.push_back(r.confusion(i, k));
    confusion.push_back(row);
  }
  j["confusion"] = confusion;
  return j;
}

struct SubjectPaths {
  std::string subject;
  std::filesystem::path train;
  std::filesystem::path test;
};

/// Pairs "<name>T.mitrials" (training session) with "<name>E.mitrials"
/// (evaluation session), sorted by name.
inline std::vector<SubjectPaths> discover_subjects(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  std::map<std::string, SubjectPaths> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    constexpr std::string_view suffix = "T.mitrials";
    if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
    const std::string stem = name.substr(0, name.size() - suffix.size());
    const auto test = dir / (stem + "E.mitrials");
    if (fs::exists(test)) found[stem] = {stem, entry.path(), test};
  }
  std::vector<SubjectPaths> out;
  for (auto& [stem, paths] : found) out.push_back(std::move(paths));
  return out;
}

struct SubjectRow {
  RunReport report;
  dataset::ClassBalanceReport train_balance;
  dataset::ClassBalanceReport test_balance;
  double cv_accuracy = 0.0;  // percent, at the selected C
  double selected_c = 0.0;
};

struct BenchmarkReport {
  ExperimentConfig config;
  Eigen::Index n_features = 0;
  std::vector<SubjectRow> rows;
  std::vector<std::pair<std::string, std::string>> failures;  // subject, error
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation
  double mean_train_time_s = 0.0;
  double mean_test_time_s = 0.0;
};

inline void aggregate(BenchmarkReport& report) {
  const auto n = static_cast<double>(report.rows.size());
  double sum = 0.0, train = 0.0, test = 0.0;
  for (const auto& row : report.rows) {
    sum += row.report.accuracy;
    train += row.report.train_time_s;
    test += row.report.test_time_s;
  }
  report.mean_accuracy = sum / n;
  report.mean_train_time_s = train / n;
  report.mean_test_time_s = test / n;
  double sq = 0.0;
  for (const auto& row : report.rows) {
    const double d = row.report.accuracy - report.mean_accuracy;
    sq += d * d;
  }
  report.std_accuracy = std::sqrt(sq / n);
}

/// Per-subject fit + evaluate with artifact trials excluded from both
/// sessions.  Failing subjects are recorded and skipped.
inline BenchmarkReport run_benchmark(const ExperimentConfig& cfg,
                                     std::span<const SubjectPaths> subjects,
                                     std::ostream* log = nullptr) {
  if (subjects.empty()) throw DataError("benchmark needs at least one subject");
  BenchmarkReport report;
  report.config = cfg;
  for (const auto& s : subjects) {
    try {
      auto [train, train_balance] = dataset::exclude_artifacts(dataset::load_trials(s.train));
      auto [test, test_balance] = dataset::exclude_artifacts(dataset::load_trials(s.test));
      const TrainedModel model = fit(cfg, train);
      SubjectRow row;
      row.report = evaluate(model, test);
      row.report.subject_id = s.subject;
      row.train_balance = train_balance;
      row.test_balance = test_balance;
      row.cv_accuracy = 100.0 * model.cv.mean_accuracy(static_cast<Eigen::Index>(model.cv.selected_index));
      row.selected_c = model.cv.selected_c;
      report.n_features = model.feature_dim();
      if (log)
        *log << s.subject << ": accuracy " << row.report.accuracy << "% (train "
             << row.report.train_time_s << " s, test " << row.report.test_time_s << " s)\n";
      report.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      if (log) *log << "warning: subject " << s.subject << " failed: " << e.what() << "\n";
      report.failures.emplace_back(s.subject, e.what());
    }
  }
  if (report.rows.empty()) throw DataError("every subject failed; nothing to aggregate");
  if (!report.failures.empty() && log)
    *log << "warning: aggregating " << report.rows.size() << " of " << subjects.size()
         << " subjects\n";
  aggregate(report);
  return report;
}

inline nlohmann::json to_json(const dataset::ClassBalanceReport& b) {
  return {{"before", b.before},
          {"after", b.after},
          {"n_total", b.n_total},
          {"n_excluded", b.n_excluded},
          {"excluded_fraction", b.excluded_fraction}};
}

/// Report layout follows the results table: one row per subject plus the
/// configuration header rows and the averages.
inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json j;
  const auto& cfg = r.config;
  j["no_features"] = r.n_features;
  j["feature"] = std::string(to_string(cfg.feature));
  j["svm_kernel"] = std::string(svm::to_string(cfg.kernel.kind));
  j["riemannian_kernel"] = cfg.mean ? std::string(riemann::to_string(*cfg.mean)) : std::string("N/A");
  j["spectral_bands"] = cfg.band_label();
  j["temporal_windows"] = cfg.window_label();
  j["config"] = to_json(cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json jr = to_json(row.report);
    jr["cv_accuracy"] = row.cv_accuracy;
    jr["selected_c"] = row.selected_c;
    jr["train_balance"] = to_json(row.train_balance);
    jr["test_balance"] = to_json(row.test_balance);
    rows.push_back(jr);
  }
  j["subjects"] = rows;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& [subject, error] : r.failures) failures.push_back({{"subject", subject}, {"error", error}});
  j["failures"] = failures;
  j["avg_accuracy"] = r.mean_accuracy;
  j["std_accuracy"] = r.std_accuracy;
  j["avg_train_time_s"] = r.mean_train_time_s;
  j["avg_test_time_s"] = r.mean_test_time_s;
  return j;
}

}  // namespace mibci::pipeline
