#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mibci/core.hpp"
#include "mibci/dsp.hpp"
#include "mibci/riemann.hpp"
#include "mibci/spd.hpp"
#include "mibci/svm.hpp"

namespace mibci {

enum class FeatureKind { csp, riemann };

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "csp") return FeatureKind::csp;
  if (s == "riemann") return FeatureKind::riemann;
  throw ConfigError("unknown feature kind '" + std::string(s) + "'");
}

inline std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::csp ? "csp" : "riemann";
}

/// One experiment: which extractor, which multiscale tree, which SVM.
struct ExperimentConfig {
  FeatureKind feature = FeatureKind::csp;
  std::string windows = "t11";
  std::string bands = "b43";
  std::vector<dsp::WindowSpec> custom_windows;  // override `windows` when non-empty
  std::vector<dsp::BandSpec> custom_bands;      // override `bands` when non-empty
  std::optional<riemann::MeanKind> mean;
  svm::KernelSpec kernel;
  std::vector<double> c_grid = svm::default_c_grid();
  int folds = 5;
  std::uint64_t seed = 1;
  int filters_per_side = 2;
  int threads = 0;
  double cov_epsilon = spd::kRidgeEpsilon;
  spd::KarcherOptions karcher;
  double svm_tol = 1e-3;
  std::string data_dir;
  std::string train_path;
  std::string test_path;
  std::string report_path;

  std::vector<dsp::WindowSpec> window_list() const {
    return custom_windows.empty() ? dsp::default_windows(windows) : custom_windows;
  }

  std::vector<dsp::BandSpec> band_list() const {
    return custom_bands.empty() ? dsp::default_bands(bands) : custom_bands;
  }

  std::string window_label() const { return custom_windows.empty() ? windows : "custom"; }
  std::string band_label() const { return custom_bands.empty() ? bands : "custom"; }

  void validate() const {
    if (feature == FeatureKind::riemann && !mean)
      throw ConfigError("riemann features need a reference mean (mean = g|u|i)");
    if (feature == FeatureKind::csp && mean)
      throw ConfigError("a reference mean is only valid with riemann features");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (c_grid.empty()) throw ConfigError("c_grid is empty");
    for (double c : c_grid)
      if (!(c > 0.0)) throw ConfigError("c_grid values must be positive");
    if (filters_per_side < 1) throw ConfigError("filters_per_side must be at least 1");
    if (!(cov_epsilon > 0.0)) throw ConfigError("cov_epsilon must be positive");
    if (!(karcher.tol > 0.0) || karcher.max_iter < 1)
      throw ConfigError("karcher_tol must be positive and karcher_max_iter at least 1");
    if (!(svm_tol > 0.0)) throw ConfigError("svm_tol must be positive");
    if (window_list().empty() || band_list().empty())
      throw ConfigError("at least one window and one band are required");
  }

  /// Checks windows and bands against a concrete trial geometry.
  void validate_for(double fs, int n_samples, int n_channels) const {
    validate();
    for (const auto& b : band_list()) {
      b.validate(fs);
      if (b.f_hi > 0.95 * fs / 2.0)
        throw ConfigError("band upper edge " + std::to_string(b.f_hi) + " Hz is too close to Nyquist");
    }
    for (const auto& w : window_list()) w.validate(n_samples / fs, fs, n_channels);
    if (feature == FeatureKind::csp && 2 * filters_per_side > n_channels)
      throw ConfigError("filters_per_side is too large for " + std::to_string(n_channels) + " channels");
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
  }
}

inline long long to_integer(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError("'" + key + "' expects an integer, got '" + s + "'");
  return v;
}

/// Splits "a, b, c" or "[a, b, c]" into trimmed, unquoted items.
inline std::vector<std::string> split_list(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

/// "lo-hi" or "lo:hi".
inline std::pair<double, double> parse_range(const std::string& key, const std::string& s) {
  const auto sep = s.find_first_of(":-", 1);
  if (sep == std::string::npos) throw ConfigError("'" + key + "' expects lo-hi ranges, got '" + s + "'");
  return {to_double(key, trim(s.substr(0, sep))), to_double(key, trim(s.substr(sep + 1)))};
}

}  // namespace config_detail

/// Parses flat `key = value` text.  '#' starts a comment; lists are
/// comma-separated with optional brackets.
inline ExperimentConfig parse_config(std::string_view text) {
  using namespace config_detail;
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // blank, or a TOML table header
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'");

    if (key == "feature") {
      cfg.feature = parse_feature_kind(value);
    } else if (key == "windows") {
      dsp::default_windows(value);
      cfg.windows = value;
    } else if (key == "bands") {
      dsp::default_bands(value);
      cfg.bands = value;
    } else if (key == "window_edges") {
      cfg.custom_windows.clear();
      for (const auto& item : split_list(value)) {
        const auto [a, b] = parse_range(key, item);
        cfg.custom_windows.push_back({a, b});
      }
    } else if (key == "band_edges") {
      cfg.custom_bands.clear();
      for (const auto& item : split_list(value)) {
        const auto [a, b] = parse_range(key, item);
        cfg.custom_bands.push_back({a, b});
      }
    } else if (key == "mean") {
      cfg.mean = riemann::parse_mean_kind(value);
    } else if (key == "kernel") {
      cfg.kernel.kind = svm::parse_kernel(value);
    } else if (key == "gamma") {
      cfg.kernel.gamma = to_double(key, value);
    } else if (key == "degree") {
      cfg.kernel.degree = static_cast<int>(to_integer(key, value));
    } else if (key == "coef0") {
      cfg.kernel.coef0 = to_double(key, value);
    } else if (key == "c_grid") {
      cfg.c_grid.clear();
      for (const auto& item : split_list(value)) cfg.c_grid.push_back(to_double(key, item));
    } else if (key == "folds") {
      cfg.folds = static_cast<int>(to_integer(key, value));
    } else if (key == "seed") {
      const long long s = to_integer(key, value);
      if (s < 0) throw ConfigError("seed must be non-negative");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "filters_per_side") {
      cfg.filters_per_side = static_cast<int>(to_integer(key, value));
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(to_integer(key, value));
    } else if (key == "cov_epsilon") {
      cfg.cov_epsilon = to_double(key, value);
    } else if (key == "karcher_tol") {
      cfg.karcher.tol = to_double(key, value);
    } else if (key == "karcher_max_iter") {
      cfg.karcher.max_iter = static_cast<int>(to_integer(key, value));
    } else if (key == "svm_tol") {
      cfg.svm_tol = to_double(key, value);
    } else if (key == "data_dir") {
      cfg.data_dir = value;
    } else if (key == "train") {
      cfg.train_path = value;
    } else if (key == "test") {
      cfg.test_path = value;
    } else if (key == "report") {
      cfg.report_path = value;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["feature"] = std::string(to_string(cfg.feature));
  j["windows"] = cfg.window_label();
  j["bands"] = cfg.band_label();
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : cfg.window_list()) windows.push_back({w.t_start, w.t_end});
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : cfg.band_list()) bands.push_back({b.f_lo, b.f_hi});
  j["window_edges"] = windows;
  j["band_edges"] = bands;
  j["mean"] = cfg.mean ? nlohmann::json(std::string(riemann::to_string(*cfg.mean))) : nlohmann::json();
  j["kernel"] = std::string(svm::to_string(cfg.kernel.kind));
  j["gamma"] = cfg.kernel.gamma ? nlohmann::json(*cfg.kernel.gamma) : nlohmann::json();
  j["degree"] = cfg.kernel.degree;
  j["coef0"] = cfg.kernel.coef0;
  j["c_grid"] = cfg.c_grid;
  j["folds"] = cfg.folds;
  j["seed"] = cfg.seed;
  j["filters_per_side"] = cfg.filters_per_side;
  j["cov_epsilon"] = cfg.cov_epsilon;
  j["karcher_tol"] = cfg.karcher.tol;
  j["karcher_max_iter"] = cfg.karcher.max_iter;
  j["svm_tol"] = cfg.svm_tol;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.feature = parse_feature_kind(j.at("feature").get<std::string>());
    const auto windows = j.at("windows").get<std::string>();
    const auto bands = j.at("bands").get<std::string>();
    if (windows == "custom") {
      for (const auto& w : j.at("window_edges")) cfg.custom_windows.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
    } else {
      cfg.windows = windows;
    }
    if (bands == "custom") {
      for (const auto& b : j.at("band_edges")) cfg.custom_bands.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    } else {
      cfg.bands = bands;
    }
    if (!j.at("mean").is_null()) cfg.mean = riemann::parse_mean_kind(j.at("mean").get<std::string>());
    cfg.kernel.kind = svm::parse_kernel(j.at("kernel").get<std::string>());
    if (!j.at("gamma").is_null()) cfg.kernel.gamma = j.at("gamma").get<double>();
    cfg.kernel.degree = j.at("degree").get<int>();
    cfg.kernel.coef0 = j.at("coef0").get<double>();
    cfg.c_grid = j.at("c_grid").get<std::vector<double>>();
    cfg.folds = j.at("folds").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.filters_per_side = j.at("filters_per_side").get<int>();
    cfg.cov_epsilon = j.at("cov_epsilon").get<double>();
    cfg.karcher.tol = j.at("karcher_tol").get<double>();
    cfg.karcher.max_iter = j.at("karcher_max_iter").get<int>();
    cfg.svm_tol = j.at("svm_tol").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed stored config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace mibci
