// mi: train / evaluate / benchmark multiscale motor-imagery decoders.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mibci/mibci.hpp"

namespace {

using namespace mibci;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitOther = 1;

dataset::TrialSet load_clean(const std::string& path) {
  auto [clean, balance] = dataset::exclude_artifacts(dataset::load_trials(path));
  if (balance.n_excluded > 0)
    std::cerr << path << ": excluded " << balance.n_excluded << " of " << balance.n_total
              << " trials flagged as artifacts\n";
  return clean;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed for " + path);
}

int cmd_train(const std::string& config_path, const std::string& in, const std::string& out) {
  const ExperimentConfig cfg = load_config(config_path);
  const auto train = load_clean(in);
  const auto model = pipeline::fit(cfg, train);
  model_io::save_model(model, out);
  std::cout << "trained " << model.feature_dim() << " features on " << train.size()
            << " trials, C = " << model.cv.selected_c << " (cv accuracy "
            << 100.0 * model.cv.mean_accuracy(static_cast<Eigen::Index>(model.cv.selected_index))
            << "%), " << model.train_time_s << " s\n";
  if (!model.svm.converged)
    std::cerr << "warning: SVM solver stopped at duality gap " << model.svm.max_gap << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& in, const std::string& report) {
  const auto model = model_io::load_model(model_path);
  const auto test = load_clean(in);
  const auto result = pipeline::evaluate(model, test);
  std::cout << "accuracy " << result.accuracy << "% (" << result.n_correct << "/" << result.n_total
            << "), test time " << result.test_time_s << " s\n";
  if (!report.empty()) {
    auto j = pipeline::to_json(result);
    j["config"] = to_json(model.config);
    j["no_features"] = model.feature_dim();
    write_json(report, j);
  }
  return kExitOk;
}

int cmd_bench(const std::string& config_path, const std::string& data_dir, const std::string& report) {
  ExperimentConfig cfg = load_config(config_path);
  const std::string dir = !data_dir.empty() ? data_dir : cfg.data_dir;
  if (dir.empty()) throw ConfigError("bench needs --data-dir or data_dir in the config");
  const auto subjects = pipeline::discover_subjects(dir);
  if (subjects.empty()) throw DataError("no <name>T.mitrials / <name>E.mitrials pairs in " + dir);
  const auto result = pipeline::run_benchmark(cfg, subjects, &std::cerr);
  std::cout << "mean accuracy " << result.mean_accuracy << " +/- " << result.std_accuracy
            << "% over " << result.rows.size() << " subjects; train " << result.mean_train_time_s
            << " s, test " << result.mean_test_time_s << " s\n";
  const std::string out = !report.empty() ? report : cfg.report_path;
  if (!out.empty()) write_json(out, pipeline::to_json(result));
  return kExitOk;
}

int cmd_synth(std::uint64_t seed, double snr, int n_per_class, const std::string& out) {
  const auto ts = dataset::synth_trials(seed, n_per_class, snr);
  dataset::store_trials(ts, out);
  std::cout << "wrote " << ts.size() << " synthetic trials to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale motor-imagery decoding (CSP / Riemannian features + SVM)"};
  app.require_subcommand(1);

  std::string config, in, out, model, report, data_dir;
  std::uint64_t seed = 1;
  double snr = 10.0;
  int n_per_class = 72;

  auto* train = app.add_subcommand("train", "fit a model on a training session");
  train->add_option("--config", config, "experiment config")->required();
  train->add_option("--in", in, "training trials (.mitrials)")->required();
  train->add_option("--out", out, "model file to write")->required();

  auto* eval = app.add_subcommand("eval", "score a saved model on an evaluation session");
  eval->add_option("--model", model, "model file")->required();
  eval->add_option("--in", in, "evaluation trials (.mitrials)")->required();
  eval->add_option("--report", report, "JSON report to write");

  auto* bench = app.add_subcommand("bench", "train and evaluate every subject in a directory");
  bench->add_option("--config", config, "experiment config")->required();
  bench->add_option("--data-dir", data_dir, "directory of <name>T/E.mitrials pairs");
  bench->add_option("--report", report, "JSON report to write");

  auto* synth = app.add_subcommand("synth", "generate a synthetic four-class session");
  synth->add_option("--seed", seed, "generator seed")->required();
  synth->add_option("--snr", snr, "signal-to-noise ratio in dB")->required();
  synth->add_option("--n-per-class", n_per_class, "trials per class")->capture_default_str();
  synth->add_option("--out", out, "trials file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config, in, out);
    if (*eval) return cmd_eval(model, in, report);
    if (*bench) return cmd_bench(config, data_dir, report);
    if (*synth) return cmd_synth(seed, snr, n_per_class, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
