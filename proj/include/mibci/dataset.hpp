#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mibci/core.hpp"
#include "mibci/rng.hpp"

namespace mibci::dataset {

inline constexpr int kNumClasses = 4;
inline constexpr double kDefaultFs = 250.0;
inline constexpr int kDefaultChannels = 22;
inline constexpr int kDefaultSamples = 1125;  // 4.5 s at 250 Hz

// Container magic, 7 bytes: "MIBCI1\n".
inline constexpr std::string_view kTrialMagic{"MIBCI1\n", 7};

using ClassCounts = std::array<std::size_t, kNumClasses>;

/// Labeled multichannel trials of one subject/session.  Labels are 1..4
/// (left hand, right hand, both feet, tongue).
struct TrialSet {
  double fs = kDefaultFs;
  int n_channels = 0;
  int n_samples = 0;
  std::vector<TrialMatrix> trials;
  std::vector<int> labels;
  std::vector<bool> artifact_flags;
  std::string subject_id;

  std::size_t size() const noexcept { return trials.size(); }

  double duration_s() const noexcept { return n_samples / fs; }

  ClassCounts class_counts() const {
    ClassCounts counts{};
    for (int label : labels) ++counts[static_cast<std::size_t>(label - 1)];
    return counts;
  }

  /// Throws DataError if any structural invariant is broken.
  void validate() const {
    if (!(fs > 0.0) || !std::isfinite(fs))
      throw DataError("sampling rate must be positive");
    if (n_channels <= 0 || n_samples <= 0)
      throw DataError("channel and sample counts must be positive");
    if (labels.size() != trials.size() || artifact_flags.size() != trials.size())
      throw DataError("labels, artifact flags and trials differ in length");
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (trials[i].rows() != n_channels || trials[i].cols() != n_samples)
        throw DataError("trial " + std::to_string(i) + " has shape " +
                        std::to_string(trials[i].rows()) + "x" +
                        std::to_string(trials[i].cols()));
      if (labels[i] < 1 || labels[i] > kNumClasses)
        throw DataError("unknown label value " + std::to_string(labels[i]));
    }
  }

  /// Trials at the given indices, in that order.
  TrialSet subset(std::span<const std::size_t> indices) const {
    TrialSet out;
    out.fs = fs;
    out.n_channels = n_channels;
    out.n_samples = n_samples;
    out.subject_id = subject_id;
    out.trials.reserve(indices.size());
    for (std::size_t i : indices) {
      out.trials.push_back(trials.at(i));
      out.labels.push_back(labels.at(i));
      out.artifact_flags.push_back(artifact_flags.at(i));
    }
    return out;
  }

  bool operator==(const TrialSet& other) const {
    if (fs != other.fs || n_channels != other.n_channels ||
        n_samples != other.n_samples || labels != other.labels ||
        artifact_flags != other.artifact_flags ||
        subject_id != other.subject_id || trials.size() != other.trials.size())
      return false;
    for (std::size_t i = 0; i < trials.size(); ++i)
      if (trials[i] != other.trials[i]) return false;
    return true;
  }
};

struct ClassBalanceReport {
  ClassCounts before{};
  ClassCounts after{};
  std::size_t n_total = 0;
  std::size_t n_excluded = 0;
  double excluded_fraction = 0.0;
};

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) noexcept {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

inline std::uint32_t read_u32_le(const unsigned char* p) noexcept {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return to_little(v);
}

}  // namespace detail

/// Writes a TrialSet as a ".mitrials" container.
inline void store_trials(const TrialSet& ts, const std::filesystem::path& path) {
  ts.validate();
  nlohmann::json header;
  header["fs"] = ts.fs;
  header["n_channels"] = ts.n_channels;
  header["n_samples"] = ts.n_samples;
  header["subject_id"] = ts.subject_id;
  header["labels"] = ts.labels;
  header["artifacts"] = std::vector<bool>(ts.artifact_flags);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kTrialMagic.data(), static_cast<std::streamsize>(kTrialMagic.size()));
  const std::uint32_t len = detail::to_little(static_cast<std::uint32_t>(text.size()));
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::vector<std::uint32_t> buffer(static_cast<std::size_t>(ts.n_samples));
  for (const auto& trial : ts.trials) {
    for (int c = 0; c < ts.n_channels; ++c) {
      for (int s = 0; s < ts.n_samples; ++s)
        buffer[static_cast<std::size_t>(s)] =
            detail::to_little(std::bit_cast<std::uint32_t>(trial(c, s)));
      out.write(reinterpret_cast<const char*>(buffer.data()),
                static_cast<std::streamsize>(buffer.size() * sizeof(std::uint32_t)));
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

/// Reads a ".mitrials" container.  Samples are returned exactly as stored.
inline TrialSet load_trials(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};

  const std::size_t prefix = kTrialMagic.size() + sizeof(std::uint32_t);
  if (bytes.size() < prefix ||
      std::memcmp(bytes.data(), kTrialMagic.data(), kTrialMagic.size()) != 0)
    throw DataError("malformed header: missing MIBCI1 magic");
  const std::uint32_t header_len = detail::read_u32_le(bytes.data() + kTrialMagic.size());
  if (bytes.size() - prefix < header_len)
    throw DataError("malformed header: truncated header");

  TrialSet ts;
  std::vector<int> labels;
  try {
    const auto header = nlohmann::json::parse(
        bytes.begin() + static_cast<std::ptrdiff_t>(prefix),
        bytes.begin() + static_cast<std::ptrdiff_t>(prefix + header_len));
    ts.fs = header.at("fs").get<double>();
    ts.n_channels = header.at("n_channels").get<int>();
    ts.n_samples = header.at("n_samples").get<int>();
    ts.subject_id = header.value("subject_id", std::string{});
    labels = header.at("labels").get<std::vector<int>>();
    const auto& artifacts = header.at("artifacts");
    if (!artifacts.is_array()) throw DataError("malformed header: artifacts is not an array");
    for (const auto& flag : artifacts) {
      if (flag.is_boolean())
        ts.artifact_flags.push_back(flag.get<bool>());
      else if (flag.is_number_integer())
        ts.artifact_flags.push_back(flag.get<int>() != 0);
      else
        throw DataError("malformed header: artifact flag is not boolean");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed header: ") + e.what());
  }
  if (ts.artifact_flags.size() != labels.size())
    throw DataError("malformed header: labels and artifacts differ in length");
  if (ts.n_channels <= 0 || ts.n_samples <= 0 || !(ts.fs > 0.0))
    throw DataError("malformed header: non-positive shape or sampling rate");
  for (int label : labels)
    if (label < 1 || label > kNumClasses)
      throw DataError("unknown label value " + std::to_string(label));

  const std::size_t per_trial =
      static_cast<std::size_t>(ts.n_channels) * static_cast<std::size_t>(ts.n_samples);
  const std::size_t payload = bytes.size() - prefix - header_len;
  if (payload != labels.size() * per_trial * sizeof(float))
    throw DataError("payload length mismatch: expected " +
                    std::to_string(labels.size() * per_trial * sizeof(float)) +
                    " bytes, found " + std::to_string(payload));

  const unsigned char* p = bytes.data() + prefix + header_len;
  ts.trials.reserve(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    TrialMatrix trial(ts.n_channels, ts.n_samples);
    for (int c = 0; c < ts.n_channels; ++c)
      for (int s = 0; s < ts.n_samples; ++s, p += sizeof(float))
        trial(c, s) = std::bit_cast<float>(detail::read_u32_le(p));
    ts.trials.push_back(std::move(trial));
  }
  ts.labels = std::move(labels);
  ts.validate();
  return ts;
}

/// Drops expert-flagged trials.  Throws if a class present before
/// exclusion has no trials left.
inline std::pair<TrialSet, ClassBalanceReport> exclude_artifacts(const TrialSet& ts) {
  ts.validate();
  ClassBalanceReport report;
  report.before = ts.class_counts();
  report.n_total = ts.size();

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (!ts.artifact_flags[i]) keep.push_back(i);
  TrialSet clean = ts.subset(keep);

  report.after = clean.class_counts();
  report.n_excluded = ts.size() - clean.size();
  report.excluded_fraction =
      ts.size() == 0 ? 0.0
                     : static_cast<double>(report.n_excluded) / static_cast<double>(ts.size());
  for (int c = 0; c < kNumClasses; ++c)
    if (report.before[c] > 0 && report.after[c] == 0)
      throw DataError("class emptied by exclusion: class " + std::to_string(c + 1));
  return {std::move(clean), report};
}

/// Deterministic 4-class synthetic session: fs 250 Hz, 22 channels,
/// 1125 samples.  Six narrow-band sources (8-30 Hz) are mixed onto the
/// scalp by a class-specific matrix over a class-independent, spatially
/// mixed low-pass background.  Noise with the same spectrum, independent
/// across channels, is added at `snr_db` relative to the signal power of
/// each trial.  The mixing
/// matrices are fixed generator parameters, so sessions drawn with
/// different seeds share class structure.
inline TrialSet synth_trials(std::uint64_t seed, int n_per_class, double snr_db) {
  if (n_per_class < 2) throw ConfigError("synth_trials needs at least 2 trials per class");
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");

  constexpr int kSources = 6;
  constexpr std::array<double, kSources> kCenterHz{9.0, 11.0, 13.0, 17.0, 21.0, 26.0};
  constexpr double kPoleRadius = 0.97;       // ~2.4 Hz wide resonances
  constexpr double kBackgroundPole = 0.95;   // 1/f^2-like background above ~2 Hz
  constexpr double kBackgroundPower = 0.5;   // relative to the class sources
  constexpr double kClassSpread = 0.7;
  constexpr int kBurnIn = 250;
  constexpr std::uint64_t kStructureSeed = 0x4D49424349535452ULL;

  const int nc = kDefaultChannels;
  const int ns = kDefaultSamples;
  const double fs = kDefaultFs;

  SplitMix64 structure(kStructureSeed);
  Matrix common(nc, kSources);
  for (Eigen::Index i = 0; i < common.size(); ++i) common.data()[i] = structure.normal();
  std::array<Matrix, kNumClasses> mixing;
  for (auto& m : mixing) {
    m.resize(nc, kSources);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = common.data()[i] + kClassSpread * structure.normal();
    // Equal column norms keep the signal power, and so the noise level,
    // independent of the class.
    m.colwise().normalize();
  }
  Matrix background_mixing(nc, nc);
  for (Eigen::Index i = 0; i < background_mixing.size(); ++i)
    background_mixing.data()[i] = structure.normal();

  SplitMix64 rng(seed);
  TrialSet ts;
  ts.fs = fs;
  ts.n_channels = nc;
  ts.n_samples = ns;
  ts.subject_id = "synth-" + std::to_string(seed);
  for (int c = 1; c <= kNumClasses; ++c)
    for (int i = 0; i < n_per_class; ++i) ts.labels.push_back(c);
  rng.shuffle(std::span<int>(ts.labels));
  ts.artifact_flags.assign(ts.labels.size(), false);

  const double noise_ratio = std::pow(10.0, -snr_db / 10.0);
  // Unit-power narrowband rhythm: white noise through a two-pole resonator.
  const auto rhythm = [&](auto&& out, double center_hz) {
    const double w = 2.0 * std::numbers::pi * center_hz / fs;
    const double a1 = 2.0 * kPoleRadius * std::cos(w);
    const double a2 = -kPoleRadius * kPoleRadius;
    double y1 = 0.0, y2 = 0.0;
    for (int s = -kBurnIn; s < ns; ++s) {
      const double y = a1 * y1 + a2 * y2 + rng.normal();
      y2 = y1;
      y1 = y;
      if (s >= 0) out(s) = y;
    }
    out *= std::sqrt(ns / out.squaredNorm());
  };
  const auto drift = [&](auto&& out) {
    double y = 0.0;
    for (int s = -kBurnIn; s < ns; ++s) {
      y = kBackgroundPole * y + rng.normal();
      if (s >= 0) out(s) = y;
    }
  };

  Matrix sources(kSources, ns);
  Matrix background(nc, ns);
  Matrix noise(nc, ns);
  Vector scratch(ns);
  for (int label : ts.labels) {
    for (int k = 0; k < kSources; ++k) {
      rhythm(sources.row(k), kCenterHz[static_cast<std::size_t>(k)]);
      sources.row(k) *= std::exp(0.3 * rng.normal());
    }
    for (int ch = 0; ch < nc; ++ch) drift(background.row(ch));
    Matrix x = mixing[static_cast<std::size_t>(label - 1)] * sources;
    const double source_power = x.squaredNorm() / static_cast<double>(x.size());
    Matrix bg = background_mixing * background;
    bg *= std::sqrt(kBackgroundPower * source_power * static_cast<double>(bg.size()) / bg.squaredNorm());
    x += bg;
    // Noise is spatially white but shares the spectrum of the signal, so
    // the SNR holds within every band, not only broadband.
    for (int ch = 0; ch < nc; ++ch) {
      noise.row(ch).setZero();
      for (int k = 0; k < kSources; ++k) {
        rhythm(scratch, kCenterHz[static_cast<std::size_t>(k)]);
        noise.row(ch) += scratch.transpose();
      }
      drift(scratch);
      noise.row(ch) += std::sqrt(kBackgroundPower * kSources * ns / scratch.squaredNorm()) *
                       scratch.transpose();
    }
    const double signal_power = x.squaredNorm() / static_cast<double>(x.size());
    noise *= std::sqrt(signal_power * noise_ratio * static_cast<double>(noise.size()) /
                       noise.squaredNorm());
    x += noise;
    ts.trials.push_back(x.cast<float>());
  }
  return ts;
}

}  // namespace mibci::dataset
