#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

#include "support.hpp"

using namespace mibci;
using testing_support::TempDir;

TEST(SplitMix64, ReferenceSequenceForSeedZero) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(rng(), 0x06C45D188009454FULL);
}

TEST(SplitMix64, UniformAndBelowStayInRange) {
  SplitMix64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(13), 13u);
  }
}

TEST(SplitMix64, NormalMoments) {
  SplitMix64 rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

namespace {

dataset::TrialSet tiny_set() {
  dataset::TrialSet ts;
  ts.fs = 250.0;
  ts.n_channels = 3;
  ts.n_samples = 5;
  ts.subject_id = "A01T";
  SplitMix64 rng(3);
  for (int i = 0; i < 8; ++i) {
    TrialMatrix t(3, 5);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<float>(rng.normal());
    ts.trials.push_back(t);
    ts.labels.push_back(i % 4 + 1);
    ts.artifact_flags.push_back(i == 5);
  }
  return ts;
}

void write_raw(const std::filesystem::path& path, const std::string& header,
               std::size_t payload_bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(dataset::kTrialMagic.data(), static_cast<std::streamsize>(dataset::kTrialMagic.size()));
  const auto len = static_cast<std::uint32_t>(header.size());
  const unsigned char le[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                               static_cast<unsigned char>(len >> 16),
                               static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(le), 4);
  out << header;
  const std::string payload(payload_bytes, '\0');
  out << payload;
}

std::string header_json(int n_trials, int channels, int samples, std::vector<int> labels,
                        nlohmann::json artifacts) {
  nlohmann::json j{{"fs", 250.0},      {"n_channels", channels}, {"n_samples", samples},
                   {"subject_id", "x"}, {"labels", labels},       {"artifacts", artifacts}};
  (void)n_trials;
  return j.dump();
}

}  // namespace

TEST(TrialFile, RoundTripIsExact) {
  TempDir dir;
  const auto ts = tiny_set();
  dataset::store_trials(ts, dir / "a.mitrials");
  const auto back = dataset::load_trials(dir / "a.mitrials");
  EXPECT_TRUE(back == ts);
}

TEST(TrialFile, AcceptsIntegerArtifactFlags) {
  TempDir dir;
  write_raw(dir / "a.mitrials", header_json(2, 1, 2, {1, 2}, {0, 1}), 2 * 1 * 2 * 4);
  const auto ts = dataset::load_trials(dir / "a.mitrials");
  ASSERT_EQ(ts.size(), 2u);
  EXPECT_FALSE(ts.artifact_flags[0]);
  EXPECT_TRUE(ts.artifact_flags[1]);
}

TEST(TrialFile, RejectsBadMagic) {
  TempDir dir;
  std::ofstream(dir / "bad.mitrials") << "NOTMAGIC and more";
  EXPECT_THROW(dataset::load_trials(dir / "bad.mitrials"), DataError);
}

TEST(TrialFile, RejectsMalformedHeader) {
  TempDir dir;
  write_raw(dir / "a.mitrials", "{not json", 0);
  try {
    dataset::load_trials(dir / "a.mitrials");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("malformed header"), std::string::npos);
  }
}

TEST(TrialFile, RejectsPayloadLengthMismatch) {
  TempDir dir;
  write_raw(dir / "a.mitrials", header_json(2, 2, 3, {1, 2}, {false, false}), 2 * 2 * 3 * 4 - 4);
  try {
    dataset::load_trials(dir / "a.mitrials");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("payload length mismatch"), std::string::npos);
  }
}

TEST(TrialFile, RejectsUnknownLabel) {
  TempDir dir;
  write_raw(dir / "a.mitrials", header_json(2, 1, 2, {1, 5}, {false, false}), 2 * 1 * 2 * 4);
  try {
    dataset::load_trials(dir / "a.mitrials");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown label value 5"), std::string::npos);
  }
}

TEST(TrialFile, MissingFileIsDataError) {
  EXPECT_THROW(dataset::load_trials("/nonexistent/file.mitrials"), DataError);
}

TEST(ArtifactExclusion, DropsFlaggedTrialsAndReportsBalance) {
  const auto ts = tiny_set();
  const auto [clean, report] = dataset::exclude_artifacts(ts);
  EXPECT_EQ(clean.size(), 7u);
  EXPECT_EQ(report.n_total, 8u);
  EXPECT_EQ(report.n_excluded, 1u);
  EXPECT_DOUBLE_EQ(report.excluded_fraction, 1.0 / 8.0);
  EXPECT_EQ(report.before[1], 2u);
  EXPECT_EQ(report.after[1], 1u);  // trial 5 has label 2
  for (bool flag : clean.artifact_flags) EXPECT_FALSE(flag);
}

TEST(ArtifactExclusion, EmptiedClassIsAnError) {
  auto ts = tiny_set();
  for (std::size_t i = 0; i < ts.size(); ++i) ts.artifact_flags[i] = ts.labels[i] == 3;
  try {
    dataset::exclude_artifacts(ts);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class emptied by exclusion"), std::string::npos);
  }
}

TEST(Synth, GeometryAndBalance) {
  const auto ts = dataset::synth_trials(5, 72, 10.0);
  EXPECT_EQ(ts.size(), 288u);
  EXPECT_EQ(ts.n_channels, 22);
  EXPECT_EQ(ts.n_samples, 1125);
  EXPECT_DOUBLE_EQ(ts.fs, 250.0);
  for (auto count : ts.class_counts()) EXPECT_EQ(count, 72u);
  EXPECT_NO_THROW(ts.validate());
}

TEST(Synth, SameSeedSameData) {
  const auto a = dataset::synth_trials(42, 3, 0.0);
  const auto b = dataset::synth_trials(42, 3, 0.0);
  const auto c = dataset::synth_trials(43, 3, 0.0);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a.trials[0] == c.trials[0]);
}

TEST(Synth, RejectsTooFewTrials) {
  EXPECT_THROW(dataset::synth_trials(1, 1, 0.0), ConfigError);
}

TEST(Synth, NoiseLevelFollowsSnr) {
  // At very low SNR the trial power is dominated by noise and grows with
  // it; compare mean power of the same seed at two SNRs.
  const auto loud = dataset::synth_trials(9, 2, 20.0);
  const auto quiet = dataset::synth_trials(9, 2, -20.0);
  double p_loud = 0.0, p_quiet = 0.0;
  for (std::size_t i = 0; i < loud.size(); ++i) {
    p_loud += loud.trials[i].cast<double>().squaredNorm();
    p_quiet += quiet.trials[i].cast<double>().squaredNorm();
  }
  EXPECT_GT(p_quiet / p_loud, 50.0);
}
