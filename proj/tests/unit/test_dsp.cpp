#include <gtest/gtest.h>

#include <limits>
#include <numbers>

#include "../oracles/oracles.hpp"
#include "support.hpp"

using namespace mibci;

namespace {

std::vector<oracles::Section> as_sections(const dsp::BiquadCascade& c) {
  std::vector<oracles::Section> out;
  for (const auto& s : c.sections) out.push_back({s.b0, s.b1, s.b2, s.a1, s.a2});
  return out;
}

}  // namespace

TEST(Butterworth, EdgeGainOfEightToTwelve) {
  const auto c = dsp::design_butter_bandpass({8.0, 12.0}, 250.0);
  EXPECT_NEAR(c.magnitude(8.0, 250.0), std::numbers::sqrt2 / 2.0, 1e-3);
  EXPECT_NEAR(c.magnitude(12.0, 250.0), std::numbers::sqrt2 / 2.0, 1e-3);
  EXPECT_EQ(c.sections.size(), 2u);
}

TEST(Butterworth, PeakIsUnity) {
  const auto c = dsp::design_butter_bandpass({8.0, 12.0}, 250.0);
  double peak = 0.0;
  for (double f = 6.0; f <= 14.0; f += 0.001) peak = std::max(peak, c.magnitude(f, 250.0));
  EXPECT_NEAR(peak, 1.0, 1e-6);
  EXPECT_LT(c.magnitude(1.0, 250.0), 0.05);
  EXPECT_LT(c.magnitude(60.0, 250.0), 0.05);
}

TEST(Butterworth, WideBandIsStable) {
  const auto c = dsp::design_butter_bandpass({4.0, 40.0}, 250.0);
  EXPECT_LT(c.max_pole_radius(), 1.0);
}

TEST(Butterworth, EveryDefaultBandHasHalfPowerEdgesAndIsStable) {
  for (const char* scheme : {"b43", "b80"})
    for (const auto& b : dsp::default_bands(scheme)) {
      const auto c = dsp::design_butter_bandpass(b, 250.0);
      EXPECT_NEAR(c.magnitude(b.f_lo, 250.0), 1.0 / std::numbers::sqrt2, 1e-3) << b.f_lo;
      EXPECT_NEAR(c.magnitude(b.f_hi, 250.0), 1.0 / std::numbers::sqrt2, 1e-3) << b.f_hi;
      EXPECT_LT(c.max_pole_radius(), 1.0);
    }
}

TEST(Butterworth, RejectsBandsNearNyquist) {
  EXPECT_THROW(dsp::design_butter_bandpass({100.0, 120.0}, 250.0), ConfigError);
  EXPECT_THROW(dsp::design_butter_bandpass({12.0, 8.0}, 250.0), ConfigError);
  EXPECT_THROW(dsp::design_butter_bandpass({0.0, 8.0}, 250.0), ConfigError);
}

TEST(FilterForward, ImpulseMatchesDifferenceEquation) {
  const auto c = dsp::design_butter_bandpass({8.0, 12.0}, 250.0);
  Matrix x = Matrix::Zero(2, 400);
  x(1, 0) = 1.0;
  const Matrix y = dsp::filter_forward(c, x);
  const Matrix ref = oracles::naive_filter(as_sections(c), x);
  EXPECT_LT((y - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(y.row(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FilterForward, RandomInputMatchesDifferenceEquation) {
  SplitMix64 rng(21);
  const auto c = dsp::design_butter_bandpass({4.0, 8.0}, 250.0);
  const Matrix x = testing_support::gaussian(rng, 3, 1000);
  EXPECT_LT((dsp::filter_forward(c, x) - oracles::naive_filter(as_sections(c), x)).cwiseAbs().maxCoeff(),
            1e-9);
}

TEST(FilterForward, ZeroInZeroOut) {
  const auto c = dsp::design_butter_bandpass({8.0, 12.0}, 250.0);
  EXPECT_EQ(dsp::filter_forward(c, Matrix::Zero(4, 100)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FilterForward, SteadyStateSinusoidAmplitude) {
  const double fs = 250.0;
  const auto c = dsp::design_butter_bandpass({8.0, 12.0}, fs);
  Matrix x(1, 5000);
  for (Eigen::Index n = 0; n < x.cols(); ++n) x(0, n) = std::sin(2.0 * std::numbers::pi * 10.0 * n / fs);
  const Matrix y = dsp::filter_forward(c, x);
  const double amplitude = y.rightCols(1000).cwiseAbs().maxCoeff();
  EXPECT_NEAR(amplitude, c.magnitude(10.0, fs), 0.01 * c.magnitude(10.0, fs));
}

TEST(FilterForward, RejectsNonFiniteInput) {
  const auto c = dsp::design_butter_bandpass({8.0, 12.0}, 250.0);
  Matrix x = Matrix::Zero(2, 10);
  x(1, 3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(dsp::filter_forward(c, x), DataError);
}

TEST(Schemes, BandCounts) {
  EXPECT_EQ(dsp::default_bands("b43").size(), 43u);
  // 43 plus 36 one-hertz bands; see the README on this count.
  EXPECT_EQ(dsp::default_bands("b80").size(), 79u);
  EXPECT_THROW(dsp::default_bands("b7"), ConfigError);
}

TEST(Schemes, BandsCoverFourToForty) {
  for (const auto& b : dsp::default_bands("b80")) {
    EXPECT_GE(b.f_lo, 4.0);
    EXPECT_LE(b.f_hi, 40.0);
  }
  const auto b43 = dsp::default_bands("b43");
  EXPECT_EQ(b43.front(), (dsp::BandSpec{4.0, 6.0}));
  EXPECT_EQ(b43.back(), (dsp::BandSpec{32.0, 40.0}));
}

TEST(Schemes, WindowCounts) {
  EXPECT_EQ(dsp::default_windows("t11").size(), 11u);
  EXPECT_EQ(dsp::default_windows("t1").size(), 1u);
  EXPECT_EQ(dsp::default_windows("t1t2t5").size(), 3u);
  EXPECT_THROW(dsp::default_windows("t4"), ConfigError);
}

TEST(Schemes, DyadicLayout) {
  const auto w = dsp::default_windows("t11");
  EXPECT_EQ(w[0], (dsp::WindowSpec{1.0, 4.5}));
  EXPECT_EQ(w[1], (dsp::WindowSpec{1.0, 2.75}));
  EXPECT_EQ(w[3], (dsp::WindowSpec{2.75, 4.5}));
  EXPECT_EQ(w[4], (dsp::WindowSpec{1.0, 1.875}));
  EXPECT_EQ(w[10], (dsp::WindowSpec{3.625, 4.5}));
  const auto sub = dsp::default_windows("t1t2t5");
  EXPECT_EQ(sub[1], w[1]);
  EXPECT_EQ(sub[2], w[4]);
}

TEST(Windows, FifthWindowRoundsHalfAwayFromZero) {
  const auto w = dsp::default_windows("t11")[4];
  const auto [begin, end] = dsp::window_bounds(w, 250.0);
  EXPECT_EQ(begin, 250);
  EXPECT_EQ(end, 469);  // 468.75 rounds up
  EXPECT_EQ(end - begin, 219);
}

TEST(Windows, SliceAndBounds) {
  Matrix x = Matrix::Zero(2, 1125);
  x(0, 250) = 7.0;
  const Matrix s = dsp::slice_window(x, {1.0, 4.5}, 250.0);
  EXPECT_EQ(s.cols(), 875);
  EXPECT_EQ(s(0, 0), 7.0);
  EXPECT_THROW(dsp::slice_window(x, {4.0, 5.0}, 250.0), DataError);
}

TEST(Windows, ValidateRejectsShortOrOutsideWindows) {
  EXPECT_THROW((dsp::WindowSpec{4.0, 5.0}).validate(4.5, 250.0, 22), ConfigError);
  EXPECT_THROW((dsp::WindowSpec{1.0, 1.05}).validate(4.5, 250.0, 22), ConfigError);
  EXPECT_NO_THROW((dsp::WindowSpec{1.0, 1.875}).validate(4.5, 250.0, 22));
}
