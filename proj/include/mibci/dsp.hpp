#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mibci/core.hpp"

namespace mibci::dsp {

/// Bandpass interval in Hz.
struct BandSpec {
  double f_lo = 0.0;
  double f_hi = 0.0;

  void validate(double fs) const {
    if (!(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0))
      throw ConfigError("band [" + std::to_string(f_lo) + ", " + std::to_string(f_hi) +
                        "] Hz violates 0 < f_lo < f_hi < fs/2");
  }

  bool operator==(const BandSpec&) const = default;
};

/// Temporal sub-window in seconds relative to the first stored sample.
struct WindowSpec {
  double t_start = 0.0;
  double t_end = 0.0;

  /// Bounds check plus covariance estimability: at least n_channels + 1
  /// samples.
  void validate(double duration_s, double fs, int n_channels) const {
    if (!(t_start >= 0.0 && t_start < t_end && t_end <= duration_s))
      throw ConfigError("window [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                        "] s lies outside the " + std::to_string(duration_s) + " s trial");
    if ((t_end - t_start) * fs < n_channels + 1)
      throw ConfigError("window [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                        "] s is too short to estimate a " + std::to_string(n_channels) +
                        "-channel covariance");
  }

  bool operator==(const WindowSpec&) const = default;
};

/// Second-order section: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;

  std::complex<double> response(double f, double fs) const {
    const std::complex<double> zinv = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
    std::complex<double> h = 1.0;
    for (const auto& s : sections)
      h *= (s.b0 + zinv * (s.b1 + zinv * s.b2)) / (1.0 + zinv * (s.a1 + zinv * s.a2));
    return h;
  }

  double magnitude(double f, double fs) const { return std::abs(response(f, fs)); }

  /// Largest pole modulus over all sections; < 1 means stable.
  double max_pole_radius() const {
    double r = 0.0;
    for (const auto& s : sections) {
      const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
      r = std::max({r, std::abs((-s.a1 + disc) / 2.0), std::abs((-s.a1 - disc) / 2.0)});
    }
    return r;
  }
};

/// Round half away from zero.
inline long round_half_away(double x) noexcept { return std::lround(x); }

/// Second-order Butterworth lowpass prototype turned into a bandpass
/// (two biquads) with the bilinear transform.  Both edges are pre-warped,
/// so the digital gain at f_lo and f_hi is exactly 1/sqrt(2) of the
/// unit peak at the geometric centre.
inline BiquadCascade design_butter_bandpass(const BandSpec& band, double fs) {
  band.validate(fs);
  if (band.f_hi > 0.95 * fs / 2.0)
    throw ConfigError("band upper edge " + std::to_string(band.f_hi) +
                      " Hz is too close to Nyquist");
  using cd = std::complex<double>;
  const double k = 2.0 * fs;
  const double w_lo = k * std::tan(std::numbers::pi * band.f_lo / fs);
  const double w_hi = k * std::tan(std::numbers::pi * band.f_hi / fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  // Upper-half-plane prototype pole; its conjugate yields the conjugate
  // bandpass poles.  s^2 - p*bw*s + w0^2 = 0 gives two bandpass poles,
  // one on each side of the real axis.
  const cd proto = std::polar(1.0, 3.0 * std::numbers::pi / 4.0);
  const cd disc = std::sqrt(proto * proto * bw * bw - 4.0 * w0_sq);
  const std::array<cd, 2> analog{(proto * bw + disc) / 2.0, (proto * bw - disc) / 2.0};

  BiquadCascade cascade;
  for (const cd& s : analog) {
    const cd z = (k + s) / (k - s);
    // Each section takes one zero at z = 1 and one at z = -1.
    cascade.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }

  const double f_center = fs / std::numbers::pi * std::atan(std::sqrt(w0_sq) / k);
  const double gain = 1.0 / cascade.magnitude(f_center, fs);
  const double per_section = std::sqrt(gain);
  for (auto& s : cascade.sections) {
    s.b0 *= per_section;
    s.b2 *= per_section;
  }
  return cascade;
}

/// Causal forward filtering of every row (channel) with zero initial
/// state, transposed direct form II per section.
inline Matrix filter_forward(const BiquadCascade& cascade, const Matrix& x) {
  if (!x.allFinite()) throw DataError("filter input contains non-finite samples");
  const Eigen::Index nc = x.rows();
  const Eigen::Index ns = x.cols();
  Matrix y(nc, ns);
  // All sections advance together sample by sample; state is z1, z2 per
  // (section, channel).
  std::vector<double> state(2 * cascade.sections.size() * static_cast<std::size_t>(nc), 0.0);
  for (Eigen::Index t = 0; t < ns; ++t) {
    const double* __restrict in = x.col(t).data();
    double* __restrict out = y.col(t).data();
    std::copy(in, in + nc, out);
    double* z = state.data();
    for (const auto& s : cascade.sections) {
      double* __restrict z1 = z;
      double* __restrict z2 = z + nc;
      for (Eigen::Index c = 0; c < nc; ++c) {
        const double v = out[c];
        const double o = s.b0 * v + z1[c];
        z1[c] = s.b1 * v - s.a1 * o + z2[c];
        z2[c] = s.b2 * v - s.a2 * o;
        out[c] = o;
      }
      z += 2 * nc;
    }
  }
  return y;
}

/// Band schemes.  "b43": 2 Hz bands every 2 Hz, 4 Hz bands every 2 Hz
/// and 8 Hz bands every 4 Hz over [4, 40] Hz.  "b80": b43 plus the 36
/// one-hertz bands over [4, 40] Hz (79 bands in total).
inline std::vector<BandSpec> default_bands(std::string_view scheme) {
  if (scheme != "b43" && scheme != "b80")
    throw ConfigError("unknown band scheme '" + std::string(scheme) + "'");
  std::vector<BandSpec> bands;
  const auto add = [&](double width, double step) {
    for (double lo = 4.0; lo + width <= 40.0; lo += step) bands.push_back({lo, lo + width});
  };
  add(2.0, 2.0);
  add(4.0, 2.0);
  add(8.0, 4.0);
  if (scheme == "b80") add(1.0, 1.0);
  return bands;
}

/// Dyadic windows over the motor-imagery segment, which spans [1.0, 4.5] s
/// of a stored trial (stored trials begin 1.5 s after trial onset).
/// "t11": the full 3.5 s window, three 1.75 s windows hopping 0.875 s and
/// seven 0.875 s windows hopping 0.4375 s.  "t1" and "t1t2t5" pick from it.
inline std::vector<WindowSpec> default_windows(std::string_view scheme) {
  constexpr double kStart = 1.0;
  constexpr double kLength = 3.5;
  std::vector<WindowSpec> all;
  for (int level = 0; level < 3; ++level) {
    const double length = kLength / (1 << level);
    const int count = (1 << (level + 1)) - 1;
    for (int i = 0; i < count; ++i) {
      const double t0 = kStart + i * length / 2.0;
      all.push_back({t0, t0 + length});
    }
  }
  if (scheme == "t11") return all;
  if (scheme == "t1") return {all[0]};
  if (scheme == "t1t2t5") return {all[0], all[1], all[4]};
  throw ConfigError("unknown window scheme '" + std::string(scheme) + "'");
}

/// Sample range [begin, end) of a window.
inline std::pair<Eigen::Index, Eigen::Index> window_bounds(const WindowSpec& w, double fs) {
  return {round_half_away(w.t_start * fs), round_half_away(w.t_end * fs)};
}

inline Matrix slice_window(const Matrix& x, const WindowSpec& w, double fs) {
  const auto [begin, end] = window_bounds(w, fs);
  if (begin < 0 || end > x.cols() || begin >= end)
    throw DataError("window [" + std::to_string(w.t_start) + ", " + std::to_string(w.t_end) +
                    "] s exceeds the trial bounds");
  return x.middleCols(begin, end - begin);
}

}  // namespace mibci::dsp
