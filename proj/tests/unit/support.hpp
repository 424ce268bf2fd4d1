#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "mibci/mibci.hpp"

namespace testing_support {

using mibci::Matrix;
using mibci::SplitMix64;
using mibci::Vector;

inline Matrix gaussian(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

/// Q diag(exp(u)) Q' with log-eigenvalues uniform in [-spread, spread].
inline Matrix random_spd(SplitMix64& rng, Eigen::Index n, double spread = 2.0) {
  const Eigen::HouseholderQR<Matrix> qr(gaussian(rng, n, n));
  const Matrix q = qr.householderQ();
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = std::exp(rng.uniform(-spread, spread));
  const Matrix c = q * d.asDiagonal() * q.transpose();
  return 0.5 * (c + c.transpose());
}

inline Matrix random_symmetric(SplitMix64& rng, Eigen::Index n) {
  const Matrix a = gaussian(rng, n, n);
  return 0.5 * (a + a.transpose());
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mibci-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
