#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "mibci/core.hpp"
#include "mibci/spd.hpp"

namespace mibci::riemann {

using spd::SpdMatrix;

enum class MeanKind { geometric, arithmetic, identity };

inline MeanKind parse_mean_kind(std::string_view s) {
  if (s == "g" || s == "geometric") return MeanKind::geometric;
  if (s == "u" || s == "arithmetic") return MeanKind::arithmetic;
  if (s == "i" || s == "identity") return MeanKind::identity;
  throw ConfigError("unknown reference mean '" + std::string(s) + "' (expected g, u or i)");
}

inline std::string_view to_string(MeanKind kind) {
  switch (kind) {
    case MeanKind::geometric: return "g";
    case MeanKind::arithmetic: return "u";
    case MeanKind::identity: return "i";
  }
  return "?";
}

/// Tangent-space base point of one frequency band.  Caches ref^{-1/2}.
class RiemannRef {
 public:
  RiemannRef(int band, MeanKind kind, SpdMatrix reference)
      : band_(band), kind_(kind), reference_(std::move(reference)) {
    if (kind_ == MeanKind::identity) {
      if (reference_.matrix() != Matrix::Identity(reference_.dim(), reference_.dim()))
        throw NumericError("identity reference must be exactly I");
      inv_sqrt_ = reference_.matrix();
    } else {
      inv_sqrt_ = spd::invsqrtm(reference_);
    }
  }

  int band() const noexcept { return band_; }
  MeanKind kind() const noexcept { return kind_; }
  const SpdMatrix& reference() const noexcept { return reference_; }
  const Matrix& inv_sqrt() const noexcept { return inv_sqrt_; }

 private:
  int band_;
  MeanKind kind_;
  SpdMatrix reference_;
  Matrix inv_sqrt_;
};

/// Reference point from training covariances only; labels are not used.
/// `pool` holds every (trial, window) covariance of the band.
inline RiemannRef fit_reference(std::span<const SpdMatrix> pool, MeanKind kind, Eigen::Index dim,
                                int band = 0, const spd::KarcherOptions& karcher = {}) {
  switch (kind) {
    case MeanKind::identity:
      return RiemannRef(band, kind, SpdMatrix::identity(dim));
    case MeanKind::arithmetic:
      if (pool.empty()) throw DataError("empty covariance pool for the reference mean");
      return RiemannRef(band, kind, spd::arithmetic_mean(pool));
    case MeanKind::geometric:
      if (pool.empty()) throw DataError("empty covariance pool for the reference mean");
      return RiemannRef(band, kind, spd::geometric_mean(pool, karcher));
  }
  throw ConfigError("unknown reference mean kind");
}

/// vect(logm(ref^{-1/2} C ref^{-1/2})).  Dot products of these vectors are
/// the tangent-space inner products at the reference, so a linear SVM on
/// them realizes the Riemannian kernel.
inline Vector riemann_features(const SpdMatrix& c, const RiemannRef& ref) {
  spd::detail::require_same_dim(c.dim(), ref.reference().dim());
  if (ref.kind() == MeanKind::identity) return spd::vect(spd::logm(c).matrix());
  const Matrix whitened = spd::symmetrize(ref.inv_sqrt() * c.matrix() * ref.inv_sqrt());
  const auto es = spd::detail::eigensystem(whitened);
  spd::detail::require_positive(es);
  return spd::vect(spd::detail::spectral_map(es, [](double v) { return std::log(v); }));
}

}  // namespace mibci::riemann
