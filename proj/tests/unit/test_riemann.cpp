#include <gtest/gtest.h>

#include <vector>

#include "../oracles/oracles.hpp"
#include "support.hpp"

using namespace mibci;
using riemann::MeanKind;
using spd::SpdMatrix;
using testing_support::random_spd;

TEST(MeanKind, ParsesShortAndLongNames) {
  EXPECT_EQ(riemann::parse_mean_kind("g"), MeanKind::geometric);
  EXPECT_EQ(riemann::parse_mean_kind("arithmetic"), MeanKind::arithmetic);
  EXPECT_EQ(riemann::parse_mean_kind("i"), MeanKind::identity);
  EXPECT_THROW(riemann::parse_mean_kind("h"), ConfigError);
  EXPECT_EQ(riemann::to_string(MeanKind::arithmetic), "u");
}

TEST(Reference, FitsEachKind) {
  SplitMix64 rng(1);
  std::vector<SpdMatrix> pool;
  for (int i = 0; i < 6; ++i) pool.emplace_back(random_spd(rng, 5));
  const auto u = riemann::fit_reference(pool, MeanKind::arithmetic, 5);
  EXPECT_LT(testing_support::rel_err(u.reference().matrix(), spd::arithmetic_mean(pool).matrix()), 1e-14);
  const auto g = riemann::fit_reference(pool, MeanKind::geometric, 5);
  EXPECT_LT(spd::geometric_mean_detailed(pool).residual, 1e-8);
  EXPECT_LT(testing_support::rel_err(g.reference().matrix(), spd::geometric_mean(pool).matrix()), 1e-12);
  const auto i = riemann::fit_reference({}, MeanKind::identity, 5);
  EXPECT_EQ(i.reference().matrix(), Matrix::Identity(5, 5));
}

TEST(Reference, EmptyPoolIsAnErrorForDataDrivenMeans) {
  EXPECT_THROW(riemann::fit_reference({}, MeanKind::geometric, 3), DataError);
  EXPECT_THROW(riemann::fit_reference({}, MeanKind::arithmetic, 3), DataError);
}

TEST(Reference, IdentityKindRequiresTheIdentity) {
  Matrix m = Matrix::Identity(3, 3) * 2.0;
  EXPECT_THROW(riemann::RiemannRef(0, MeanKind::identity, SpdMatrix(m)), NumericError);
}

TEST(Features, LengthIsTriangularNumber) {
  SplitMix64 rng(2);
  const auto ref = riemann::fit_reference({}, MeanKind::identity, 22);
  EXPECT_EQ(riemann::riemann_features(SpdMatrix(random_spd(rng, 22)), ref).size(), 253);
  EXPECT_THROW(riemann::riemann_features(SpdMatrix::identity(4), ref), std::invalid_argument);
}

TEST(Features, ReferenceMapsToZero) {
  SplitMix64 rng(3);
  std::vector<SpdMatrix> pool;
  for (int i = 0; i < 4; ++i) pool.emplace_back(random_spd(rng, 6));
  const auto ref = riemann::fit_reference(pool, MeanKind::arithmetic, 6);
  EXPECT_LT(riemann::riemann_features(ref.reference(), ref).norm(), 1e-12);
}

TEST(Features, DotProductsAreTangentInnerProducts) {
  SplitMix64 rng(4);
  std::vector<SpdMatrix> pool;
  for (int i = 0; i < 8; ++i) pool.emplace_back(random_spd(rng, 6));
  for (auto kind : {MeanKind::geometric, MeanKind::arithmetic, MeanKind::identity}) {
    const auto ref = riemann::fit_reference(pool, kind, 6);
    for (int t = 0; t < 10; ++t) {
      const Matrix ci = random_spd(rng, 6), cj = random_spd(rng, 6);
      const double lhs = riemann::riemann_features(SpdMatrix(ci), ref)
                             .dot(riemann::riemann_features(SpdMatrix(cj), ref));
      const Matrix& r = ref.reference().matrix();
      const double rhs = oracles::tangent_inner_naive(oracles::log_map_naive(ci, r),
                                                      oracles::log_map_naive(cj, r), r);
      EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(rhs))) << riemann::to_string(kind);
    }
  }
}

TEST(Features, NormIsDistanceToReference) {
  SplitMix64 rng(5);
  const SpdMatrix r(random_spd(rng, 5));
  const riemann::RiemannRef ref(0, MeanKind::arithmetic, r);
  const SpdMatrix c(random_spd(rng, 5));
  EXPECT_NEAR(riemann::riemann_features(c, ref).norm(), spd::dist_riemann(r, c), 1e-10);
}
