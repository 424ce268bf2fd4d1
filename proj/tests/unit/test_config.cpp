#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace mibci;

TEST(Config, ParsesTypicalFile) {
  const auto cfg = parse_config(R"(
# multiscale riemann
[experiment]
feature = "riemann"
windows = "t1t2t5"
bands = "b43"
mean = "g"
kernel = "rbf"
gamma = 0.01
c_grid = [0.1, 1, 10]
folds = 4
seed = 17
threads = 2
)");
  EXPECT_EQ(cfg.feature, FeatureKind::riemann);
  EXPECT_EQ(cfg.window_list().size(), 3u);
  EXPECT_EQ(cfg.band_list().size(), 43u);
  EXPECT_EQ(*cfg.mean, riemann::MeanKind::geometric);
  EXPECT_EQ(cfg.kernel.kind, svm::KernelKind::rbf);
  EXPECT_DOUBLE_EQ(*cfg.kernel.gamma, 0.01);
  EXPECT_EQ(cfg.c_grid, (std::vector<double>{0.1, 1.0, 10.0}));
  EXPECT_EQ(cfg.folds, 4);
  EXPECT_EQ(cfg.seed, 17u);
  EXPECT_EQ(cfg.threads, 2);
}

TEST(Config, DefaultsAreCspT11B43) {
  const auto cfg = parse_config("");
  EXPECT_EQ(cfg.feature, FeatureKind::csp);
  EXPECT_EQ(cfg.windows, "t11");
  EXPECT_EQ(cfg.bands, "b43");
  EXPECT_EQ(cfg.c_grid.size(), 11u);
  EXPECT_EQ(cfg.folds, 5);
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
  EXPECT_THROW(parse_config("colour = red"), ConfigError);
  EXPECT_THROW(parse_config("folds = 3\nfolds = 4"), ConfigError);
  EXPECT_THROW(parse_config("just a line"), ConfigError);
  EXPECT_THROW(parse_config("folds = three"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1"), ConfigError);
}

TEST(Config, MeanMustMatchFeature) {
  EXPECT_THROW(parse_config("feature = riemann"), ConfigError);
  EXPECT_THROW(parse_config("feature = csp\nmean = g"), ConfigError);
  EXPECT_THROW(parse_config("feature = riemann\nmean = q"), ConfigError);
}

TEST(Config, RejectsBadSchemesAndValues) {
  EXPECT_THROW(parse_config("windows = t3"), ConfigError);
  EXPECT_THROW(parse_config("bands = b12"), ConfigError);
  EXPECT_THROW(parse_config("c_grid = [1, -2]"), ConfigError);
  EXPECT_THROW(parse_config("folds = 1"), ConfigError);
  EXPECT_THROW(parse_config("kernel = tanh"), ConfigError);
}

TEST(Config, CustomEdgesOverrideSchemes) {
  const auto cfg = parse_config("window_edges = [1.0-2.5, 2.5-4.5]\nband_edges = [8-12, 12-16, 16-24]");
  ASSERT_EQ(cfg.window_list().size(), 2u);
  EXPECT_EQ(cfg.window_list()[1], (dsp::WindowSpec{2.5, 4.5}));
  ASSERT_EQ(cfg.band_list().size(), 3u);
  EXPECT_EQ(cfg.band_list()[2], (dsp::BandSpec{16.0, 24.0}));
  EXPECT_EQ(cfg.window_label(), "custom");
}

TEST(Config, GeometryValidation) {
  const auto cfg = parse_config("band_edges = [8-12, 100-120]");
  EXPECT_THROW(cfg.validate_for(250.0, 1125, 22), ConfigError);
  const auto wide = parse_config("filters_per_side = 6");
  EXPECT_THROW(wide.validate_for(250.0, 1125, 10), ConfigError);
  EXPECT_NO_THROW(parse_config("").validate_for(250.0, 1125, 22));
}

TEST(Config, JsonRoundTrip) {
  const auto cfg = parse_config(
      "feature = riemann\nmean = u\nkernel = poly\ndegree = 2\ncoef0 = 0.5\n"
      "band_edges = [8-12, 12-16]\nwindows = t1t2t5\nc_grid = [1, 100]\nseed = 99\n"
      "karcher_tol = 1e-9\nsvm_tol = 1e-4\ncov_epsilon = 1e-5");
  const auto back = config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.band_list(), cfg.band_list());
  EXPECT_EQ(back.windows, "t1t2t5");
}

TEST(Config, LoadFromFile) {
  testing_support::TempDir dir;
  std::ofstream(dir / "x.toml") << "bands = b80\n";
  EXPECT_EQ(load_config(dir / "x.toml").band_list().size(), 79u);
  EXPECT_THROW(load_config(dir / "missing.toml"), ConfigError);
}
