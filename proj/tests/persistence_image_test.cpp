#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "topokd/persistence_image.hpp"

using namespace topokd::tda;

namespace {

// Independent reference: mass of N(c, sigma^2) on [lo, hi] via erf.
double erf_mass(double lo, double hi, double c, double sigma) {
  return 0.5 * (std::erf((hi - c) / (sigma * std::sqrt(2.0))) - std::erf((lo - c) / (sigma * std::sqrt(2.0))));
}

PIConfig small_config() {
  PIConfig cfg;
  cfg.sigma = 0.3;
  cfg.birth_lo = -2.0;
  cfg.birth_hi = 2.0;
  cfg.resolution = 16;
  cfg.normalize = false;
  return cfg;
}

SignalWindow random_window(std::mt19937_64& rng, std::size_t channels, std::size_t length) {
  std::normal_distribution<double> g(0.0, 1.0);
  SignalWindow w;
  w.values.assign(channels, std::vector<double>(length));
  for (auto& c : w.values)
    for (double& v : c) v = g(rng);
  return w;
}

}  // namespace

TEST(GaussianPixelMass, WholePlaneIsUnitMass) {
  const double s = 0.7;
  EXPECT_NEAR(gaussian_pixel_mass(0.2, -0.1, {0.2 - 40 * s, 0.2 + 40 * s, -0.1 - 40 * s, -0.1 + 40 * s}, s), 1.0, 1e-12);
}

TEST(GaussianPixelMass, OneSigmaBox) {
  // (Phi(1) - Phi(-1))^2, from scipy.stats.norm.
  constexpr double kExpected = 0.4660649426743922;
  EXPECT_NEAR(gaussian_pixel_mass(1.0, 2.0, {0.5, 1.5, 1.5, 2.5}, 0.5), kExpected, 1e-12);
}

TEST(GaussianPixelMass, FarTailVanishes) {
  EXPECT_LE(gaussian_pixel_mass(0.0, 0.0, {100.0, 101.0, 0.0, 1.0}, 1.0), 1e-15);
  EXPECT_GE(gaussian_pixel_mass(0.0, 0.0, {100.0, 101.0, 0.0, 1.0}, 1.0), 0.0);
  EXPECT_LE(gaussian_pixel_mass(0.0, 0.0, {-101.0, -100.0, -1.0, 1.0}, 1.0), 1e-15);
}

TEST(GaussianPixelMass, RejectsBadArguments) {
  EXPECT_THROW(gaussian_pixel_mass(0, 0, {1, 1, 0, 1}, 1.0), topokd::InvalidArgument);
  EXPECT_THROW(gaussian_pixel_mass(0, 0, {0, 1, 0, 1}, 0.0), topokd::InvalidArgument);
}

TEST(DiagramToImage, EssentialOnlyDiagramGivesZeroImage) {
  PersistenceDiagram pd{{{-1.0, 1.0, true}}, 0};
  PIConfig cfg = small_config();
  cfg.normalize = true;
  const auto img = diagram_to_image(pd, cfg);
  EXPECT_EQ(img.max(), 0.0);
  EXPECT_FALSE(img.normalized);
  EXPECT_EQ(img.grid.size(), 16u * 16u);
}

TEST(DiagramToImage, EssentialIncludedWhenRequested) {
  PersistenceDiagram pd{{{-1.0, 1.0, true}}, 0};
  PIConfig cfg = small_config();
  cfg.include_essential = true;
  EXPECT_GT(diagram_to_image(pd, cfg).max(), 0.0);
}

TEST(DiagramToImage, SinglePointMassMatchesAnalyticIntegral) {
  PIConfig cfg = small_config();
  cfg.resolution = 64;
  const PersistencePoint p{-0.4, 0.9, false};
  const auto img = diagram_to_image({{p}, 0}, cfg);
  const double expected = p.persistence() * erf_mass(cfg.birth_lo, cfg.birth_hi, p.birth, cfg.sigma) *
                          erf_mass(0.0, cfg.persistence_hi(), p.persistence(), cfg.sigma);
  EXPECT_LT(std::abs(img.sum() - expected) / expected, 1e-9);
}

TEST(DiagramToImage, PointOutsideTheGridKeepsOnlyItsInGridMass) {
  PIConfig cfg = small_config();
  const PersistencePoint p{2.2, 2.5, false};  // birth beyond birth_hi
  const auto img = diagram_to_image({{p}, 0}, cfg);
  const double expected = p.persistence() * erf_mass(cfg.birth_lo, cfg.birth_hi, p.birth, cfg.sigma) *
                          erf_mass(0.0, cfg.persistence_hi(), p.persistence(), cfg.sigma);
  EXPECT_GT(img.sum(), 0.0);
  EXPECT_LT(std::abs(img.sum() - expected) / expected, 1e-9);
}

TEST(DiagramToImage, NormalisedMaxIsExactlyOne) {
  std::mt19937_64 rng(5);
  PIConfig cfg = small_config();
  cfg.normalize = true;
  for (int t = 0; t < 50; ++t) {
    const auto w = random_window(rng, 1, 40);
    const auto img = diagram_to_image(sublevel_persistence(w.values[0]), cfg);
    if (img.normalized) {
      EXPECT_EQ(img.max(), 1.0);
    }
    for (double v : img.grid) EXPECT_GE(v, 0.0);
  }
}

TEST(DiagramToImage, AddingAPointNeverDecreasesAPixel) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const PIConfig cfg = small_config();
  PersistenceDiagram pd;
  auto before = diagram_to_image(pd, cfg);
  for (int k = 0; k < 20; ++k) {
    const double b = u(rng);
    pd.points.push_back({b, b + std::abs(u(rng)), false});
    const auto after = diagram_to_image(pd, cfg);
    for (std::size_t i = 0; i < after.grid.size(); ++i) ASSERT_GE(after.grid[i], before.grid[i]);
    before = after;
  }
}

TEST(DiagramToImage, RejectsInvalidConfig) {
  PIConfig cfg = small_config();
  cfg.sigma = 0.0;
  EXPECT_THROW(diagram_to_image({}, cfg), topokd::InvalidArgument);
  cfg = small_config();
  cfg.birth_hi = cfg.birth_lo;
  EXPECT_THROW(diagram_to_image({}, cfg), topokd::InvalidArgument);
}

TEST(PIConfig, DigestTracksEveryField) {
  const PIConfig base;
  auto differs = [&](auto mutate) {
    PIConfig c = base;
    mutate(c);
    return c.digest() != base.digest();
  };
  EXPECT_TRUE(differs([](PIConfig& c) { c.sigma = 0.26; }));
  EXPECT_TRUE(differs([](PIConfig& c) { c.birth_lo = -9; }));
  EXPECT_TRUE(differs([](PIConfig& c) { c.birth_hi = 9; }));
  EXPECT_TRUE(differs([](PIConfig& c) { c.resolution = 32; }));
  EXPECT_TRUE(differs([](PIConfig& c) { c.include_essential = true; }));
  EXPECT_TRUE(differs([](PIConfig& c) { c.normalize = false; }));
}

TEST(PIConfig, Presets) {
  EXPECT_EQ(PIConfig::geneactiv().sigma, 0.25);
  EXPECT_EQ(PIConfig::geneactiv().birth_lo, -10.0);
  EXPECT_EQ(PIConfig::pamap2().sigma, 0.015);
  EXPECT_EQ(PIConfig::pamap2().birth_hi, 1.0);
  EXPECT_EQ(PIConfig{}.resolution, 64u);
}

TEST(ExtractPIBatch, ShapeContract) {
  std::mt19937_64 rng(1);
  const std::vector<SignalWindow> ws{random_window(rng, 3, 50)};
  const auto out = extract_pi_batch(ws, PIConfig::pamap2());
  ASSERT_EQ(out.size(), 1u);
  ASSERT_EQ(out[0].size(), 3u);
  for (const auto& img : out[0]) EXPECT_EQ(img.grid.size(), 64u * 64u);
}

TEST(ExtractPIBatch, IdenticalWindowsGiveIdenticalStacks) {
  std::mt19937_64 rng(2);
  const auto w = random_window(rng, 2, 80);
  const std::vector<SignalWindow> ws{w, w};
  const auto out = extract_pi_batch(ws, small_config());
  EXPECT_EQ(out[0], out[1]);
}

TEST(ExtractPIBatch, WorkerCountDoesNotChangeTheResult) {
  std::mt19937_64 rng(3);
  std::vector<SignalWindow> ws;
  for (int i = 0; i < 23; ++i) ws.push_back(random_window(rng, 2, 60));
  const auto serial = extract_pi_batch(ws, small_config(), 1);
  const auto parallel = extract_pi_batch(ws, small_config(), 4);
  EXPECT_EQ(serial, parallel);
}

TEST(ExtractPIBatch, ErrorsNameTheWindow) {
  std::mt19937_64 rng(4);
  std::vector<SignalWindow> ws{random_window(rng, 1, 10), random_window(rng, 1, 10), random_window(rng, 1, 10)};
  ws[2].values[0][3] = std::numeric_limits<double>::quiet_NaN();
  try {
    extract_pi_batch(ws, small_config(), 2);
    FAIL() << "expected an error";
  } catch (const topokd::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("window 2"), std::string::npos) << e.what();
  }
  ws[1].values.push_back(ws[1].values[0]);
  EXPECT_THROW(extract_pi_batch(ws, small_config()), topokd::InvalidArgument);
}
