#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "topokd/persistence.hpp"

using topokd::InvalidArgument;
using topokd::tda::brute_force_persistence;
using topokd::tda::count_local_minima;
using topokd::tda::PersistenceDiagram;
using topokd::tda::PersistencePoint;
using topokd::tda::sublevel_persistence;

namespace {

std::vector<PersistencePoint> canon(const PersistenceDiagram& pd) { return pd.canonical().points; }

std::vector<double> random_series(std::mt19937_64& rng, bool with_ties) {
  std::uniform_int_distribution<int> len(1, 64);
  std::vector<double> s(static_cast<std::size_t>(len(rng)));
  if (with_ties) {
    std::uniform_int_distribution<int> level(-3, 3);
    for (double& v : s) v = level(rng) * 0.5;
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& v : s) v = g(rng);
  }
  return s;
}

}  // namespace

TEST(SublevelPersistence, ConstantSignalHasOnlyTheEssentialClass) {
  EXPECT_EQ(canon(sublevel_persistence({5, 5, 5})), (std::vector<PersistencePoint>{{5, 5, true}}));
}

TEST(SublevelPersistence, MonotoneSignal) {
  EXPECT_EQ(canon(sublevel_persistence({1, 2, 3})), (std::vector<PersistencePoint>{{1, 3, true}}));
}

TEST(SublevelPersistence, TwoMinima) {
  // Threshold sweep: {0} born at 0, {2} born at 1, they merge at 2, global max 3.
  EXPECT_EQ(canon(sublevel_persistence({0, 2, 1, 3})), (std::vector<PersistencePoint>{{0, 3, true}, {1, 2, false}}));
}

TEST(SublevelPersistence, SingleSample) {
  EXPECT_EQ(canon(sublevel_persistence({7})), (std::vector<PersistencePoint>{{7, 7, true}}));
  EXPECT_EQ(canon(brute_force_persistence({7})), (std::vector<PersistencePoint>{{7, 7, true}}));
}

TEST(SublevelPersistence, ElderRuleKillsTheYoungerComponent) {
  // Minima 0 and 1 merge at 4: the component born at 1 dies. Minimum -1 then
  // absorbs everything at 5.
  const auto pd = sublevel_persistence({0, 4, 1, 5, -1, 6});
  EXPECT_EQ(canon(pd), (std::vector<PersistencePoint>{{-1, 6, true}, {0, 5, false}, {1, 4, false}}));
}

TEST(SublevelPersistence, NonStrictMinimumPlateauIsDiscarded) {
  // The plateau at 2 touches the lower value 1: zero-persistence merge.
  const auto pd = sublevel_persistence({3, 2, 2, 1, 4});
  EXPECT_EQ(canon(pd), (std::vector<PersistencePoint>{{1, 4, true}}));
}

TEST(SublevelPersistence, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(sublevel_persistence(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(sublevel_persistence({1.0, std::numeric_limits<double>::quiet_NaN()}), InvalidArgument);
  EXPECT_THROW(sublevel_persistence({std::numeric_limits<double>::infinity()}), InvalidArgument);
  EXPECT_THROW(brute_force_persistence(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(brute_force_persistence(std::vector<double>(257, 0.0)), InvalidArgument);
}

TEST(SublevelPersistence, MatchesBruteForceOnRandomSignals) {
  std::mt19937_64 rng(20240607);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 2000; ++trial) {
    const auto s = random_series(rng, trial % 2 == 0);
    ASSERT_EQ(canon(sublevel_persistence(s)), canon(brute_force_persistence(s))) << "trial " << trial;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
}

TEST(SublevelPersistence, PointCountEqualsLocalMinimaCount) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_series(rng, trial % 2 == 0);
    EXPECT_EQ(sublevel_persistence(s).points.size(), count_local_minima(s));
  }
}

TEST(SublevelPersistence, ElderRulePointsSitOnMinimaAndMergeValues) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_series(rng, false);
    const auto pd = sublevel_persistence(s);
    std::size_t essential = 0;
    for (const auto& p : pd.points) {
      if (p.essential) {
        ++essential;
        continue;
      }
      EXPECT_GT(p.death, p.birth);
      bool birth_is_min = false, death_is_merge = false;
      for (std::size_t t = 0; t < s.size(); ++t) {
        const bool lmin = (t == 0 || s[t - 1] > s[t]) && (t + 1 == s.size() || s[t + 1] > s[t]);
        const bool lmax = t > 0 && t + 1 < s.size() && s[t - 1] < s[t] && s[t + 1] < s[t];
        birth_is_min |= lmin && s[t] == p.birth;
        death_is_merge |= lmax && s[t] == p.death;
      }
      EXPECT_TRUE(birth_is_min);
      EXPECT_TRUE(death_is_merge);
    }
    EXPECT_EQ(essential, 1u);
  }
}

TEST(SublevelPersistence, TranslationEquivariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_series(rng, true);  // multiples of 0.5: shifts are exact
    auto shifted = s;
    for (double& v : shifted) v += 3.0;
    auto expected = canon(sublevel_persistence(s));
    for (auto& p : expected) p.birth += 3.0, p.death += 3.0;
    EXPECT_EQ(canon(sublevel_persistence(shifted)), expected);
  }
}

TEST(SublevelPersistence, PureSineHasOnePointPerCycle) {
  for (double f : {2.0, 3.0, 5.0, 7.5}) {
    std::vector<double> s(256);
    for (std::size_t t = 0; t < s.size(); ++t) s[t] = std::sin(2.0 * M_PI * f * static_cast<double>(t) / 256.0 + 0.3);
    const auto finite = static_cast<double>(sublevel_persistence(s).finite_count());
    EXPECT_NEAR(finite, f, 1.0) << "f = " << f;
  }
}
