#include <gtest/gtest.h>

#include <map>
#include <set>

#include "mixseg/maskgen.hpp"
#include "oracles.hpp"

using namespace mixseg;

namespace {

LabelMap quadrants() {
  return LabelMap(4, 4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3});
}

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  std::vector<ClassId> data(h * w);
  for (auto& v : data) v = static_cast<ClassId>(rng.uniform_index(c));
  return LabelMap(h, w, c, data);
}

}  // namespace

TEST(SampleClasses, DistinctAndDrawnFromItems) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto s = sample_classes({0, 1, 2, 3, 4, 5}, 3, rng);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(std::set<ClassId>(s.begin(), s.end()).size(), 3u);
    for (auto c : s) EXPECT_LT(c, 6);
  }
  EXPECT_THROW(sample_classes({0, 1}, 3, rng), std::invalid_argument);
}

TEST(SampleClasses, PairsAreUniform) {
  Rng rng(21);
  std::map<std::set<ClassId>, int> counts;
  const int trials = 60000;
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_classes({0, 1, 2, 3}, 2, rng);
    counts[std::set<ClassId>(s.begin(), s.end())]++;
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [subset, n] : counts) EXPECT_NEAR(n / double(trials), 1.0 / 6.0, 0.01);
}

TEST(CutMix, HalfAreaOnPaperResolution) {
  Rng rng(0);
  for (int t = 0; t < 5; ++t) {
    const MixMask m = cutmix_mask(512, 1024, rng);
    EXPECT_TRUE(oracle::is_half_area_rectangle(m));
    const long area = static_cast<long>(m.popcount());
    EXPECT_LE(std::abs(area - 262144L), 1);
  }
}

TEST(CutMix, TwoByTwoIsOneOfFourHalves) {
  // Every rectangle of area 2 in a 2x2 grid, enumerated.
  const std::vector<MixMask> valid{MixMask(2, 2, {1, 1, 0, 0}), MixMask(2, 2, {0, 0, 1, 1}),
                                   MixMask(2, 2, {1, 0, 1, 0}), MixMask(2, 2, {0, 1, 0, 1})};
  Rng rng(8);
  std::set<std::vector<std::uint8_t>> seen;
  for (int t = 0; t < 200; ++t) {
    const MixMask m = cutmix_mask(2, 2, rng);
    EXPECT_EQ(m.popcount(), 2u);
    EXPECT_NE(std::find(valid.begin(), valid.end(), m), valid.end());
    seen.insert({m.bits().begin(), m.bits().end()});
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(CutMix, RejectsDegenerateGrid) {
  Rng rng(1);
  EXPECT_THROW(cutmix_mask(1, 1, rng), std::invalid_argument);
  EXPECT_THROW(cutmix_mask(0, 5, rng), std::invalid_argument);
  EXPECT_NO_THROW(cutmix_mask(1, 2, rng));
}

TEST(CutMix, RandomGridsGiveContainedHalfRectangles) {
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const std::size_t h = 1 + rng.uniform_index(20), w = 2 + rng.uniform_index(20);
    const MixMask m = cutmix_mask(h, w, rng);
    ASSERT_TRUE(oracle::is_half_area_rectangle(m)) << h << "x" << w;
  }
}

TEST(ClassMix, TwoClassesSelectsOne) {
  const LabelMap y(2, 2, 2, {0, 1, 1, 0});
  Rng rng(3);
  const auto r = classmix_mask(y, rng);
  ASSERT_EQ(r.selected.size(), 1u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.mask[k], y[k] == r.selected[0]);
  EXPECT_FALSE(r.degenerate);
}

TEST(ClassMix, SingleClassIsDegenerate) {
  Rng rng(3);
  const auto r = classmix_mask(LabelMap::filled(3, 3, 4, 2), rng);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.mask.popcount(), 0u);
}

TEST(ClassMix, QuadrantsMatchBruteForceSubset) {
  const LabelMap y = quadrants();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const MixMask m = classmix_mask(y, rng).mask;
    EXPECT_EQ(m.popcount(), 8u);
    // Enumerate all six 2-subsets; exactly one reproduces the mask and it
    // is the subset the replayed draws select.
    Rng replay(seed);
    const auto expected = oracle::replay_subset({0, 1, 2, 3}, 2, replay);
    int matches = 0;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        bool same = true;
        for (std::size_t k = 0; k < 16; ++k) same = same && (m[k] == (y[k] == a || y[k] == b));
        if (same) {
          ++matches;
          EXPECT_EQ(expected, (std::set<int>{a, b}));
        }
      }
    EXPECT_EQ(matches, 1);
  }
}

TEST(ComplexMix, SingleBlockSelectsOneOfTwoClasses) {
  const LabelMap y(2, 3, 2, {0, 1, 1, 0, 0, 1});
  Rng rng(9);
  const MixMask m = complexmix_mask(y, 1, rng);
  const bool picks_one = m[1];
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_EQ(m[k], (y[k] == 1) == picks_one);
}

TEST(ComplexMix, QuadrantBlocksMatchOracle) {
  const LabelMap y = quadrants();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const MixMask m = complexmix_mask(y, 2, rng);
    EXPECT_TRUE(oracle::mask_equals(m, oracle::complexmix(y, 2, Rng(seed))));
    // Each quadrant holds a single class, so it is either full or empty.
    for (std::size_t qi = 0; qi < 2; ++qi)
      for (std::size_t qj = 0; qj < 2; ++qj) {
        const bool first = m(2 * qi, 2 * qj);
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) EXPECT_EQ(m(2 * qi + di, 2 * qj + dj), first);
      }
  }
}

TEST(ComplexMix, RemainderRowsAndColumnsJoinLastBlock) {
  Rng gen(30);
  for (int t = 0; t < 50; ++t) {
    const LabelMap y = random_labels(7, 11, 5, gen);
    const std::uint64_t seed = gen.next_u64();
    Rng rng(seed);
    EXPECT_TRUE(oracle::mask_equals(complexmix_mask(y, 3, rng), oracle::complexmix(y, 3, Rng(seed))));
  }
}

TEST(ComplexMix, PresentClassPoolMatchesOracle) {
  Rng gen(31);
  for (int t = 0; t < 50; ++t) {
    const LabelMap y = random_labels(9, 8, 4, gen);
    const std::uint64_t seed = gen.next_u64();
    Rng rng(seed);
    const MixMask m = complexmix_mask(y, 2, rng, BlockClassPool::present_classes);
    EXPECT_TRUE(oracle::mask_equals(m, oracle::complexmix(y, 2, Rng(seed), true)));
  }
}

TEST(ComplexMix, RejectsOversizedP) {
  Rng rng(0);
  EXPECT_THROW(complexmix_mask(LabelMap::filled(4, 8, 2, 0), 5, rng), std::invalid_argument);
  EXPECT_THROW(complexmix_mask(LabelMap::filled(4, 8, 2, 0), 0, rng), std::invalid_argument);
}

TEST(ComplexMix, SingleClassProblemGivesEmptyMask) {
  Rng rng(0);
  EXPECT_EQ(complexmix_mask(LabelMap::filled(4, 4, 1, 0), 2, rng).popcount(), 0u);
}

TEST(ComplexMix, MeanDensityIsOneHalf) {
  Rng gen(2024);
  double density = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const LabelMap y = random_labels(16, 16, 4, gen);
    density += complexmix_mask(y, 4, gen).popcount() / 256.0;
  }
  density /= trials;
  EXPECT_GE(density, 0.45);
  EXPECT_LE(density, 0.55);
}

TEST(ComplexMix, DeterministicForSameSeed) {
  Rng gen(5);
  const LabelMap y = random_labels(16, 16, 5, gen);
  Rng a(77), b(77);
  EXPECT_EQ(complexmix_mask(y, 4, a), complexmix_mask(y, 4, b));
}

TEST(SampleP, Singleton) {
  Rng rng(123);
  for (int t = 0; t < 20; ++t) EXPECT_EQ(sample_p(ComplexMixSpec{{4}}, 32, 32, rng), 4u);
}

TEST(SampleP, FiltersToImageSize) {
  Rng rng(1);
  std::set<std::size_t> seen;
  for (int t = 0; t < 500; ++t) seen.insert(sample_p(ComplexMixSpec{}, 32, 32, rng));
  EXPECT_EQ(seen, (std::set<std::size_t>{4, 16}));
  EXPECT_THROW(sample_p(ComplexMixSpec{{64}}, 32, 32, rng), std::invalid_argument);
  EXPECT_THROW(sample_p(ComplexMixSpec{{}}, 32, 32, rng), std::invalid_argument);
}

TEST(SampleP, UniformOverPaperChoices) {
  Rng rng(55);
  std::map<std::size_t, int> counts;
  for (int t = 0; t < 10000; ++t) counts[sample_p(ComplexMixSpec{}, 512, 1024, rng)]++;
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [p, n] : counts) {
    EXPECT_GE(n / 10000.0, 0.23) << p;
    EXPECT_LE(n / 10000.0, 0.27) << p;
  }
}
