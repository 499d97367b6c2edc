#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "mf/rng.hpp"

using mf::Rng;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  Rng a(42, 0), b(42, 1);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // mean 1/2, std error sqrt(1/12/n)
  EXPECT_NEAR(sum / 100000, 0.5, 3 * std::sqrt(1.0 / 12 / 100000));
}

TEST(Rng, BelowIsUnbiased) {
  Rng r(9);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4 * std::sqrt(n / 7.0));
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 3 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 3 * std::sqrt(2.0 / n));
}

TEST(Rng, DeriveSeedDependsOnPurposeAndSeed) {
  EXPECT_EQ(mf::derive_seed(1, "a"), mf::derive_seed(1, "a"));
  EXPECT_NE(mf::derive_seed(1, "a"), mf::derive_seed(1, "b"));
  EXPECT_NE(mf::derive_seed(1, "a"), mf::derive_seed(2, "a"));
}

TEST(Rng, ShuffleIsPermutationAndReproducible) {
  std::vector<int> a(100), b(100);
  std::iota(a.begin(), a.end(), 0);
  b = a;
  Rng r1(3), r2(3);
  mf::shuffle(a.begin(), a.end(), r1);
  mf::shuffle(b.begin(), b.end(), r2);
  EXPECT_EQ(a, b);
  std::set<int> s(a.begin(), a.end());
  EXPECT_EQ(s.size(), 100u);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_NE(a, sorted);
}
