#include <gtest/gtest.h>

#include "r2/filters.hpp"
#include "testing_util.hpp"

using namespace r2;
using r2::testing::max_abs_diff;
using r2::testing::random_tensor;

TEST(C4, GroupLawsExhaustive) {
  EXPECT_EQ(c4::compose(0, 0), 0);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(c4::compose(i, 0), i);
    EXPECT_EQ(c4::compose(0, i), i);
    EXPECT_EQ(c4::compose(i, c4::inverse(i)), 0);
    for (int j = 0; j < 4; ++j) {
      EXPECT_GE(c4::compose(i, j), 0);
      EXPECT_LT(c4::compose(i, j), 4);
      for (int k = 0; k < 4; ++k)
        EXPECT_EQ(c4::compose(c4::compose(i, j), k), c4::compose(i, c4::compose(j, k)));
    }
  }
}

TEST(C4, StrictAffineValues) {
  EXPECT_EQ(strict_affine(0), (Mat2{1, 0, 0, 1}));
  EXPECT_EQ(strict_affine(1), (Mat2{0, -1, 1, 0}));
  EXPECT_EQ(strict_affine(2), (Mat2{-1, 0, 0, -1}));
  EXPECT_EQ(strict_affine(3), (Mat2{0, 1, -1, 0}));
}

TEST(C4, StrictAffineHomomorphismExact) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_EQ(mat_mul(strict_affine(i), strict_affine(j)), strict_affine(c4::compose(i, j)));
}

TEST(C4, DeterminantOne) {
  for (int i = 0; i < 4; ++i) {
    const Mat2 m = strict_affine(i);
    EXPECT_EQ(m[0] * m[3] - m[1] * m[2], 1.0);
  }
}

TEST(RelaxedAffine, ZeroDeltaIsStrict) {
  auto delta = Tensor<double>::zeros({4, 2, 2});
  for (int i = 0; i < 4; ++i) {
    auto r = relaxed_affine(i, delta);
    const Mat2 s = strict_affine(i);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(r.data()[k], s[k]);
  }
}

TEST(RelaxedAffine, AdditionExamples) {
  std::vector<double> d(16, 0.0);
  for (int k = 0; k < 4; ++k) d[k] = 0.1;  // delta_0 = [[.1,.1],[.1,.1]]
  d[4] = 0.3;  // delta_1 = [[a,b],[c,e]] with a=.3,b=-.2,c=.5,e=.7
  d[5] = -0.2;
  d[6] = 0.5;
  d[7] = 0.7;
  auto delta = Tensor<double>::from_data({4, 2, 2}, d);
  auto r0 = relaxed_affine(0, delta);
  EXPECT_NEAR(r0.data()[0], 1.1, 1e-15);
  EXPECT_NEAR(r0.data()[1], 0.1, 1e-15);
  EXPECT_NEAR(r0.data()[2], 0.1, 1e-15);
  EXPECT_NEAR(r0.data()[3], 1.1, 1e-15);
  auto r1 = relaxed_affine(1, delta);  // [[a, -1+b],[1+c, e]]
  EXPECT_NEAR(r1.data()[0], 0.3, 1e-15);
  EXPECT_NEAR(r1.data()[1], -1.2, 1e-15);
  EXPECT_NEAR(r1.data()[2], 1.5, 1e-15);
  EXPECT_NEAR(r1.data()[3], 0.7, 1e-15);
  // relaxed minus strict recovers delta elementwise
  for (int i = 0; i < 4; ++i) {
    auto r = relaxed_affine(i, delta);
    const Mat2 s = strict_affine(i);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(r.data()[k] - s[k], d[i * 4 + k], 1e-15);
  }
}

TEST(RelaxedAffine, SeededStdWithin20Percent) {
  const double sigma = 0.25;
  std::mt19937_64 rng(2024);
  double sum = 0, sumsq = 0;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    auto delta = init_delta<double>(sigma, rng, false);
    for (double v : delta.data()) {
      sum += v;
      sumsq += v * v;
    }
  }
  const double n = draws * 16.0;
  const double stddev = std::sqrt(sumsq / n - (sum / n) * (sum / n));
  EXPECT_GT(stddev, 0.8 * sigma);
  EXPECT_LT(stddev, 1.2 * sigma);
}

TEST(ActOnCoords, Examples) {
  const std::vector<std::array<double, 2>> pts{{1, 0}, {0, 1}, {1, 1}};
  auto id = act_on_coords(strict_affine(0), pts);
  EXPECT_EQ(id, pts);
  auto r = act_on_coords(strict_affine(1), {{1, 0}});
  EXPECT_EQ(r[0][0], 0.0);
  EXPECT_EQ(r[0][1], 1.0);
  // relaxed i=0 with diagonal 0.1 on (1,1) -> (1.2, 1.2)
  const Mat2 relaxed{1.1, 0.1, 0.1, 1.1};
  auto p = act_on_coords(relaxed, {{1, 1}});
  EXPECT_NEAR(p[0][0], 1.2, 1e-15);
  EXPECT_NEAR(p[0][1], 1.2, 1e-15);
}

TEST(ActOnInput, IdentityAnd180) {
  auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(act_on_input(0, x).data(), x.data());
  EXPECT_EQ(act_on_input(2, x).data(), (std::vector<float>{4, 3, 2, 1}));
  EXPECT_THROW(act_on_input(1, Tensor<float>::zeros({1, 1, 2, 3})), ShapeError);
}

TEST(ActOnInput, GroupActionLaw) {
  auto x = random_tensor<float>({2, 3, 5, 5}, 7);
  for (int g1 = 0; g1 < 4; ++g1)
    for (int g2 = 0; g2 < 4; ++g2) {
      auto lhs = act_on_input(g1, act_on_input(g2, x));
      auto rhs = act_on_input(c4::compose(g1, g2), x);
      EXPECT_EQ(lhs.data(), rhs.data()) << g1 << "," << g2;
    }
}

TEST(ActOnGroupFeature, RegularRepresentationOracle) {
  // g=1 sends slices (s0,s1,s2,s3) to (rot90(s3), rot90(s0), rot90(s1), rot90(s2))
  auto f = random_tensor<double>({1, 2, 4, 3, 3}, 8);
  auto y = act_on_group_feature(1, f);
  for (std::int64_t c = 0; c < 2; ++c)
    for (int slice = 0; slice < 4; ++slice) {
      const int src = (slice + 3) % 4;
      std::vector<double> expect(9);
      const double* sp = f.data().data() + (c * 4 + src) * 9;
      expect.assign(sp, sp + 9);
      expect = r2::testing::rotate_array_ccw(expect, 3, 1);
      const double* yp = y.data().data() + (c * 4 + slice) * 9;
      for (int i = 0; i < 9; ++i) EXPECT_EQ(yp[i], expect[i]);
    }
}

TEST(ActOnGroupFeature, CompositionAndInverse) {
  auto f = random_tensor<float>({2, 3, 4, 4, 4}, 9);
  for (int g1 = 0; g1 < 4; ++g1) {
    for (int g2 = 0; g2 < 4; ++g2) {
      auto lhs = act_on_group_feature(g1, act_on_group_feature(g2, f));
      auto rhs = act_on_group_feature(c4::compose(g1, g2), f);
      EXPECT_EQ(lhs.data(), rhs.data());
    }
    auto back = act_on_group_feature(c4::inverse(g1), act_on_group_feature(g1, f));
    EXPECT_EQ(back.data(), f.data());
  }
}

TEST(ActOnGroupFeature, IsAPermutation) {
  auto f = random_tensor<float>({1, 2, 4, 5, 5}, 10);
  auto y = act_on_group_feature(3, f);
  auto a = f.data(), b = y.data();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}
