#include "tdca/diffusion.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tdca;

TEST(Assign, OneCreditPerNeuronIsIdentity) {
  const auto g = assign_groups(100, 100, NeighborStructure::line(100));
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(g.anchors[i], i);
    EXPECT_EQ(g.membership[i], i);
  }
}

TEST(Assign, TenCreditsOnLineAreCentered) {
  const auto g = assign_groups(100, 10, NeighborStructure::line(100));
  ASSERT_EQ(g.credit_count(), 10u);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(g.anchors[k], 10 * k + 5);
  EXPECT_DOUBLE_EQ(g.group_size, 10.0);
  // neuron 10 is 5 from anchor 0 and 5 from anchor 1: tie goes to the lower index
  EXPECT_EQ(g.membership[10], 0u);
  EXPECT_EQ(g.membership[11], 1u);
}

TEST(Assign, ThirtySixCreditsOnGridFormSixBySix) {
  const auto g = assign_groups(100, 36, NeighborStructure::grid(10, 10));
  EXPECT_EQ(g.lattice_rows, 6u);
  EXPECT_EQ(g.lattice_cols, 6u);
  EXPECT_EQ(g.credit_count(), 36u);
}

TEST(Assign, Errors) {
  EXPECT_THROW(assign_groups(10, 11, NeighborStructure::line(10)), ValueError);
  EXPECT_THROW(assign_groups(10, 0, NeighborStructure::line(10)), ValueError);
  EXPECT_THROW(assign_groups(12, 3, NeighborStructure::grid(3, 3)), Error);
}

TEST(Diffuse, EqualCreditsReachEveryNeuron) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const bool grid = trial % 2 == 1;
    const std::size_t h = grid ? 2 + rng() % 12 : 1;
    const std::size_t w = 2 + rng() % 40;
    const auto s = grid ? NeighborStructure::grid(h, w) : NeighborStructure::line(w);
    const std::size_t k = grid ? (1 + rng() % h) * (1 + rng() % w) : 1 + rng() % s.size();
    const auto g = assign_groups(s.size(), k, s);
    const double sigma = std::uniform_real_distribution<double>(0.2, 8.0)(rng);
    const Vector out = diffuse(Vector::Constant(static_cast<Eigen::Index>(g.credit_count()), -0.37), g, s, {sigma});
    EXPECT_LT((out.array() + 0.37).abs().maxCoeff(), 1e-12) << "trial " << trial;
    const Matrix m = diffusion_matrix(g, s, {sigma});
    EXPECT_LT((m.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(Diffuse, SharpLimitCopiesNearestAnchor) {
  const auto s = NeighborStructure::line(100);
  const auto g = assign_groups(100, 10, s);
  const Vector c = Vector::LinSpaced(10, -1.0, 1.0);
  const Vector out = diffuse(c, g, s, {kSharpSigma});
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(out[static_cast<Eigen::Index>(i)], c[static_cast<Eigen::Index>(g.membership[i])]);
  }
}

TEST(Diffuse, SharpIdentityConfiguration) {
  const auto s = NeighborStructure::grid(5, 7);
  const auto g = assign_groups(35, 35, s);
  const Vector c = Vector::Random(35);
  EXPECT_EQ(diffuse(c, g, s, {kSharpSigma}), c);
}

TEST(Diffuse, EquidistantNeuronGetsHalf) {
  const auto s = NeighborStructure::line(3);
  const auto g = assign_groups(3, 2, s);
  ASSERT_EQ(g.anchors, (std::vector<std::size_t>{0, 2}));
  Vector c(2);
  c << 1, 0;
  EXPECT_NEAR(diffuse(c, g, s, {1.0})[1], 0.5, 1e-15);
}

TEST(Diffuse, FarNeuronsDoNotUnderflow) {
  const auto s = NeighborStructure::line(1000);
  const auto g = assign_groups(1000, 2, s);
  const Vector out = diffuse(Vector::Ones(2), g, s, {0.01});
  EXPECT_TRUE(out.allFinite());
  EXPECT_LT((out.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Diffuse, Errors) {
  const auto s = NeighborStructure::line(10);
  const auto g = assign_groups(10, 5, s);
  EXPECT_THROW(diffuse(Vector::Zero(4), g, s, {1.0}), DimensionError);
  EXPECT_THROW(diffuse(Vector::Zero(5), g, s, {0.0}), ValueError);
}

TEST(Diffuse, DefaultSigmaIsHalfStride) {
  const auto s = NeighborStructure::line(100);
  EXPECT_DOUBLE_EQ(default_sigma(assign_groups(100, 10, s), s), 5.0);
}
