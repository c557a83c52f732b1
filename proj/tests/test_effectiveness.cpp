#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "ecstat/effectiveness.hpp"
#include "ecstat/symmetry.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ecstat;
using ecstat::testing::kl_quadrature;
using ecstat::testing::random_map;

namespace {

FeatureMap shifted(const FeatureMap& f, double c) {
  auto g = f;
  for (auto& v : g.values()) v += c;
  return g;
}

} // namespace

TEST(Directions, UnitNormDeterministicAndCentred) {
  auto d = make_directions(64, 128, 1234);
  for (std::size_t k = 0; k < d.count; ++k) {
    double n2 = 0.0;
    for (double x : d.row(k)) n2 += x * x;
    EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-12);
  }
  EXPECT_EQ(d.vectors, make_directions(64, 128, 1234).vectors);
  EXPECT_NE(d.vectors, make_directions(64, 128, 1235).vectors);
  for (std::size_t i = 0; i < 64; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < d.count; ++k) mean += d.row(k)[i];
    mean /= 128.0;
    EXPECT_LT(std::abs(mean), 3.0 / std::sqrt(128.0));
  }
  EXPECT_THROW(make_directions(0, 3, 1), ArgumentError);
  EXPECT_THROW(make_directions(3, 0, 1), ArgumentError);
}

TEST(Directions, PerLayerSeedsFromMaster) {
  EXPECT_EQ(layer_seed(100, 0), 100u);
  EXPECT_EQ(layer_seed(100, 1), 101u);
  EXPECT_EQ(layer_seed(101, 1), 100u);
}

TEST(Project, BasisZeroAndLoop) {
  auto f = random_map(3, 4, 5, 1);
  std::vector<double> e0(5, 0.0);
  e0[0] = 1.0;
  auto p = project(f, e0);
  for (std::size_t loc = 0; loc < f.locations(); ++loc) EXPECT_EQ(p[loc], f.location(loc)[0]);

  auto zero = project(FeatureMap(2, 2, 5), make_directions(5, 1, 3).row(0));
  for (double v : zero) EXPECT_EQ(v, 0.0);

  auto d = make_directions(5, 1, 9);
  auto q = project(f, d.row(0));
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t w = 0; w < 4; ++w) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += d.row(0)[c] * f.at(h, w, c);
      EXPECT_NEAR(q[h * 4 + w], s, 1e-14);
    }
  EXPECT_THROW(project(f, std::span<const double>(e0).first(4)), ShapeError);
}

TEST(FitGaussian, Cases) {
  const double zeros[] = {0, 0, 0};
  auto g = fit_gaussian(zeros);
  EXPECT_EQ(g.mean, 0.0);
  EXPECT_EQ(g.variance, 1e-10);
  const double two[] = {0, 2};
  g = fit_gaussian(two);
  EXPECT_EQ(g.mean, 1.0);
  EXPECT_EQ(g.variance, 1.0);
  EXPECT_EQ(g.sample_count, 2u);
  const double one[] = {1};
  EXPECT_THROW(fit_gaussian(one), ArgumentError);

  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(5.0, 2.0);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = normal(rng);
  g = fit_gaussian(xs);
  EXPECT_NEAR(g.mean, 5.0, 0.05);
  EXPECT_NEAR(g.variance, 4.0, 0.2);
}

TEST(GaussianKl, ClosedFormCases) {
  EXPECT_EQ(gaussian_kl({0.3, 2.0, 10}, {0.3, 2.0, 10}), 0.0);
  EXPECT_NEAR(gaussian_kl({1, 1, 10}, {0, 1, 10}), 0.5, 1e-15);
  EXPECT_NEAR(gaussian_kl({0, 4, 10}, {0, 1, 10}), std::log(0.5) + 2.0 - 0.5, 1e-15);
  EXPECT_NEAR(gaussian_kl({0, 4, 10}, {0, 1, 10}), 0.80685, 1e-5);
}

TEST(GaussianKl, AgreesWithQuadrature) {
  EXPECT_NEAR(kl_quadrature(1, 1, 0, 1), 0.5, 1e-9);
  EXPECT_NEAR(kl_quadrature(0, 4, 0, 1), std::log(0.5) + 1.5, 1e-9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mu(-3, 3), sd(0.3, 3);
  for (int i = 0; i < 20; ++i) {
    const double mp = mu(rng), sp = sd(rng), mq = mu(rng), sq = sd(rng);
    EXPECT_NEAR(gaussian_kl({mp, sp * sp, 2}, {mq, sq * sq, 2}), kl_quadrature(mp, sp * sp, mq, sq * sq), 1e-6);
  }
}

TEST(EStatistic, IdenticalTensorsHitTheClamp) {
  auto f = random_map(8, 8, 6, 1);
  const double e = e_statistic(f, f, make_directions(6, 128, 5));
  EXPECT_NEAR(e, -std::log(1e-12), 1e-9);
  EXPECT_NEAR(e, 27.631, 1e-3);
}

TEST(EStatistic, LargeMeanShiftGivesNegativeE) {
  auto style = random_map(64, 64, 4, 2);
  const double e = e_statistic(shifted(style, 10.0), style, make_directions(4, 128, 7));
  EXPECT_LT(e, 0.0);
  // per-direction d = (10 sum v)^2 / (2 sigma^2) with sigma^2 ~ 1 for standard-normal channels
  auto dirs = make_directions(4, 128, 7);
  auto d = direction_divergences(shifted(style, 10.0), style, dirs);
  for (std::size_t k = 0; k < dirs.count; ++k) {
    const double s = std::accumulate(dirs.row(k).begin(), dirs.row(k).end(), 0.0);
    const auto p = fit_gaussian(project(style, dirs.row(k)));
    EXPECT_NEAR(d[k], 100.0 * s * s / (2.0 * p.variance), 1e-8 * std::max(1.0, d[k]));
  }
}

TEST(EStatistic, MonotoneUnderIncreasingShift) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto style = random_map(16, 16, 8, seed, 0.5, 1.5);
    auto transferred = random_map(16, 16, 8, seed + 1000, 0.5, 1.5);
    auto dirs = make_directions(8, 128, seed);
    double prev = std::numeric_limits<double>::infinity();
    for (double c : {0.0, 1.0, 2.0, 4.0}) {
      const double e = e_statistic(shifted(transferred, c), style, dirs);
      EXPECT_LE(e, prev);
      prev = e;
    }
  }
}

TEST(EStatistic, DeterministicAcrossRunsAndThreads) {
  auto a = random_map(20, 20, 16, 1);
  auto b = random_map(20, 20, 16, 2, 0.1, 1.3);
  auto dirs = make_directions(16, 128, 99);
  const double e1 = e_statistic(a, b, dirs, {KlDirection::StyleToTransferred, 1});
  const double e2 = e_statistic(a, b, dirs, {KlDirection::StyleToTransferred, 1});
  const double e4 = e_statistic(a, b, dirs, {KlDirection::StyleToTransferred, 4});
  EXPECT_EQ(e1, e2);
  EXPECT_EQ(e1, e4);
}

TEST(EStatistic, KlDirectionIsSelectable) {
  auto a = random_map(10, 10, 3, 1);
  auto b = random_map(10, 10, 3, 2, 0.0, 3.0);
  auto dirs = make_directions(3, 16, 1);
  const double forward = e_statistic(a, b, dirs, {KlDirection::StyleToTransferred, 1});
  const double backward = e_statistic(a, b, dirs, {KlDirection::TransferredToStyle, 1});
  EXPECT_NE(forward, backward);
  EXPECT_EQ(backward, e_statistic(b, a, dirs, {KlDirection::StyleToTransferred, 1}));
}

TEST(EStatistic, RotatedFeaturesWithRotatedDirections) {
  auto a = random_map(12, 12, 6, 3);
  auto b = random_map(12, 12, 6, 4, 0.3, 1.2);
  const Eigen::MatrixXd U = symmetry::random_orthonormal(6, 17);
  auto rotate = [&](const FeatureMap& f) {
    FeatureMap g = f;
    for (std::size_t p = 0; p < f.locations(); ++p) {
      Eigen::Map<const Eigen::VectorXd> x(f.location(p).data(), 6);
      Eigen::Map<Eigen::VectorXd>(g.location(p).data(), 6) = U * x;
    }
    return g;
  };
  auto dirs = make_directions(6, 128, 8);
  auto rdirs = dirs;
  for (std::size_t k = 0; k < dirs.count; ++k) {
    Eigen::Map<const Eigen::VectorXd> v(dirs.row(k).data(), 6);
    Eigen::Map<Eigen::VectorXd>(rdirs.vectors.data() + k * 6, 6) = U * v;
  }
  const double e = e_statistic(a, b, dirs);
  EXPECT_NEAR(e_statistic(rotate(a), rotate(b), rdirs), e, 1e-9 * std::abs(e));
  // rotating the features alone changes individual divergences
  EXPECT_NE(direction_divergences(rotate(a), rotate(b), dirs), direction_divergences(a, b, dirs));
}

TEST(EStatistic, InvariantToSpatialPermutation) {
  auto a = random_map(9, 7, 5, 5);
  auto b = random_map(6, 6, 5, 6, 1.0, 0.5);
  std::vector<std::size_t> perm(a.locations());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  FeatureMap pa(9, 7, 5);
  for (std::size_t p = 0; p < perm.size(); ++p) {
    auto src = a.location(perm[p]);
    std::copy(src.begin(), src.end(), pa.location(p).begin());
  }
  auto dirs = make_directions(5, 64, 2);
  const double e = e_statistic(a, b, dirs);
  EXPECT_NEAR(e_statistic(pa, b, dirs), e, 1e-10 * std::max(1.0, std::abs(e)));
}

TEST(EStatistic, ChannelMismatch) {
  EXPECT_THROW(e_statistic(random_map(2, 2, 3, 0), random_map(2, 2, 4, 0), make_directions(3, 4, 0)), ShapeError);
}
