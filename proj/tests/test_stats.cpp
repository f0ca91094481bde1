#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "roro/stats.hpp"
#include "support/oracles.hpp"

using namespace roro;
using namespace roro::stats;

namespace {

std::vector<double> normals(std::mt19937_64& g, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(g);
  return v;
}

// Plug-in mutual information between equal-frequency bins of v and binary y.
double binned_mi(const std::vector<double>& v, const std::vector<int>& y, int bins) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::array<double, 2>> joint(bins, {0.0, 0.0});
  for (std::size_t r = 0; r < n; ++r) joint[r * bins / n][y[idx[r]]] += 1.0 / n;
  double py[2] = {0, 0};
  for (const auto& b : joint) py[0] += b[0], py[1] += b[1];
  double mi = 0.0;
  for (const auto& b : joint) {
    const double pb = b[0] + b[1];
    for (int c = 0; c < 2; ++c)
      if (b[c] > 0) mi += b[c] * std::log(b[c] / (pb * py[c]));
  }
  return mi;
}

}  // namespace

TEST(PartialCorrelation, IdenticalToTarget) {
  std::mt19937_64 g(1);
  auto t = normals(g, 100);
  auto c1 = normals(g, 100), c2 = normals(g, 100);
  auto pc = partial_correlation(t, t, {c1, c2});
  ASSERT_TRUE(pc.defined);
  EXPECT_NEAR(pc.r, 1.0, 1e-12);
  EXPECT_LT(pc.p, 1e-12);
  EXPECT_EQ(pc.df, 96);
}

TEST(PartialCorrelation, ExplainedByControl) {
  std::mt19937_64 g(2);
  auto c = normals(g, 200), t = normals(g, 200);
  auto pc = partial_correlation(c, t, {c});
  EXPECT_FALSE(pc.defined);
  EXPECT_FALSE(pc.reason.empty());
}

TEST(PartialCorrelation, MatchesNormalEquationOracle) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto c1 = normals(g, 60), c2 = normals(g, 60), v = normals(g, 60), t = normals(g, 60);
    for (std::size_t i = 0; i < 60; ++i) {
      v[i] += 0.5 * c1[i] + 0.3 * t[i];
      t[i] += 0.7 * c2[i];
    }
    auto pc = partial_correlation(v, t, {c1, c2});
    EXPECT_NEAR(pc.r, oracle::partial_corr_normal_equations(v, t, {c1, c2}), 1e-10);
    EXPECT_EQ(pc.df, 56);
    const double tt = pc.r * std::sqrt(56.0 / (1 - pc.r * pc.r));
    EXPECT_NEAR(pc.t, tt, 1e-9);
  }
}

TEST(PartialCorrelation, GaussianClosedForm) {
  // Covariance of (v, t, c) with unit variances.
  const double rvt = 0.6, rvc = 0.5, rtc = 0.3;
  Eigen::Matrix3d cov;
  cov << 1, rvt, rvc, rvt, 1, rtc, rvc, rtc, 1;
  const double expected = (rvt - rvc * rtc) / std::sqrt((1 - rvc * rvc) * (1 - rtc * rtc));
  EXPECT_NEAR(expected, oracle::gaussian_partial_corr(cov), 1e-12);
  Eigen::Matrix3d L = cov.llt().matrixL();
  std::mt19937_64 g(4);
  const std::size_t n = 5000;
  std::vector<double> v(n), t(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector3d z(standard_normal(g), standard_normal(g), standard_normal(g));
    Eigen::Vector3d x = L * z;
    v[i] = x(0), t[i] = x(1), c[i] = x(2);
  }
  EXPECT_NEAR(partial_correlation(v, t, {c}).r, expected, 0.02);
}

TEST(PartialCorrelation, AffineInvariance) {
  std::mt19937_64 g(5);
  auto v = normals(g, 80), t = normals(g, 80), c1 = normals(g, 80), c2 = normals(g, 80);
  for (std::size_t i = 0; i < 80; ++i) v[i] += 0.4 * t[i] + 0.2 * c1[i];
  const double base = partial_correlation(v, t, {c1, c2}).r;
  auto aff = [](std::vector<double> x, double a, double b) {
    for (auto& e : x) e = a * e + b;
    return x;
  };
  EXPECT_NEAR(partial_correlation(aff(v, 3.0, -2.0), t, {c1, c2}).r, base, 1e-10);
  EXPECT_NEAR(partial_correlation(v, aff(t, 0.1, 5.0), {c1, c2}).r, base, 1e-10);
  EXPECT_NEAR(partial_correlation(v, t, {aff(c1, -7.0, 1.0), c2}).r, base, 1e-10);
  EXPECT_NEAR(partial_correlation(v, t, {c1, aff(c2, 2.0, 0.5)}).r, base, 1e-10);
}

TEST(PartialCorrelation, InputChecks) {
  std::vector<double> a = {1, 2, 3}, b = {1, 2};
  EXPECT_THROW(partial_correlation(a, b, {}), Error);
  EXPECT_THROW(partial_correlation(a, a, {a}), Error);
  std::vector<double> nan = {1, NAN, 3, 4, 5};
  EXPECT_THROW(partial_correlation(nan, nan, {}), Error);
}

TEST(Holm, Examples) {
  EXPECT_EQ(holm_bonferroni(std::vector<double>{0.01, 0.04, 0.03}, 0.05), (std::vector<bool>{true, false, false}));
  EXPECT_TRUE(holm_bonferroni(std::vector<double>{}, 0.05).empty());
  EXPECT_EQ(holm_bonferroni(std::vector<double>{0.2}, 0.05), std::vector<bool>{false});
  EXPECT_EQ(holm_bonferroni(std::vector<double>{0.04, 0.001, 0.02}, 0.05), (std::vector<bool>{true, true, true}));
}

TEST(Holm, BetweenBonferroniAndUncorrected) {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(1 + g() % 8);
    for (auto& x : p) x = std::pow(uniform01(g), 3.0);
    auto holm = holm_bonferroni(p, 0.05);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] <= 0.05 / static_cast<double>(p.size())) {
        EXPECT_TRUE(holm[i]);
      }
      if (holm[i]) {
        EXPECT_LE(p[i], 0.05);
      }
    }
  }
}

TEST(ScoreStd, Examples) {
  EXPECT_NEAR(score_std(std::vector<double>(10, 0.3)), 0.0, 1e-15);
  EXPECT_EQ(score_std(std::vector<double>(10, 1.0)), 0.0);
  EXPECT_NEAR(score_std(std::vector<double>{0, 1}), 0.7071, 1e-4);
  std::vector<double> alt(100);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = static_cast<double>(i % 2);
  EXPECT_NEAR(score_std(alt), 0.5025, 1e-4);
  EXPECT_THROW(score_std(std::vector<double>{1.0}), Error);
}

TEST(MixedKsg, Independent) {
  std::mt19937_64 g(7);
  std::vector<double> v(2000);
  std::vector<int> y(2000);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = uniform01(g);
    y[i] = g() % 2;
  }
  EXPECT_LE(std::abs(mixed_ksg_mi(v, y, 5)), 0.05);
}

TEST(MixedKsg, NearDeterministic) {
  std::mt19937_64 g(8);
  std::vector<double> v(2000);
  std::vector<int> y(2000);
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = g() % 2;
    v[i] = y[i] + 0.01 * standard_normal(g);
  }
  const double mi = mixed_ksg_mi(v, y, 5);
  EXPECT_GT(mi, 0.5);
  EXPECT_NEAR(mi, binned_mi(v, y, 20), 0.05);
}

TEST(MixedKsg, AgreesWithBinningOnGradedDependence) {
  std::mt19937_64 g(9);
  std::vector<double> v(4000);
  std::vector<int> y(4000);
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = g() % 2;
    v[i] = y[i] + standard_normal(g);
  }
  EXPECT_NEAR(mixed_ksg_mi(v, y, 5), binned_mi(v, y, 20), 0.04);
}

TEST(MixedKsg, MonotoneTransformInvariance) {
  std::mt19937_64 g(10);
  std::vector<double> v(500), ev(500);
  std::vector<int> y(500);
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = g() % 2;
    v[i] = 0.7 * y[i] + standard_normal(g);
    ev[i] = std::exp(v[i]);
  }
  EXPECT_DOUBLE_EQ(mixed_ksg_mi(v, y, 5), mixed_ksg_mi(ev, y, 5));
}

TEST(MixedKsg, DegenerateInputs) {
  std::vector<double> v(40, 0.5);
  std::vector<int> y(40, 1);
  EXPECT_EQ(mixed_ksg_mi(v, y, 5), 0.0);
  for (std::size_t i = 0; i < 20; ++i) y[i] = 0;
  const double tied = mixed_ksg_mi(v, y, 5);
  EXPECT_TRUE(std::isfinite(tied));
  EXPECT_EQ(tied, mixed_ksg_mi(v, y, 5));
  EXPECT_THROW(mixed_ksg_mi(std::vector<double>(5, 0.0), std::vector<int>(5, 0), 5), Error);
}

TEST(Ksg, BivariateGaussian) {
  std::mt19937_64 g(11);
  const double rho = 0.8;
  std::vector<double> x(2000), y(2000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = standard_normal(g);
    y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * standard_normal(g);
  }
  EXPECT_NEAR(ksg_mi(x, y, 5), oracle::gaussian_mi(rho), 0.06);
  EXPECT_NEAR(oracle::gaussian_mi(rho), 0.5108, 1e-4);
}
