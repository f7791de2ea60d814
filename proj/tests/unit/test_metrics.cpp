#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "rdm/metrics.hpp"

using namespace rdm;

namespace {

Field normal_cloud(std::size_t n, double shift, std::uint64_t seed) {
  RngStream rng(seed, 31);
  Field f(n, 1);
  for (std::size_t i = 0; i < n; ++i) f(i, 0) = shift + rng.normal();
  return f;
}

}  // namespace

TEST(EnergyDistance, ZeroOnIdenticalSetsAndSymmetric) {
  const Field a = normal_cloud(300, 0.0, 1);
  EXPECT_EQ(energy_distance(a, a), 0.0);
  const Field b = normal_cloud(200, 0.5, 2);
  EXPECT_NEAR(energy_distance(a, b), energy_distance(b, a), 1e-12);
}

TEST(EnergyDistance, SeparatesDistantDistributions) {
  const Field a = normal_cloud(10000, 0.0, 3);
  const Field b = normal_cloud(10000, 10.0, 4);
  const Field c = normal_cloud(10000, 0.0, 5);
  const double far = energy_distance(a, b);
  const double near = energy_distance(a, c);
  // Population value for N(0,1) vs N(10,1) is about 2 * 10 - 2 / sqrt(pi) * 2 = 17.74.
  EXPECT_NEAR(far, 17.74, 0.1);
  EXPECT_LT(near, 0.01);
  EXPECT_GT(far, 1000.0 * near);
}

TEST(EnergyDistance, NonNegativeOnRandomPairs) {
  RngStream rng(6, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(20), m = 2 + rng.below(20), d = 1 + rng.below(3);
    Field a(n, d), b(m, d);
    fill_randn(rng, a.values());
    fill_randn(rng, b.values());
    EXPECT_GE(energy_distance(a, b), 0.0);
  }
}

TEST(EnergyDistance, RejectsTinySets) {
  EXPECT_THROW(energy_distance(Field(1, 2), Field(5, 2)), std::invalid_argument);
  EXPECT_THROW(energy_distance(Field(0, 2), Field(5, 2)), std::invalid_argument);
}

TEST(ModeCoverage, AllAtFirstMean) {
  const GmmSpec g = ring_gmm(4, 3.0, 0.1);
  Field s(10, 2);
  for (std::size_t i = 0; i < 10; ++i) s.set_row(i, g.means.row(0));
  const Vec c = mode_coverage(s, g);
  EXPECT_EQ(c, (Vec{1.0, 0.0, 0.0, 0.0}));
}

TEST(ModeCoverage, TeacherSamplesMatchWeightsWithinThreeSigma) {
  const GmmSpec g = ring_gmm(8, 4.0, 0.05);
  RngStream rng(7, 7);
  const std::size_t n = 20000;
  const Vec c = mode_coverage(gmm_sample_batch(g, rng, n), g);
  double sum = 0.0;
  for (double f : c) {
    const double se = std::sqrt(0.125 * 0.875 / static_cast<double>(n));
    EXPECT_LT(std::abs(f - 0.125), 3.0 * se);
    sum += f;
  }
  EXPECT_DOUBLE_EQ(sum, 1.0);
}

TEST(ModeCoverage, PermutingComponentsPermutesOutput) {
  const GmmSpec g = ring_gmm(3, 2.0, 0.2);
  GmmSpec p = g;
  const std::size_t order[] = {2, 0, 1};
  for (std::size_t k = 0; k < 3; ++k) p.means.set_row(k, g.means.row(order[k]));
  RngStream rng(8, 8);
  const Field s = gmm_sample_batch(g, rng, 500);
  const Vec a = mode_coverage(s, g), b = mode_coverage(s, p);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(b[k], a[order[k]]);
}

TEST(VarianceCurve, ZeroWhenFakeEqualsTeacher) {
  const GmmSpec g = ring_gmm(8, 4.0, 0.05);
  const DenoiseFn t = [&](std::span<const double> x, double tp) { return posterior_mean_denoiser(g, x, tp); };
  RngStream data(1, 1), noise(1, 2);
  const Field x0 = gmm_sample_batch(g, data, 8);
  const double tps[] = {0.1, 0.5, 0.9};
  for (const auto& p : rs_variance_curve(t, t, x0, tps, 16, noise)) EXPECT_EQ(p.mean_std, 0.0);
}

TEST(VarianceCurve, PreconditionsAndDeterminism) {
  const GmmSpec g = ring_gmm(8, 4.0, 0.05);
  GmmSpec shifted = g;
  for (double& v : shifted.means.values()) v *= 1.1;
  const DenoiseFn t = [&](std::span<const double> x, double tp) { return posterior_mean_denoiser(g, x, tp); };
  const DenoiseFn f = [&](std::span<const double> x, double tp) { return posterior_mean_denoiser(shifted, x, tp); };
  RngStream data(1, 1);
  const Field x0 = gmm_sample_batch(g, data, 4);
  const double tps[] = {0.1, 0.5, 0.9};
  const double unsorted[] = {0.5, 0.1};
  RngStream n1(2, 2), n2(2, 2);
  EXPECT_THROW(rs_variance_curve(t, f, x0, tps, 1, n1), std::invalid_argument);
  EXPECT_THROW(rs_variance_curve(t, f, x0, unsorted, 8, n1), std::invalid_argument);
  RngStream a(3, 3), b(3, 3);
  const auto c1 = rs_variance_curve(t, f, x0, tps, 8, a);
  const auto c2 = rs_variance_curve(t, f, x0, tps, 8, b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(c1[i].mean_std, c2[i].mean_std);
}

TEST(MetricsCsv, HeaderAndLocaleIndependentRow) {
  EXPECT_EQ(metrics_csv_header(2),
            "iter,energy_dist,energy_dist_sd,coverage_0,coverage_1,aux_reward_mean,rs_abs_mean,clip_frac,"
            "ratio_mean,beta_dm_mean,samples,wall_ms");
  MetricsRow r;
  r.iteration = 1250;
  r.energy_dist = 1234567.5;
  r.energy_dist_sd = std::nan("");
  r.coverage = {0.25, 0.75};
  r.samples = 40000;
  EXPECT_EQ(metrics_csv_row(r), "1250,1234567.5,nan,0.25,0.75,0,0,0,0,0,40000,0");
}
