#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rdm/schedule.hpp"
#include "rdm/teacher.hpp"

using namespace rdm;

TEST(Schedule, RectifiedFlowCoefficients) {
  const auto c = coeffs(0.3);
  EXPECT_DOUBLE_EQ(c.alpha, 0.7);
  EXPECT_DOUBLE_EQ(c.sigma, 0.3);
  EXPECT_THROW(coeffs(1.2), std::domain_error);
}

TEST(Schedule, DefaultGridStructure) {
  const TimeGrid g;
  EXPECT_EQ(g.steps(), 4u);
  EXPECT_EQ(g.stochastic_steps(), 3u);
  EXPECT_NO_THROW(g.validate());
  TimeGrid bad;
  bad.times = {1.0, 0.5, 0.6, 0.0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = TimeGrid{};
  bad.tprime_min = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_EQ(uniform_grid(2).times, (std::vector<double>{1.0, 0.5, 0.0}));
}

TEST(Schedule, ForwardDiffuseAndTransition) {
  const Vec x0{1.0, -2.0}, eps{0.5, 0.25};
  const Vec xt = forward_diffuse(x0, 0.25, eps);
  EXPECT_DOUBLE_EQ(xt[0], 0.75 * 1.0 + 0.25 * 0.5);
  EXPECT_DOUBLE_EQ(xt[1], 0.75 * -2.0 + 0.25 * 0.25);
  const Transition tr = transition_sample(x0, 0.5, eps);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(tr.mu[i], 0.5 * x0[i]);
    EXPECT_DOUBLE_EQ(tr.x_next[i], tr.mu[i] + 0.5 * eps[i]);
  }
  const Transition last = transition_sample(x0, 0.0, Vec{0.0, 0.0});
  EXPECT_EQ(last.x_next, x0);
}

TEST(Schedule, GaussianLogDensity) {
  const Vec lp = transition_logprob_per_dim(Vec{0.3}, Vec{0.1}, 0.5);
  const double want = -0.5 * std::log(2.0 * std::numbers::pi * 0.25) - 0.5 * 0.04 / 0.25;
  EXPECT_NEAR(lp[0], want, 1e-15);
  EXPECT_THROW(transition_logprob_per_dim(Vec{0.3}, Vec{0.1}, 0.0), std::domain_error);
}

TEST(Teacher, RingLayout) {
  const GmmSpec g = ring_gmm(8, 4.0, 0.05);
  EXPECT_EQ(g.components(), 8u);
  EXPECT_EQ(g.dim(), 2u);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(std::hypot(g.means(k, 0), g.means(k, 1)), 4.0, 1e-12);
    EXPECT_DOUBLE_EQ(g.weights[k], 0.125);
  }
  EXPECT_NEAR(g.means(0, 0), 4.0, 1e-12);
}

TEST(Teacher, ValidationRejectsBadSpecs) {
  GmmSpec g = ring_gmm(3, 1.0, 0.1);
  g.weights = {0.5, 0.5, 0.5};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = ring_gmm(3, 1.0, 0.1);
  g.variances[1] = -1.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Teacher, ScoreMatchesFiniteDifferencesOfLogDensity) {
  const GmmSpec g = ring_gmm(5, 2.0, 0.1);
  const Vec x{0.7, -1.3};
  for (double tp : {0.05, 0.4, 0.9}) {
    const Vec s = noisy_logdensity_score(g, x, tp);
    for (std::size_t i = 0; i < 2; ++i) {
      Vec xp = x, xm = x;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      const double fd = (noisy_logdensity(g, xp, tp) - noisy_logdensity(g, xm, tp)) / 2e-6;
      EXPECT_NEAR(s[i], fd, 1e-6 * (1.0 + std::abs(fd)));
    }
  }
}

TEST(Teacher, SingleComponentPosteriorMeanClosedForm) {
  GmmSpec g;
  g.weights = {1.0};
  g.means = Field(1, 2);
  g.means(0, 0) = 1.5;
  g.means(0, 1) = -0.5;
  g.variances = {0.3};
  const Vec x{0.2, 0.9};
  const double tp = 0.6, a = 0.4, s2 = 0.36, v = 0.3;
  const Vec d = posterior_mean_denoiser(g, x, tp);
  for (std::size_t i = 0; i < 2; ++i) {
    const double m = g.means(0, i);
    EXPECT_NEAR(d[i], m + a * v / (a * a * v + s2) * (x[i] - a * m), 1e-13);
  }
}

TEST(Teacher, ResponsibilitiesNormalizeAndStayStableFarAway) {
  const GmmSpec g = ring_gmm(8, 4.0, 0.05);
  const Vec r = noisy_responsibilities(g, Vec{400.0, -300.0}, 0.02);
  double sum = 0.0;
  for (double v : r) {
    EXPECT_TRUE(std::isfinite(v));
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Teacher, DenoiserAndScoreAgree) {
  const GmmSpec g = ring_gmm(4, 3.0, 0.2, 3);
  const Vec x{0.1, 2.0, -0.4};
  const double tp = 0.55;
  const Vec s = noisy_logdensity_score(g, x, tp);
  const Vec implied = score_from_denoiser(x, posterior_mean_denoiser(g, x, tp), tp);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s[i], implied[i], 1e-12);
}

TEST(Teacher, SampleMomentsMatchMixture) {
  const GmmSpec g = ring_gmm(8, 4.0, 0.05);
  RngStream rng(3, 3);
  const Field xs = gmm_sample_batch(g, rng, 200000);
  double m0 = 0.0, r2 = 0.0;
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    m0 += xs(i, 0);
    r2 += xs(i, 0) * xs(i, 0) + xs(i, 1) * xs(i, 1);
  }
  m0 /= 200000.0;
  r2 /= 200000.0;
  EXPECT_NEAR(m0, 0.0, 0.05);
  EXPECT_NEAR(r2, 16.0 + 2 * 0.05, 0.05);
}
