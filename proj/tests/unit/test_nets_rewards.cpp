#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "rdm/nets.hpp"
#include "rdm/rewards.hpp"

using namespace rdm;

// ---------------------------------------------------------------- nets

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  NetState s(MlpParams(MlpShape{1, 1, 0, 0}));
  MlpGrad g(s.params.shape);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = (i % 2 ? -1.0 : 1.0) * (0.1 + static_cast<double>(i));
  AdamConfig cfg;
  cfg.lr = 0.01;
  ASSERT_TRUE(adam_step(s, g, cfg));
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double gi = g.values[i];
    // m_hat = g, v_hat = g^2 after bias correction.
    EXPECT_NEAR(s.params.values[i], -0.01 * gi / (std::abs(gi) + cfg.eps), 1e-15);
  }
  EXPECT_EQ(s.opt.step, 1u);
}

TEST(Adam, RejectsNonFiniteGradientWithoutTouchingState) {
  NetState s(MlpParams(MlpShape{1, 1, 0, 0}));
  const NetState before = s;
  MlpGrad g(s.params.shape);
  g.values[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(adam_step(s, g, AdamConfig{}));
  EXPECT_EQ(s, before);
}

TEST(Adam, ClipGradNorm) {
  MlpGrad g(MlpShape{1, 1, 0, 0});
  g.values.assign(g.values.size(), 0.0);
  g.values[0] = 3.0;
  g.values[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(g.values[0], 0.6);
}

TEST(Nets, ResidualIdentityInitIsNearIdentity) {
  RngStream rng(4, 4);
  const MlpParams p = init_residual_identity(MlpShape{}, rng, 1e-2);
  const Vec x{1.0, -2.0};
  const Vec y = mlp_forward(p, x, 0.5, 0);
  EXPECT_NEAR(y[0], 1.0, 0.2);
  EXPECT_NEAR(y[1], -2.0, 0.2);
  RngStream rng0(4, 4);
  const MlpParams exact = init_residual_identity(MlpShape{}, rng0, 0.0);
  EXPECT_EQ(mlp_forward(exact, x, 0.5, 0), x);
}

TEST(Nets, CheckpointRoundTripIsExact) {
  RngStream rng(5, 5);
  NetState s(init_residual_identity(MlpShape{2, 2, 8, 1}, rng, 0.3));
  MlpGrad g(s.params.shape);
  for (double& v : g.values) v = rng.normal();
  adam_step(s, g, AdamConfig{});
  std::stringstream buf;
  write_net(buf, s);
  const NetState back = read_net(buf);
  EXPECT_EQ(back, s);
  std::stringstream bad("rdm-net v9\n");
  EXPECT_THROW(read_net(bad), std::exception);
}

TEST(Nets, FakeDenoiseGradientMatchesFiniteDifferences) {
  RngStream rng(6, 6);
  FakeScoreState fake(init_residual_identity(MlpShape{2, 1, 6, 1}, rng, 0.3));
  DenoiseBatch batch{Field(3, 2), {0.2, 0.5, 0.9}, Field(3, 2), {}};
  fill_randn(rng, batch.x0.values());
  fill_randn(rng, batch.noise.values());
  const MlpGrad g = fake_denoise_gradient(fake, batch);
  for (std::size_t k : {0u, 7u, 40u, static_cast<unsigned>(g.values.size() - 1)}) {
    FakeScoreState p = fake, m = fake;
    p.params.values[k] += 1e-6;
    m.params.values[k] -= 1e-6;
    double lp = 0.0, lm = 0.0;
    fake_denoise_gradient(p, batch, &lp);
    fake_denoise_gradient(m, batch, &lm);
    EXPECT_NEAR(g.values[k], (lp - lm) / 2e-6, 1e-6);
  }
}

TEST(Nets, FakeDenoiseUpdateReducesLossOnFixedBatch) {
  RngStream rng(7, 7);
  FakeScoreState fake(init_residual_identity(MlpShape{}, rng, 1e-2));
  DenoiseBatch batch{Field(16, 2), Vec(16, 0.5), Field(16, 2), {}};
  fill_randn(rng, batch.x0.values());
  fill_randn(rng, batch.noise.values());
  AdamConfig cfg;
  cfg.lr = 1e-2;
  const double first = fake_denoise_update(fake, batch, cfg, 0.0).loss;
  double last = first;
  for (int i = 0; i < 50; ++i) last = fake_denoise_update(fake, batch, cfg, 0.0).loss;
  EXPECT_LT(last, first);
  DenoiseBatch empty{Field(0, 2), {}, Field(0, 2), {}};
  EXPECT_THROW(fake_denoise_update(fake, empty, cfg, 1.0), std::invalid_argument);
}

// ---------------------------------------------------------------- rewards

TEST(GroupNormalize, ThreeValueExample) {
  const Vec r{1.0, 2.0, 3.0};
  const AdvantageField a = group_normalize(r);
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(a.values(0, 0), -1.0 / s, 1e-15);
  EXPECT_NEAR(a.values(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(a.values(2, 0), 1.0 / s, 1e-15);
  EXPECT_NEAR(a.values(2, 0), 1.224744871391589, 1e-12);
}

TEST(GroupNormalize, PerPositionStatistics) {
  RngStream rng(8, 8);
  Field f(8, 5);
  fill_randn(rng, f.values());
  for (std::size_t i = 0; i < 8; ++i) f(i, 2) = 3.5;  // constant column
  const AdvantageField a = group_normalize(f);
  EXPECT_EQ(a.guarded, 1u);
  for (std::size_t c = 0; c < 5; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 8; ++i) m += a.values(i, c);
    m /= 8.0;
    for (std::size_t i = 0; i < 8; ++i) v += (a.values(i, c) - m) * (a.values(i, c) - m);
    if (c == 2) {
      for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.values(i, c), 0.0);
    } else {
      EXPECT_LT(std::abs(m), 1e-10);
      EXPECT_NEAR(std::sqrt(v / 8.0), 1.0, 1e-8);
    }
  }
  EXPECT_THROW(group_normalize(Field(1, 3)), std::invalid_argument);
  const GroupStatsCheck c = check_group_stats(a);
  EXPECT_LT(c.max_abs_mean, 1e-10);
  EXPECT_LT(c.max_std_deviation, 1e-8);
  EXPECT_TRUE(c.guarded_exact_zero);
  AdvantageField broken = a;
  broken.values(0, 2) = 1e-3;
  EXPECT_FALSE(check_group_stats(broken).guarded_exact_zero);
  broken.values(0, 0) += 0.5;
  EXPECT_GT(check_group_stats(broken).max_abs_mean, 0.01);
}

TEST(Rewards, ExactRewardFormulaAndFlags) {
  Field rs(2, 2), xn(2, 2), mu(2, 2);
  rs.values() = {0.4, -0.2, 1.0, 0.5};
  xn.values() = {1.0, 0.5, 2.0, 3.0};
  mu.values() = {0.5, 0.5, 1.5, 2.0};
  const std::vector<ScheduleCoeffs> cs{coeffs(0.5), coeffs(0.25)};
  const ExactReward r = rdm_exact(rs, xn, mu, cs);
  EXPECT_NEAR(r.values(0, 0), 0.4 / 0.5 * 0.25 / 0.5, 1e-15);
  EXPECT_EQ(r.flagged[1], 1);
  EXPECT_EQ(r.flagged_count, 1u);
  EXPECT_NEAR(r.values(1, 1), 0.5 / 1.0 * 0.0625 / 0.75, 1e-15);
}

TEST(Rewards, PracticalRewardSignAndWeighting) {
  Field tx(1, 2), fx(1, 2), px(1, 2), xn(1, 2), mu(1, 2);
  tx.values() = {1.0, 2.0};
  fx.values() = {0.5, 2.5};
  px.values() = {0.0, 1.0};
  xn.values() = {0.3, 0.0};
  mu.values() = {0.1, 0.0};  // second coordinate: sign(0) = -1
  const PracticeReward r = rdm_practice(tx, fx, px, xn, mu);
  const double w = 2.0 / 2.0;
  EXPECT_DOUBLE_EQ(r.weighting[0], w);
  EXPECT_DOUBLE_EQ(r.values(0, 0), 0.5 * w);
  EXPECT_DOUBLE_EQ(r.values(0, 1), 0.5 * w);
  EXPECT_EQ(sign_of(0.0), -1.0);
}

TEST(Rewards, AmplitudeWeightsAndBeta) {
  Field xn(2, 2), mu(2, 2);
  xn.values() = {0.2, -0.1, 0.0, 0.4};
  mu.values() = {0.0, 0.0, 0.0, 0.0};
  const std::vector<ScheduleCoeffs> cs{coeffs(0.5), coeffs(0.5)};
  const Field w = wdm_weight(xn, mu, cs);
  EXPECT_NEAR(w(0, 0), 1.0 / (0.2 + 1e-7) * 0.5, 1e-12);
  EXPECT_NEAR(w(1, 0), 1.0 / 1e-7 * 0.5, 1e-3);
  const Vec b = beta_dm(w);
  EXPECT_NEAR(b[0], 0.5 * (w(0, 0) + w(0, 1)), 1e-12);
  const Field bs = beta_field(w, BetaMode::kSample);
  EXPECT_EQ(bs(0, 0), b[0]);
  EXPECT_EQ(bs(0, 1), b[0]);
  EXPECT_EQ(beta_field(w, BetaMode::kPixel), w);
  EXPECT_EQ(beta_field(w, BetaMode::kOff)(1, 1), 1.0);
  EXPECT_THROW(parse_beta_mode("sometimes"), std::invalid_argument);
}

TEST(Rewards, WeightedAddCombinesAndSkipsZeroWeights) {
  Field a(2, 2), w(2, 2, 2.0), beta(2, 2, 0.5);
  a.values() = {1.0, -1.0, 0.5, 0.0};
  const Field only_dm = weighted_add(a, w, beta, {});
  EXPECT_EQ(only_dm(0, 1), -2.0);
  const Field with_aux = weighted_add(a, w, beta, {{3.0, Vec{1.0, -1.0}}, {0.0, Vec{100.0, 100.0}}});
  EXPECT_DOUBLE_EQ(with_aux(0, 0), 2.0 + 0.5 * 3.0);
  EXPECT_DOUBLE_EQ(with_aux(1, 1), 0.0 - 0.5 * 3.0);
  EXPECT_THROW(weighted_add(a, w, beta, {{1.0, Vec{1.0}}}), std::invalid_argument);
}

TEST(Rewards, ExternalRewards) {
  RewardSpec radial{RewardKind::kRadial, {4.0, 0.0}, {}, 0};
  EXPECT_DOUBLE_EQ(external_reward(radial, Vec{3.0, 1.0}), -2.0);
  RewardSpec half{RewardKind::kHalfspace, {}, {0.0, 2.0}, 0};
  EXPECT_DOUBLE_EQ(external_reward(half, Vec{3.0, 1.5}), 3.0);
  const GmmSpec g = ring_gmm(4, 4.0, 0.05);
  RewardSpec mode{RewardKind::kModeAffinity, {}, {}, 0};
  EXPECT_NEAR(external_reward(mode, Vec{4.0, 0.0}, &g), 0.0, 1e-9);
  EXPECT_LT(external_reward(mode, Vec{-4.0, 0.0}, &g), -10.0);
  EXPECT_THROW(external_reward(mode, Vec{4.0, 0.0}), std::invalid_argument);
  EXPECT_EQ(parse_reward_kind("mode-affinity"), RewardKind::kModeAffinity);
}
