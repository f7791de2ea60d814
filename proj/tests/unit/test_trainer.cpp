#include <gtest/gtest.h>

#include <cmath>

#include "rdm/harness.hpp"
#include "rdm/trainer.hpp"

using namespace rdm;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden = 16;
  cfg.iterations = 12;
  cfg.warmup = 4;
  cfg.eval_every = 4;
  cfg.eval_samples = 64;
  return cfg;
}

double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (l2_norm(a) * l2_norm(b)); }

}  // namespace

TEST(SampleGroup, SharedInitialNoiseIsBitIdentical) {
  const TrainConfig cfg = small_config();
  const TrainState st = init_state(cfg);
  const TrajectoryGroup g = sample_group(st.student, cfg, 1234, 0);
  ASSERT_EQ(g.members.size(), cfg.grpo.group_size);
  for (const auto& m : g.members)
    EXPECT_TRUE(std::equal(m.states.row(0).begin(), m.states.row(0).end(), g.members[0].states.row(0).begin()));
  EXPECT_NE(g.members[0].noises, g.members[1].noises);
  TrainConfig rnd = cfg;
  rnd.shared_noise_init = false;
  const TrajectoryGroup r = sample_group(st.student, rnd, 1234, 0);
  EXPECT_NE(r.members[0].states(0, 0), r.members[1].states(0, 0));
  // Intermediate noises do not depend on the sharing flag.
  EXPECT_EQ(r.members[3].noises, g.members[3].noises);
}

TEST(SampleGroup, TrajectoryStructureAndReconstruction) {
  const TrainConfig cfg = small_config();
  const TrainState st = init_state(cfg);
  const TrajectoryGroup g = sample_group(st.student, cfg, 99, 0);
  for (const auto& m : g.members) {
    EXPECT_EQ(m.states.rows(), 5u);
    EXPECT_EQ(m.steps(), 4u);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(m.noises(3, k), 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto c = coeffs(m.times[j + 1]);
      for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(m.mus(j, k), c.alpha * m.preds(j, k));
        EXPECT_EQ(m.states(j + 1, k), m.mus(j, k) + c.sigma * m.noises(j, k));
      }
    }
  }
}

TEST(SampleGroup, IdentityStudentOutputMeanNearZero) {
  TrainConfig cfg = small_config();
  cfg.init_perturb = 0.0;
  cfg.grpo.group_size = 256;
  TrainState st = init_state(cfg);
  set_residual_identity(st.student.params);
  const TrajectoryGroup g = sample_group(st.student, cfg, 5, 0);
  cfg.shared_noise_init = false;
  const TrajectoryGroup r = sample_group(st.student, cfg, 5, 0);
  // x_0 = x_1 * prod(alpha) + accumulated noise; the mean is zero.
  for (std::size_t k = 0; k < 2; ++k) {
    double m = 0.0, v = 0.0;
    for (const auto& t : r.members) m += t.final_sample()[k];
    m /= 256.0;
    for (const auto& t : r.members) v += (t.final_sample()[k] - m) * (t.final_sample()[k] - m);
    const double se = std::sqrt(v / 255.0 / 256.0);
    EXPECT_LT(std::abs(m), 3.0 * se);
  }
  EXPECT_EQ(g.members.size(), 256u);
}

TEST(TrainRound, FakeUpdateNeverTouchesGenerator) {
  const TrainConfig cfg = small_config();
  TrainState st = init_state(cfg);
  const auto groups = sample_round(st, cfg, 0);
  const std::uint64_t before = params_hash(st.student.params);
  const NetState fake_before = st.fake;
  update_fake(st, cfg, groups, 0);
  EXPECT_EQ(params_hash(st.student.params), before);
  EXPECT_NE(st.fake, fake_before);
}

TEST(TrainRound, SharedTimestepsRespectedWithinGroups) {
  TrainConfig cfg = small_config();
  const TrainState st = init_state(cfg);
  const auto groups = sample_round(st, cfg, 0);
  const RewardBatch b = compute_rewards(st, cfg, groups, 0);
  const std::size_t G = cfg.grpo.group_size;
  for (std::size_t g = 0; g < cfg.groups; ++g)
    for (std::size_t i = 1; i < G; ++i) {
      EXPECT_EQ(b.step_t[g * G + i], b.step_t[g * G]);
      EXPECT_EQ(b.step_tprime[g * G + i], b.step_tprime[g * G]);
      EXPECT_NE(b.step_t[g * G + i], 0.25);  // the deterministic last step is never rewarded
    }
  cfg.share_t = false;
  cfg.share_tprime = false;
  const RewardBatch u = compute_rewards(st, cfg, groups, 0);
  bool differs = false;
  for (std::size_t i = 1; i < G; ++i) differs = differs || u.step_tprime[i] != u.step_tprime[0];
  EXPECT_TRUE(differs);
}

TEST(TrainRound, WarmupDropsAuxiliaryRewards) {
  TrainConfig cfg = small_config();
  TrainConfig with_aux = cfg;
  with_aux.aux.push_back(AuxReward{RewardSpec{RewardKind::kRadial, {4.0, 0.0}, {}, 0}, 10.0});
  TrainState st = init_state(cfg);
  const auto groups = sample_round(st, cfg, 0);
  const RewardBatch a = compute_rewards(st, cfg, groups, 0);
  const RewardBatch b = compute_rewards(st, with_aux, groups, 0);
  EXPECT_EQ(a.advantages, b.advantages);
  st.iteration = cfg.warmup;
  const RewardBatch c = compute_rewards(st, with_aux, groups, 0);
  EXPECT_NE(a.advantages, c.advantages);
}

TEST(TrainRound, FirstInnerUpdateIsOnPolicy) {
  TrainConfig cfg = small_config();
  cfg.grpo.inner_updates = 3;
  cfg.grpo.eta = 0.01;
  TrainState st = init_state(cfg);
  for (int r = 0; r < 3; ++r) {
    const RoundStats s = train_round(st, cfg);
    ASSERT_FALSE(s.aborted) << s.incident;
    ASSERT_EQ(s.clip_fractions.size(), 3u);
    EXPECT_EQ(s.clip_fractions[0], 0.0);
    EXPECT_EQ(s.mean_ratios[0], 1.0);
  }
}

TEST(TrainRound, ObserverSeesEveryInnerUpdateAndGnField) {
  TrainConfig cfg = small_config();
  cfg.grpo.inner_updates = 2;
  cfg.aux.push_back(AuxReward{RewardSpec{RewardKind::kRadial, {4.0, 0.0}, {}, 0}, 10.0});
  TrainState st = init_state(cfg);
  std::vector<std::size_t> updates;
  std::size_t fields = 0;
  train_round(st, cfg, [&](const RewardBatch& b, std::size_t u, const StudentState&, const PolicyGradEstimate&) {
    updates.push_back(u);
    fields = b.normalized.size();
  });
  EXPECT_EQ(updates, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(fields, 2 * cfg.groups);  // R_dm and the radial reward per group
}

TEST(TrainRound, NonFiniteStateRollsBack) {
  const TrainConfig cfg = small_config();
  TrainState st = init_state(cfg);
  st.student.params.values[0] = std::nan("");
  const TrainState before = st;
  const RoundStats s = train_round(st, cfg);
  EXPECT_TRUE(s.aborted);
  EXPECT_FALSE(s.incident.empty());
  EXPECT_EQ(st.incidents, 1u);
  EXPECT_EQ(st.iteration, 1u);
  EXPECT_EQ(st.fake, before.fake);
  EXPECT_EQ(params_hash(st.student.params), params_hash(before.student.params));
}

TEST(TrainRound, VanillaReductionMatchesDirectGradient) {
  TrainConfig cfg = small_config();
  cfg.gn = false;
  cfg.share_t = false;
  cfg.share_tprime = false;
  cfg.shared_noise_init = false;
  cfg.rdm_mode = RdmMode::kExact;
  TrainState st = init_state(cfg);
  // Move the networks away from the symmetric init so the gradient is generic.
  for (int r = 0; r < 5; ++r) train_round(st, cfg);
  const auto groups = sample_round(st, cfg, st.iteration);
  update_fake(st, cfg, groups, st.iteration);
  const RewardBatch b = compute_rewards(st, cfg, groups, st.iteration);
  PolicyGradEstimate est = grpo_surrogate(st.student, b.steps, b.advantages, cfg.grpo);
  const MlpGrad oracle = dmd_gradient_oracle(st.student, cfg.teacher, st.fake, b.dmd_samples, RsSource::kScore);
  // Descent direction of the surrogate vs the direct loss gradient.
  Vec descent = est.grads.values;
  for (double& v : descent) v = -v;
  EXPECT_GT(cosine(descent, oracle.values), 0.999);
}

TEST(Run, ZeroIterationsEmitsOnlyInitialRow) {
  TrainConfig cfg = small_config();
  cfg.iterations = 0;
  const RunResult r = run(cfg);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].iteration, 0u);
  EXPECT_TRUE(std::isnan(r.rows[0].energy_dist_sd));
}

TEST(Run, DeterministicReplay) {
  const TrainConfig cfg = small_config();
  const RunResult a = run(cfg);
  const RunResult b = run(cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(metrics_csv_row(a.rows[i]), metrics_csv_row(b.rows[i]));
  EXPECT_EQ(a.state.student, b.state.student);
  EXPECT_EQ(a.rows.size(), 4u);
}

TEST(Run, ResumeFromCheckpointMatchesUninterruptedRun) {
  TrainConfig cfg = small_config();
  cfg.checkpoint_every = 6;
  const auto dir = std::filesystem::temp_directory_path() / "rdm_resume_test";
  std::filesystem::remove_all(dir);
  RunSinks sinks;
  sinks.on_checkpoint = [&](const TrainState& s) { write_checkpoint(dir, s, cfg); };
  const RunResult full = run(cfg, sinks);
  const TrainState mid = read_checkpoint(dir / "ckpt" / "6");
  EXPECT_EQ(mid.iteration, 6u);
  const RunResult resumed = run(cfg, {}, mid);
  // Rows after the checkpoint: iterations 8 and 12.
  ASSERT_EQ(resumed.rows.size(), 2u);
  EXPECT_EQ(metrics_csv_row(resumed.rows[0]), metrics_csv_row(full.rows[2]));
  EXPECT_EQ(metrics_csv_row(resumed.rows[1]), metrics_csv_row(full.rows[3]));
  EXPECT_EQ(resumed.state.student, full.state.student);
  std::filesystem::remove_all(dir);
}

TEST(Run, ReferenceGeneratorFillsSdColumn) {
  TrainConfig cfg = small_config();
  cfg.iterations = 0;
  cfg.sd_reference = init_state(cfg).student.params;
  const RunResult r = run(cfg);
  EXPECT_NEAR(r.rows[0].energy_dist_sd, 0.0, 1e-12);
  cfg.sd_reference = MlpParams(MlpShape{2, 1, 8, 1});
  EXPECT_THROW(run(cfg), std::invalid_argument);
}

TEST(TrainConfigValidation, RejectsInconsistentSettings) {
  TrainConfig cfg = small_config();
  cfg.groups = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.grpo.group_size = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.aux.push_back(AuxReward{RewardSpec{RewardKind::kModeAffinity, {}, {}, 99}, 1.0});
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  EXPECT_EQ(cfg.resolved_rs_source(), RsSource::kDenoiser);
  cfg.rdm_mode = RdmMode::kExact;
  EXPECT_EQ(cfg.resolved_rs_source(), RsSource::kScore);
}
