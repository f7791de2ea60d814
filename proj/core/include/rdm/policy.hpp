#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdm/nets.hpp"
#include "rdm/numerics.hpp"
#include "rdm/teacher.hpp"
#include "rdm/trajectory.hpp"

namespace rdm {

/// Which quantity plays the role of R_s = real - fake.
enum class RsSource {
  kDenoiser,  // teacher_x0 - fake_x0 (posterior means)
  kScore,     // s_real(x_t') - s_fake(x_t')
};
RsSource parse_rs_source(std::string_view name);
std::string_view to_string(RsSource source);

struct ScoreEval {
  Vec teacher_x0;
  Vec fake_x0;
  Vec rs;
};

/// Teacher and fake predictions at x_t' and the resulting R_s.
ScoreEval evaluate_scores(const GmmSpec& teacher, const FakeScoreState& fake,
                          std::span<const double> x_tprime, double tprime, std::size_t cond,
                          RsSource source);

/// One policy transition x_t -> x_next taken under the sampling parameters.
struct PolicyStep {
  Vec x_t;
  double t = 1.0;
  double t_next = 0.75;
  std::size_t cond = 0;
  Vec x_next;
  Vec mu_old;  // alpha(t_next) * G_old(x_t)
};

PolicyStep policy_step_from(const Trajectory& traj, std::size_t step);

enum class RatioMode { kPerDim, kPerSample };
RatioMode parse_ratio_mode(std::string_view name);
std::string_view to_string(RatioMode mode);

struct GrpoConfig {
  double eta = 0.5;
  std::size_t inner_updates = 1;
  std::size_t group_size = 8;
  RatioMode ratio_mode = RatioMode::kPerDim;

  void validate() const;
};

struct PolicyGradEstimate {
  MlpGrad grads;  // ascent direction of the objective
  double surrogate = 0.0;
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
};

struct DmdSample {
  Vec x_t;
  double t = 1.0;
  std::size_t cond = 0;
  double tprime = 0.5;
  Vec noise;  // forward-diffusion noise for x_t'
};

/// Direct distribution-matching gradient grad_theta L = -sum_i R_s,i . dG(x_t,i)/dtheta,
/// optionally with each sample's R_s scaled by d / ||teacher_x0 - G(x_t)||_1.
MlpGrad dmd_gradient_oracle(const StudentState& student, const GmmSpec& teacher,
                            const FakeScoreState& fake, std::span<const DmdSample> batch,
                            RsSource source, bool weighting = false);

/// sum_i sum_k R[i,k] * grad log p_theta(x_next[k] | x_t) at the current parameters.
PolicyGradEstimate policy_grad_rdm(const StudentState& student, std::span<const PolicyStep> steps,
                                   const Field& rdm);

/// Clipped importance-sampled surrogate, averaged over the group and coordinates.
PolicyGradEstimate grpo_surrogate(const StudentState& student, std::span<const PolicyStep> steps,
                                  const Field& advantages, const GrpoConfig& cfg);

/// REINFORCE over every stochastic transition with per-trajectory scalar
/// rewards; with `importance_weighted` each step term is scaled by
/// p_theta / p_old (old densities from the cached means).
PolicyGradEstimate ddpo_full_trajectory(const StudentState& student,
                                        std::span<const Trajectory> trajectories,
                                        std::span<const double> rewards, bool importance_weighted);

struct EquivalenceReport {
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::vector<std::string> lines;
};

/// Builds random (teacher, student, fake, x_t, t, t', noise) instances for each
/// dimension and compares the exact-reward policy gradient with the negated
/// direct gradient elementwise.
EquivalenceReport check_gradient_equivalence(std::uint64_t seed, std::size_t instances_per_dim,
                                             std::span<const std::size_t> dims,
                                             double tolerance = 1e-6);

}  // namespace rdm
