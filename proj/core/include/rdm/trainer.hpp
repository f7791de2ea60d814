#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdm/metrics.hpp"
#include "rdm/nets.hpp"
#include "rdm/policy.hpp"
#include "rdm/rewards.hpp"
#include "rdm/schedule.hpp"
#include "rdm/teacher.hpp"
#include "rdm/trajectory.hpp"

namespace rdm {

struct TrajectoryGroup {
  std::vector<Trajectory> members;
  std::size_t cond = 0;
  bool shared_noise_init = false;
};

struct AuxReward {
  RewardSpec spec;
  double weight = 10.0;
};

/// Practical sign-normalized reward with amplitude weights, or the exact
/// residual-divided reward with unit weights.
enum class RdmMode { kPractical, kExact };
RdmMode parse_rdm_mode(std::string_view name);
std::string_view to_string(RdmMode mode);

struct TrainConfig {
  GmmSpec teacher = ring_gmm(8, 4.0, 0.05);
  TimeGrid grid;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t cond_width = 1;
  double init_perturb = 1e-2;

  std::size_t groups = 4;
  std::size_t iterations = 3000;
  std::size_t warmup = 500;
  std::vector<AuxReward> aux;
  GrpoConfig grpo;

  bool gn = true;
  bool share_t = true;
  bool share_tprime = true;
  bool shared_noise_init = true;
  BetaMode beta_mode = BetaMode::kSample;
  RdmMode rdm_mode = RdmMode::kPractical;
  std::optional<RsSource> rs_source;  // unset: denoiser for practical, score for exact

  AdamConfig generator_opt;
  AdamConfig fake_opt;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  std::size_t eval_every = 250;
  std::size_t eval_samples = 4096;
  std::size_t checkpoint_every = 0;
  bool wall_clock = false;
  std::optional<MlpParams> sd_reference;

  MlpShape net_shape() const { return {teacher.dim(), cond_width, hidden, layers}; }
  RsSource resolved_rs_source() const;
  /// Throws std::invalid_argument describing the first inconsistent field.
  void validate() const;
};

/// Running sums of per-round statistics since the last evaluation row.
struct StatWindow {
  double rs_abs = 0.0;
  double clip_frac = 0.0;
  double ratio = 0.0;
  double beta_dm = 0.0;
  std::size_t rounds = 0;
  friend bool operator==(const StatWindow&, const StatWindow&) = default;
};

struct TrainState {
  StudentState student;
  FakeScoreState fake;
  std::size_t iteration = 0;
  std::size_t samples = 0;   // trajectories sampled so far
  std::size_t incidents = 0;  // rounds rolled back
  StatWindow window;
};

TrainState init_state(const TrainConfig& cfg);

/// G backward simulations from N(0, I) (one shared start when the group uses
/// shared initial noise). Randomness comes from per-member substreams of
/// `stream_base` so sharing flags do not shift other draws.
TrajectoryGroup sample_group(const StudentState& student, const TrainConfig& cfg, std::uint64_t stream_base,
                             std::size_t cond);

/// All groups of round `round` under the current student.
std::vector<TrajectoryGroup> sample_round(const TrainState& state, const TrainConfig& cfg, std::size_t round);

/// Denoising step on the fake network using detached predictions from the
/// sampled trajectories with fresh (t, t') draws.
DenoiseUpdateResult update_fake(TrainState& state, const TrainConfig& cfg,
                                const std::vector<TrajectoryGroup>& groups, std::size_t round);

struct RewardBatch {
  std::vector<PolicyStep> steps;      // one per group member, groups concatenated
  Field advantages;                   // summed advantages, same row order
  std::vector<DmdSample> dmd_samples;  // randomness used for each row's R_s
  std::vector<double> step_t;         // generator timestep read by each row
  std::vector<double> step_tprime;    // diffused timestep read by each row
  std::vector<AdvantageField> normalized;  // every group-normalized field, per group and reward
  double rs_abs_mean = 0.0;
  double beta_dm_mean = 0.0;
  double aux_reward_mean = 0.0;
  std::size_t guarded = 0;
};

/// Rewards, group-normalized advantages and their weighted sum for every group.
RewardBatch compute_rewards(const TrainState& state, const TrainConfig& cfg,
                            const std::vector<TrajectoryGroup>& groups, std::size_t round);

struct RoundStats {
  bool aborted = false;
  std::string incident;
  double fake_loss = 0.0;
  double rs_abs_mean = 0.0;
  double beta_dm_mean = 0.0;
  double aux_reward_mean = 0.0;
  std::vector<double> clip_fractions;  // one per inner update
  std::vector<double> mean_ratios;
  std::vector<double> surrogates;
};

/// Sees the reward batch and each raw surrogate estimate (before negation and
/// clipping) together with the student it was computed under.
using RoundObserver = std::function<void(const RewardBatch& batch, std::size_t update, const StudentState& student,
                                         const PolicyGradEstimate& estimate)>;

/// One full round: sample, fake update, rewards, inner generator updates.
/// On any non-finite intermediate the state is restored and the round counted
/// as an incident.
RoundStats train_round(TrainState& state, const TrainConfig& cfg, const RoundObserver& observer = {});

/// Evaluation-time caches: teacher reference samples and fixed start noise.
struct EvalContext {
  Field teacher_samples;
  Field start_noise;
  std::optional<Field> reference_samples;
};
EvalContext make_eval_context(const TrainConfig& cfg);

/// Final samples x_0 from the student for each row of `start_noise`, using the
/// eval noise streams.
Field generate_samples(const MlpParams& params, const TrainConfig& cfg, const Field& start_noise);

MetricsRow evaluate(const TrainState& state, const TrainConfig& cfg, const EvalContext& ctx);

struct RunSinks {
  std::function<void(const MetricsRow&)> on_row;
  std::function<void(const TrainState&)> on_checkpoint;
  std::function<void(std::size_t iteration, const std::string&)> on_incident;
  RoundObserver on_round;
};

struct RunResult {
  TrainState state;
  std::vector<MetricsRow> rows;
};

/// Loops train_round until cfg.iterations, evaluating every eval_every rounds
/// (and at start and end). With `resume`, continues from that state and skips
/// the initial row.
RunResult run(const TrainConfig& cfg, const RunSinks& sinks = {}, std::optional<TrainState> resume = {});

/// Hash of the parameter bytes, used to check that a step did not touch them.
std::uint64_t params_hash(const MlpParams& params);

}  // namespace rdm
