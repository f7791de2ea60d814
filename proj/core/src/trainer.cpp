#include "rdm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace rdm {

namespace {

// Stream tags; every random draw in a run is keyed by (seed, tag, round, ...).
enum StreamTag : std::uint64_t {
  kInitStream = 1,
  kSampleStream = 2,
  kFakeStream = 3,
  kRewardStream = 4,
  kEvalStartStream = 5,
  kTeacherRefStream = 6,
  kEvalPathStream = 7,
};

constexpr std::uint64_t kSharedMember = 0xffffffffULL;

Trajectory simulate(const MlpParams& params, const TimeGrid& grid, std::span<const double> start,
                    std::size_t cond, RngStream& stream) {
  const std::size_t d = start.size();
  const std::size_t T = grid.steps();
  Trajectory traj;
  traj.cond = cond;
  traj.times = grid.times;
  traj.states = Field(T + 1, d);
  traj.preds = Field(T, d);
  traj.noises = Field(T, d);
  traj.mus = Field(T, d);
  traj.states.set_row(0, start);
  Vec noise(d);
  for (std::size_t j = 0; j < T; ++j) {
    const Vec pred = mlp_forward(params, traj.states.row(j), grid.times[j], cond);
    if (coeffs(grid.times[j + 1]).sigma > 0.0)
      fill_randn(stream, noise);
    else
      std::fill(noise.begin(), noise.end(), 0.0);
    const Transition tr = transition_sample(pred, grid.times[j + 1], noise);
    traj.preds.set_row(j, pred);
    traj.noises.set_row(j, noise);
    traj.mus.set_row(j, tr.mu);
    traj.states.set_row(j + 1, tr.x_next);
  }
  return traj;
}

}  // namespace

RdmMode parse_rdm_mode(std::string_view name) {
  if (name == "practical") return RdmMode::kPractical;
  if (name == "exact") return RdmMode::kExact;
  throw std::invalid_argument("unknown rdm mode '" + std::string(name) + "' (expected practical|exact)");
}

std::string_view to_string(RdmMode mode) { return mode == RdmMode::kPractical ? "practical" : "exact"; }

RsSource TrainConfig::resolved_rs_source() const {
  if (rs_source) return *rs_source;
  return rdm_mode == RdmMode::kPractical ? RsSource::kDenoiser : RsSource::kScore;
}

void TrainConfig::validate() const {
  teacher.validate();
  grid.validate();
  if (grid.stochastic_steps() == 0) throw std::invalid_argument("TrainConfig: grid needs a stochastic transition");
  grpo.validate();
  if (groups == 0) throw std::invalid_argument("TrainConfig: groups must be positive");
  if (hidden == 0 && layers > 0) throw std::invalid_argument("TrainConfig: hidden must be positive");
  if (cond_width == 0) throw std::invalid_argument("TrainConfig: cond_width must be positive");
  if (eval_samples < 2) throw std::invalid_argument("TrainConfig: eval_samples must be >= 2");
  if (!(generator_opt.lr > 0.0) || !(fake_opt.lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rates must be positive");
  for (const AuxReward& a : aux) {
    if (!std::isfinite(a.weight)) throw std::invalid_argument("TrainConfig: aux weight must be finite");
    if (a.spec.kind == RewardKind::kRadial && a.spec.center.size() != teacher.dim())
      throw std::invalid_argument("TrainConfig: radial center dimension mismatch");
    if (a.spec.kind == RewardKind::kHalfspace && a.spec.normal.size() != teacher.dim())
      throw std::invalid_argument("TrainConfig: halfspace normal dimension mismatch");
    if (a.spec.kind == RewardKind::kModeAffinity && a.spec.component >= teacher.components())
      throw std::invalid_argument("TrainConfig: mode reward component out of range");
  }
  if (sd_reference && !(sd_reference->shape == net_shape()))
    throw std::invalid_argument("TrainConfig: reference generator architecture differs");
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  RngStream gs(cfg.seed, stream_key(kInitStream, 0));
  RngStream fs(cfg.seed, stream_key(kInitStream, 1));
  state.student = StudentState(init_residual_identity(cfg.net_shape(), gs, cfg.init_perturb));
  state.fake = FakeScoreState(init_residual_identity(cfg.net_shape(), fs, cfg.init_perturb));
  return state;
}

TrajectoryGroup sample_group(const StudentState& student, const TrainConfig& cfg, std::uint64_t stream_base,
                             std::size_t cond) {
  const std::size_t d = cfg.teacher.dim();
  TrajectoryGroup group;
  group.cond = cond;
  group.shared_noise_init = cfg.shared_noise_init;
  RngStream shared(cfg.seed, stream_key(stream_base, kSharedMember));
  const Vec shared_start = randn(shared, d);
  for (std::size_t i = 0; i < cfg.grpo.group_size; ++i) {
    RngStream ms(cfg.seed, stream_key(stream_base, i));
    const Vec own_start = randn(ms, d);
    group.members.push_back(
        simulate(student.params, cfg.grid, cfg.shared_noise_init ? shared_start : own_start, cond, ms));
  }
  return group;
}

std::vector<TrajectoryGroup> sample_round(const TrainState& state, const TrainConfig& cfg, std::size_t round) {
  std::vector<TrajectoryGroup> groups;
  for (std::size_t g = 0; g < cfg.groups; ++g)
    groups.push_back(sample_group(state.student, cfg, stream_key(kSampleStream, round, g), g % cfg.cond_width));
  return groups;
}

DenoiseUpdateResult update_fake(TrainState& state, const TrainConfig& cfg,
                                const std::vector<TrajectoryGroup>& groups, std::size_t round) {
  RngStream rng(cfg.seed, stream_key(kFakeStream, round));
  const std::size_t d = cfg.teacher.dim();
  std::size_t n = 0;
  for (const auto& g : groups) n += g.members.size();
  DenoiseBatch batch{Field(n, d), std::vector<double>(n), Field(n, d), std::vector<std::size_t>(n)};
  std::size_t row = 0;
  for (const auto& g : groups) {
    for (const Trajectory& traj : g.members) {
      const std::size_t j = rng.below(traj.steps());
      batch.x0.set_row(row, traj.preds.row(j));
      batch.tprime[row] = rng.uniform(cfg.grid.tprime_min, cfg.grid.tprime_max);
      fill_randn(rng, batch.noise.row(row));
      batch.cond[row] = traj.cond;
      ++row;
    }
  }
  return fake_denoise_update(state.fake, batch, cfg.fake_opt, cfg.grad_clip);
}

RewardBatch compute_rewards(const TrainState& state, const TrainConfig& cfg,
                            const std::vector<TrajectoryGroup>& groups, std::size_t round) {
  const std::size_t d = cfg.teacher.dim();
  const std::size_t S = cfg.grid.stochastic_steps();
  const RsSource source = cfg.resolved_rs_source();
  const bool warm = state.iteration < cfg.warmup;

  RewardBatch out;
  std::size_t total = 0;
  for (const auto& g : groups) total += g.members.size();
  out.advantages = Field(total, d);
  std::size_t offset = 0;
  double rs_abs = 0.0, beta_sum = 0.0, aux_sum = 0.0;

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const TrajectoryGroup& group = groups[gi];
    const std::size_t G = group.members.size();
    RngStream rng(cfg.seed, stream_key(kRewardStream, round, gi));
    const std::size_t shared_j = rng.below(S);
    const double shared_tp = rng.uniform(cfg.grid.tprime_min, cfg.grid.tprime_max);

    Field teacher_x0(G, d), fake_x0(G, d), pred_x0(G, d), x_next(G, d), mu(G, d), rs(G, d);
    std::vector<ScheduleCoeffs> cs;
    std::vector<Vec> aux_raw(cfg.aux.size(), Vec(G));
    for (std::size_t i = 0; i < G; ++i) {
      const Trajectory& traj = group.members[i];
      const std::size_t own_j = rng.below(S);
      const double own_tp = rng.uniform(cfg.grid.tprime_min, cfg.grid.tprime_max);
      const Vec noise = randn(rng, d);
      const std::size_t j = cfg.share_t ? shared_j : own_j;
      const double tp = cfg.share_tprime ? shared_tp : own_tp;

      const Vec xtp = forward_diffuse(traj.preds.row(j), tp, noise);
      const ScoreEval ev = evaluate_scores(cfg.teacher, state.fake, xtp, tp, traj.cond, source);
      teacher_x0.set_row(i, ev.teacher_x0);
      fake_x0.set_row(i, ev.fake_x0);
      rs.set_row(i, ev.rs);
      pred_x0.set_row(i, traj.preds.row(j));
      x_next.set_row(i, traj.states.row(j + 1));
      mu.set_row(i, traj.mus.row(j));
      cs.push_back(coeffs(traj.times[j + 1]));
      for (double v : ev.rs) rs_abs += std::abs(v);

      out.steps.push_back(policy_step_from(traj, j));
      const auto xt = traj.states.row(j);
      out.dmd_samples.push_back(DmdSample{Vec(xt.begin(), xt.end()), traj.times[j], traj.cond, tp, noise});
      out.step_t.push_back(traj.times[j]);
      out.step_tprime.push_back(tp);
      for (std::size_t a = 0; a < cfg.aux.size(); ++a) {
        aux_raw[a][i] = external_reward(cfg.aux[a].spec, traj.final_sample(), &cfg.teacher);
        aux_sum += aux_raw[a][i];
      }
    }

    // Distribution-matching reward for this group.
    Field rdm;
    if (cfg.rdm_mode == RdmMode::kPractical) {
      rdm = rdm_practice(teacher_x0, fake_x0, pred_x0, x_next, mu).values;
    } else {
      ExactReward exact = rdm_exact(rs, x_next, mu, cs);
      if (exact.flagged_count > 0) {
        const Field fallback = rdm_practice(teacher_x0, fake_x0, pred_x0, x_next, mu).values;
        for (std::size_t e = 0; e < exact.flagged.size(); ++e)
          if (exact.flagged[e]) exact.values.values()[e] = fallback.values()[e];
      }
      rdm = std::move(exact.values);
    }

    Field a_dm = rdm;
    if (cfg.gn && G >= 2) {
      AdvantageField adv = group_normalize(rdm);
      out.guarded += adv.guarded;
      a_dm = adv.values;
      out.normalized.push_back(std::move(adv));
    }

    Field dm_weight(G, d, 1.0);
    Field beta(G, d, 1.0);
    if (cfg.rdm_mode == RdmMode::kPractical) {
      dm_weight = wdm_weight(x_next, mu, cs);
      beta = beta_field(dm_weight, cfg.beta_mode);
      for (double b : beta_dm(dm_weight)) beta_sum += b;
    } else {
      beta_sum += static_cast<double>(G);
    }

    std::vector<std::pair<double, Vec>> aux_adv;
    for (std::size_t a = 0; a < cfg.aux.size(); ++a) {
      const double w = warm ? 0.0 : cfg.aux[a].weight;
      Vec adv(G, 0.0);
      if (G >= 2) {
        AdvantageField normalized = group_normalize(aux_raw[a]);
        adv = normalized.values.values();
        out.normalized.push_back(std::move(normalized));
      }
      aux_adv.emplace_back(w, std::move(adv));
    }
    const Field sum = weighted_add(a_dm, dm_weight, beta, aux_adv);
    for (std::size_t i = 0; i < G; ++i) out.advantages.set_row(offset + i, sum.row(i));
    offset += G;
  }

  const double n = static_cast<double>(std::max<std::size_t>(total, 1));
  out.rs_abs_mean = rs_abs / (n * static_cast<double>(d));
  out.beta_dm_mean = beta_sum / n;
  out.aux_reward_mean = cfg.aux.empty() ? 0.0 : aux_sum / n;
  return out;
}

RoundStats train_round(TrainState& state, const TrainConfig& cfg, const RoundObserver& observer) {
  RoundStats stats;
  const std::size_t round = state.iteration;
  const TrainState backup = state;
  try {
    const auto groups = sample_round(state, cfg, round);
    const DenoiseUpdateResult fk = update_fake(state, cfg, groups, round);
    if (!fk.applied) throw std::domain_error("non-finite fake denoiser gradient");
    stats.fake_loss = fk.loss;

    const RewardBatch batch = compute_rewards(state, cfg, groups, round);
    require_finite(batch.advantages.values(), "advantages");
    stats.rs_abs_mean = batch.rs_abs_mean;
    stats.beta_dm_mean = batch.beta_dm_mean;
    stats.aux_reward_mean = batch.aux_reward_mean;

    for (std::size_t u = 0; u < cfg.grpo.inner_updates; ++u) {
      PolicyGradEstimate est = grpo_surrogate(state.student, batch.steps, batch.advantages, cfg.grpo);
      if (observer) observer(batch, u, state.student, est);
      est.grads.scale(-1.0);
      clip_grad_norm(est.grads, cfg.grad_clip);
      if (!adam_step(state.student, est.grads, cfg.generator_opt))
        throw std::domain_error("non-finite generator gradient");
      stats.clip_fractions.push_back(est.clip_fraction);
      stats.mean_ratios.push_back(est.mean_ratio);
      stats.surrogates.push_back(est.surrogate);
    }
    require_finite(state.student.params.values, "generator parameters");
    require_finite(state.fake.params.values, "fake parameters");
  } catch (const std::domain_error& e) {
    state = backup;
    state.incidents += 1;
    stats.aborted = true;
    stats.incident = e.what();
  }
  state.iteration = round + 1;
  state.samples += cfg.groups * cfg.grpo.group_size;
  if (!stats.aborted) {
    const double inner = static_cast<double>(stats.clip_fractions.size());
    state.window.rs_abs += stats.rs_abs_mean;
    state.window.beta_dm += stats.beta_dm_mean;
    state.window.clip_frac += std::accumulate(stats.clip_fractions.begin(), stats.clip_fractions.end(), 0.0) / inner;
    state.window.ratio += std::accumulate(stats.mean_ratios.begin(), stats.mean_ratios.end(), 0.0) / inner;
    state.window.rounds += 1;
  }
  return stats;
}

Field generate_samples(const MlpParams& params, const TrainConfig& cfg, const Field& start_noise) {
  Field out(start_noise.rows(), start_noise.cols());
  RngStream rng(cfg.seed, stream_key(kEvalPathStream));
  for (std::size_t i = 0; i < start_noise.rows(); ++i) {
    const Trajectory traj = simulate(params, cfg.grid, start_noise.row(i), i % cfg.cond_width, rng);
    out.set_row(i, traj.final_sample());
  }
  return out;
}

EvalContext make_eval_context(const TrainConfig& cfg) {
  EvalContext ctx;
  RngStream ref(cfg.seed, stream_key(kTeacherRefStream));
  ctx.teacher_samples = gmm_sample_batch(cfg.teacher, ref, cfg.eval_samples);
  RngStream start(cfg.seed, stream_key(kEvalStartStream));
  ctx.start_noise = Field(cfg.eval_samples, cfg.teacher.dim());
  fill_randn(start, ctx.start_noise.values());
  if (cfg.sd_reference) ctx.reference_samples = generate_samples(*cfg.sd_reference, cfg, ctx.start_noise);
  return ctx;
}

MetricsRow evaluate(const TrainState& state, const TrainConfig& cfg, const EvalContext& ctx) {
  MetricsRow row;
  row.iteration = state.iteration;
  const Field samples = generate_samples(state.student.params, cfg, ctx.start_noise);
  row.energy_dist = energy_distance(samples, ctx.teacher_samples);
  row.energy_dist_sd = ctx.reference_samples ? energy_distance(samples, *ctx.reference_samples)
                                             : std::numeric_limits<double>::quiet_NaN();
  row.coverage = mode_coverage(samples, cfg.teacher);
  if (!cfg.aux.empty()) {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.rows(); ++i)
      for (const AuxReward& a : cfg.aux) total += external_reward(a.spec, samples.row(i), &cfg.teacher);
    row.aux_reward_mean = total / static_cast<double>(samples.rows());
  }
  if (state.window.rounds > 0) {
    const double n = static_cast<double>(state.window.rounds);
    row.rs_abs_mean = state.window.rs_abs / n;
    row.clip_frac = state.window.clip_frac / n;
    row.ratio_mean = state.window.ratio / n;
    row.beta_dm_mean = state.window.beta_dm / n;
  }
  row.samples = state.samples;
  return row;
}

RunResult run(const TrainConfig& cfg, const RunSinks& sinks, std::optional<TrainState> resume) {
  cfg.validate();
  RunResult result;
  result.state = resume ? std::move(*resume) : init_state(cfg);
  TrainState& state = result.state;
  const EvalContext ctx = make_eval_context(cfg);
  const auto start = std::chrono::steady_clock::now();

  auto emit = [&] {
    MetricsRow row = evaluate(state, cfg, ctx);
    if (cfg.wall_clock)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    state.window = {};
    if (sinks.on_row) sinks.on_row(row);
    result.rows.push_back(std::move(row));
  };

  if (!resume) emit();
  while (state.iteration < cfg.iterations) {
    const RoundStats stats = train_round(state, cfg, sinks.on_round);
    if (stats.aborted && sinks.on_incident) sinks.on_incident(state.iteration - 1, stats.incident);
    const bool last = state.iteration == cfg.iterations;
    if (last || (cfg.eval_every > 0 && state.iteration % cfg.eval_every == 0)) emit();
    if (sinks.on_checkpoint && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0)
      sinks.on_checkpoint(state);
  }
  return result;
}

std::uint64_t params_hash(const MlpParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : params.values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace rdm
