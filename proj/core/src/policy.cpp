#include "rdm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rdm/rewards.hpp"
#include "rdm/schedule.hpp"

namespace rdm {

RsSource parse_rs_source(std::string_view name) {
  if (name == "denoiser") return RsSource::kDenoiser;
  if (name == "score") return RsSource::kScore;
  throw std::invalid_argument("unknown rs source '" + std::string(name) + "' (expected denoiser|score)");
}

std::string_view to_string(RsSource source) {
  return source == RsSource::kDenoiser ? "denoiser" : "score";
}

RatioMode parse_ratio_mode(std::string_view name) {
  if (name == "per_dim") return RatioMode::kPerDim;
  if (name == "per_sample") return RatioMode::kPerSample;
  throw std::invalid_argument("unknown ratio mode '" + std::string(name) + "' (expected per_dim|per_sample)");
}

std::string_view to_string(RatioMode mode) { return mode == RatioMode::kPerDim ? "per_dim" : "per_sample"; }

void GrpoConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("GrpoConfig: eta must be positive");
  if (inner_updates < 1) throw std::invalid_argument("GrpoConfig: inner updates must be >= 1");
  if (group_size < 2) throw std::invalid_argument("GrpoConfig: group size must be >= 2");
}

ScoreEval evaluate_scores(const GmmSpec& teacher, const FakeScoreState& fake,
                          std::span<const double> x_tprime, double tprime, std::size_t cond,
                          RsSource source) {
  ScoreEval out;
  out.teacher_x0 = posterior_mean_denoiser(teacher, x_tprime, tprime);
  out.fake_x0 = fake_denoise(fake, x_tprime, tprime, cond);
  out.rs.resize(x_tprime.size());
  if (source == RsSource::kDenoiser) {
    for (std::size_t k = 0; k < out.rs.size(); ++k) out.rs[k] = out.teacher_x0[k] - out.fake_x0[k];
  } else {
    const Vec real = noisy_logdensity_score(teacher, x_tprime, tprime);
    const Vec fk = score_from_denoiser(x_tprime, out.fake_x0, tprime);
    for (std::size_t k = 0; k < out.rs.size(); ++k) out.rs[k] = real[k] - fk[k];
  }
  return out;
}

PolicyStep policy_step_from(const Trajectory& traj, std::size_t step) {
  if (step >= traj.steps()) throw std::out_of_range("policy_step_from: step index");
  PolicyStep s;
  const auto xt = traj.states.row(step);
  const auto xn = traj.states.row(step + 1);
  const auto mu = traj.mus.row(step);
  s.x_t.assign(xt.begin(), xt.end());
  s.x_next.assign(xn.begin(), xn.end());
  s.mu_old.assign(mu.begin(), mu.end());
  s.t = traj.times[step];
  s.t_next = traj.times[step + 1];
  s.cond = traj.cond;
  return s;
}

MlpGrad dmd_gradient_oracle(const StudentState& student, const GmmSpec& teacher,
                            const FakeScoreState& fake, std::span<const DmdSample> batch,
                            RsSource source, bool weighting) {
  MlpGrad grad(student.params.shape);
  MlpTape tape;
  for (const DmdSample& s : batch) {
    const Vec pred = mlp_forward(student.params, s.x_t, s.t, s.cond, &tape);
    const Vec xtp = forward_diffuse(pred, s.tprime, s.noise);
    const ScoreEval ev = evaluate_scores(teacher, fake, xtp, s.tprime, s.cond, source);
    double factor = 1.0;
    if (weighting) {
      double l1 = 0.0;
      for (std::size_t k = 0; k < pred.size(); ++k) l1 += std::abs(ev.teacher_x0[k] - pred[k]);
      factor = static_cast<double>(pred.size()) / std::max(l1, kWeightingL1Floor);
    }
    Vec upstream(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k) upstream[k] = -factor * ev.rs[k];
    mlp_backward(student.params, tape, upstream, grad);
  }
  return grad;
}

namespace {

void check_steps(std::span<const PolicyStep> steps, const Field& field, const char* what) {
  if (field.rows() != steps.size()) throw std::invalid_argument(std::string(what) + ": one row per step required");
  for (const PolicyStep& s : steps)
    if (s.x_next.size() != field.cols() || s.mu_old.size() != field.cols() || s.x_t.size() != field.cols())
      throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

ScheduleCoeffs stochastic_coeffs(double t_next, const char* what) {
  const ScheduleCoeffs c = coeffs(t_next);
  if (!(c.sigma > 0.0)) throw std::domain_error(std::string(what) + ": deterministic transition has no density");
  return c;
}

}  // namespace

PolicyGradEstimate policy_grad_rdm(const StudentState& student, std::span<const PolicyStep> steps,
                                   const Field& rdm) {
  check_steps(steps, rdm, "policy_grad_rdm");
  PolicyGradEstimate est{MlpGrad(student.params.shape)};
  MlpTape tape;
  const std::size_t d = rdm.cols();
  Vec upstream(d);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const PolicyStep& s = steps[i];
    const ScheduleCoeffs c = stochastic_coeffs(s.t_next, "policy_grad_rdm");
    const Vec g = mlp_forward(student.params, s.x_t, s.t, s.cond, &tape);
    Vec mu(d);
    for (std::size_t k = 0; k < d; ++k) mu[k] = c.alpha * g[k];
    const Vec logp = transition_logprob_per_dim(s.x_next, mu, c.sigma);
    for (std::size_t k = 0; k < d; ++k) {
      upstream[k] = rdm(i, k) * c.alpha * (s.x_next[k] - mu[k]) / (c.sigma * c.sigma);
      est.surrogate += rdm(i, k) * logp[k];
    }
    mlp_backward(student.params, tape, upstream, est.grads);
  }
  return est;
}

PolicyGradEstimate grpo_surrogate(const StudentState& student, std::span<const PolicyStep> steps,
                                  const Field& advantages, const GrpoConfig& cfg) {
  check_steps(steps, advantages, "grpo_surrogate");
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("grpo_surrogate: eta must be positive");
  PolicyGradEstimate est{MlpGrad(student.params.shape)};
  const std::size_t n = steps.size();
  const std::size_t d = advantages.cols();
  if (n == 0) return est;
  const double norm = 1.0 / static_cast<double>(n * d);
  const double lo = 1.0 - cfg.eta;
  const double hi = 1.0 + cfg.eta;

  MlpTape tape;
  Vec upstream(d), log_ratio(d), dlogp(d);
  double ratio_sum = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const PolicyStep& s = steps[i];
    const ScheduleCoeffs c = stochastic_coeffs(s.t_next, "grpo_surrogate");
    const double var = c.sigma * c.sigma;
    const Vec g = mlp_forward(student.params, s.x_t, s.t, s.cond, &tape);
    double sample_log_ratio = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double mu = c.alpha * g[k];
      const double r_new = s.x_next[k] - mu;
      const double r_old = s.x_next[k] - s.mu_old[k];
      log_ratio[k] = (r_old * r_old - r_new * r_new) / (2.0 * var);
      dlogp[k] = c.alpha * r_new / var;
      sample_log_ratio += log_ratio[k];
    }
    std::fill(upstream.begin(), upstream.end(), 0.0);
    const double sample_ratio = std::exp(sample_log_ratio);
    double active_adv = 0.0;  // per-sample mode: sum of A * r over unclipped coordinates
    for (std::size_t k = 0; k < d; ++k) {
      const double r = cfg.ratio_mode == RatioMode::kPerDim ? std::exp(log_ratio[k]) : sample_ratio;
      if (!std::isfinite(r)) throw std::domain_error("grpo_surrogate: non-finite probability ratio");
      const double a = advantages(i, k);
      const double unclipped = r * a;
      const double clipped_term = std::clamp(r, lo, hi) * a;
      ratio_sum += r;
      if (clipped_term < unclipped) {
        ++clipped;
        est.surrogate += clipped_term;
        continue;
      }
      est.surrogate += unclipped;
      if (cfg.ratio_mode == RatioMode::kPerDim)
        upstream[k] = unclipped * dlogp[k] * norm;
      else
        active_adv += unclipped;
    }
    if (cfg.ratio_mode == RatioMode::kPerSample)
      for (std::size_t k = 0; k < d; ++k) upstream[k] = active_adv * dlogp[k] * norm;
    mlp_backward(student.params, tape, upstream, est.grads);
  }
  est.surrogate *= norm;
  est.mean_ratio = ratio_sum * norm;
  est.clip_fraction = static_cast<double>(clipped) * norm;
  return est;
}

PolicyGradEstimate ddpo_full_trajectory(const StudentState& student,
                                        std::span<const Trajectory> trajectories,
                                        std::span<const double> rewards, bool importance_weighted) {
  if (rewards.size() != trajectories.size())
    throw std::invalid_argument("ddpo_full_trajectory: one reward per trajectory required");
  PolicyGradEstimate est{MlpGrad(student.params.shape)};
  MlpTape tape;
  double ratio_sum = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& traj = trajectories[i];
    const std::size_t d = traj.dim();
    Vec upstream(d);
    for (std::size_t j = 0; j < traj.steps(); ++j) {
      const ScheduleCoeffs c = coeffs(traj.times[j + 1]);
      if (!(c.sigma > 0.0)) continue;
      const double var = c.sigma * c.sigma;
      const Vec g = mlp_forward(student.params, traj.states.row(j), traj.times[j], traj.cond, &tape);
      double log_ratio = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double x = traj.states(j + 1, k);
        const double r_new = x - c.alpha * g[k];
        const double r_old = x - traj.mus(j, k);
        log_ratio += (r_old * r_old - r_new * r_new) / (2.0 * var);
      }
      const double ratio = importance_weighted ? std::exp(log_ratio) : 1.0;
      ratio_sum += ratio;
      ++terms;
      for (std::size_t k = 0; k < d; ++k) {
        const double r_new = traj.states(j + 1, k) - c.alpha * g[k];
        upstream[k] = rewards[i] * ratio * c.alpha * r_new / var;
      }
      est.surrogate += rewards[i] * ratio;
      mlp_backward(student.params, tape, upstream, est.grads);
    }
  }
  if (terms > 0) est.mean_ratio = ratio_sum / static_cast<double>(terms);
  return est;
}

namespace {

GmmSpec random_gmm(RngStream& rng, std::size_t d, std::size_t K) {
  GmmSpec spec;
  spec.means = Field(K, d);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    spec.weights.push_back(0.2 + rng.uniform());
    total += spec.weights.back();
    spec.variances.push_back(rng.uniform(0.05, 1.0));
    for (std::size_t j = 0; j < d; ++j) spec.means(k, j) = 2.0 * rng.normal();
  }
  for (double& w : spec.weights) w /= total;
  spec.validate();
  return spec;
}

NetState random_net(RngStream& rng, const MlpShape& shape, double scale) {
  MlpParams p(shape);
  for (double& v : p.values) v = scale * rng.normal();
  return NetState(p);
}

}  // namespace

EquivalenceReport check_gradient_equivalence(std::uint64_t seed, std::size_t instances_per_dim,
                                             std::span<const std::size_t> dims, double tolerance) {
  EquivalenceReport report;
  const TimeGrid grid;
  const std::size_t stochastic = grid.stochastic_steps();
  for (std::size_t d : dims) {
    double dim_worst = 0.0;
    for (std::size_t n = 0; n < instances_per_dim; ++n) {
      RngStream rng(seed, stream_key(0xE9, d, n));
      const GmmSpec teacher = random_gmm(rng, d, 3);
      const MlpShape shape{d, 2, 16, 2};
      const StudentState student = random_net(rng, shape, 0.4);
      const FakeScoreState fake = random_net(rng, shape, 0.4);

      std::vector<DmdSample> batch;
      std::vector<PolicyStep> steps;
      std::vector<ScoreEval> evals;
      const std::size_t batch_size = 4;
      for (std::size_t b = 0; b < batch_size; ++b) {
        const std::size_t j = (n + b) % stochastic;
        DmdSample s;
        s.x_t = randn(rng, d);
        s.t = grid.times[j];
        s.cond = rng.below(2);
        s.tprime = rng.uniform(grid.tprime_min, grid.tprime_max);
        s.noise = randn(rng, d);
        const Vec eps_x = randn(rng, d);

        const Vec pred = generate_step(student, s.x_t, s.t, s.cond);
        const Transition tr = transition_sample(pred, grid.times[j + 1], eps_x);
        PolicyStep step{s.x_t, s.t, grid.times[j + 1], s.cond, tr.x_next, tr.mu};
        evals.push_back(evaluate_scores(teacher, fake, forward_diffuse(pred, s.tprime, s.noise), s.tprime,
                                        s.cond, RsSource::kScore));
        batch.push_back(std::move(s));
        steps.push_back(std::move(step));
      }

      Field rs(batch_size, d), x_next(batch_size, d), mu(batch_size, d);
      std::vector<ScheduleCoeffs> cs;
      for (std::size_t b = 0; b < batch_size; ++b) {
        rs.set_row(b, evals[b].rs);
        x_next.set_row(b, steps[b].x_next);
        mu.set_row(b, steps[b].mu_old);
        cs.push_back(coeffs(steps[b].t_next));
      }
      const ExactReward rdm = rdm_exact(rs, x_next, mu, cs);
      const PolicyGradEstimate pg = policy_grad_rdm(student, steps, rdm.values);
      const MlpGrad direct = dmd_gradient_oracle(student, teacher, fake, batch, RsSource::kScore);

      double worst = 0.0;
      for (std::size_t k = 0; k < direct.values.size(); ++k) {
        const double a = pg.grads.values[k];
        const double b = -direct.values[k];
        const double denom = std::abs(a) + std::abs(b);
        if (denom > 0.0) worst = std::max(worst, std::abs(a - b) / denom);
      }
      if (rdm.flagged_count > 0) worst = std::max(worst, 1.0);
      dim_worst = std::max(dim_worst, worst);
      ++report.instances;
    }
    report.max_rel_error = std::max(report.max_rel_error, dim_worst);
    std::ostringstream line;
    line << "d=" << d << " instances=" << instances_per_dim << " max_rel_error=" << dim_worst;
    report.lines.push_back(line.str());
  }
  report.passed = report.instances > 0 && report.max_rel_error < tolerance;
  return report;
}

}  // namespace rdm
