#include "rdm/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "rdm/schedule.hpp"

namespace rdm {

void GmmSpec::validate() const {
  const std::size_t K = weights.size();
  if (K == 0) throw std::invalid_argument("GmmSpec: no components");
  if (means.rows() != K || variances.size() != K)
    throw std::invalid_argument("GmmSpec: weights, means and variances disagree on K");
  if (means.cols() == 0) throw std::invalid_argument("GmmSpec: zero dimension");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("GmmSpec: weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("GmmSpec: weights must sum to 1");
  for (double v : variances)
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("GmmSpec: variances must be positive");
  if (!all_finite(means.values())) throw std::invalid_argument("GmmSpec: non-finite mean");
}

GmmSpec ring_gmm(std::size_t components, double radius, double variance, std::size_t dim) {
  if (dim < 2) throw std::invalid_argument("ring_gmm: dim must be >= 2");
  GmmSpec spec;
  spec.weights.assign(components, 1.0 / static_cast<double>(components));
  spec.variances.assign(components, variance);
  spec.means = Field(components, dim);
  for (std::size_t k = 0; k < components; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(components);
    spec.means(k, 0) = radius * std::cos(a);
    spec.means(k, 1) = radius * std::sin(a);
  }
  spec.validate();
  return spec;
}

namespace {

std::size_t pick_component(const GmmSpec& spec, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k < spec.components(); ++k) {
    acc += spec.weights[k];
    if (u < acc) return k;
  }
  return spec.components() - 1;
}

// Per-component log of w_k N(x; alpha m_k, s_k^2 I).
Vec component_logits(const GmmSpec& spec, std::span<const double> x, const ScheduleCoeffs& c) {
  const std::size_t d = spec.dim();
  Vec logits(spec.components());
  for (std::size_t k = 0; k < spec.components(); ++k) {
    const double s2 = c.alpha * c.alpha * spec.variances[k] + c.sigma * c.sigma;
    double r2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double r = x[j] - c.alpha * spec.means(k, j);
      r2 += r * r;
    }
    logits[k] = std::log(spec.weights[k]) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * s2) -
                0.5 * r2 / s2;
  }
  return logits;
}

double log_sum_exp(const Vec& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_point(const GmmSpec& spec, std::span<const double> x) {
  if (x.size() != spec.dim()) throw std::invalid_argument("teacher: dimension mismatch");
  require_finite(x, "teacher input");
}

}  // namespace

Vec gmm_sample(const GmmSpec& spec, RngStream& stream) {
  const std::size_t k = pick_component(spec, stream.uniform());
  const double sd = std::sqrt(spec.variances[k]);
  Vec x(spec.dim());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = spec.means(k, j) + sd * stream.normal();
  return x;
}

Field gmm_sample_batch(const GmmSpec& spec, RngStream& stream, std::size_t n) {
  Field out(n, spec.dim());
  for (std::size_t i = 0; i < n; ++i) out.set_row(i, gmm_sample(spec, stream));
  return out;
}

double noisy_logdensity(const GmmSpec& spec, std::span<const double> x, double tprime) {
  check_point(spec, x);
  return log_sum_exp(component_logits(spec, x, coeffs(tprime)));
}

Vec noisy_responsibilities(const GmmSpec& spec, std::span<const double> x, double tprime) {
  check_point(spec, x);
  Vec logits = component_logits(spec, x, coeffs(tprime));
  const double lse = log_sum_exp(logits);
  for (double& l : logits) l = std::exp(l - lse);
  return logits;
}

Vec noisy_log_responsibilities(const GmmSpec& spec, std::span<const double> x, double tprime) {
  check_point(spec, x);
  Vec logits = component_logits(spec, x, coeffs(tprime));
  const double lse = log_sum_exp(logits);
  for (double& l : logits) l -= lse;
  return logits;
}

Vec noisy_logdensity_score(const GmmSpec& spec, std::span<const double> x, double tprime) {
  if (!(tprime > 0.0)) throw std::domain_error("noisy_logdensity_score: t' must be in (0,1]");
  const ScheduleCoeffs c = coeffs(tprime);
  const Vec resp = noisy_responsibilities(spec, x, tprime);
  Vec score(spec.dim(), 0.0);
  for (std::size_t k = 0; k < spec.components(); ++k) {
    const double s2 = c.alpha * c.alpha * spec.variances[k] + c.sigma * c.sigma;
    for (std::size_t j = 0; j < score.size(); ++j)
      score[j] += resp[k] * (c.alpha * spec.means(k, j) - x[j]) / s2;
  }
  return score;
}

Vec posterior_mean_denoiser(const GmmSpec& spec, std::span<const double> x, double tprime) {
  const ScheduleCoeffs c = coeffs(tprime);
  if (!(c.alpha > 0.0)) throw std::domain_error("posterior_mean_denoiser: alpha must be positive");
  const Vec score = noisy_logdensity_score(spec, x, tprime);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] + c.sigma * c.sigma * score[j]) / c.alpha;
  return out;
}

Vec score_from_denoiser(std::span<const double> x, std::span<const double> x0_hat, double tprime) {
  const ScheduleCoeffs c = coeffs(tprime);
  if (!(c.sigma > 0.0)) throw std::domain_error("score_from_denoiser: sigma must be positive");
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    out[j] = (c.alpha * x0_hat[j] - x[j]) / (c.sigma * c.sigma);
  return out;
}

}  // namespace rdm
