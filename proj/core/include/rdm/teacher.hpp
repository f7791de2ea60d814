#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rdm/numerics.hpp"

namespace rdm {

/// Isotropic Gaussian mixture sum_k w_k N(m_k, v_k I) over R^d.
struct GmmSpec {
  std::vector<double> weights;
  Field means;  // K x d
  std::vector<double> variances;

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }

  /// Throws std::invalid_argument unless weights are positive and sum to 1
  /// (1e-12), variances are positive, and shapes agree.
  void validate() const;
};

/// K equal-weight components evenly spaced on a circle in the first two
/// coordinates (remaining coordinates zero).
GmmSpec ring_gmm(std::size_t components, double radius, double variance, std::size_t dim = 2);

Vec gmm_sample(const GmmSpec& spec, RngStream& stream);
Field gmm_sample_batch(const GmmSpec& spec, RngStream& stream, std::size_t n);

/// log p_t'(x) for the noisy marginal sum_k w_k N(alpha m_k, (alpha^2 v_k + sigma^2) I).
double noisy_logdensity(const GmmSpec& spec, std::span<const double> x, double tprime);

/// Component posterior probabilities under the noisy marginal (log-sum-exp stable).
Vec noisy_responsibilities(const GmmSpec& spec, std::span<const double> x, double tprime);

/// Log of noisy_responsibilities, without the exp/log round trip.
Vec noisy_log_responsibilities(const GmmSpec& spec, std::span<const double> x, double tprime);

/// Gradient of noisy_logdensity with respect to x.
Vec noisy_logdensity_score(const GmmSpec& spec, std::span<const double> x, double tprime);

/// Tweedie posterior mean E[x_0 | x_t'] = (x + sigma^2 * score) / alpha.
Vec posterior_mean_denoiser(const GmmSpec& spec, std::span<const double> x, double tprime);

/// Converts a denoiser output into the implied score (alpha * x0_hat - x) / sigma^2.
Vec score_from_denoiser(std::span<const double> x, std::span<const double> x0_hat, double tprime);

}  // namespace rdm
