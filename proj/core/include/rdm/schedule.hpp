#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rdm/numerics.hpp"

namespace rdm {

/// Rectified-flow noise level: x_t = alpha * x_0 + sigma * noise.
struct ScheduleCoeffs {
  double t = 0.0;
  double alpha = 1.0;
  double sigma = 0.0;
};

/// alpha = 1 - t, sigma = t. Throws std::domain_error outside [0, 1].
ScheduleCoeffs coeffs(double t);

/// Generator timesteps t_T = 1 > ... > t_0 = 0 plus the diffused-timestep range.
struct TimeGrid {
  std::vector<double> times{1.0, 0.75, 0.5, 0.25, 0.0};
  double tprime_min = 0.02;
  double tprime_max = 0.98;

  /// Number of transitions T.
  std::size_t steps() const { return times.size() - 1; }
  /// Transitions whose target noise level is positive (they have a density).
  std::size_t stochastic_steps() const;
  /// Throws std::invalid_argument unless strictly decreasing from 1 to 0 with a
  /// valid t' range inside (0, 1).
  void validate() const;
};

/// Builds the default 4-step grid or an even grid with `steps` transitions.
TimeGrid uniform_grid(std::size_t steps, double tprime_min = 0.02, double tprime_max = 0.98);

Vec forward_diffuse(std::span<const double> x0, double tprime, std::span<const double> noise);

struct Transition {
  Vec x_next;
  Vec mu;
};

Transition transition_sample(std::span<const double> mean_x0, double t_next,
                             std::span<const double> noise);

/// Per-coordinate log N(x_next | mu, sigma^2).
Vec transition_logprob_per_dim(std::span<const double> x_next, std::span<const double> mu,
                               double sigma);

}  // namespace rdm
