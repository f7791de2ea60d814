#include "rdm/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rdm {

ScheduleCoeffs coeffs(double t) {
  if (!std::isfinite(t) || t < 0.0 || t > 1.0) throw std::domain_error("coeffs: t outside [0,1]");
  return {t, 1.0 - t, t};
}

std::size_t TimeGrid::stochastic_steps() const {
  std::size_t n = 0;
  for (std::size_t j = 1; j < times.size(); ++j)
    if (times[j] > 0.0) ++n;
  return n;
}

void TimeGrid::validate() const {
  if (times.size() < 2) throw std::invalid_argument("TimeGrid: need at least one transition");
  if (times.front() != 1.0 || times.back() != 0.0)
    throw std::invalid_argument("TimeGrid: grid must start at t=1 and end at t=0");
  for (std::size_t j = 1; j < times.size(); ++j)
    if (!(times[j] < times[j - 1])) throw std::invalid_argument("TimeGrid: times must strictly decrease");
  if (!(tprime_min > 0.0 && tprime_min < tprime_max && tprime_max < 1.0))
    throw std::invalid_argument("TimeGrid: diffused range must satisfy 0 < min < max < 1");
}

TimeGrid uniform_grid(std::size_t steps, double tprime_min, double tprime_max) {
  if (steps == 0) throw std::invalid_argument("uniform_grid: steps must be positive");
  TimeGrid grid;
  grid.times.clear();
  for (std::size_t j = 0; j <= steps; ++j)
    grid.times.push_back(1.0 - static_cast<double>(j) / static_cast<double>(steps));
  grid.times.back() = 0.0;
  grid.tprime_min = tprime_min;
  grid.tprime_max = tprime_max;
  grid.validate();
  return grid;
}

Vec forward_diffuse(std::span<const double> x0, double tprime, std::span<const double> noise) {
  if (x0.size() != noise.size()) throw std::invalid_argument("forward_diffuse: dimension mismatch");
  const ScheduleCoeffs c = coeffs(tprime);
  Vec out(x0.size());
  for (std::size_t k = 0; k < x0.size(); ++k) out[k] = c.alpha * x0[k] + c.sigma * noise[k];
  return out;
}

Transition transition_sample(std::span<const double> mean_x0, double t_next,
                             std::span<const double> noise) {
  if (mean_x0.size() != noise.size()) throw std::invalid_argument("transition_sample: dimension mismatch");
  const ScheduleCoeffs c = coeffs(t_next);
  Transition tr{Vec(mean_x0.size()), Vec(mean_x0.size())};
  for (std::size_t k = 0; k < mean_x0.size(); ++k) {
    tr.mu[k] = c.alpha * mean_x0[k];
    tr.x_next[k] = tr.mu[k] + c.sigma * noise[k];
  }
  return tr;
}

Vec transition_logprob_per_dim(std::span<const double> x_next, std::span<const double> mu,
                               double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("transition_logprob_per_dim: sigma must be positive");
  if (x_next.size() != mu.size()) throw std::invalid_argument("transition_logprob_per_dim: dimension mismatch");
  const double var = sigma * sigma;
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
  Vec out(x_next.size());
  for (std::size_t k = 0; k < x_next.size(); ++k) {
    const double r = x_next[k] - mu[k];
    out[k] = norm - r * r / (2.0 * var);
  }
  return out;
}

}  // namespace rdm
