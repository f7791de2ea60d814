#pragma once

#include <cstddef>
#include <vector>

#include "rdm/numerics.hpp"

namespace rdm {

/// One backward simulation x_{t_T} -> ... -> x_{t_0}. Row j of `preds`,
/// `noises` and `mus` belongs to the transition from times[j] to times[j+1],
/// and states(j+1) = mus(j) + sigma(times[j+1]) * noises(j) exactly.
struct Trajectory {
  std::size_t cond = 0;
  std::vector<double> times;  // T+1 entries, descending to 0
  Field states;               // (T+1) x d
  Field preds;                // T x d, G(x_t) under the sampling parameters
  Field noises;               // T x d, zero rows for deterministic steps
  Field mus;                  // T x d, alpha(t_next) * preds

  std::size_t steps() const { return preds.rows(); }
  std::size_t dim() const { return states.cols(); }
  std::span<const double> final_sample() const { return states.row(states.rows() - 1); }
};

}  // namespace rdm
