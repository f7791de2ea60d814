#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdm/numerics.hpp"
#include "rdm/policy.hpp"
#include "rdm/teacher.hpp"

namespace rdm {

/// One evaluation point. Training statistics (rs_abs_mean onward) are averaged
/// over the rounds since the previous row.
struct MetricsRow {
  std::size_t iteration = 0;
  double energy_dist = 0.0;
  double energy_dist_sd = 0.0;  // NaN when no reference generator is configured
  Vec coverage;
  double aux_reward_mean = 0.0;
  double rs_abs_mean = 0.0;
  double clip_frac = 0.0;
  double ratio_mean = 0.0;
  double beta_dm_mean = 0.0;
  std::size_t samples = 0;
  double wall_ms = 0.0;
};

/// V-statistic energy distance 2 E|a-b| - E|a-a'| - E|b-b'| (rows are samples).
/// Throws std::invalid_argument when either set has fewer than two rows.
double energy_distance(const Field& a, const Field& b);

/// Fraction of samples whose nearest component (||x - m_k||^2 / v_k) is k.
Vec mode_coverage(const Field& samples, const GmmSpec& spec);

using DenoiseFn = std::function<Vec(std::span<const double> x, double tprime)>;

struct VariancePoint {
  double tprime = 0.0;
  double mean_std = 0.0;
};

/// For each t', resamples forward-diffusion noise `resamples` times per x0 row,
/// forms R_s = teacher - fake (denoiser outputs, or implied scores when
/// `source` is kScore) and reports the per-coordinate std averaged over
/// coordinates and rows.
std::vector<VariancePoint> rs_variance_curve(const DenoiseFn& teacher, const DenoiseFn& fake,
                                             const Field& x0, std::span<const double> tprimes,
                                             std::size_t resamples, RngStream& stream,
                                             RsSource source = RsSource::kDenoiser);

/// metrics.csv header for a K-component teacher.
std::string metrics_csv_header(std::size_t components);
/// One CSV line (no trailing newline), locale-independent.
std::string metrics_csv_row(const MetricsRow& row);

}  // namespace rdm
