#include "rdm/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rdm/schedule.hpp"

namespace rdm {

namespace {

double mean_pair_distance(const Field& a, const Field& b) {
  const std::size_t d = a.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* x = a.values().data() + i * d;
    double row = 0.0;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* y = b.values().data() + j * d;
      double r2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) r2 += (x[k] - y[k]) * (x[k] - y[k]);
      row += std::sqrt(r2);
    }
    total += row;
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

// Mean over all ordered pairs (diagonal included) using the upper triangle.
double mean_self_distance(const Field& a) {
  const std::size_t d = a.cols();
  const std::size_t n = a.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = a.values().data() + i * d;
    double row = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* y = a.values().data() + j * d;
      double r2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) r2 += (x[k] - y[k]) * (x[k] - y[k]);
      row += std::sqrt(r2);
    }
    total += row;
  }
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace

double energy_distance(const Field& a, const Field& b) {
  if (a.rows() < 2 || b.rows() < 2) throw std::invalid_argument("energy_distance: need at least two samples per set");
  if (a.cols() != b.cols()) throw std::invalid_argument("energy_distance: dimension mismatch");
  const double value = 2.0 * mean_pair_distance(a, b) - mean_self_distance(a) - mean_self_distance(b);
  // The V-statistic is non-negative; clamp summation-order residue.
  return value < 0.0 ? 0.0 : value;
}

Vec mode_coverage(const Field& samples, const GmmSpec& spec) {
  const std::size_t K = spec.components();
  if (K == 0) throw std::invalid_argument("mode_coverage: empty mixture");
  if (samples.cols() != spec.dim()) throw std::invalid_argument("mode_coverage: dimension mismatch");
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      double r2 = 0.0;
      for (std::size_t j = 0; j < spec.dim(); ++j) {
        const double r = samples(i, j) - spec.means(k, j);
        r2 += r * r;
      }
      r2 /= spec.variances[k];
      if (r2 < best_d) {
        best_d = r2;
        best = k;
      }
    }
    ++counts[best];
  }
  Vec out(K, 0.0);
  if (samples.rows() == 0) return out;
  for (std::size_t k = 0; k < K; ++k) out[k] = static_cast<double>(counts[k]) / static_cast<double>(samples.rows());
  return out;
}

std::vector<VariancePoint> rs_variance_curve(const DenoiseFn& teacher, const DenoiseFn& fake,
                                             const Field& x0, std::span<const double> tprimes,
                                             std::size_t resamples, RngStream& stream,
                                             RsSource source) {
  if (resamples < 2) throw std::invalid_argument("rs_variance_curve: need at least two resamples");
  for (std::size_t i = 1; i < tprimes.size(); ++i)
    if (!(tprimes[i] > tprimes[i - 1])) throw std::invalid_argument("rs_variance_curve: t' list must be ascending");
  const std::size_t d = x0.cols();
  std::vector<VariancePoint> curve;
  Vec noise(d), sum(d), sum_sq(d);
  for (double tp : tprimes) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x0.rows(); ++i) {
      std::fill(sum.begin(), sum.end(), 0.0);
      std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
      for (std::size_t s = 0; s < resamples; ++s) {
        fill_randn(stream, noise);
        const Vec xt = forward_diffuse(x0.row(i), tp, noise);
        Vec real = teacher(xt, tp);
        Vec fk = fake(xt, tp);
        if (source == RsSource::kScore) {
          real = score_from_denoiser(xt, real, tp);
          fk = score_from_denoiser(xt, fk, tp);
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double r = real[k] - fk[k];
          sum[k] += r;
          sum_sq[k] += r * r;
        }
      }
      const double n = static_cast<double>(resamples);
      for (std::size_t k = 0; k < d; ++k) {
        const double mean = sum[k] / n;
        const double var = std::max(0.0, sum_sq[k] / n - mean * mean);
        acc += std::sqrt(var);
      }
    }
    curve.push_back({tp, acc / static_cast<double>(x0.rows() * d)});
  }
  return curve;
}

std::string metrics_csv_header(std::size_t components) {
  std::ostringstream out;
  out << "iter,energy_dist,energy_dist_sd";
  for (std::size_t k = 0; k < components; ++k) out << ",coverage_" << k;
  out << ",aux_reward_mean,rs_abs_mean,clip_frac,ratio_mean,beta_dm_mean,samples,wall_ms";
  return out.str();
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::setprecision(10);
  auto num = [&out](double v) {
    if (std::isnan(v))
      out << "nan";
    else
      out << v;
  };
  out << row.iteration << ',';
  num(row.energy_dist);
  out << ',';
  num(row.energy_dist_sd);
  for (double c : row.coverage) {
    out << ',';
    num(c);
  }
  for (double v : {row.aux_reward_mean, row.rs_abs_mean, row.clip_frac, row.ratio_mean, row.beta_dm_mean}) {
    out << ',';
    num(v);
  }
  out << ',' << row.samples << ',';
  num(row.wall_ms);
  return out.str();
}

}  // namespace rdm
