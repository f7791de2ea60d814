#include "rdm/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rdm {

namespace {

void require_same(const Field& a, const Field& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

Field score_difference(const Field& teacher_out, const Field& fake_out) {
  require_same(teacher_out, fake_out, "score_difference");
  Field out(teacher_out.rows(), teacher_out.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = teacher_out.values()[i] - fake_out.values()[i];
  return out;
}

ExactReward rdm_exact(const Field& rs, const Field& x_next, const Field& mu,
                      std::span<const ScheduleCoeffs> coeffs) {
  require_same(rs, x_next, "rdm_exact");
  require_same(rs, mu, "rdm_exact");
  if (coeffs.size() != rs.rows()) throw std::invalid_argument("rdm_exact: one coefficient set per row required");
  ExactReward out{Field(rs.rows(), rs.cols()), std::vector<unsigned char>(rs.size(), 0), 0};
  for (std::size_t i = 0; i < rs.rows(); ++i) {
    const ScheduleCoeffs& c = coeffs[i];
    if (!(c.alpha > 0.0)) throw std::domain_error("rdm_exact: alpha must be positive");
    const double scale = c.sigma * c.sigma / c.alpha;
    for (std::size_t k = 0; k < rs.cols(); ++k) {
      const double resid = x_next(i, k) - mu(i, k);
      if (std::abs(resid) < kExactResidualFloor) {
        out.flagged[i * rs.cols() + k] = 1;
        ++out.flagged_count;
        continue;
      }
      out.values(i, k) = rs(i, k) / resid * scale;
    }
  }
  return out;
}

PracticeReward rdm_practice(const Field& teacher_x0, const Field& fake_x0, const Field& pred_x0,
                            const Field& x_next, const Field& mu) {
  require_same(teacher_x0, fake_x0, "rdm_practice");
  require_same(teacher_x0, pred_x0, "rdm_practice");
  require_same(teacher_x0, x_next, "rdm_practice");
  require_same(teacher_x0, mu, "rdm_practice");
  const std::size_t G = teacher_x0.rows();
  const std::size_t d = teacher_x0.cols();
  PracticeReward out{Field(G, d), Vec(G), 0};
  for (std::size_t i = 0; i < G; ++i) {
    double l1 = 0.0;
    for (std::size_t k = 0; k < d; ++k) l1 += std::abs(teacher_x0(i, k) - pred_x0(i, k));
    if (l1 < kWeightingL1Floor) {
      l1 = kWeightingL1Floor;
      ++out.clamped;
    }
    out.weighting[i] = static_cast<double>(d) / l1;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = teacher_x0(i, k) - fake_x0(i, k);
      out.values(i, k) = diff / sign_of(x_next(i, k) - mu(i, k)) * out.weighting[i];
    }
  }
  return out;
}

Field wdm_weight(const Field& x_next, const Field& mu, std::span<const ScheduleCoeffs> coeffs) {
  require_same(x_next, mu, "wdm_weight");
  if (coeffs.size() != x_next.rows()) throw std::invalid_argument("wdm_weight: one coefficient set per row required");
  Field out(x_next.rows(), x_next.cols());
  for (std::size_t i = 0; i < x_next.rows(); ++i) {
    const ScheduleCoeffs& c = coeffs[i];
    if (!(c.alpha > 0.0)) throw std::domain_error("wdm_weight: alpha must be positive");
    const double scale = c.sigma * c.sigma / c.alpha;
    for (std::size_t k = 0; k < x_next.cols(); ++k)
      out(i, k) = 1.0 / (std::abs(x_next(i, k) - mu(i, k)) + kWdmEpsilon) * scale;
  }
  return out;
}

Vec beta_dm(const Field& w_dm) {
  Vec out(w_dm.rows(), 0.0);
  if (w_dm.cols() == 0) return out;
  for (std::size_t i = 0; i < w_dm.rows(); ++i) {
    double s = 0.0;
    for (double w : w_dm.row(i)) s += std::abs(w);
    out[i] = s / static_cast<double>(w_dm.cols());
  }
  return out;
}

BetaMode parse_beta_mode(std::string_view name) {
  if (name == "sample") return BetaMode::kSample;
  if (name == "pixel") return BetaMode::kPixel;
  if (name == "off") return BetaMode::kOff;
  throw std::invalid_argument("unknown beta mode '" + std::string(name) + "' (expected sample|pixel|off)");
}

std::string_view to_string(BetaMode mode) {
  switch (mode) {
    case BetaMode::kSample: return "sample";
    case BetaMode::kPixel: return "pixel";
    case BetaMode::kOff: return "off";
  }
  return "?";
}

Field beta_field(const Field& w_dm, BetaMode mode) {
  switch (mode) {
    case BetaMode::kPixel: return w_dm;
    case BetaMode::kOff: return Field(w_dm.rows(), w_dm.cols(), 1.0);
    case BetaMode::kSample: break;
  }
  const Vec beta = beta_dm(w_dm);
  Field out(w_dm.rows(), w_dm.cols());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t k = 0; k < out.cols(); ++k) out(i, k) = beta[i];
  return out;
}

AdvantageField group_normalize(const Field& field, double eps_std) {
  const std::size_t G = field.rows();
  const std::size_t P = field.cols();
  if (G < 2) throw std::invalid_argument("group_normalize: group size must be >= 2");
  AdvantageField out{Field(G, P), Vec(P, 0.0), Vec(P, 0.0), 0};
  for (std::size_t k = 0; k < P; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < G; ++i) mean += field(i, k);
    mean /= static_cast<double>(G);
    double var = 0.0;
    for (std::size_t i = 0; i < G; ++i) {
      const double r = field(i, k) - mean;
      var += r * r;
    }
    const double sd = std::sqrt(var / static_cast<double>(G));
    out.mean[k] = mean;
    out.std[k] = sd;
    if (sd < eps_std) {
      ++out.guarded;
      continue;
    }
    for (std::size_t i = 0; i < G; ++i) out.values(i, k) = (field(i, k) - mean) / sd;
  }
  return out;
}

AdvantageField group_normalize(std::span<const double> sparse, double eps_std) {
  Field f(sparse.size(), 1);
  for (std::size_t i = 0; i < sparse.size(); ++i) f(i, 0) = sparse[i];
  return group_normalize(f, eps_std);
}

RewardKind parse_reward_kind(std::string_view name) {
  if (name == "radial") return RewardKind::kRadial;
  if (name == "halfspace") return RewardKind::kHalfspace;
  if (name == "mode" || name == "mode-affinity") return RewardKind::kModeAffinity;
  throw std::invalid_argument("unknown reward kind '" + std::string(name) + "' (expected radial|halfspace|mode)");
}

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::kRadial: return "radial";
    case RewardKind::kHalfspace: return "halfspace";
    case RewardKind::kModeAffinity: return "mode";
  }
  return "?";
}

double external_reward(const RewardSpec& spec, std::span<const double> x0, const GmmSpec* teacher) {
  switch (spec.kind) {
    case RewardKind::kRadial: {
      if (spec.center.size() != x0.size()) throw std::invalid_argument("radial reward: center dimension mismatch");
      double r2 = 0.0;
      for (std::size_t k = 0; k < x0.size(); ++k) r2 += (x0[k] - spec.center[k]) * (x0[k] - spec.center[k]);
      return -r2;
    }
    case RewardKind::kHalfspace:
      if (spec.normal.size() != x0.size()) throw std::invalid_argument("halfspace reward: normal dimension mismatch");
      return dot(spec.normal, x0);
    case RewardKind::kModeAffinity: {
      if (!teacher) throw std::invalid_argument("mode reward: teacher spec required");
      if (spec.component >= teacher->components()) throw std::invalid_argument("mode reward: component out of range");
      return noisy_log_responsibilities(*teacher, x0, 0.0)[spec.component];
    }
  }
  throw std::invalid_argument("external_reward: unknown kind");
}

Field weighted_add(const Field& a_dm, const Field& dm_weight, const Field& beta,
                   const std::vector<std::pair<double, Vec>>& aux) {
  require_same(a_dm, dm_weight, "weighted_add");
  require_same(a_dm, beta, "weighted_add");
  Field out(a_dm.rows(), a_dm.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = dm_weight.values()[i] * a_dm.values()[i];
  for (const auto& [w, adv] : aux) {
    if (adv.size() != a_dm.rows()) throw std::invalid_argument("weighted_add: auxiliary advantage length mismatch");
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t k = 0; k < out.cols(); ++k) out(i, k) += beta(i, k) * w * adv[i];
  }
  return out;
}

GroupStatsCheck check_group_stats(const AdvantageField& field, double eps_std) {
  GroupStatsCheck out;
  const std::size_t G = field.values.rows();
  const double n = static_cast<double>(G);
  for (std::size_t c = 0; c < field.values.cols(); ++c) {
    if (field.std[c] < eps_std) {
      for (std::size_t i = 0; i < G; ++i) out.guarded_exact_zero = out.guarded_exact_zero && field.values(i, c) == 0.0;
      continue;
    }
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < G; ++i) m += field.values(i, c);
    m /= n;
    for (std::size_t i = 0; i < G; ++i) v += (field.values(i, c) - m) * (field.values(i, c) - m);
    out.max_abs_mean = std::max(out.max_abs_mean, std::abs(m));
    out.max_std_deviation = std::max(out.max_std_deviation, std::abs(std::sqrt(v / n) - 1.0));
  }
  return out;
}

}  // namespace rdm
