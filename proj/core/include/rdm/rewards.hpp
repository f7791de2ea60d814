#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdm/numerics.hpp"
#include "rdm/schedule.hpp"
#include "rdm/teacher.hpp"

namespace rdm {

/// Guard added to |x_next - mu| in the amplitude weight.
inline constexpr double kWdmEpsilon = 1e-7;
/// Below this residual the exact reward is undefined and gets flagged.
inline constexpr double kExactResidualFloor = 1e-12;
/// Floor on the per-sample L1 distance in the practical reward's weighting factor.
inline constexpr double kWeightingL1Floor = 1e-12;

/// sign(x) = 1 if x > 0, and -1 otherwise (including zero).
inline double sign_of(double x) { return x > 0.0 ? 1.0 : -1.0; }

/// Elementwise teacher - fake.
Field score_difference(const Field& teacher_out, const Field& fake_out);

struct ExactReward {
  Field values;
  std::vector<unsigned char> flagged;  // 1 where |x_next - mu| < kExactResidualFloor
  std::size_t flagged_count = 0;
};

/// R_s / (x_next - mu) * sigma^2 / alpha per element, row i using coeffs[i]
/// (the coefficients of the transition's target level).
ExactReward rdm_exact(const Field& rs, const Field& x_next, const Field& mu,
                      std::span<const ScheduleCoeffs> coeffs);

struct PracticeReward {
  Field values;
  Vec weighting;             // per-sample d / ||teacher_x0 - pred_x0||_1
  std::size_t clamped = 0;   // samples whose L1 distance hit the floor
};

/// (teacher_x0 - fake_x0) / sign(x_next - mu) * d / ||teacher_x0 - pred_x0||_1.
PracticeReward rdm_practice(const Field& teacher_x0, const Field& fake_x0, const Field& pred_x0,
                            const Field& x_next, const Field& mu);

/// 1 / (|x_next - mu| + 1e-7) * sigma^2 / alpha per element.
Field wdm_weight(const Field& x_next, const Field& mu, std::span<const ScheduleCoeffs> coeffs);

/// Per-sample mean of |w_dm| over coordinates.
Vec beta_dm(const Field& w_dm);

enum class BetaMode { kSample, kPixel, kOff };
BetaMode parse_beta_mode(std::string_view name);
std::string_view to_string(BetaMode mode);

/// Beta broadcast to G x d: sample mean (kSample), w_dm itself (kPixel) or 1 (kOff).
Field beta_field(const Field& w_dm, BetaMode mode);

struct AdvantageField {
  Field values;              // G x P
  Vec mean;                  // per-position group mean, P
  Vec std;                   // per-position population std, P
  std::size_t guarded = 0;   // positions where std < eps_std (set to zero)
};

inline constexpr double kDefaultStdGuard = 1e-8;

/// Standardizes each column over the group (rows). Throws std::invalid_argument
/// when fewer than two rows.
AdvantageField group_normalize(const Field& field, double eps_std = kDefaultStdGuard);
AdvantageField group_normalize(std::span<const double> sparse, double eps_std = kDefaultStdGuard);

/// Recomputed column statistics of a normalized field. Guarded columns must be
/// exactly zero; the others contribute to the worst mean and std deviations.
struct GroupStatsCheck {
  double max_abs_mean = 0.0;
  double max_std_deviation = 0.0;  // max |std - 1|
  bool guarded_exact_zero = true;
};
GroupStatsCheck check_group_stats(const AdvantageField& field, double eps_std = kDefaultStdGuard);

enum class RewardKind { kRadial, kHalfspace, kModeAffinity };
RewardKind parse_reward_kind(std::string_view name);
std::string_view to_string(RewardKind kind);

struct RewardSpec {
  RewardKind kind = RewardKind::kRadial;
  Vec center;                 // radial: reward -||x0 - center||^2
  Vec normal;                 // halfspace: reward normal . x0
  std::size_t component = 0;  // mode affinity: log responsibility of this component
};

double external_reward(const RewardSpec& spec, std::span<const double> x0,
                       const GmmSpec* teacher = nullptr);

/// dm_weight * A_dm + beta * sum_j w_j * A_oj, each sparse A_oj broadcast over
/// its row.
Field weighted_add(const Field& a_dm, const Field& dm_weight, const Field& beta,
                   const std::vector<std::pair<double, Vec>>& aux);

}  // namespace rdm
