#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include "rdm/numerics.hpp"

namespace rdm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  Vec m;
  Vec v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// A network plus its optimizer moments. Used for both the student generator
/// and the fake denoiser.
struct NetState {
  MlpParams params;
  AdamState opt;

  NetState() = default;
  explicit NetState(const MlpParams& p) : params(p), opt(p.values.size()) {}
  friend bool operator==(const NetState&, const NetState&) = default;
};

using StudentState = NetState;
using FakeScoreState = NetState;

/// Residual identity (skip = I, output layer zero) with hidden layers drawn
/// Glorot-uniform, then N(0, perturb^2) added to the output layer and skip.
MlpParams init_residual_identity(const MlpShape& shape, RngStream& stream, double perturb = 1e-2);

/// AdamW step; descends along `grads`. Returns false and leaves the state
/// untouched when any gradient entry is non-finite.
bool adam_step(NetState& state, const MlpGrad& grads, const AdamConfig& cfg);

/// Rescales `grads` in place so its L2 norm is at most max_norm; returns the
/// pre-clip norm. max_norm <= 0 disables clipping.
double clip_grad_norm(MlpGrad& grads, double max_norm);

Vec generate_step(const StudentState& student, std::span<const double> x_t, double t, std::size_t cond);
Vec fake_denoise(const FakeScoreState& fake, std::span<const double> x_tprime, double tprime,
                 std::size_t cond = 0);

struct DenoiseBatch {
  Field x0;                    // n x d, detached student outputs
  std::vector<double> tprime;  // n
  Field noise;                 // n x d
  std::vector<std::size_t> cond;  // n (empty means all zero)
};

struct DenoiseUpdateResult {
  double loss = 0.0;  // mean ||fake(x_t', t') - x0||^2 before the step
  double grad_norm = 0.0;
  bool applied = false;
};

/// Gradient of the mean denoising loss with respect to the fake parameters.
MlpGrad fake_denoise_gradient(const FakeScoreState& fake, const DenoiseBatch& batch, double* loss = nullptr);

/// One optimizer step on the fake denoiser. Throws std::invalid_argument on an
/// empty batch.
DenoiseUpdateResult fake_denoise_update(FakeScoreState& fake, const DenoiseBatch& batch,
                                        const AdamConfig& cfg, double clip_norm);

/// Plain-text network dump, format "rdm-net v1".
void write_net(std::ostream& out, const NetState& state);
NetState read_net(std::istream& in);

}  // namespace rdm
