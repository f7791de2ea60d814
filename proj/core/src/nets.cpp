#include "rdm/nets.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rdm/schedule.hpp"

namespace rdm {

MlpParams init_residual_identity(const MlpShape& shape, RngStream& stream, double perturb) {
  MlpParams params(shape);
  set_residual_identity(params);
  const MlpLayout layout(shape);
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const auto& L = layout.dense[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    for (std::size_t i = 0; i < L.in * L.out; ++i)
      params.values[L.weight + i] = stream.uniform(-bound, bound);
  }
  const auto& out = layout.dense.back();
  for (std::size_t i = out.weight; i < out.bias + out.out; ++i) params.values[i] += perturb * stream.normal();
  for (std::size_t i = layout.skip; i < layout.total; ++i) params.values[i] += perturb * stream.normal();
  return params;
}

bool adam_step(NetState& state, const MlpGrad& grads, const AdamConfig& cfg) {
  if (!grads.congruent(state.params)) throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (!all_finite(grads.values)) return false;
  const std::size_t n = state.params.values.size();
  if (state.opt.m.size() != n) state.opt = AdamState(n);
  state.opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.opt.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values[i];
    double& m = state.opt.m[i];
    double& v = state.opt.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    double& p = state.params.values[i];
    p -= cfg.lr * cfg.weight_decay * p;
    p -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return true;
}

double clip_grad_norm(MlpGrad& grads, double max_norm) {
  const double norm = grads.norm();
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

Vec generate_step(const StudentState& student, std::span<const double> x_t, double t, std::size_t cond) {
  return mlp_forward(student.params, x_t, t, cond);
}

Vec fake_denoise(const FakeScoreState& fake, std::span<const double> x_tprime, double tprime, std::size_t cond) {
  return mlp_forward(fake.params, x_tprime, tprime, cond);
}

MlpGrad fake_denoise_gradient(const FakeScoreState& fake, const DenoiseBatch& batch, double* loss) {
  const std::size_t n = batch.x0.rows();
  if (n == 0) throw std::invalid_argument("fake_denoise_update: empty batch");
  if (batch.tprime.size() != n || !batch.noise.same_shape(batch.x0) ||
      (!batch.cond.empty() && batch.cond.size() != n))
    throw std::invalid_argument("fake_denoise_update: batch fields disagree");
  const std::size_t d = batch.x0.cols();
  MlpGrad grad(fake.params.shape);
  MlpTape tape;
  Vec upstream(d);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec xt = forward_diffuse(batch.x0.row(i), batch.tprime[i], batch.noise.row(i));
    const std::size_t c = batch.cond.empty() ? 0 : batch.cond[i];
    const Vec pred = mlp_forward(fake.params, xt, batch.tprime[i], c, &tape);
    for (std::size_t k = 0; k < d; ++k) {
      const double r = pred[k] - batch.x0(i, k);
      total += r * r;
      upstream[k] = 2.0 * r;
    }
    mlp_backward(fake.params, tape, upstream, grad, 1.0 / static_cast<double>(n));
  }
  if (loss) *loss = total / static_cast<double>(n);
  return grad;
}

DenoiseUpdateResult fake_denoise_update(FakeScoreState& fake, const DenoiseBatch& batch,
                                        const AdamConfig& cfg, double clip_norm) {
  DenoiseUpdateResult result;
  MlpGrad grad = fake_denoise_gradient(fake, batch, &result.loss);
  result.grad_norm = clip_grad_norm(grad, clip_norm);
  result.applied = adam_step(fake, grad, cfg);
  return result;
}

namespace {

void write_vec(std::ostream& out, const char* name, const Vec& v) {
  out << name << ' ' << v.size() << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) out << v[i] << (i + 1 == v.size() ? '\n' : ' ');
  if (v.empty()) out << '\n';
}

Vec read_vec(std::istream& in, const char* name) {
  std::string tag;
  std::size_t n = 0;
  if (!(in >> tag >> n) || tag != name) throw std::runtime_error(std::string("read_net: expected ") + name);
  Vec v(n);
  for (double& x : v)
    if (!(in >> x)) throw std::runtime_error(std::string("read_net: truncated ") + name);
  return v;
}

}  // namespace

void write_net(std::ostream& out, const NetState& state) {
  const MlpShape& s = state.params.shape;
  std::ostringstream body;
  body.imbue(std::locale::classic());
  body.precision(17);
  body << "rdm-net v1\n";
  body << "shape " << s.data_dim << ' ' << s.cond_width << ' ' << s.hidden << ' ' << s.layers << '\n';
  body << "step " << state.opt.step << '\n';
  write_vec(body, "params", state.params.values);
  write_vec(body, "adam_m", state.opt.m);
  write_vec(body, "adam_v", state.opt.v);
  out << body.str();
}

NetState read_net(std::istream& in) {
  in.imbue(std::locale::classic());
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "rdm-net") throw std::runtime_error("read_net: not an rdm-net file");
  if (version != "v1") throw std::runtime_error("read_net: unsupported version " + version);
  std::string tag;
  MlpShape shape;
  if (!(in >> tag >> shape.data_dim >> shape.cond_width >> shape.hidden >> shape.layers) || tag != "shape")
    throw std::runtime_error("read_net: bad shape header");
  NetState state;
  if (!(in >> tag >> state.opt.step) || tag != "step") throw std::runtime_error("read_net: bad step header");
  state.params.shape = shape;
  state.params.values = read_vec(in, "params");
  state.opt.m = read_vec(in, "adam_m");
  state.opt.v = read_vec(in, "adam_v");
  if (state.params.values.size() != shape.param_count())
    throw std::runtime_error("read_net: parameter count does not match shape");
  if (state.opt.m.size() != state.params.values.size() || state.opt.v.size() != state.params.values.size())
    throw std::runtime_error("read_net: optimizer state does not match parameters");
  return state;
}

}  // namespace rdm
