#include "rdm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rdm {

void Field::set_row(std::size_t r, std::span<const double> values) {
  if (values.size() != cols_) throw std::invalid_argument("Field::set_row: width mismatch");
  std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(std::span<const double> values, const char* what) {
  if (!all_finite(values)) throw std::domain_error(std::string(what) + ": non-finite value");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t position)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed) ^ splitmix64(~stream)) {
  if (position > 0) {
    engine_.discard(position);
    position_ = position;
  }
}

std::uint64_t RngStream::next_u64() {
  ++position_;
  return engine_();
}

double RngStream::uniform() {
  // 53 random bits mapped to the open interval (0, 1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

std::size_t RngStream::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

Vec randn(RngStream& stream, std::size_t n) {
  if (n == 0) throw std::invalid_argument("randn: n must be >= 1");
  Vec out(n);
  fill_randn(stream, out);
  return out;
}

void fill_randn(RngStream& stream, std::span<double> out) {
  for (double& v : out) v = stream.normal();
}

// ---------------------------------------------------------------------------

void time_embedding(double t, std::span<double> out) {
  for (std::size_t k = 0; k < kTimeFeatures / 2; ++k) {
    const double w = static_cast<double>(1u << k);
    out[2 * k] = std::sin(w * t);
    out[2 * k + 1] = std::cos(w * t);
  }
}

std::size_t MlpShape::param_count() const { return MlpLayout(*this).total; }

MlpLayout::MlpLayout(const MlpShape& shape) {
  if (shape.data_dim == 0 || shape.cond_width == 0)
    throw std::invalid_argument("MlpShape: data_dim and cond_width must be positive");
  if (shape.layers > 0 && shape.hidden == 0)
    throw std::invalid_argument("MlpShape: hidden width must be positive");
  std::size_t offset = 0;
  std::size_t in = shape.input_dim();
  for (std::size_t l = 0; l <= shape.layers; ++l) {
    Dense layer;
    layer.in = in;
    layer.out = (l == shape.layers) ? shape.data_dim : shape.hidden;
    layer.weight = offset;
    offset += layer.in * layer.out;
    layer.bias = offset;
    offset += layer.out;
    dense.push_back(layer);
    in = layer.out;
  }
  skip = offset;
  offset += shape.data_dim * shape.data_dim;
  total = offset;
}

void MlpGrad::zero() { std::fill(values.begin(), values.end(), 0.0); }

void MlpGrad::add(const MlpGrad& other, double s) {
  if (other.values.size() != values.size()) throw std::invalid_argument("MlpGrad::add: shape mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += s * other.values[i];
}

void MlpGrad::scale(double factor) {
  for (double& v : values) v *= factor;
}

double MlpGrad::norm() const { return l2_norm(values); }

void set_residual_identity(MlpParams& params) {
  const MlpLayout layout(params.shape);
  params.values.assign(layout.total, 0.0);
  const std::size_t d = params.shape.data_dim;
  for (std::size_t i = 0; i < d; ++i) params.values[layout.skip + i * d + i] = 1.0;
}

Vec mlp_forward(const MlpParams& params, std::span<const double> x, double t, std::size_t cond,
                MlpTape* tape) {
  const MlpShape& shape = params.shape;
  const std::size_t d = shape.data_dim;
  if (x.size() != d) throw std::invalid_argument("mlp_forward: input dimension mismatch");
  if (!std::isfinite(t) || t < 0.0 || t > 1.0) throw std::domain_error("mlp_forward: t outside [0,1]");
  if (cond >= shape.cond_width) throw std::invalid_argument("mlp_forward: condition id out of range");
  require_finite(x, "mlp_forward input");

  const MlpLayout layout(shape);
  const double* p = params.values.data();

  MlpTape local;
  MlpTape& tp = tape ? *tape : local;
  tp.input.assign(shape.input_dim(), 0.0);
  std::copy(x.begin(), x.end(), tp.input.begin());
  time_embedding(t, std::span<double>(tp.input).subspan(d, kTimeFeatures));
  tp.input[d + kTimeFeatures + cond] = 1.0;
  tp.post.resize(shape.layers);

  const Vec* in = &tp.input;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const auto& L = layout.dense[l];
    Vec& h = tp.post[l];
    h.assign(L.out, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      const double* w = p + L.weight + o * L.in;
      double s = p[L.bias + o];
      for (std::size_t i = 0; i < L.in; ++i) s += w[i] * (*in)[i];
      h[o] = std::tanh(s);
    }
    in = &h;
  }

  const auto& L = layout.dense.back();
  Vec out(d, 0.0);
  for (std::size_t o = 0; o < d; ++o) {
    const double* w = p + L.weight + o * L.in;
    double s = p[L.bias + o];
    for (std::size_t i = 0; i < L.in; ++i) s += w[i] * (*in)[i];
    const double* sk = p + layout.skip + o * d;
    for (std::size_t i = 0; i < d; ++i) s += sk[i] * x[i];
    out[o] = s;
  }
  return out;
}

void mlp_backward(const MlpParams& params, const MlpTape& tape, std::span<const double> upstream,
                  MlpGrad& grad, double scale) {
  const MlpShape& shape = params.shape;
  const std::size_t d = shape.data_dim;
  if (upstream.size() != d) throw std::invalid_argument("mlp_backward: upstream dimension mismatch");
  if (!grad.congruent(params)) throw std::invalid_argument("mlp_backward: gradient shape mismatch");
  if (tape.input.size() != shape.input_dim() || tape.post.size() != shape.layers)
    throw std::invalid_argument("mlp_backward: tape does not match architecture");
  require_finite(upstream, "mlp_backward upstream");

  const MlpLayout layout(shape);
  const double* p = params.values.data();
  double* g = grad.values.data();

  // Output layer and skip path.
  Vec delta(d);
  for (std::size_t o = 0; o < d; ++o) delta[o] = scale * upstream[o];
  for (std::size_t o = 0; o < d; ++o) {
    double* gs = g + layout.skip + o * d;
    for (std::size_t i = 0; i < d; ++i) gs[i] += delta[o] * tape.input[i];
  }

  for (std::size_t l = shape.layers + 1; l-- > 0;) {
    const auto& L = layout.dense[l];
    const Vec& in = (l == 0) ? tape.input : tape.post[l - 1];
    for (std::size_t o = 0; o < L.out; ++o) {
      double* gw = g + L.weight + o * L.in;
      for (std::size_t i = 0; i < L.in; ++i) gw[i] += delta[o] * in[i];
      g[L.bias + o] += delta[o];
    }
    if (l == 0) break;
    Vec next(L.in, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      const double* w = p + L.weight + o * L.in;
      for (std::size_t i = 0; i < L.in; ++i) next[i] += w[i] * delta[o];
    }
    const Vec& h = tape.post[l - 1];
    for (std::size_t i = 0; i < L.in; ++i) next[i] *= (1.0 - h[i] * h[i]);
    delta = std::move(next);
  }
}

MlpGrad mlp_backward(const MlpParams& params, std::span<const double> x, double t,
                     std::size_t cond, std::span<const double> upstream) {
  MlpTape tape;
  mlp_forward(params, x, t, cond, &tape);
  MlpGrad grad(params.shape);
  mlp_backward(params, tape, upstream, grad);
  return grad;
}

double fd_check(const MlpParams& params, std::span<const double> x, double t, std::size_t cond,
                std::span<const double> upstream, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be positive");
  const MlpGrad analytic = mlp_backward(params, x, t, cond, upstream);
  MlpParams probe = params;
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.values.size(); ++k) {
    const double saved = probe.values[k];
    probe.values[k] = saved + step;
    const double fp = dot(upstream, mlp_forward(probe, x, t, cond));
    probe.values[k] = saved - step;
    const double fm = dot(upstream, mlp_forward(probe, x, t, cond));
    probe.values[k] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic.values[k];
    const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace rdm
