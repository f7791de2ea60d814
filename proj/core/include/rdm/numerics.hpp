#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdm {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Used for G x d reward/advantage fields,
/// sample batches and MLP weight blocks.
class Field {
 public:
  Field() = default;
  Field(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  void set_row(std::size_t r, std::span<const double> values);

  Vec& values() { return data_; }
  const Vec& values() const { return data_; }

  bool same_shape(const Field& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

bool all_finite(std::span<const double> values);
void require_finite(std::span<const double> values, const char* what);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// Mixes a seed and up to three tags into a 64-bit stream id.
std::uint64_t stream_key(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// Deterministic normal/uniform stream. The engine is mt19937_64 seeded from
/// (seed, stream); the Gaussian transform is Box-Muller so output is bit-exact
/// across standard libraries. `position()` counts engine draws, and a stream
/// can be rebuilt at any position.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t position = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// n i.i.d. standard normals.
Vec randn(RngStream& stream, std::size_t n);
void fill_randn(RngStream& stream, std::span<double> out);

// ---------------------------------------------------------------------------
// Fixed-architecture MLP
// ---------------------------------------------------------------------------

inline constexpr std::size_t kTimeFeatures = 8;

/// Writes the sinusoidal timestep embedding (sin/cos pairs at 1, 2, 4, 8 rad).
void time_embedding(double t, std::span<double> out);

struct MlpShape {
  std::size_t data_dim = 2;
  std::size_t cond_width = 1;
  std::size_t hidden = 64;
  std::size_t layers = 2;

  std::size_t input_dim() const { return data_dim + kTimeFeatures + cond_width; }
  std::size_t param_count() const;
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Offsets of each block inside the flat parameter vector. Dense layers come
/// first (hidden layers then the output layer, each as W then b), followed by
/// the d x d skip matrix that carries x straight to the output.
struct MlpLayout {
  struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight = 0;  // offset of row-major out x in block
    std::size_t bias = 0;
  };
  std::vector<Dense> dense;
  std::size_t skip = 0;
  std::size_t total = 0;

  explicit MlpLayout(const MlpShape& shape);
};

struct MlpParams {
  MlpShape shape;
  Vec values;

  MlpParams() = default;
  explicit MlpParams(const MlpShape& s) : shape(s), values(s.param_count(), 0.0) {}
  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct MlpGrad {
  MlpShape shape;
  Vec values;

  MlpGrad() = default;
  explicit MlpGrad(const MlpShape& s) : shape(s), values(s.param_count(), 0.0) {}

  void zero();
  void add(const MlpGrad& other, double scale = 1.0);
  void scale(double factor);
  double norm() const;
  bool congruent(const MlpParams& p) const { return shape == p.shape && values.size() == p.values.size(); }
};

/// Activations recorded by a forward pass, consumed by `mlp_backward`.
struct MlpTape {
  Vec input;               // concatenated [x, embed(t), onehot(c)]
  std::vector<Vec> post;   // tanh outputs of each hidden layer
};

/// Sets the skip block to identity and every other entry to zero.
void set_residual_identity(MlpParams& params);

Vec mlp_forward(const MlpParams& params, std::span<const double> x, double t, std::size_t cond,
                MlpTape* tape = nullptr);

/// Accumulates scale * d(upstream . output)/d(params) into `grad` using a tape
/// recorded by `mlp_forward` with the same params.
void mlp_backward(const MlpParams& params, const MlpTape& tape, std::span<const double> upstream,
                  MlpGrad& grad, double scale = 1.0);

MlpGrad mlp_backward(const MlpParams& params, std::span<const double> x, double t,
                     std::size_t cond, std::span<const double> upstream);

/// Max over parameters of |analytic - numeric| / (|analytic| + |numeric| + 1e-12)
/// for the scalar upstream . mlp_forward(params, ...), using central differences.
double fd_check(const MlpParams& params, std::span<const double> x, double t, std::size_t cond,
                std::span<const double> upstream, double step);

}  // namespace rdm
