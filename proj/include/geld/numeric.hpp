#pragma once

// Dense row-major tensors and the small set of differentiable kernels the
// model needs. Backward passes are explicit functions composed by the model
// modules; there is no general autodiff graph.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geld {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MaskingError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace geld

namespace geld::nn {

template <typename T>
inline constexpr T kMasked = -std::numeric_limits<T>::infinity();

inline constexpr double kRmsEps = 1e-6;

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, T fill = T(0));
  static Tensor from(std::vector<std::size_t> dims, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // A rank-1 tensor is treated as a single row.
  std::size_t rows() const { return shape.size() < 2 ? 1 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  void enable_grad();
  void zero_grad();

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

// C = A·B (+C when accumulate). A: n×a, B: a×b. For every output element the
// sum over the inner index runs in ascending order, so results are
// bit-reproducible on a given platform.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t inner, std::size_t m,
          bool accumulate);
// C = A·Bᵀ (+C). A: n×a, B: m×a.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t n, std::size_t inner, std::size_t m,
             bool accumulate);
// C = Aᵀ·B (+C). A: a×n, B: a×m.
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t inner, std::size_t m,
             bool accumulate);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Y = X·W + b. Throws DimensionError on shape mismatch.
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Accumulates dW, db into w.grad / b.grad (when those require grad) and
/// returns dX.
template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, Tensor<T>& w, Tensor<T>& b, const Tensor<T>& dy);

/// Row-wise softmax with row-max stabilization. −∞ entries map to exactly 0.
/// A row that is entirely −∞ raises MaskingError.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& m);
template <typename T>
void softmax_rows_inplace(T* m, std::size_t rows, std::size_t cols);
/// dX = Y ⊙ (dY − rowsum(dY ⊙ Y)).
template <typename T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, std::size_t rows, std::size_t cols);

template <typename T>
std::vector<T> log_softmax(std::span<const T> logits);

/// Row i scaled by 1/sqrt(mean(X[i,:]²) + kRmsEps), then multiplied by gain.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain);
template <typename T>
void rms_norm_rows(const T* x, const T* gain, T* y, T* inv_rms, std::size_t rows, std::size_t cols);
/// Accumulates dgain (if non-null) and writes dX.
template <typename T>
void rms_norm_rows_backward(const T* x, const T* gain, const T* inv_rms, const T* dy, T* dx,
                            T* dgain, std::size_t rows, std::size_t cols);

struct CrossEntropy {
  double loss;
  std::vector<double> grad;  // softmax(logits) − onehot(target)
};

/// −log softmax(logits)[target]. Throws IndexError when target is out of range.
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t target);

template <typename T>
inline T softplus(T x) {
  return x > T(30) ? x : std::log1p(std::exp(x));
}
template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// SiLU activation x·σ(x) and its derivative.
template <typename T>
inline T silu(T x) {
  return x * sigmoid(x);
}
/// out[i] = silu(x[i]); vectorized where the platform offers SIMD exp.
template <typename T>
void silu_forward(const T* x, T* out, std::size_t n);
template <typename T>
inline T silu_grad(T x) {
  T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

/// Throws NumericError naming `what` when any entry is NaN or ±Inf.
void require_finite(std::span<const double> values, const std::string& what);

struct NamedParam {
  std::string name;
  Tensor<double>* tensor;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update of every parameter from its .grad field. Moment buffers are
  /// created lazily and keyed by position in `params`.
  void step(std::span<const NamedParam> params, double lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct GradEntry {
  std::string name;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_diff;
};

struct GradReport {
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::vector<GradEntry> per_parameter;
  std::vector<std::string> flagged;  // parameters with any rel_diff above tolerance
};

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t coords_per_param = 8;
  double tolerance = 1e-3;
  // Denominator floor for relative differences of near-zero gradients.
  double rel_floor = 1e-6;
  std::uint64_t seed = 1;
};

/// Compares the analytic gradients already stored in each param's .grad with
/// central differences (f(p+eps) − f(p−eps)) / (2·eps) on a random subsample of
/// coordinates. rel_diff = |a − n| / max(|a|, |n|, rel_floor).
GradReport check_gradients(const std::function<double()>& loss_fn,
                           std::span<const NamedParam> params, const GradCheckOptions& options);

}  // namespace geld::nn
