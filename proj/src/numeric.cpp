#include "geld/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#if defined(GELD_LIBMVEC)
// glibc ships SIMD variants of expf/exp in libmvec; declaring them lets the
// exp loops below vectorize.
extern "C" float expf(float) noexcept __attribute__((__simd__("notinbranch")));
extern "C" double exp(double) noexcept __attribute__((__simd__("notinbranch")));
#endif

namespace geld::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> dims, T fill)
    : shape(std::move(dims)), data(product(shape), fill) {}

template <typename T>
Tensor<T> Tensor<T>::from(std::vector<std::size_t> dims, std::vector<T> values) {
  if (product(dims) != values.size())
    throw DimensionError("tensor shape " + shape_str(dims) + " does not match " +
                         std::to_string(values.size()) + " values");
  Tensor t;
  t.shape = std::move(dims);
  t.data = std::move(values);
  return t;
}

template <typename T>
void Tensor<T>::enable_grad() {
  requires_grad = true;
  grad.assign(data.size(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (requires_grad) std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t inner, std::size_t m,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, T(0));
  // Register tiles of 4 rows × one 32-byte vector accumulate over k; every
  // c(i, j) still sums over k in ascending order.
  using V [[gnu::vector_size(32)]] = T;
  constexpr std::size_t W = 32 / sizeof(T);
  auto load = [](const T* p) {
    V v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  auto store = [](T* p, const V& v) { std::memcpy(p, &v, sizeof v); };
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const T* a0 = a + i * inner;
    const T* a1 = a0 + inner;
    const T* a2 = a1 + inner;
    const T* a3 = a2 + inner;
    T* c0 = c + i * m;
    std::size_t j = 0;
    for (; j + W <= m; j += W) {
      V s0 = load(c0 + j), s1 = load(c0 + m + j), s2 = load(c0 + 2 * m + j),
        s3 = load(c0 + 3 * m + j);
      for (std::size_t k = 0; k < inner; ++k) {
        const V bv = load(b + k * m + j);
        s0 += a0[k] * bv;
        s1 += a1[k] * bv;
        s2 += a2[k] * bv;
        s3 += a3[k] * bv;
      }
      store(c0 + j, s0);
      store(c0 + m + j, s1);
      store(c0 + 2 * m + j, s2);
      store(c0 + 3 * m + j, s3);
    }
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < inner; ++k) {
        const T x = a0[r * inner + k];
        for (std::size_t jj = j; jj < m; ++jj) c0[r * m + jj] += x * b[k * m + jj];
      }
  }
  for (; i < n; ++i) {
    T* ci = c + i * m;
    const T* ai = a + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = ai[k];
      const T* bk = b + k * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t n, std::size_t inner, std::size_t m,
             bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const T* bj = b + j * inner;
      T s = T(0);
      for (std::size_t k = 0; k < inner; ++k) s += ai[k] * bj[k];
      c[i * m + j] = accumulate ? c[i * m + j] + s : s;
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t inner, std::size_t m,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, T(0));
  for (std::size_t k = 0; k < inner; ++k) {
    const T* ak = a + k * n;
    const T* bk = b + k * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T aki = ak[i];
      if (aki == T(0)) continue;
      T* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul shape mismatch " + shape_str(a.shape) + " · " +
                         shape_str(b.shape));
  Tensor<T> c({a.rows(), b.cols()});
  gemm(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(), b.cols(), false);
  return c;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows() || b.size() != w.cols())
    throw DimensionError("linear shape mismatch " + shape_str(x.shape) + " · " +
                         shape_str(w.shape) + " + " + shape_str(b.shape));
  Tensor<T> y({x.rows(), w.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + i * w.cols());
  gemm(x.data.data(), w.data.data(), y.data.data(), x.rows(), x.cols(), w.cols(), true);
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, Tensor<T>& w, Tensor<T>& b, const Tensor<T>& dy) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  if (dy.rows() != n || dy.cols() != out)
    throw DimensionError("linear_backward gradient shape " + shape_str(dy.shape));
  if (w.requires_grad) gemm_tn(x.data.data(), dy.data.data(), w.grad.data(), in, n, out, true);
  if (b.requires_grad)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out; ++j) b.grad[j] += dy(i, j);
  Tensor<T> dx({n, in});
  gemm_nt(dy.data.data(), w.data.data(), dx.data.data(), n, out, in, false);
  return dx;
}

template <typename T>
void softmax_rows_inplace(T* m, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = m + r * cols;
    T mx = kMasked<T>;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, row[c]);
    if (mx == kMasked<T>) throw MaskingError("softmax row " + std::to_string(r) + " fully masked");
    // Masked entries give exp(−inf) = 0.
    for (std::size_t c = 0; c < cols; ++c) row[c] = std::exp(row[c] - mx);
    T sum = T(0);
    for (std::size_t c = 0; c < cols; ++c) sum += row[c];
    const T inv = T(1) / sum;
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

template <typename T>
void silu_forward(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / (T(1) + std::exp(-x[i]));
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& m) {
  if (m.rows() == 0 || m.cols() == 0) throw DimensionError("softmax of empty tensor");
  Tensor<T> out = m;
  out.requires_grad = false;
  out.grad.clear();
  softmax_rows_inplace(out.data.data(), out.rows(), out.cols());
  return out;
}

template <typename T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* yr = y + r * cols;
    const T* dyr = dy + r * cols;
    T dot = T(0);
    for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * dyr[c];
    for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] = yr[c] * (dyr[c] - dot);
  }
}

template <typename T>
std::vector<T> log_softmax(std::span<const T> logits) {
  T mx = kMasked<T>;
  for (T v : logits) mx = std::max(mx, v);
  if (mx == kMasked<T>) throw MaskingError("log_softmax over fully masked logits");
  T sum = T(0);
  for (T v : logits)
    if (v != kMasked<T>) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  std::vector<T> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    out[i] = logits[i] == kMasked<T> ? kMasked<T> : logits[i] - lse;
  return out;
}

template <typename T>
void rms_norm_rows(const T* x, const T* gain, T* y, T* inv_rms, std::size_t rows,
                   std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T ss = T(0);
    for (std::size_t c = 0; c < cols; ++c) ss += xr[c] * xr[c];
    const T inv = T(1) / std::sqrt(ss / T(cols) + T(kRmsEps));
    if (inv_rms) inv_rms[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xr[c] * inv * gain[c];
  }
}

template <typename T>
void rms_norm_rows_backward(const T* x, const T* gain, const T* inv_rms, const T* dy, T* dx,
                            T* dgain, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    const T* dyr = dy + r * cols;
    const T inv = inv_rms[r];
    // y = x·inv·g,  inv = (mean(x²)+eps)^(-1/2),  ∂inv/∂x_c = −inv³·x_c/cols
    T dot = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      dot += dyr[c] * gain[c] * xr[c];
      if (dgain) dgain[c] += dyr[c] * xr[c] * inv;
    }
    const T coef = inv * inv * inv * dot / T(cols);
    for (std::size_t c = 0; c < cols; ++c)
      dx[r * cols + c] = dyr[c] * gain[c] * inv - coef * xr[c];
  }
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain) {
  if (x.cols() == 0 || gain.size() != x.cols())
    throw DimensionError("rms_norm gain " + shape_str(gain.shape) + " vs input " +
                         shape_str(x.shape));
  Tensor<T> y(x.shape);
  rms_norm_rows(x.data.data(), gain.data.data(), y.data.data(), static_cast<T*>(nullptr),
                x.rows(), x.cols());
  return y;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size())
    throw IndexError("cross_entropy target " + std::to_string(target) + " outside " +
                     std::to_string(logits.size()) + " classes");
  const auto logp = log_softmax(logits);
  CrossEntropy ce;
  ce.loss = -logp[target];
  ce.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    ce.grad[i] = (logp[i] == kMasked<double> ? 0.0 : std::exp(logp[i])) - (i == target ? 1.0 : 0.0);
  return ce;
}

void require_finite(std::span<const double> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NumericError(what + ": non-finite value at index " + std::to_string(i));
}

void Adam::step(std::span<const NamedParam> params, double lr) {
  if (m_.size() != params.size()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p].tensor;
    if (!t.requires_grad) continue;
    if (m_[p].size() != t.size()) {
      m_[p].assign(t.size(), 0.0);
      v_[p].assign(t.size(), 0.0);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m_[p][i] = config_.beta1 * m_[p][i] + (1.0 - config_.beta1) * g;
      v_[p][i] = config_.beta2 * v_[p][i] + (1.0 - config_.beta2) * g * g;
      t.data[i] -= lr * (m_[p][i] / c1) / (std::sqrt(v_[p][i] / c2) + config_.eps);
    }
  }
}

GradReport check_gradients(const std::function<double()>& loss_fn,
                           std::span<const NamedParam> params, const GradCheckOptions& options) {
  if (!(options.eps > 0.0) || options.eps > 1e-3)
    throw std::invalid_argument("gradient check eps must lie in (0, 1e-3]");
  std::mt19937_64 rng(options.seed);
  GradReport report;
  for (const NamedParam& p : params) {
    Tensor<double>& t = *p.tensor;
    if (!t.requires_grad || t.grad.size() != t.size())
      throw std::invalid_argument("parameter " + p.name + " carries no analytic gradient");
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    bool flagged = false;
    for (std::size_t idx : coords) {
      const double saved = t.data[idx];
      t.data[idx] = saved + options.eps;
      const double up = loss_fn();
      t.data[idx] = saved - options.eps;
      const double down = loss_fn();
      t.data[idx] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("non-finite loss while perturbing " + p.name);
      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = t.grad[idx];
      const double abs_diff = std::abs(analytic - numeric);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), options.rel_floor});
      const double rel = abs_diff / denom;
      report.max_abs_diff = std::max(report.max_abs_diff, abs_diff);
      report.max_rel_diff = std::max(report.max_rel_diff, rel);
      report.per_parameter.push_back({p.name, idx, analytic, numeric, rel});
      if (rel > options.tolerance) flagged = true;
    }
    if (flagged) report.flagged.push_back(p.name);
  }
  return report;
}

#define GELD_INSTANTIATE(T)                                                                  \
  template struct Tensor<T>;                                                                 \
  template void gemm<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool); \
  template void gemm_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,    \
                           bool);                                                            \
  template void gemm_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,    \
                           bool);                                                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> linear_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> linear_backward<T>(const Tensor<T>&, Tensor<T>&, Tensor<T>&,            \
                                        const Tensor<T>&);                                   \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                      \
  template void softmax_rows_inplace<T>(T*, std::size_t, std::size_t);                       \
  template void silu_forward<T>(const T*, T*, std::size_t);                                  \
  template void softmax_rows_backward<T>(const T*, const T*, T*, std::size_t, std::size_t);  \
  template std::vector<T> log_softmax<T>(std::span<const T>);                                \
  template Tensor<T> rms_norm<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template void rms_norm_rows<T>(const T*, const T*, T*, T*, std::size_t, std::size_t);      \
  template void rms_norm_rows_backward<T>(const T*, const T*, const T*, const T*, T*, T*,    \
                                          std::size_t, std::size_t);

GELD_INSTANTIATE(float)
GELD_INSTANTIATE(double)

#undef GELD_INSTANTIATE

}  // namespace geld::nn
