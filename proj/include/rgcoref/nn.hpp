#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgcoref/coref_class.hpp"
#include "rgcoref/param_store.hpp"
#include "rgcoref/random.hpp"
#include "rgcoref/tensor.hpp"

namespace rgcoref {

enum class Mode { kTrain, kEval };

/// Optimizer and regularization hyperparameters.
struct Hyper {
  double lr0 = 1e-3;
  double lr_decay = 0.95;  // multiplicative, per epoch
  double l2_lambda = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout_p = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must be in (0, 1]");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("adam_beta1 must be in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw std::invalid_argument("adam_beta2 must be in (0, 1)");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("dropout_p must be in [0, 1)");
    if (!(lr0 >= 0.0)) throw std::invalid_argument("lr0 must be non-negative");
    if (!(l2_lambda >= 0.0)) throw std::invalid_argument("l2_lambda must be non-negative");
    if (!(adam_eps > 0.0) || !(bn_eps > 0.0)) throw std::invalid_argument("epsilons must be positive");
    if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw std::invalid_argument("bn_momentum must be in [0, 1]");
  }

  /// Learning rate for a zero-based epoch index.
  double learning_rate(std::size_t epoch) const {
    return lr0 * std::pow(lr_decay, static_cast<double>(epoch));
  }
};

// ---------------------------------------------------------------------------
// Initialization

template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -limit, limit));
}

// ---------------------------------------------------------------------------
// Linear: y = xW + b

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  if (x.cols() != W.rows() || b.size() != W.cols())
    throw ShapeError("linear: x " + shape_string(x.shape()) + ", W " + shape_string(W.shape()) +
                     ", b " + shape_string(b.shape()));
  Tensor<T> y = matmul(x, W);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return y;
}

template <typename T>
struct LinearGrads {
  Tensor<T> dx;
  Tensor<T> dW;
  Tensor<T> db;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& dy) {
  LinearGrads<T> g;
  g.dW = matmul_tn(x, dy);
  g.dx = matmul_nt(dy, W);
  g.db = Tensor<T>::vector(W.cols());
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) g.db[c] += row[c];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

/// dy * 1{x > 0}; `x` may be either the pre-activation or the ReLU output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  x.require_same_shape(dy, "relu_backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > T(0))) dx[i] = T(0);
  return dx;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = sigmoid(v);
  return y;
}

/// dy * σ(1 − σ), given the sigmoid output.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  y.require_same_shape(dy, "sigmoid_backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (T(1) - y[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over rows, one statistic per column.

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::kEval;
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};

template <typename T>
struct BatchNormParams {
  const Tensor<T>& gamma;
  const Tensor<T>& beta;
  Tensor<T>& running_mean;
  Tensor<T>& running_var;
};

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormParams<T> p, Mode mode, double eps, double momentum,
                    BatchNormCache<T>* cache = nullptr) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  if (p.gamma.size() != f || p.beta.size() != f || p.running_mean.size() != f ||
      p.running_var.size() != f)
    throw ShapeError("batchnorm: feature count " + std::to_string(f) + " vs parameters");
  if (mode == Mode::kTrain && n < 2)
    throw std::invalid_argument("batchnorm in train mode needs at least 2 rows, got " +
                                std::to_string(n));

  Tensor<T> x_hat = Tensor<T>::matrix(n, f);
  std::vector<T> inv_std(f);
  for (std::size_t c = 0; c < f; ++c) {
    T mean, var;
    if (mode == Mode::kTrain) {
      mean = T(0);
      for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
      mean /= static_cast<T>(n);
      var = T(0);
      for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
      var /= static_cast<T>(n);
      const T unbiased = var * static_cast<T>(n) / static_cast<T>(n - 1);
      const T mom = static_cast<T>(momentum);
      p.running_mean[c] = (T(1) - mom) * p.running_mean[c] + mom * mean;
      p.running_var[c] = (T(1) - mom) * p.running_var[c] + mom * unbiased;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    inv_std[c] = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t r = 0; r < n; ++r) x_hat(r, c) = (x(r, c) - mean) * inv_std[c];
  }

  Tensor<T> y = x_hat;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) y(r, c) = p.gamma[c] * x_hat(r, c) + p.beta[c];
  if (cache) {
    cache->mode = mode;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx;
  Tensor<T> dgamma;
  Tensor<T> dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                     const Tensor<T>& dy) {
  const std::size_t n = dy.rows();
  const std::size_t f = dy.cols();
  if (cache.x_hat.shape() != dy.shape()) throw ShapeError("batchnorm_backward: missing or stale cache");
  BatchNormGrads<T> g{Tensor<T>::matrix(n, f), Tensor<T>::vector(f), Tensor<T>::vector(f)};
  for (std::size_t c = 0; c < f; ++c) {
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (std::size_t r = 0; r < n; ++r) {
      sum_dy += dy(r, c);
      sum_dy_xhat += dy(r, c) * cache.x_hat(r, c);
    }
    g.dbeta[c] = sum_dy;
    g.dgamma[c] = sum_dy_xhat;
    const T scale = gamma[c] * cache.inv_std[c];
    if (cache.mode == Mode::kEval) {
      for (std::size_t r = 0; r < n; ++r) g.dx(r, c) = dy(r, c) * scale;
    } else {
      const T inv_n = T(1) / static_cast<T>(n);
      for (std::size_t r = 0; r < n; ++r)
        g.dx(r, c) = scale * (dy(r, c) - inv_n * sum_dy - cache.x_hat(r, c) * inv_n * sum_dy_xhat);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The mask holds 0 or 1/(1-p) per element.

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng, Tensor<T>* mask = nullptr) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (mode == Mode::kEval || p == 0.0) {
    if (mask) *mask = Tensor<T>(x.shape(), T(1));
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> m(x.shape());
  Tensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    m[i] = uniform01(rng) >= p ? keep_scale : T(0);
    y[i] *= m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& dy) {
  mask.require_same_shape(dy, "dropout_backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy over three classes

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  Tensor<T> p = logits;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = T(0);
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return p;
}

template <typename T>
struct XentResult {
  T loss;
  Tensor<T> dlogits;
};

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const Class> labels) {
  if (logits.rows() != labels.size() || logits.cols() != kNumClasses)
    throw ShapeError("softmax_xent: logits " + shape_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  const std::size_t n = logits.rows();
  XentResult<T> out{T(0), Tensor<T>::matrix(n, kNumClasses)};
  if (n == 0) return out;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = logits.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = T(0);
    for (T v : row) sum += std::exp(v - mx);
    const T log_z = mx + std::log(sum);
    const std::size_t y = index_of(labels[r]);
    out.loss -= row[y] - log_z;
    for (std::size_t c = 0; c < kNumClasses; ++c)
      out.dlogits(r, c) = (std::exp(row[c] - log_z) - (c == y ? T(1) : T(0))) * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

// ---------------------------------------------------------------------------
// L2 weight penalty: adds lambda * sum ||W||^2 to the loss and 2 lambda W to
// the gradients of every parameter accepted by `include`.

template <typename T>
T l2_penalty(ParamStore<T>& store, double lambda, const NameFilter& include = is_weight_matrix) {
  if (lambda == 0.0) return T(0);
  const T lam = static_cast<T>(lambda);
  T total = T(0);
  for (auto& [name, p] : store) {
    if (!p.trainable || !include(name)) continue;
    T sq = T(0);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      sq += p.value[i] * p.value[i];
      p.grad[i] += T(2) * lam * p.value[i];
    }
    total += lam * sq;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. Gradients are zeroed afterward.

template <typename T>
void adam_step(ParamStore<T>& store, const Hyper& hyper, double lr) {
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const T b1 = static_cast<T>(hyper.adam_beta1);
  const T b2 = static_cast<T>(hyper.adam_beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(hyper.adam_beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(hyper.adam_beta2, t));
  const T eps = static_cast<T>(hyper.adam_eps);
  const T rate = static_cast<T>(lr);
  for (auto& [_, p] : store) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      p.m[i] = b1 * p.m[i] + (T(1) - b1) * g;
      p.v[i] = b2 * p.v[i] + (T(1) - b2) * g * g;
      const T m_hat = p.m[i] / c1;
      const T v_hat = p.v[i] / c2;
      p.value[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
    p.grad.fill(T(0));
  }
}

// ---------------------------------------------------------------------------
// Central finite-difference gradient check.

/// Loss closure. When `with_grad` is set it must also accumulate analytic
/// gradients into the store (which grad_check zeroes beforehand).
template <typename T>
using LossClosure = std::function<T(ParamStore<T>&, bool with_grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double eps = 1e-6;
  /// Denominator floor: coordinates whose gradients are both below it are
  /// effectively compared in absolute terms.
  double floor = 1e-6;
  NameFilter include = [](std::string_view) { return true; };
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relative error |a - n| / max(|a|, |n|, floor); a sign flip scores 2.
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
GradCheckResult grad_check(const LossClosure<T>& closure, ParamStore<T>& store,
                           const GradCheckOptions& opts = {}) {
  store.zero_grad();
  const T base = closure(store, true);
  if (!std::isfinite(base)) throw NonFiniteLossError("grad_check: non-finite base loss");

  GradCheckResult result;
  const T eps = static_cast<T>(opts.eps);
  for (const auto& name : store.names()) {
    auto& p = store.at(name);
    if (!p.trainable || !opts.include(name)) continue;
    const Tensor<T> analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T saved = p.value[i];
      p.value[i] = saved + eps;
      const T up = closure(store, false);
      p.value[i] = saved - eps;
      const T down = closure(store, false);
      p.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NonFiniteLossError("grad_check: non-finite loss perturbing " + name + "[" +
                                 std::to_string(i) + "]");
      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * opts.eps);
      const double err = relative_error(static_cast<double>(analytic[i]), numeric, opts.floor);
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) {
          result.worst_param = name;
          result.worst_index = i;
          result.analytic = static_cast<double>(analytic[i]);
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace rgcoref
