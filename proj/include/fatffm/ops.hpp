#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "fatffm/error.hpp"
#include "fatffm/rng.hpp"
#include "fatffm/tensor.hpp"

namespace fatffm {

// Dense primitives. The span kernels are what the model uses on its hot
// path; the Tensor-returning wrappers check shapes and are the public API.

/// out = W x (+ bias). W is (rows, cols); bias may be empty.
template <typename T>
void affine_into(const Tensor<T>& weight, std::span<const T> x,
                 std::span<const T> bias, std::span<T> out) {
  const std::size_t rows = weight.dim(0);
  const std::size_t cols = weight.dim(1);
  const T* w = weight.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = bias.empty() ? T{0} : bias[r];
    const T* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

/// Accumulates the affine gradients: grad_w += dout x^T, grad_b += dout,
/// grad_x += W^T dout. Empty grad_b / grad_x spans are skipped.
template <typename T>
void affine_backward(const Tensor<T>& weight, std::span<const T> x,
                     std::span<const T> dout, std::span<T> grad_w,
                     std::span<T> grad_b, std::span<T> grad_x) {
  const std::size_t rows = weight.dim(0);
  const std::size_t cols = weight.dim(1);
  const T* w = weight.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T d = dout[r];
    if (!grad_b.empty()) grad_b[r] += d;
    if (d == T{0}) continue;
    T* gw = grad_w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) gw[c] += d * x[c];
    if (!grad_x.empty()) {
      const T* row = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) grad_x[c] += d * row[c];
    }
  }
}

inline void check_affine_shapes(const Shape& x, const Shape& w,
                                const Shape* b) {
  if (w.size() != 2 || x.size() != 1 || w[1] != x[0]) {
    throw DimensionError("affine: weight " + shape_string(w) +
                         " does not conform with input " + shape_string(x));
  }
  if (b && (b->size() != 1 || (*b)[0] != w[0])) {
    throw DimensionError("affine: bias " + shape_string(*b) +
                         " does not match output width of weight " +
                         shape_string(w));
  }
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight) {
  check_affine_shapes(x.shape(), weight.shape(), nullptr);
  Tensor<T> out({weight.dim(0)});
  affine_into<T>(weight, x.values(), {}, out.values());
  return out;
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  check_affine_shapes(x.shape(), weight.shape(), &bias.shape());
  Tensor<T> out({weight.dim(0)});
  affine_into<T>(weight, x.values(), bias.values(), out.values());
  return out;
}

template <typename T>
T relu(T x) {
  return x > T{0} ? x : T{0};
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = relu(v);
  return out;
}

/// Logistic function, stable for any finite input.
template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// -log(sigmoid(x)) without overflow.
template <typename T>
T softplus_neg(T x) {
  return x >= T{0} ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

/// Binary cross-entropy of a logit against a {0,1} label.
template <typename T>
T logit_loss(T logit, T label) {
  return label * softplus_neg(logit) + (T{1} - label) * softplus_neg(-logit);
}

inline void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
}

/// Fills mask with inverted-dropout multipliers: 0 with probability rate,
/// otherwise 1/(1-rate).
template <typename T>
void dropout_mask(double rate, Rng& rng, std::span<T> mask) {
  check_dropout_rate(rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = rng.uniform() < rate ? T{0} : scale;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) return x;
  Tensor<T> mask(x.shape());
  dropout_mask<T>(rate, rng, mask.values());
  Tensor<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

}  // namespace fatffm
