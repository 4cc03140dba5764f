#pragma once

#include <cmath>
#include <cstdint>

#include "fatffm/error.hpp"
#include "fatffm/tensor.hpp"

namespace fatffm {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamState() = default;
  AdamState(const Shape& shape, AdamHyper hyper)
      : first_moment(shape), second_moment(shape), hyper(hyper) {}

  Tensor<T> first_moment;
  Tensor<T> second_moment;
  std::uint64_t step = 0;
  AdamHyper hyper;
};

/// One bias-corrected Adam update of param in place.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state) {
  if (param.shape() != grad.shape() ||
      param.shape() != state.first_moment.shape() ||
      param.shape() != state.second_moment.shape()) {
    throw DimensionError("adam_step: param " + shape_string(param.shape()) +
                         ", grad " + shape_string(grad.shape()) +
                         ", moments " +
                         shape_string(state.first_moment.shape()));
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
  const T lr = static_cast<T>(h.learning_rate);
  const T eps = static_cast<T>(h.epsilon);

  T* p = param.data();
  const T* g = grad.data();
  T* m = state.first_moment.data();
  T* v = state.second_moment.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (T{1} - b1) * g[i];
    v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
    const T m_hat = m[i] / correction1;
    const T v_hat = v[i] / correction2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace fatffm
