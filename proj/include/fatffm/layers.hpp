#pragma once

// Forward and backward kernels for every layer of the FFM family. All
// kernels write into caller-owned buffers; backward kernels accumulate
// (+=) into gradient buffers so contributions from several paths add up.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fatffm/data.hpp"
#include "fatffm/error.hpp"
#include "fatffm/ops.hpp"
#include "fatffm/tensor.hpp"

namespace fatffm {

/// The n per-field embedding matrices EM_i of one instance. Column j of
/// EM_i (the k-vector field i uses against field j) is contiguous at
/// offset (i*n + j)*k.
template <typename T>
struct FieldMatrixSet {
  FieldMatrixSet() = default;
  FieldMatrixSet(std::size_t fields, std::size_t dim)
      : n(fields), k(dim), data(fields * fields * dim, T{0}) {}

  void resize(std::size_t fields, std::size_t dim) {
    n = fields;
    k = dim;
    data.assign(fields * fields * dim, T{0});
  }

  std::span<T> column(std::size_t i, std::size_t j) {
    return {data.data() + (i * n + j) * k, k};
  }
  std::span<const T> column(std::size_t i, std::size_t j) const {
    return {data.data() + (i * n + j) * k, k};
  }

  Shape shape() const { return {n, k, n}; }
  bool operator==(const FieldMatrixSet&) const = default;

  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<T> data;
};

inline std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc{0};
  for (std::size_t t = 0; t < a.size(); ++t) acc += a[t] * b[t];
  return acc;
}

template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  for (std::size_t t = 0; t < x.size(); ++t) y[t] += alpha * x[t];
}

// ---------------------------------------------------------------------------
// Embedding gather

/// Row offset of each field's first feature in the global feature table.
inline std::vector<std::size_t> field_offsets(
    std::span<const std::size_t> field_sizes) {
  std::vector<std::size_t> offsets(field_sizes.size());
  std::size_t acc = 0;
  for (std::size_t f = 0; f < field_sizes.size(); ++f) {
    offsets[f] = acc;
    acc += field_sizes[f];
  }
  return offsets;
}

/// Global table row of field i's active feature; throws on a corrupt index.
inline std::size_t feature_row(const Instance& instance, std::size_t field,
                               std::span<const std::size_t> field_sizes,
                               std::span<const std::size_t> offsets) {
  const auto index = instance.features[field].index;
  if (index >= field_sizes[field]) {
    throw DataError("field " + std::to_string(field) + " index " +
                    std::to_string(index) + " out of range for size " +
                    std::to_string(field_sizes[field]));
  }
  return offsets[field] + index;
}

/// EM_i column j = value_i * table[row_i, j]. The table is (features, slots,
/// k); with one slot (FM) the same vector fills every column.
template <typename T>
void gather_into(const Instance& instance, const Tensor<T>& table,
                 std::span<const std::size_t> field_sizes,
                 std::span<const std::size_t> offsets, FieldMatrixSet<T>& em) {
  const std::size_t n = em.n;
  const std::size_t k = em.k;
  if (instance.fields() != n || table.rank() != 3 || table.dim(2) != k) {
    throw DimensionError("gather: instance with " +
                         std::to_string(instance.fields()) +
                         " fields against table " +
                         shape_string(table.shape()));
  }
  const std::size_t slots = table.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = feature_row(instance, i, field_sizes, offsets);
    const T value = static_cast<T>(instance.features[i].value);
    for (std::size_t j = 0; j < n; ++j) {
      const T* src = table.data() + (row * slots + (slots == 1 ? 0 : j)) * k;
      auto dst = em.column(i, j);
      for (std::size_t t = 0; t < k; ++t) dst[t] = value * src[t];
    }
  }
}

template <typename T>
void gather_backward(const Instance& instance,
                     std::span<const std::size_t> offsets,
                     const FieldMatrixSet<T>& grad_em, std::size_t slots,
                     Tensor<T>& grad_table) {
  const std::size_t n = grad_em.n;
  const std::size_t k = grad_em.k;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = offsets[i] + instance.features[i].index;
    const T value = static_cast<T>(instance.features[i].value);
    for (std::size_t j = 0; j < n; ++j) {
      T* dst = grad_table.data() + (row * slots + (slots == 1 ? 0 : j)) * k;
      const auto src = grad_em.column(i, j);
      for (std::size_t t = 0; t < k; ++t) dst[t] += value * src[t];
    }
  }
}

// ---------------------------------------------------------------------------
// Compose: one scalar descriptor per embedding vector

enum class ComposerMode { kConv1x1, kGlobalMaxPool };

/// Composer parameters. weight is (n, slots, k) and bias (n, slots), where
/// slots is n for a kernel per (field, target-field) or 1 for a kernel
/// shared across a field's target fields. Empty in max-pool mode.
template <typename T>
struct ComposerView {
  ComposerMode mode = ComposerMode::kConv1x1;
  std::span<const T> weight;
  std::span<const T> bias;
  std::size_t slots = 0;
};

/// D[i*n+j] = ReLU(U_ij . v_ij + c_ij) (conv) or max_t v_ij^t (max pool).
/// pre receives conv pre-activations; argmax receives max-pool winners.
template <typename T>
void compose_into(const FieldMatrixSet<T>& em, const ComposerView<T>& p,
                  std::span<T> pre, std::span<std::uint32_t> argmax,
                  std::span<T> descriptor) {
  const std::size_t n = em.n;
  const std::size_t k = em.k;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t slot = i * n + j;
      const auto v = em.column(i, j);
      if (p.mode == ComposerMode::kConv1x1) {
        const std::size_t s = i * p.slots + (p.slots == 1 ? 0 : j);
        const T z = dot<T>(p.weight.subspan(s * k, k), v) + p.bias[s];
        pre[slot] = z;
        descriptor[slot] = relu(z);
      } else {
        std::uint32_t best = 0;
        for (std::size_t t = 1; t < k; ++t) {
          if (v[t] > v[best]) best = static_cast<std::uint32_t>(t);
        }
        argmax[slot] = best;
        descriptor[slot] = v[best];
      }
    }
  }
}

template <typename T>
void compose_backward(const FieldMatrixSet<T>& em, const ComposerView<T>& p,
                      std::span<const T> pre,
                      std::span<const std::uint32_t> argmax,
                      std::span<const T> grad_descriptor,
                      FieldMatrixSet<T>& grad_em, std::span<T> grad_weight,
                      std::span<T> grad_bias) {
  const std::size_t n = em.n;
  const std::size_t k = em.k;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t slot = i * n + j;
      const T g = grad_descriptor[slot];
      if (p.mode == ComposerMode::kConv1x1) {
        if (!(pre[slot] > T{0}) || g == T{0}) continue;
        const std::size_t s = i * p.slots + (p.slots == 1 ? 0 : j);
        axpy<T>(g, em.column(i, j), grad_weight.subspan(s * k, k));
        grad_bias[s] += g;
        axpy<T>(g, p.weight.subspan(s * k, k), grad_em.column(i, j));
      } else {
        grad_em.column(i, j)[argmax[slot]] += g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Excitation: S = ReLU(W2 ReLU(W1 D)), no biases

template <typename T>
void excite_into(std::span<const T> descriptor, const Tensor<T>& w1,
                 const Tensor<T>& w2, std::span<T> pre1, std::span<T> hidden,
                 std::span<T> pre2, std::span<T> attention) {
  affine_into<T>(w1, descriptor, {}, pre1);
  for (std::size_t h = 0; h < pre1.size(); ++h) hidden[h] = relu(pre1[h]);
  affine_into<T>(w2, std::span<const T>(hidden), {}, pre2);
  for (std::size_t s = 0; s < pre2.size(); ++s) attention[s] = relu(pre2[s]);
}

template <typename T>
void excite_backward(std::span<const T> descriptor, const Tensor<T>& w1,
                     const Tensor<T>& w2, std::span<const T> pre1,
                     std::span<const T> hidden, std::span<const T> pre2,
                     std::span<const T> grad_attention, std::span<T> scratch1,
                     std::span<T> scratch2, std::span<T> grad_w1,
                     std::span<T> grad_w2, std::span<T> grad_descriptor) {
  // scratch2 (size |S|): gradient at pre2; scratch1 (size |hidden|): at pre1.
  for (std::size_t s = 0; s < pre2.size(); ++s) {
    scratch2[s] = pre2[s] > T{0} ? grad_attention[s] : T{0};
  }
  std::fill(scratch1.begin(), scratch1.end(), T{0});
  affine_backward<T>(w2, hidden, std::span<const T>(scratch2), grad_w2, {},
                     scratch1);
  for (std::size_t h = 0; h < pre1.size(); ++h) {
    if (!(pre1[h] > T{0})) scratch1[h] = T{0};
  }
  affine_backward<T>(w1, descriptor, std::span<const T>(scratch1), grad_w1, {},
                     grad_descriptor);
}

// ---------------------------------------------------------------------------
// Rescale: AEM_i column j = S[i*n+j] * v_ij

template <typename T>
void rescale_into(const FieldMatrixSet<T>& em, std::span<const T> attention,
                  FieldMatrixSet<T>& out) {
  const std::size_t k = em.k;
  for (std::size_t slot = 0; slot < em.n * em.n; ++slot) {
    const T s = attention[slot];
    const T* src = em.data.data() + slot * k;
    T* dst = out.data.data() + slot * k;
    for (std::size_t t = 0; t < k; ++t) dst[t] = s * src[t];
  }
}

template <typename T>
void rescale_backward(const FieldMatrixSet<T>& em,
                      std::span<const T> attention,
                      const FieldMatrixSet<T>& grad_out,
                      FieldMatrixSet<T>& grad_em,
                      std::span<T> grad_attention) {
  const std::size_t k = em.k;
  for (std::size_t slot = 0; slot < em.n * em.n; ++slot) {
    const T* g = grad_out.data.data() + slot * k;
    const T* v = em.data.data() + slot * k;
    T* ge = grad_em.data.data() + slot * k;
    T gs{0};
    for (std::size_t t = 0; t < k; ++t) {
      gs += g[t] * v[t];
      ge[t] += attention[slot] * g[t];
    }
    grad_attention[slot] += gs;
  }
}

// ---------------------------------------------------------------------------
// Pairwise interaction, pairs (i, j) with i < j in lexicographic order

template <typename T>
void interact_inner_into(const FieldMatrixSet<T>& m, std::span<T> out) {
  std::size_t p = 0;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      out[p++] = dot<T>(m.column(i, j), m.column(j, i));
    }
  }
}

template <typename T>
void interact_inner_backward(const FieldMatrixSet<T>& m,
                             std::span<const T> grad_out,
                             FieldMatrixSet<T>& grad_m) {
  std::size_t p = 0;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      const T g = grad_out[p++];
      axpy<T>(g, m.column(j, i), grad_m.column(i, j));
      axpy<T>(g, m.column(i, j), grad_m.column(j, i));
    }
  }
}

template <typename T>
void interact_hadamard_into(const FieldMatrixSet<T>& m, std::span<T> out) {
  const std::size_t k = m.k;
  std::size_t p = 0;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      const auto a = m.column(i, j);
      const auto b = m.column(j, i);
      T* dst = out.data() + p * k;
      for (std::size_t t = 0; t < k; ++t) dst[t] = a[t] * b[t];
      ++p;
    }
  }
}

template <typename T>
void interact_hadamard_backward(const FieldMatrixSet<T>& m,
                                std::span<const T> grad_out,
                                FieldMatrixSet<T>& grad_m) {
  const std::size_t k = m.k;
  std::size_t p = 0;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      const auto a = m.column(i, j);
      const auto b = m.column(j, i);
      auto ga = grad_m.column(i, j);
      auto gb = grad_m.column(j, i);
      const T* g = grad_out.data() + p * k;
      for (std::size_t t = 0; t < k; ++t) {
        ga[t] += g[t] * b[t];
        gb[t] += g[t] * a[t];
      }
      ++p;
    }
  }
}

// ---------------------------------------------------------------------------
// First-order part and output unit

template <typename T>
T linear_part(const Instance& instance, std::span<const T> weights, T bias,
              std::span<const std::size_t> field_sizes,
              std::span<const std::size_t> offsets) {
  T acc = bias;
  for (std::size_t i = 0; i < instance.fields(); ++i) {
    acc += static_cast<T>(instance.features[i].value) *
           weights[feature_row(instance, i, field_sizes, offsets)];
  }
  return acc;
}

/// sigmoid(linear + W_out x + b_out); W_out is (1, |x|).
template <typename T>
T output_unit(T linear, std::span<const T> hidden, const Tensor<T>& w_out,
              T b_out) {
  return sigmoid(linear + dot<T>(w_out.values(), hidden) + b_out);
}

// ---------------------------------------------------------------------------
// Attention over cross features (after the interaction layer)

/// AFM-style attention. Cross feature c_p has width `width` (1 or k).
/// e_p = h . ReLU(W c_p + b), a = softmax(e), out_p = a_p c_p.
template <typename T>
struct CrossMlpWork {
  std::vector<T> pre;     // (pairs, attention width)
  std::vector<T> score;   // e_p
  std::vector<T> weight;  // a_p
};

template <typename T>
void cross_attention_mlp_into(std::span<const T> cross, std::size_t width,
                              const Tensor<T>& w, std::span<const T> b,
                              std::span<const T> h, CrossMlpWork<T>& work,
                              std::span<T> out) {
  const std::size_t pairs = cross.size() / width;
  const std::size_t att = w.dim(0);
  work.pre.resize(pairs * att);
  work.score.resize(pairs);
  work.weight.resize(pairs);
  T max_score = -std::numeric_limits<T>::infinity();
  for (std::size_t p = 0; p < pairs; ++p) {
    auto pre = std::span<T>(work.pre).subspan(p * att, att);
    affine_into<T>(w, cross.subspan(p * width, width), b, pre);
    T e{0};
    for (std::size_t a = 0; a < att; ++a) e += h[a] * relu(pre[a]);
    work.score[p] = e;
    max_score = std::max(max_score, e);
  }
  T total{0};
  for (std::size_t p = 0; p < pairs; ++p) {
    work.weight[p] = std::exp(work.score[p] - max_score);
    total += work.weight[p];
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    work.weight[p] /= total;
    for (std::size_t t = 0; t < width; ++t) {
      out[p * width + t] = work.weight[p] * cross[p * width + t];
    }
  }
}

template <typename T>
void cross_attention_mlp_backward(std::span<const T> cross, std::size_t width,
                                  const Tensor<T>& w, std::span<const T> h,
                                  const CrossMlpWork<T>& work,
                                  std::span<const T> grad_out,
                                  std::vector<T>& scratch, std::span<T> grad_w,
                                  std::span<T> grad_b, std::span<T> grad_h,
                                  std::span<T> grad_cross) {
  const std::size_t pairs = cross.size() / width;
  const std::size_t att = w.dim(0);
  // scratch: [d a_p for every pair | gradient at one pair's pre-activation]
  scratch.assign(pairs + att, T{0});
  T weighted{0};
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto c = cross.subspan(p * width, width);
    const auto g = grad_out.subspan(p * width, width);
    scratch[p] = dot<T>(g, c);
    weighted += work.weight[p] * scratch[p];
    axpy<T>(work.weight[p], g, grad_cross.subspan(p * width, width));
  }
  auto dpre = std::span<T>(scratch).subspan(pairs, att);
  for (std::size_t p = 0; p < pairs; ++p) {
    const T de = work.weight[p] * (scratch[p] - weighted);
    if (de == T{0}) continue;
    const auto pre =
        std::span<const T>(work.pre).subspan(p * att, att);
    for (std::size_t a = 0; a < att; ++a) {
      grad_h[a] += de * relu(pre[a]);
      dpre[a] = pre[a] > T{0} ? de * h[a] : T{0};
    }
    affine_backward<T>(w, cross.subspan(p * width, width),
                       std::span<const T>(dpre), grad_w, grad_b,
                       grad_cross.subspan(p * width, width));
  }
}

/// CENet-style attention over cross features: compose each pair to a
/// descriptor (ReLU(u_p . c_p + beta_p) for vector crosses, the scalar
/// itself for inner-product crosses), excite, and rescale without softmax.
template <typename T>
struct CrossCenetWork {
  std::vector<T> compose_pre;
  std::vector<T> descriptor;
  std::vector<T> pre1, hidden, pre2, attention;
};

template <typename T>
void cross_attention_cenet_into(std::span<const T> cross, std::size_t width,
                                std::span<const T> composer_w,
                                std::span<const T> composer_b,
                                const Tensor<T>& w1, const Tensor<T>& w2,
                                bool bypass, CrossCenetWork<T>& work,
                                std::span<T> out) {
  const std::size_t pairs = cross.size() / width;
  work.compose_pre.resize(pairs);
  work.descriptor.resize(pairs);
  work.pre1.resize(w1.dim(0));
  work.hidden.resize(w1.dim(0));
  work.pre2.resize(pairs);
  work.attention.resize(pairs);
  if (bypass) {
    std::fill(work.attention.begin(), work.attention.end(), T{1});
  } else {
    for (std::size_t p = 0; p < pairs; ++p) {
      if (width == 1) {
        work.compose_pre[p] = cross[p];
        work.descriptor[p] = cross[p];
      } else {
        const T z = dot<T>(composer_w.subspan(p * width, width),
                           cross.subspan(p * width, width)) +
                    composer_b[p];
        work.compose_pre[p] = z;
        work.descriptor[p] = relu(z);
      }
    }
    excite_into<T>(work.descriptor, w1, w2, work.pre1, work.hidden, work.pre2,
                   work.attention);
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    for (std::size_t t = 0; t < width; ++t) {
      out[p * width + t] = work.attention[p] * cross[p * width + t];
    }
  }
}

template <typename T>
void cross_attention_cenet_backward(
    std::span<const T> cross, std::size_t width, std::span<const T> composer_w,
    const Tensor<T>& w1, const Tensor<T>& w2, bool bypass,
    const CrossCenetWork<T>& work, std::span<const T> grad_out,
    std::vector<T>& scratch, std::span<T> grad_composer_w,
    std::span<T> grad_composer_b, std::span<T> grad_w1, std::span<T> grad_w2,
    std::span<T> grad_cross) {
  const std::size_t pairs = cross.size() / width;
  const std::size_t hidden = w1.dim(0);
  // scratch: [dS (pairs) | dD (pairs) | pre2 grad (pairs) | pre1 grad]
  scratch.assign(3 * pairs + hidden, T{0});
  auto grad_att = std::span<T>(scratch).subspan(0, pairs);
  auto grad_desc = std::span<T>(scratch).subspan(pairs, pairs);
  auto s2 = std::span<T>(scratch).subspan(2 * pairs, pairs);
  auto s1 = std::span<T>(scratch).subspan(3 * pairs, hidden);
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto g = grad_out.subspan(p * width, width);
    grad_att[p] = dot<T>(g, cross.subspan(p * width, width));
    axpy<T>(work.attention[p], g, grad_cross.subspan(p * width, width));
  }
  if (bypass) return;
  excite_backward<T>(work.descriptor, w1, w2, work.pre1, work.hidden,
                     work.pre2, std::span<const T>(grad_att), s1, s2, grad_w1,
                     grad_w2, grad_desc);
  for (std::size_t p = 0; p < pairs; ++p) {
    const T g = grad_desc[p];
    if (width == 1) {
      grad_cross[p] += g;
    } else if (work.compose_pre[p] > T{0} && g != T{0}) {
      axpy<T>(g, cross.subspan(p * width, width),
              grad_composer_w.subspan(p * width, width));
      grad_composer_b[p] += g;
      axpy<T>(g, composer_w.subspan(p * width, width),
              grad_cross.subspan(p * width, width));
    }
  }
}

}  // namespace fatffm
