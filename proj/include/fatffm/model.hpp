#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fatffm/data.hpp"
#include "fatffm/layers.hpp"
#include "fatffm/model_spec.hpp"
#include "fatffm/rng.hpp"
#include "fatffm/tensor.hpp"

namespace fatffm {

/// Ordered, named parameter blocks. Order is part of the checkpoint format.
template <typename T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  Tensor<T>& get(std::string_view name);
  const Tensor<T>& get(std::string_view name) const;

  void zero();
  ParamSet zeros_like() const;
  std::size_t total_size() const;
  bool all_finite() const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) {
      out.add(names_[i], tensors_[i].template cast<U>());
    }
    return out;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
};

/// The zero-valued parameter layout a spec requires.
template <typename T>
ParamSet<T> make_param_layout(const ModelSpec& spec);

struct ForwardOptions {
  bool training = false;
  /// Forces every attention value to 1 (field attention and CENet cross
  /// attention), reducing the model to plain DeepFFM.
  bool attention_bypass = false;
};

/// Per-instance activations kept for the backward pass. One per thread.
template <typename T>
struct Workspace {
  FieldMatrixSet<T> em, aem, grad_em, grad_aem;
  std::vector<T> compose_pre, descriptor, pre1, hidden, pre2, attention;
  std::vector<std::uint32_t> argmax;
  std::vector<T> grad_descriptor, grad_attention, scratch1, scratch2;
  std::vector<T> cross, cross_out, grad_cross, grad_cross_out;
  CrossMlpWork<T> cross_mlp;
  CrossCenetWork<T> cross_cenet;
  std::vector<T> cross_scratch;
  // layer l: pre-activation, post-dropout output, dropout multipliers.
  std::vector<std::vector<T>> mlp_pre, mlp_out, mlp_mask;
  std::vector<T> grad_layer, grad_prev;
  T linear = T{0};
  T logit = T{0};
};

/// A model variant with its parameters. Forward and backward are const and
/// touch only the caller's Workspace, so threads may share one Model.
template <typename T>
class Model {
 public:
  /// Throws ConfigError if params do not match the spec's layout.
  Model(ModelSpec spec, ParamSet<T> params);

  /// Seeded initialization: embeddings ~ N(0, 0.01^2), weight matrices
  /// Glorot-uniform, biases and first-order weights zero.
  static Model initialize(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  ParamSet<T>& params() noexcept { return params_; }
  std::span<const std::size_t> offsets() const noexcept { return offsets_; }

  /// Pre-sigmoid score. rng is required only when training with dropout.
  T logit(const Instance& instance, Workspace<T>& ws,
          const ForwardOptions& options = {}, Rng* rng = nullptr) const;

  T predict(const Instance& instance, Workspace<T>& ws,
            const ForwardOptions& options = {}, Rng* rng = nullptr) const;
  T predict(const Instance& instance) const;

  /// Forward + backward on one instance. Adds scale * d(logloss)/d(params)
  /// to grads and returns the unscaled logloss.
  T accumulate_gradient(const Instance& instance, Workspace<T>& ws,
                        ParamSet<T>& grads, const ForwardOptions& options = {},
                        Rng* rng = nullptr, T scale = T{1}) const;

  /// Fingerprint of every ReLU sign and max-pool winner in the last forward
  /// pass held by ws.
  std::uint64_t kink_signature(const Workspace<T>& ws) const;

  template <typename U>
  Model<U> cast() const {
    return Model<U>(spec_, params_.template cast<U>());
  }

 private:
  void backward(const Instance& instance, Workspace<T>& ws, ParamSet<T>& grads,
                const ForwardOptions& options, T grad_logit) const;
  ComposerView<T> composer_view() const;

  ModelSpec spec_;
  ParamSet<T> params_;
  std::vector<std::size_t> offsets_;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  struct Slots {
    std::size_t linear_w = npos, linear_b = npos, embedding = npos;
    std::size_t composer_w = npos, composer_b = npos;
    std::size_t excite_w1 = npos, excite_w2 = npos;
    std::size_t cross_w = npos, cross_b = npos, cross_h = npos;
    std::size_t cross_composer_w = npos, cross_composer_b = npos;
    std::size_t cross_w1 = npos, cross_w2 = npos;
    std::vector<std::size_t> mlp_w, mlp_b;
    std::size_t out_w = npos, out_b = npos;
  } slots_;
};

extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace fatffm
