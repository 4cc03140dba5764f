#include "fatffm/model.hpp"

#include <algorithm>
#include <cmath>

#include "fatffm/error.hpp"
#include "fatffm/ops.hpp"

namespace fatffm {

// ---------------------------------------------------------------------------
// ParamSet

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> value) {
  if (find(name)) throw ConfigError("duplicate parameter block '" + name + "'");
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

template <typename T>
std::optional<std::size_t> ParamSet<T>::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

template <typename T>
Tensor<T>& ParamSet<T>::get(std::string_view name) {
  const auto i = find(name);
  if (!i) throw ConfigError("no parameter block '" + std::string(name) + "'");
  return tensors_[*i];
}

template <typename T>
const Tensor<T>& ParamSet<T>::get(std::string_view name) const {
  const auto i = find(name);
  if (!i) throw ConfigError("no parameter block '" + std::string(name) + "'");
  return tensors_[*i];
}

template <typename T>
void ParamSet<T>::zero() {
  for (auto& t : tensors_) t.fill(T{0});
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.add(names_[i], Tensor<T>(tensors_[i].shape()));
  }
  return out;
}

template <typename T>
std::size_t ParamSet<T>::total_size() const {
  std::size_t total = 0;
  for (const auto& t : tensors_) total += t.size();
  return total;
}

template <typename T>
bool ParamSet<T>::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(),
                     [](const Tensor<T>& t) { return t.all_finite(); });
}

template <typename T>
ParamSet<T> make_param_layout(const ModelSpec& spec) {
  spec.validate();
  const std::size_t n = spec.fields();
  const std::size_t k = spec.k;
  const std::size_t features = spec.total_features();
  ParamSet<T> p;
  p.add("linear.weight", Tensor<T>({features}));
  p.add("linear.bias", Tensor<T>({1}));
  if (spec.variant == Variant::kLR) return p;

  const std::size_t slots = spec.variant == Variant::kFM ? 1 : n;
  p.add("embedding", Tensor<T>({features, slots, k}));
  if (!spec.is_deep()) return p;

  if (spec.variant == Variant::kFatDeepFFM) {
    if (spec.composer == ComposerMode::kConv1x1) {
      const std::size_t kernels =
          spec.composer_sharing == ComposerSharing::kPerSlot ? n : 1;
      p.add("composer.weight", Tensor<T>({n, kernels, k}));
      p.add("composer.bias", Tensor<T>({n, kernels}));
    }
    const std::size_t width = spec.excitation_width();
    p.add("excite.w1", Tensor<T>({width, n * n}));
    p.add("excite.w2", Tensor<T>({n * n, width}));
  }
  const std::size_t pairs = spec.pairs();
  const std::size_t cross = spec.cross_width();
  if (spec.variant == Variant::kMlpDeepFFM) {
    const std::size_t att = spec.attention_width;
    p.add("cross.weight", Tensor<T>({att, cross}));
    p.add("cross.bias", Tensor<T>({att}));
    p.add("cross.h", Tensor<T>({att}));
  }
  if (spec.variant == Variant::kCeDeepFFM) {
    if (spec.interaction == Interaction::kHadamard) {
      p.add("cross.composer.weight", Tensor<T>({pairs, k}));
      p.add("cross.composer.bias", Tensor<T>({pairs}));
    }
    const std::size_t width = spec.cross_excitation_width();
    p.add("cross.excite.w1", Tensor<T>({width, pairs}));
    p.add("cross.excite.w2", Tensor<T>({pairs, width}));
  }
  std::size_t in = spec.interaction_width();
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    p.add("mlp." + std::to_string(l) + ".weight",
          Tensor<T>({spec.hidden[l], in}));
    p.add("mlp." + std::to_string(l) + ".bias", Tensor<T>({spec.hidden[l]}));
    in = spec.hidden[l];
  }
  p.add("output.weight", Tensor<T>({1, in}));
  p.add("output.bias", Tensor<T>({1}));
  return p;
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T>::Model(ModelSpec spec, ParamSet<T> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  const ParamSet<T> layout = make_param_layout<T>(spec_);
  std::vector<std::string> issues;
  if (layout.size() != params_.size()) {
    issues.push_back("expected " + std::to_string(layout.size()) +
                     " parameter blocks for " + spec_.display_name() +
                     ", got " + std::to_string(params_.size()));
  } else {
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (layout.name(i) != params_.name(i) ||
          layout[i].shape() != params_[i].shape()) {
        issues.push_back("block " + std::to_string(i) + ": expected '" +
                         layout.name(i) + "' " +
                         shape_string(layout[i].shape()) + ", got '" +
                         params_.name(i) + "' " +
                         shape_string(params_[i].shape()));
      }
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));

  offsets_ = field_offsets(spec_.field_sizes);
  auto slot = [&](std::string_view name) {
    return params_.find(name).value_or(npos);
  };
  slots_.linear_w = slot("linear.weight");
  slots_.linear_b = slot("linear.bias");
  slots_.embedding = slot("embedding");
  slots_.composer_w = slot("composer.weight");
  slots_.composer_b = slot("composer.bias");
  slots_.excite_w1 = slot("excite.w1");
  slots_.excite_w2 = slot("excite.w2");
  slots_.cross_w = slot("cross.weight");
  slots_.cross_b = slot("cross.bias");
  slots_.cross_h = slot("cross.h");
  slots_.cross_composer_w = slot("cross.composer.weight");
  slots_.cross_composer_b = slot("cross.composer.bias");
  slots_.cross_w1 = slot("cross.excite.w1");
  slots_.cross_w2 = slot("cross.excite.w2");
  for (std::size_t l = 0; l < spec_.hidden.size() && spec_.is_deep(); ++l) {
    slots_.mlp_w.push_back(slot("mlp." + std::to_string(l) + ".weight"));
    slots_.mlp_b.push_back(slot("mlp." + std::to_string(l) + ".bias"));
  }
  slots_.out_w = slot("output.weight");
  slots_.out_b = slot("output.bias");
}

template <typename T>
Model<T> Model<T>::initialize(const ModelSpec& spec, std::uint64_t seed) {
  ParamSet<T> params = make_param_layout<T>(spec);
  const Rng root(seed, /*stream=*/0x1417);
  for (std::size_t b = 0; b < params.size(); ++b) {
    Rng rng = root.fork(b);
    const std::string& name = params.name(b);
    Tensor<T>& t = params[b];
    if (name == "embedding") {
      for (auto& v : t.values()) v = static_cast<T>(0.01 * rng.normal());
      continue;
    }
    if (name.ends_with(".bias") || name == "linear.weight") continue;
    double fan_in = 0, fan_out = 0;
    if (name == "composer.weight" || name == "cross.composer.weight") {
      fan_in = static_cast<double>(spec.k);  // one 1x1 kernel per slot
      fan_out = 1;
    } else if (t.rank() == 1) {
      fan_in = static_cast<double>(t.dim(0));
      fan_out = 1;
    } else {
      fan_out = static_cast<double>(t.dim(0));
      fan_in = static_cast<double>(t.dim(1));
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  }
  return Model(spec, std::move(params));
}

template <typename T>
ComposerView<T> Model<T>::composer_view() const {
  ComposerView<T> view;
  view.mode = spec_.composer;
  if (slots_.composer_w != npos) {
    view.weight = params_[slots_.composer_w].values();
    view.bias = params_[slots_.composer_b].values();
    view.slots = params_[slots_.composer_w].dim(1);
  }
  return view;
}

namespace {

template <typename V>
void ensure_size(V& v, std::size_t size) {
  if (v.size() != size) v.resize(size);
}

template <typename T>
void ensure_fms(FieldMatrixSet<T>& m, std::size_t n, std::size_t k) {
  if (m.n != n || m.k != k) m.resize(n, k);
}

}  // namespace

template <typename T>
T Model<T>::logit(const Instance& instance, Workspace<T>& ws,
                  const ForwardOptions& options, Rng* rng) const {
  const std::size_t n = spec_.fields();
  const std::size_t k = spec_.k;
  if (instance.fields() != n) {
    throw DataError("instance has " + std::to_string(instance.fields()) +
                    " fields, model expects " + std::to_string(n));
  }
  ws.linear = linear_part<T>(instance, params_[slots_.linear_w].values(),
                             params_[slots_.linear_b][0], spec_.field_sizes,
                             offsets_);
  if (spec_.variant == Variant::kLR) return ws.logit = ws.linear;

  ensure_fms(ws.em, n, k);
  gather_into<T>(instance, params_[slots_.embedding], spec_.field_sizes,
                 offsets_, ws.em);

  const std::size_t pairs = spec_.pairs();
  if (!spec_.is_deep()) {
    ensure_size(ws.cross, pairs);
    interact_inner_into<T>(ws.em, ws.cross);
    T second{0};
    for (const T v : ws.cross) second += v;
    return ws.logit = ws.linear + second;
  }

  const FieldMatrixSet<T>* interacting = &ws.em;
  if (spec_.uses_field_attention()) {
    const std::size_t slots = n * n;
    ensure_size(ws.attention, slots);
    ensure_fms(ws.aem, n, k);
    if (options.attention_bypass) {
      std::fill(ws.attention.begin(), ws.attention.end(), T{1});
    } else {
      const std::size_t width = spec_.excitation_width();
      ensure_size(ws.compose_pre, slots);
      ensure_size(ws.argmax, slots);
      ensure_size(ws.descriptor, slots);
      ensure_size(ws.pre1, width);
      ensure_size(ws.hidden, width);
      ensure_size(ws.pre2, slots);
      compose_into<T>(ws.em, composer_view(), ws.compose_pre, ws.argmax,
                      ws.descriptor);
      excite_into<T>(ws.descriptor, params_[slots_.excite_w1],
                     params_[slots_.excite_w2], ws.pre1, ws.hidden, ws.pre2,
                     ws.attention);
    }
    rescale_into<T>(ws.em, ws.attention, ws.aem);
    interacting = &ws.aem;
  }

  const std::size_t width = spec_.interaction_width();
  ensure_size(ws.cross, width);
  if (spec_.interaction == Interaction::kInner) {
    interact_inner_into<T>(*interacting, ws.cross);
  } else {
    interact_hadamard_into<T>(*interacting, ws.cross);
  }

  std::span<const T> mlp_input = ws.cross;
  const std::size_t cross_width = spec_.cross_width();
  if (spec_.variant == Variant::kMlpDeepFFM) {
    ensure_size(ws.cross_out, width);
    cross_attention_mlp_into<T>(ws.cross, cross_width, params_[slots_.cross_w],
                                params_[slots_.cross_b].values(),
                                params_[slots_.cross_h].values(), ws.cross_mlp,
                                ws.cross_out);
    mlp_input = ws.cross_out;
  } else if (spec_.variant == Variant::kCeDeepFFM) {
    ensure_size(ws.cross_out, width);
    std::span<const T> cw, cb;
    if (slots_.cross_composer_w != npos) {
      cw = params_[slots_.cross_composer_w].values();
      cb = params_[slots_.cross_composer_b].values();
    }
    cross_attention_cenet_into<T>(ws.cross, cross_width, cw, cb,
                                  params_[slots_.cross_w1],
                                  params_[slots_.cross_w2],
                                  options.attention_bypass, ws.cross_cenet,
                                  ws.cross_out);
    mlp_input = ws.cross_out;
  }

  const std::size_t layers = spec_.hidden.size();
  ws.mlp_pre.resize(layers);
  ws.mlp_out.resize(layers);
  ws.mlp_mask.resize(layers);
  const bool drop = options.training && spec_.dropout > 0.0;
  if (drop && !rng) {
    throw ConfigError("training-mode forward with dropout needs an rng");
  }
  std::span<const T> x = mlp_input;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t h = spec_.hidden[l];
    ensure_size(ws.mlp_pre[l], h);
    ensure_size(ws.mlp_out[l], h);
    affine_into<T>(params_[slots_.mlp_w[l]], x,
                   params_[slots_.mlp_b[l]].values(), ws.mlp_pre[l]);
    for (std::size_t u = 0; u < h; ++u) ws.mlp_out[l][u] = relu(ws.mlp_pre[l][u]);
    if (drop) {
      ensure_size(ws.mlp_mask[l], h);
      dropout_mask<T>(spec_.dropout, *rng, ws.mlp_mask[l]);
      for (std::size_t u = 0; u < h; ++u) ws.mlp_out[l][u] *= ws.mlp_mask[l][u];
    } else {
      ws.mlp_mask[l].clear();
    }
    x = ws.mlp_out[l];
  }
  const T deep = dot<T>(params_[slots_.out_w].values(), x);
  return ws.logit = ws.linear + deep + params_[slots_.out_b][0];
}

template <typename T>
T Model<T>::predict(const Instance& instance, Workspace<T>& ws,
                    const ForwardOptions& options, Rng* rng) const {
  return sigmoid(logit(instance, ws, options, rng));
}

template <typename T>
T Model<T>::predict(const Instance& instance) const {
  Workspace<T> ws;
  return predict(instance, ws);
}

template <typename T>
T Model<T>::accumulate_gradient(const Instance& instance, Workspace<T>& ws,
                                ParamSet<T>& grads,
                                const ForwardOptions& options, Rng* rng,
                                T scale) const {
  const T z = logit(instance, ws, options, rng);
  const T y = static_cast<T>(instance.label);
  backward(instance, ws, grads, options, scale * (sigmoid(z) - y));
  return logit_loss(z, y);
}

template <typename T>
void Model<T>::backward(const Instance& instance, Workspace<T>& ws,
                        ParamSet<T>& grads, const ForwardOptions& options,
                        T grad_logit) const {
  const std::size_t n = spec_.fields();
  const std::size_t k = spec_.k;
  const T g = grad_logit;

  grads[slots_.linear_b][0] += g;
  auto grad_linear = grads[slots_.linear_w].values();
  for (std::size_t i = 0; i < n; ++i) {
    grad_linear[offsets_[i] + instance.features[i].index] +=
        g * static_cast<T>(instance.features[i].value);
  }
  if (spec_.variant == Variant::kLR) return;

  const std::size_t slots = params_[slots_.embedding].dim(1);
  ensure_fms(ws.grad_em, n, k);
  std::fill(ws.grad_em.data.begin(), ws.grad_em.data.end(), T{0});

  if (!spec_.is_deep()) {
    ws.grad_cross.assign(spec_.pairs(), g);
    interact_inner_backward<T>(ws.em, ws.grad_cross, ws.grad_em);
    gather_backward<T>(instance, offsets_, ws.grad_em, slots,
                       grads[slots_.embedding]);
    return;
  }

  // Output unit and MLP.
  const std::size_t layers = spec_.hidden.size();
  const std::size_t width = spec_.interaction_width();
  const bool attends_cross = spec_.variant == Variant::kMlpDeepFFM ||
                             spec_.variant == Variant::kCeDeepFFM;
  std::span<const T> mlp_input =
      attends_cross ? std::span<const T>(ws.cross_out) : ws.cross;
  {
    const auto& out_w = params_[slots_.out_w];
    std::span<const T> last = layers ? std::span<const T>(ws.mlp_out.back())
                                     : mlp_input;
    axpy<T>(g, last, grads[slots_.out_w].values());
    grads[slots_.out_b][0] += g;
    ws.grad_layer.assign(out_w.size(), T{0});
    axpy<T>(g, out_w.values(), ws.grad_layer);
  }
  for (std::size_t l = layers; l-- > 0;) {
    auto& grad = ws.grad_layer;
    if (!ws.mlp_mask[l].empty()) {
      for (std::size_t u = 0; u < grad.size(); ++u) grad[u] *= ws.mlp_mask[l][u];
    }
    for (std::size_t u = 0; u < grad.size(); ++u) {
      if (!(ws.mlp_pre[l][u] > T{0})) grad[u] = T{0};
    }
    std::span<const T> input =
        l ? std::span<const T>(ws.mlp_out[l - 1]) : mlp_input;
    ws.grad_prev.assign(input.size(), T{0});
    affine_backward<T>(params_[slots_.mlp_w[l]], input,
                       std::span<const T>(grad),
                       grads[slots_.mlp_w[l]].values(),
                       grads[slots_.mlp_b[l]].values(), ws.grad_prev);
    std::swap(ws.grad_layer, ws.grad_prev);
  }

  // ws.grad_layer now holds d(loss)/d(mlp input).
  std::span<const T> grad_cross = ws.grad_layer;
  const std::size_t cross_width = spec_.cross_width();
  if (spec_.variant == Variant::kMlpDeepFFM) {
    ws.grad_cross.assign(width, T{0});
    cross_attention_mlp_backward<T>(
        ws.cross, cross_width, params_[slots_.cross_w],
        params_[slots_.cross_h].values(), ws.cross_mlp, ws.grad_layer,
        ws.cross_scratch, grads[slots_.cross_w].values(),
        grads[slots_.cross_b].values(), grads[slots_.cross_h].values(),
        ws.grad_cross);
    grad_cross = ws.grad_cross;
  } else if (spec_.variant == Variant::kCeDeepFFM) {
    ws.grad_cross.assign(width, T{0});
    std::span<const T> cw;
    std::span<T> gcw, gcb;
    if (slots_.cross_composer_w != npos) {
      cw = params_[slots_.cross_composer_w].values();
      gcw = grads[slots_.cross_composer_w].values();
      gcb = grads[slots_.cross_composer_b].values();
    }
    cross_attention_cenet_backward<T>(
        ws.cross, cross_width, cw, params_[slots_.cross_w1],
        params_[slots_.cross_w2], options.attention_bypass, ws.cross_cenet,
        ws.grad_layer, ws.cross_scratch, gcw, gcb,
        grads[slots_.cross_w1].values(), grads[slots_.cross_w2].values(),
        ws.grad_cross);
    grad_cross = ws.grad_cross;
  }

  // Interaction layer.
  const bool attends_fields = spec_.uses_field_attention();
  FieldMatrixSet<T>& grad_m = attends_fields ? ws.grad_aem : ws.grad_em;
  const FieldMatrixSet<T>& m = attends_fields ? ws.aem : ws.em;
  if (attends_fields) {
    ensure_fms(ws.grad_aem, n, k);
    std::fill(ws.grad_aem.data.begin(), ws.grad_aem.data.end(), T{0});
  }
  if (spec_.interaction == Interaction::kInner) {
    interact_inner_backward<T>(m, grad_cross, grad_m);
  } else {
    interact_hadamard_backward<T>(m, grad_cross, grad_m);
  }

  // Field attention.
  if (attends_fields) {
    ws.grad_attention.assign(n * n, T{0});
    rescale_backward<T>(ws.em, ws.attention, ws.grad_aem, ws.grad_em,
                        ws.grad_attention);
    if (!options.attention_bypass) {
      ws.grad_descriptor.assign(n * n, T{0});
      ws.scratch1.resize(ws.pre1.size());
      ws.scratch2.resize(ws.pre2.size());
      excite_backward<T>(ws.descriptor, params_[slots_.excite_w1],
                         params_[slots_.excite_w2], ws.pre1, ws.hidden,
                         ws.pre2, ws.grad_attention, ws.scratch1, ws.scratch2,
                         grads[slots_.excite_w1].values(),
                         grads[slots_.excite_w2].values(), ws.grad_descriptor);
      std::span<T> gw, gb;
      if (slots_.composer_w != npos) {
        gw = grads[slots_.composer_w].values();
        gb = grads[slots_.composer_b].values();
      }
      compose_backward<T>(ws.em, composer_view(), ws.compose_pre, ws.argmax,
                          ws.grad_descriptor, ws.grad_em, gw, gb);
    }
  }

  gather_backward<T>(instance, offsets_, ws.grad_em, slots,
                     grads[slots_.embedding]);
}

template <typename T>
std::uint64_t Model<T>::kink_signature(const Workspace<T>& ws) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t bit) {
    h ^= bit;
    h *= 0x100000001b3ULL;
  };
  auto signs = [&](const std::vector<T>& values) {
    for (const T v : values) mix(v > T{0} ? 1 : 2);
  };
  if (!spec_.is_deep()) return h;
  if (spec_.uses_field_attention()) {
    if (spec_.composer == ComposerMode::kConv1x1) {
      signs(ws.compose_pre);
    } else {
      for (const auto a : ws.argmax) mix(a + 3);
    }
    signs(ws.pre1);
    signs(ws.pre2);
  }
  if (spec_.variant == Variant::kMlpDeepFFM) signs(ws.cross_mlp.pre);
  if (spec_.variant == Variant::kCeDeepFFM) {
    if (spec_.interaction == Interaction::kHadamard) {
      signs(ws.cross_cenet.compose_pre);
    }
    signs(ws.cross_cenet.pre1);
    signs(ws.cross_cenet.pre2);
  }
  for (const auto& pre : ws.mlp_pre) signs(pre);
  return h;
}

template class ParamSet<float>;
template class ParamSet<double>;
template ParamSet<float> make_param_layout<float>(const ModelSpec&);
template ParamSet<double> make_param_layout<double>(const ModelSpec&);
template class Model<float>;
template class Model<double>;

}  // namespace fatffm
