#include "fatffm/synth.hpp"

#include <cmath>

#include "fatffm/error.hpp"

namespace fatffm {

Model<float> make_teacher(const std::vector<std::size_t>& field_sizes,
                          std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("synth: k must be >= 1");
  for (const auto size : field_sizes) {
    if (size < 2) throw ConfigError("synth: every vocabulary size must be >= 2");
  }
  ModelSpec spec;
  spec.variant = Variant::kFFM;
  spec.field_sizes = field_sizes;
  spec.k = k;
  ParamSet<float> params = make_param_layout<float>(spec);

  const std::size_t pairs = spec.pairs();
  // First- and second-order terms each get unit variance. Var(<u, v>) is
  // k s^4 for u, v ~ N(0, s^2), so the pair sum has variance k * pairs * s^4.
  const double scale =
      pairs ? std::pow(1.0 / (static_cast<double>(k) * pairs), 0.25) : 0.0;
  const double linear_std =
      1.0 / std::sqrt(static_cast<double>(field_sizes.size()));
  const Rng root(seed, /*stream=*/0x7eac);
  Rng linear_rng = root.fork(0);
  for (auto& w : params.get("linear.weight").values()) {
    w = static_cast<float>(linear_std * linear_rng.normal());
  }
  Rng embed_rng = root.fork(1);
  for (auto& v : params.get("embedding").values()) {
    v = static_cast<float>(scale * embed_rng.normal());
  }
  return Model<float>(spec, std::move(params));
}

std::vector<Instance> sample_instances(const Model<float>& teacher,
                                       std::size_t count, std::uint64_t seed,
                                       std::uint64_t stream,
                                       double label_noise) {
  if (!(label_noise >= 0.0 && label_noise <= 0.5)) {
    throw ConfigError("synth: label noise must lie in [0, 0.5]");
  }
  const auto exact = teacher.cast<double>();
  const auto& sizes = teacher.spec().field_sizes;
  Rng rng = Rng(seed, /*stream=*/0x5a3b).fork(stream);
  Workspace<double> ws;
  std::vector<Instance> rows;
  rows.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    Instance instance;
    instance.features.reserve(sizes.size());
    for (const auto size : sizes) {
      instance.features.push_back(
          {static_cast<std::uint32_t>(rng.below(size)), 1.0});
    }
    const double p = exact.predict(instance, ws);
    int label = rng.bernoulli(p) ? 1 : 0;
    if (label_noise > 0.0 && rng.bernoulli(label_noise)) label = 1 - label;
    instance.label = label;
    rows.push_back(std::move(instance));
  }
  return rows;
}

SynthData synth_generate(const std::vector<std::size_t>& field_sizes,
                         std::size_t k, std::uint64_t seed, std::size_t count,
                         double label_noise) {
  Model<float> teacher = make_teacher(field_sizes, k, seed);
  auto rows = sample_instances(teacher, count, seed, /*stream=*/0, label_noise);
  return {std::move(teacher), std::move(rows)};
}

}  // namespace fatffm
