#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fatffm/data.hpp"
#include "fatffm/model.hpp"

namespace fatffm {

/// Random FFM teacher. The first-order sum and the second-order sum each have
/// unit variance over uniform instances, regardless of n and k; the bias is
/// zero.
Model<float> make_teacher(const std::vector<std::size_t>& field_sizes,
                          std::size_t k, std::uint64_t seed);

/// Draws count instances with one uniform feature per field (value 1) and
/// labels ~ Bernoulli(teacher probability), then flips each label with
/// probability label_noise. stream separates train and test draws.
std::vector<Instance> sample_instances(const Model<float>& teacher,
                                       std::size_t count, std::uint64_t seed,
                                       std::uint64_t stream,
                                       double label_noise = 0.0);

struct SynthData {
  Model<float> teacher;
  std::vector<Instance> rows;
};

/// Teacher plus count labeled rows; bitwise reproducible for a fixed seed.
SynthData synth_generate(const std::vector<std::size_t>& field_sizes,
                         std::size_t k, std::uint64_t seed, std::size_t count,
                         double label_noise = 0.0);

}  // namespace fatffm
