#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "fatffm/tensor.hpp"

namespace fatffm {

/// Objective value plus a fingerprint of every piecewise-linear branch the
/// evaluation took (ReLU signs, max-pool winners). Two evaluations with the
/// same fingerprint lie on the same smooth piece.
struct GradProbe {
  double value = 0.0;
  std::uint64_t kink_signature = 0;
};

using ProbeFn = std::function<GradProbe(const Tensor<double>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error instead of noise.
  double abs_floor = 1e-5;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  bool passed = true;
  std::string failure;
};

/// Compares analytic against central differences (f(p+h e_i) - f(p-h e_i))/2h
/// for every coordinate of params. A coordinate whose perturbation crosses a
/// kink (signature change) is skipped and counted.
GradCheckReport grad_check(const ProbeFn& f, const Tensor<double>& params,
                           const Tensor<double>& analytic,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double abs_floor);

}  // namespace fatffm
