#include "fatffm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fatffm/error.hpp"

namespace fatffm {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const ProbeFn& f, const Tensor<double>& params,
                           const Tensor<double>& analytic,
                           const GradCheckOptions& options) {
  if (params.shape() != analytic.shape()) {
    throw DimensionError("grad_check: params " + shape_string(params.shape()) +
                         " vs analytic gradient " +
                         shape_string(analytic.shape()));
  }
  GradCheckReport report;
  const GradProbe center = f(params);
  if (!std::isfinite(center.value)) {
    report.passed = false;
    report.failure = "non-finite objective at the unperturbed point";
    return report;
  }

  Tensor<double> probe = params;
  const double h = options.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const GradProbe plus = f(probe);
    probe[i] = original - h;
    const GradProbe minus = f(probe);
    probe[i] = original;

    if (!std::isfinite(plus.value) || !std::isfinite(minus.value) ||
        !std::isfinite(analytic[i])) {
      report.passed = false;
      report.worst_index = i;
      report.failure = "non-finite value at coordinate " + std::to_string(i);
      return report;
    }
    if (plus.kink_signature != center.kink_signature ||
        minus.kink_signature != center.kink_signature) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric, options.abs_floor);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  if (!report.passed) {
    report.failure = "relative error " + std::to_string(report.max_rel_error) +
                     " at coordinate " + std::to_string(report.worst_index);
  }
  return report;
}

}  // namespace fatffm
