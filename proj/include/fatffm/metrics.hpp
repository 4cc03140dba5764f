#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "json.hpp"

namespace fatffm {

inline constexpr double kPredictionClip = 1e-7;

/// Mean binary cross-entropy with predictions clipped to
/// [kPredictionClip, 1 - kPredictionClip].
double logloss(std::span<const double> preds, std::span<const int> labels);

/// Area under the ROC curve via the Mann-Whitney statistic on average ranks;
/// tied predictions count one half. Throws MetricError on single-class input.
double auc(std::span<const double> preds, std::span<const int> labels);

struct EvalReport {
  std::string model;
  std::string split;
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t count = 0;

  nlohmann::json to_json() const;
};

}  // namespace fatffm
