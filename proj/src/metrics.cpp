#include "fatffm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fatffm/error.hpp"

namespace fatffm {

namespace {

void check_inputs(std::span<const double> preds, std::span<const int> labels,
                  const char* metric) {
  if (preds.size() != labels.size()) {
    throw MetricError(std::string(metric) + ": " +
                      std::to_string(preds.size()) + " predictions vs " +
                      std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw MetricError(std::string(metric) + ": empty input");
}

}  // namespace

double logloss(std::span<const double> preds, std::span<const int> labels) {
  check_inputs(preds, labels, "logloss");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p =
        std::clamp(preds[i], kPredictionClip, 1.0 - kPredictionClip);
    total -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(preds.size());
}

double auc(std::span<const double> preds, std::span<const int> labels) {
  check_inputs(preds, labels, "auc");
  const std::size_t n = preds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a] < preds[b];
  });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && preds[order[end]] == preds[order[start]]) ++end;
    // Ranks start..end-1 (1-based start+1..end) share their average.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (labels[order[i]]) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("auc: undefined without both positive and negative "
                      "labels");
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

nlohmann::json EvalReport::to_json() const {
  return {{"model", model},
          {"split", split},
          {"auc", auc},
          {"logloss", logloss},
          {"count", count}};
}

}  // namespace fatffm
