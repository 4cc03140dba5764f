#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fatffm/data.hpp"
#include "fatffm/metrics.hpp"
#include "fatffm/model.hpp"
#include "json.hpp"

namespace fatffm {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 1000;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  /// Evaluate every this many epochs (the last epoch is always evaluated).
  std::size_t eval_every = 1;
  /// Stop after this many evaluations without a validation improvement.
  std::optional<std::size_t> patience;
  /// Also report metrics on the training split at each evaluation.
  bool eval_train = true;
  /// Gradient workers per batch. Results are reproducible for a fixed count.
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One line of the metric log.
struct MetricRecord {
  std::size_t epoch = 0;
  EvalReport report;

  nlohmann::json to_json() const;
};

using MetricSink = std::function<void(const MetricRecord&)>;

struct TrainResult {
  Model<float> model;  // parameters at the best validation logloss
  std::vector<MetricRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_logloss = 0.0;
  bool diverged = false;
  std::string divergence;
};

std::vector<double> predict_all(const Model<float>& model,
                                std::span<const Instance> rows);

/// Inference-mode AUC and logloss over rows.
EvalReport evaluate(const Model<float>& model, std::span<const Instance> rows,
                    const std::string& split);

/// Mini-batch Adam on mean logloss. Each epoch reshuffles with a stream
/// derived from (seed, epoch); dropout masks derive from (seed, epoch,
/// position), so runs are bitwise reproducible. The last short batch is
/// kept. On a non-finite loss or gradient, training stops and the best
/// parameters seen so far are returned with diverged set.
TrainResult train(const ModelSpec& spec, const TrainConfig& config,
                  std::span<const Instance> train_rows,
                  std::span<const Instance> valid_rows,
                  const MetricSink& sink = {});

}  // namespace fatffm
