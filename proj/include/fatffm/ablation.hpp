#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fatffm/data.hpp"
#include "fatffm/metrics.hpp"
#include "fatffm/model_spec.hpp"
#include "fatffm/trainer.hpp"
#include "json.hpp"

namespace fatffm {

/// Default attention-ablation matrix in table order: DeepFFM, MLP-DeepFFM,
/// CE-DeepFFM, FAT-DeepFFM, inner-product group first.
std::vector<std::string> default_ablation_models();

/// Stable reorder into table grouping: models without an interaction suffix,
/// then the -I group, then the -H group, keeping configured order inside
/// each group.
std::vector<ModelSpec> table_order(std::span<const ModelSpec> specs);

struct AblationRow {
  std::string model;
  std::optional<EvalReport> report;  // absent when training failed
  std::size_t best_epoch = 0;
  std::string error;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  /// Aligned plain-text table.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

using AblationSink = std::function<void(const std::string& model,
                                        const MetricRecord& record)>;

/// Trains every spec under the same config and data; reports each model on
/// eval_rows. A failing model yields a row with its error and the matrix
/// continues.
AblationTable run_ablation(std::span<const ModelSpec> specs,
                           const TrainConfig& config,
                           std::span<const Instance> train_rows,
                           std::span<const Instance> valid_rows,
                           std::span<const Instance> eval_rows,
                           const std::string& eval_split,
                           const AblationSink& sink = {});

}  // namespace fatffm
