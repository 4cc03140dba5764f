#include "fatffm/ablation.hpp"

#include <algorithm>
#include <cstdio>

namespace fatffm {

std::vector<std::string> default_ablation_models() {
  return {"DeepFFM-I",    "MLP-DeepFFM-I", "CE-DeepFFM-I", "FAT-DeepFFM-I",
          "DeepFFM-H",    "MLP-DeepFFM-H", "CE-DeepFFM-H", "FAT-DeepFFM-H"};
}

std::vector<ModelSpec> table_order(std::span<const ModelSpec> specs) {
  auto group = [](const ModelSpec& s) {
    if (!s.is_deep()) return 0;
    return s.interaction == Interaction::kInner ? 1 : 2;
  };
  std::vector<ModelSpec> ordered(specs.begin(), specs.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [&](const ModelSpec& a, const ModelSpec& b) {
                     return group(a) < group(b);
                   });
  return ordered;
}

std::string AblationTable::to_text() const {
  std::size_t name_width = 5;
  for (const auto& row : rows) name_width = std::max(name_width, row.model.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %10s  %s\n",
                static_cast<int>(name_width), "Model", "AUC", "Logloss",
                "Instances", "BestEpoch");
  out += line;
  int last_group = -1;
  for (const auto& row : rows) {
    const int group = row.model.ends_with("-I") ? 1
                      : row.model.ends_with("-H") ? 2
                                                  : 0;
    if (group != last_group) {
      out += std::string(name_width + 45, '-') + '\n';
      last_group = group;
    }
    if (row.report) {
      std::snprintf(line, sizeof line, "%-*s  %8.4f  %8.4f  %10zu  %zu\n",
                    static_cast<int>(name_width), row.model.c_str(),
                    row.report->auc, row.report->logloss, row.report->count,
                    row.best_epoch);
    } else {
      std::snprintf(line, sizeof line, "%-*s  FAILED: %s\n",
                    static_cast<int>(name_width), row.model.c_str(),
                    row.error.c_str());
    }
    out += line;
  }
  return out;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = {{"model", row.model}};
    if (row.report) {
      j["split"] = row.report->split;
      j["auc"] = row.report->auc;
      j["logloss"] = row.report->logloss;
      j["count"] = row.report->count;
      j["best_epoch"] = row.best_epoch;
    } else {
      j["error"] = row.error;
    }
    rows_json.push_back(std::move(j));
  }
  return {{"rows", rows_json}};
}

AblationTable run_ablation(std::span<const ModelSpec> specs,
                           const TrainConfig& config,
                           std::span<const Instance> train_rows,
                           std::span<const Instance> valid_rows,
                           std::span<const Instance> eval_rows,
                           const std::string& eval_split,
                           const AblationSink& sink) {
  AblationTable table;
  for (const auto& spec : table_order(specs)) {
    AblationRow row;
    row.model = spec.display_name();
    try {
      MetricSink metric_sink;
      if (sink) {
        metric_sink = [&](const MetricRecord& r) { sink(row.model, r); };
      }
      TrainResult result =
          train(spec, config, train_rows, valid_rows, metric_sink);
      if (result.diverged) {
        row.error = "diverged: " + result.divergence;
      } else {
        row.report = evaluate(result.model, eval_rows, eval_split);
        row.best_epoch = result.best_epoch;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace fatffm
