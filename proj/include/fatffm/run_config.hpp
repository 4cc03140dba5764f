#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fatffm/model_spec.hpp"
#include "fatffm/trainer.hpp"
#include "json.hpp"

namespace fatffm {

inline constexpr int kRunConfigVersion = 1;

struct DataConfig {
  std::filesystem::path train;
  std::optional<std::filesystem::path> valid;
  std::optional<std::filesystem::path> test;
  /// Vocabulary written by `prepare`; supplies field sizes when present.
  std::optional<std::filesystem::path> vocab;
  /// Share of the training file held out for model selection when no
  /// validation file is given.
  double valid_fraction = 0.1;
  /// Explicit per-field vocabulary sizes; inferred from the data if empty.
  std::vector<std::size_t> field_sizes;
};

/// Versioned JSON run configuration shared by `train` and `ablate`.
/// Relative paths resolve against the config file's directory.
struct RunConfig {
  DataConfig data;
  ModelSpec model;  // field_sizes filled in once data is resolved
  TrainConfig train;
  std::filesystem::path output_dir;
  std::vector<std::string> ablation_models;

  /// Parses and validates; every violated field is reported in one
  /// ConfigError.
  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Fully-resolved echo; feeding it back reproduces the run.
  nlohmann::json to_json() const;
};

}  // namespace fatffm
