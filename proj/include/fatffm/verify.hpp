#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fatffm/gradcheck.hpp"
#include "fatffm/model_spec.hpp"

namespace fatffm {

/// One gradient-check configuration: a table model name plus composer
/// options, written "FAT-DeepFFM-H", "FAT-DeepFFM-H/max_pool" or
/// "FAT-DeepFFM-I/per_field".
ModelSpec parse_check_config(const std::string& text, std::size_t fields,
                             std::size_t k);

/// The ten configurations of the standard gradient suite.
std::vector<std::string> default_gradcheck_configs();

struct BlockCheck {
  std::string config;
  std::string block;
  std::size_t size = 0;
  GradCheckReport report;
};

struct GradcheckSetup {
  std::uint64_t seed = 1;
  std::size_t instances = 3;
  std::size_t vocab_per_field = 3;
  GradCheckOptions options;
  /// Test hook: add an offset to this block's analytic gradient.
  std::optional<std::string> corrupt_block;
};

/// Checks every parameter block of spec at 64-bit precision. Parameters are
/// drawn U(-0.8, 0.8), instance values U(0.5, 1.5), and dropout runs in
/// training mode with a fixed mask per instance.
std::vector<BlockCheck> gradcheck_model(const ModelSpec& spec,
                                        const std::string& config_name,
                                        const GradcheckSetup& setup);

}  // namespace fatffm
