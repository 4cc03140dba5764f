#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace fatffm {

/// Column layout of a Criteo-style TSV row after the label.
struct FieldSchema {
  std::size_t continuous = 13;
  std::size_t categorical = 26;

  std::size_t fields() const noexcept { return continuous + categorical; }
  static FieldSchema criteo() { return {}; }
};

struct RawInstance {
  int label = 0;
  std::vector<std::optional<double>> continuous;
  std::vector<std::optional<std::string>> categorical;
};

/// The active feature of one field: a field-local index and its value.
struct Feature {
  std::uint32_t index = 0;
  double value = 1.0;

  bool operator==(const Feature&) const = default;
};

/// One labeled example with exactly one active feature per field, stored in
/// field order.
struct Instance {
  int label = 0;
  std::vector<Feature> features;

  std::size_t fields() const noexcept { return features.size(); }
  bool operator==(const Instance&) const = default;
};

RawInstance parse_criteo_line(std::string_view line,
                              const FieldSchema& schema = FieldSchema::criteo(),
                              std::size_t line_number = 0);

/// Parses "label field:index:value ...". With expected_fields set, the
/// fields must be exactly 0..expected_fields-1; otherwise the field count is
/// taken from the line itself.
Instance parse_ffm_line(std::string_view line,
                        std::optional<std::size_t> expected_fields = {},
                        std::size_t line_number = 0);

std::string format_ffm_line(const Instance& instance);

inline constexpr std::uint32_t kDefaultMaxBucket = 40;

/// Log2 binning of a continuous value: absent -> 0, v -> 1 + floor(log2(1+v))
/// capped at max_bucket.
std::uint32_t bucketize_continuous(std::optional<double> value,
                                   std::uint32_t max_bucket = kDefaultMaxBucket);

/// Per-field dictionaries. Index 0 of every field is the shared slot for
/// unknown, missing and rare values. Continuous fields are bucket indices
/// directly, so their size is max_bucket + 1.
class Vocabulary {
 public:
  static Vocabulary build(std::span<const RawInstance> rows,
                          const FieldSchema& schema, std::size_t min_count,
                          std::uint32_t max_bucket = kDefaultMaxBucket);

  std::uint32_t lookup(std::size_t categorical_field,
                       std::string_view token) const;

  std::vector<std::size_t> field_sizes() const;
  const FieldSchema& schema() const noexcept { return schema_; }
  std::uint32_t max_bucket() const noexcept { return max_bucket_; }
  std::size_t min_count() const noexcept { return min_count_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  FieldSchema schema_;
  std::size_t min_count_ = 0;
  std::uint32_t max_bucket_ = kDefaultMaxBucket;
  // tokens_[f][i] owns index i+1 of categorical field f.
  std::vector<std::vector<std::string>> tokens_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> index_;
};

Instance encode(const RawInstance& raw, const Vocabulary& vocab);

/// Reads a libffm file. Empty lines are ignored.
std::vector<Instance> read_ffm_file(
    const std::filesystem::path& path,
    std::optional<std::size_t> expected_fields = {});
void write_ffm_file(const std::filesystem::path& path,
                    std::span<const Instance> rows);

/// Smallest per-field sizes that admit every index in rows.
std::vector<std::size_t> infer_field_sizes(std::span<const Instance> rows);

/// Checks one-feature-per-field and index bounds; throws DataError.
void validate_instances(std::span<const Instance> rows,
                        std::span<const std::size_t> field_sizes);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded random partition; round(ratio * count) rows go to train. Indices
/// keep their original relative order within each side.
Split split_indices(std::size_t count, double ratio, std::uint64_t seed);

struct SplitManifest {
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
};

void write_manifest(const std::filesystem::path& path,
                    const SplitManifest& manifest);
SplitManifest read_manifest(const std::filesystem::path& path);

}  // namespace fatffm
