#include "fatffm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fatffm/error.hpp"
#include "fatffm/rng.hpp"

namespace fatffm {

namespace {

std::vector<std::string_view> split_on(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename Number>
std::optional<Number> parse_number(std::string_view text) {
  Number value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

int parse_label(std::string_view text, std::size_t line_number) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw ParseError("label must be 0 or 1, got '" + std::string(text) + "'",
                   line_number);
}

}  // namespace

RawInstance parse_criteo_line(std::string_view line, const FieldSchema& schema,
                              std::size_t line_number) {
  const auto columns = split_on(strip_cr(line), '\t');
  const std::size_t expected = 1 + schema.fields();
  if (columns.size() != expected) {
    throw ParseError("expected " + std::to_string(expected) +
                         " tab-separated columns, got " +
                         std::to_string(columns.size()),
                     line_number);
  }
  RawInstance raw;
  raw.label = parse_label(columns[0], line_number);
  raw.continuous.reserve(schema.continuous);
  for (std::size_t i = 0; i < schema.continuous; ++i) {
    const auto cell = columns[1 + i];
    if (cell.empty()) {
      raw.continuous.emplace_back();
      continue;
    }
    const auto value = parse_number<double>(cell);
    if (!value || !std::isfinite(*value)) {
      throw ParseError("continuous column " + std::to_string(i + 1) +
                           " is not numeric: '" + std::string(cell) + "'",
                       line_number);
    }
    raw.continuous.emplace_back(*value);
  }
  raw.categorical.reserve(schema.categorical);
  for (std::size_t i = 0; i < schema.categorical; ++i) {
    const auto cell = columns[1 + schema.continuous + i];
    if (cell.empty()) {
      raw.categorical.emplace_back();
    } else {
      raw.categorical.emplace_back(std::string(cell));
    }
  }
  return raw;
}

Instance parse_ffm_line(std::string_view line,
                        std::optional<std::size_t> expected_fields,
                        std::size_t line_number) {
  line = strip_cr(line);
  std::vector<std::string_view> tokens;
  for (auto tok : split_on(line, ' ')) {
    if (!tok.empty()) tokens.push_back(tok);
  }
  if (tokens.empty()) throw ParseError("empty line", line_number);

  Instance instance;
  instance.label = parse_label(tokens[0], line_number);

  std::map<std::size_t, Feature> by_field;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const auto parts = split_on(tokens[t], ':');
    const auto field =
        parts.size() == 3 ? parse_number<std::size_t>(parts[0]) : std::nullopt;
    const auto index = parts.size() == 3
                           ? parse_number<std::uint32_t>(parts[1])
                           : std::nullopt;
    const auto value =
        parts.size() == 3 ? parse_number<double>(parts[2]) : std::nullopt;
    if (!field || !index || !value || !std::isfinite(*value)) {
      throw ParseError("malformed field:index:value triple '" +
                           std::string(tokens[t]) + "'",
                       line_number);
    }
    if (!by_field.emplace(*field, Feature{*index, *value}).second) {
      throw ParseError("duplicate field " + std::to_string(*field),
                       line_number);
    }
  }

  const std::size_t fields =
      expected_fields.value_or(by_field.empty() ? 0 : by_field.rbegin()->first + 1);
  if (by_field.size() != fields ||
      (!by_field.empty() && by_field.rbegin()->first + 1 != fields)) {
    throw ParseError("expected exactly one feature for each of " +
                         std::to_string(fields) + " fields, got " +
                         std::to_string(by_field.size()) + " entries",
                     line_number);
  }
  instance.features.reserve(fields);
  for (const auto& [field, feature] : by_field) {
    instance.features.push_back(feature);
  }
  return instance;
}

std::string format_ffm_line(const Instance& instance) {
  std::string out = std::to_string(instance.label);
  char buf[64];
  for (std::size_t f = 0; f < instance.features.size(); ++f) {
    const auto& feature = instance.features[f];
    out += ' ';
    out += std::to_string(f);
    out += ':';
    out += std::to_string(feature.index);
    out += ':';
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, feature.value);
    out.append(buf, ptr);
  }
  return out;
}

std::uint32_t bucketize_continuous(std::optional<double> value,
                                   std::uint32_t max_bucket) {
  if (!value) return 0;
  if (!(*value >= 0.0)) {
    throw DataError("continuous value must be non-negative, got " +
                    std::to_string(*value));
  }
  const double bucket = 1.0 + std::floor(std::log2(1.0 + *value));
  return bucket >= max_bucket ? max_bucket
                              : static_cast<std::uint32_t>(bucket);
}

Vocabulary Vocabulary::build(std::span<const RawInstance> rows,
                             const FieldSchema& schema, std::size_t min_count,
                             std::uint32_t max_bucket) {
  if (rows.empty()) {
    throw ConfigError("cannot build a vocabulary from an empty stream");
  }
  std::vector<std::map<std::string, std::size_t>> counts(schema.categorical);
  for (const auto& raw : rows) {
    if (raw.categorical.size() != schema.categorical ||
        raw.continuous.size() != schema.continuous) {
      throw DataError("raw instance does not match the field schema");
    }
    for (std::size_t f = 0; f < schema.categorical; ++f) {
      if (raw.categorical[f]) ++counts[f][*raw.categorical[f]];
    }
  }

  Vocabulary vocab;
  vocab.schema_ = schema;
  vocab.min_count_ = min_count;
  vocab.max_bucket_ = max_bucket;
  vocab.tokens_.resize(schema.categorical);
  vocab.index_.resize(schema.categorical);
  for (std::size_t f = 0; f < schema.categorical; ++f) {
    // std::map iterates in token order, so indices do not depend on row order.
    for (const auto& [token, count] : counts[f]) {
      if (count < min_count) continue;
      vocab.tokens_[f].push_back(token);
      vocab.index_[f].emplace(token,
                              static_cast<std::uint32_t>(vocab.tokens_[f].size()));
    }
  }
  return vocab;
}

std::uint32_t Vocabulary::lookup(std::size_t categorical_field,
                                 std::string_view token) const {
  const auto& map = index_.at(categorical_field);
  const auto it = map.find(std::string(token));
  return it == map.end() ? 0 : it->second;
}

std::vector<std::size_t> Vocabulary::field_sizes() const {
  std::vector<std::size_t> sizes(schema_.continuous, max_bucket_ + 1);
  for (const auto& tokens : tokens_) sizes.push_back(tokens.size() + 1);
  return sizes;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"version", 1},
          {"continuous_fields", schema_.continuous},
          {"categorical_fields", schema_.categorical},
          {"min_count", min_count_},
          {"max_bucket", max_bucket_},
          {"field_sizes", field_sizes()},
          {"tokens", tokens_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    Vocabulary vocab;
    vocab.schema_.continuous = j.at("continuous_fields").get<std::size_t>();
    vocab.schema_.categorical = j.at("categorical_fields").get<std::size_t>();
    vocab.min_count_ = j.at("min_count").get<std::size_t>();
    vocab.max_bucket_ = j.at("max_bucket").get<std::uint32_t>();
    vocab.tokens_ = j.at("tokens").get<std::vector<std::vector<std::string>>>();
    if (vocab.tokens_.size() != vocab.schema_.categorical) {
      throw DataError("vocabulary token table has wrong field count");
    }
    vocab.index_.resize(vocab.tokens_.size());
    for (std::size_t f = 0; f < vocab.tokens_.size(); ++f) {
      for (std::size_t i = 0; i < vocab.tokens_[f].size(); ++i) {
        vocab.index_[f].emplace(vocab.tokens_[f][i],
                                static_cast<std::uint32_t>(i + 1));
      }
    }
    return vocab;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
}

Instance encode(const RawInstance& raw, const Vocabulary& vocab) {
  const auto& schema = vocab.schema();
  Instance instance;
  instance.label = raw.label;
  instance.features.reserve(schema.fields());
  for (std::size_t f = 0; f < schema.continuous; ++f) {
    instance.features.push_back(
        {bucketize_continuous(raw.continuous.at(f), vocab.max_bucket()), 1.0});
  }
  for (std::size_t f = 0; f < schema.categorical; ++f) {
    const auto& token = raw.categorical.at(f);
    instance.features.push_back({token ? vocab.lookup(f, *token) : 0u, 1.0});
  }
  return instance;
}

std::vector<Instance> read_ffm_file(const std::filesystem::path& path,
                                    std::optional<std::size_t> expected_fields) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Instance> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (strip_cr(line).empty()) continue;
    rows.push_back(parse_ffm_line(line, expected_fields, line_number));
    if (!expected_fields) expected_fields = rows.back().fields();
  }
  return rows;
}

void write_ffm_file(const std::filesystem::path& path,
                    std::span<const Instance> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& row : rows) out << format_ffm_line(row) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::size_t> infer_field_sizes(std::span<const Instance> rows) {
  std::vector<std::size_t> sizes;
  for (const auto& row : rows) {
    if (sizes.size() < row.fields()) sizes.resize(row.fields(), 0);
    for (std::size_t f = 0; f < row.fields(); ++f) {
      sizes[f] = std::max<std::size_t>(sizes[f], row.features[f].index + 1);
    }
  }
  return sizes;
}

void validate_instances(std::span<const Instance> rows,
                        std::span<const std::size_t> field_sizes) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields() != field_sizes.size()) {
      throw DataError("row " + std::to_string(r) + " has " +
                      std::to_string(row.fields()) + " fields, expected " +
                      std::to_string(field_sizes.size()));
    }
    if (row.label != 0 && row.label != 1) {
      throw DataError("row " + std::to_string(r) + " has non-binary label");
    }
    for (std::size_t f = 0; f < row.fields(); ++f) {
      if (row.features[f].index >= field_sizes[f]) {
        throw DataError("row " + std::to_string(r) + " field " +
                        std::to_string(f) + " index " +
                        std::to_string(row.features[f].index) +
                        " exceeds vocabulary size " +
                        std::to_string(field_sizes[f]));
      }
    }
  }
}

Split split_indices(std::size_t count, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must lie in (0, 1), got " +
                      std::to_string(ratio));
  }
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed, /*stream=*/0x5e17);
  rng.shuffle(std::span<std::size_t>(order));
  const auto train_rows = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(count)));
  Split split;
  split.train.assign(order.begin(), order.begin() + train_rows);
  split.test.assign(order.begin() + train_rows, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void write_manifest(const std::filesystem::path& path,
                    const SplitManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, manifest.ratio);
  out << "seed " << manifest.seed << '\n'
      << "ratio " << std::string(buf, ptr) << '\n'
      << "train " << manifest.train_rows << '\n'
      << "test " << manifest.test_rows << '\n';
}

SplitManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  SplitManifest manifest;
  std::string key;
  while (in >> key) {
    if (key == "seed") in >> manifest.seed;
    else if (key == "ratio") in >> manifest.ratio;
    else if (key == "train") in >> manifest.train_rows;
    else if (key == "test") in >> manifest.test_rows;
    else throw DataError("unknown manifest key '" + key + "'");
  }
  return manifest;
}

}  // namespace fatffm
