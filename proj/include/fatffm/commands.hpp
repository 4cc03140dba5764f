#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fatffm {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitRuntime = 2,
  kExitGradcheck = 3,
};

/// Runs body, mapping exceptions to exit codes: ConfigError -> 1, any other
/// error -> 2. The message goes to err.
int run_guarded(const std::function<int()>& body, std::ostream& err);

struct PrepareOptions {
  std::filesystem::path input;
  std::string format = "criteo";  // criteo | ffm
  double ratio = 0.9;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  std::size_t min_count = 10;
  std::uint32_t max_bucket = 40;
  /// Malformed rows tolerated (and skipped) before the command fails.
  std::size_t error_budget = 0;
};

/// Splits raw rows, builds the vocabulary on the train side only, and writes
/// train.ffm, test.ffm, vocab.json and manifest.txt.
int cmd_prepare(const PrepareOptions& options, std::ostream& out);

struct SynthOptions {
  std::size_t fields = 10;
  std::size_t vocab = 50;
  std::size_t k = 10;
  std::size_t count = 1000;
  std::optional<std::size_t> test_count;  // default count / 5
  std::uint64_t seed = 1;
  double label_noise = 0.0;
  std::filesystem::path output_dir;
};

/// Writes train.ffm, test.ffm and teacher.ckpt (the teacher as an FFM
/// checkpoint, loadable by `eval`).
int cmd_synth(const SynthOptions& options, std::ostream& out);

/// Command-line values that replace the corresponding config fields.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::size_t> threads;
  std::optional<std::filesystem::path> output_dir;
};

/// Trains per the config; writes model.ckpt, metrics.jsonl and
/// resolved_config.json into the output directory.
int cmd_train(const std::filesystem::path& config, std::ostream& out,
              const RunOverrides& overrides = {});

/// Prints one JSON EvalReport line.
int cmd_eval(const std::filesystem::path& checkpoint,
             const std::filesystem::path& data, std::ostream& out);

struct GradcheckCommandOptions {
  std::vector<std::string> configs;  // default: the standard suite
  std::size_t fields = 4;
  std::size_t k = 3;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  std::optional<std::string> corrupt_block;
};

/// Returns kExitGradcheck when any block exceeds the tolerance.
int cmd_gradcheck(const GradcheckCommandOptions& options, std::ostream& out);

/// Trains the configured ablation matrix; writes ablation.txt,
/// ablation.json, metrics.jsonl and resolved_config.json.
int cmd_ablate(const std::filesystem::path& config, std::ostream& out,
               const RunOverrides& overrides = {});

}  // namespace fatffm
