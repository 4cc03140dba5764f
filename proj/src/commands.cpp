#include "fatffm/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "fatffm/ablation.hpp"
#include "fatffm/checkpoint.hpp"
#include "fatffm/data.hpp"
#include "fatffm/error.hpp"
#include "fatffm/log.hpp"
#include "fatffm/run_config.hpp"
#include "fatffm/synth.hpp"
#include "fatffm/trainer.hpp"
#include "fatffm/verify.hpp"

namespace fatffm {

namespace fs = std::filesystem;

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "validation error:";
    for (const auto& issue : e.issues()) err << "\n  " << issue;
    err << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

template <typename Row>
std::vector<Row> pick(const std::vector<Row>& rows,
                      const std::vector<std::size_t>& indices) {
  std::vector<Row> out;
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(rows[i]);
  return out;
}

std::vector<std::size_t> field_sizes_from_vocab_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  try {
    return nlohmann::json::parse(in)
        .at("field_sizes")
        .get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("vocabulary " + path.string() +
                    " has no usable field_sizes: " + e.what());
  }
}

RunConfig load_config(const fs::path& path, const RunOverrides& o) {
  RunConfig config = RunConfig::load(path);
  if (o.seed) config.train.seed = *o.seed;
  if (o.epochs) config.train.epochs = *o.epochs;
  if (o.batch_size) config.train.batch_size = *o.batch_size;
  if (o.learning_rate) config.train.learning_rate = *o.learning_rate;
  if (o.threads) config.train.threads = *o.threads;
  if (o.output_dir) config.output_dir = fs::absolute(*o.output_dir).lexically_normal();
  config.train.validate();
  return config;
}

struct RunData {
  std::vector<Instance> train, valid, test;
};

// Loads the configured files, carves a validation split if needed, and
// resolves field sizes into both config.data and config.model.
RunData load_run_data(RunConfig& config) {
  RunData data;
  data.train = read_ffm_file(config.data.train);
  if (data.train.empty()) throw MetricError("training file is empty");
  const std::size_t n = data.train.front().fields();
  if (config.data.valid) {
    data.valid = read_ffm_file(*config.data.valid, n);
  } else {
    const Split split = split_indices(data.train.size(),
                                      1.0 - config.data.valid_fraction,
                                      config.train.seed);
    data.valid = pick(data.train, split.test);
    data.train = pick(data.train, split.train);
  }
  if (config.data.test) data.test = read_ffm_file(*config.data.test, n);

  if (config.data.field_sizes.empty()) {
    if (config.data.vocab) {
      config.data.field_sizes = field_sizes_from_vocab_file(*config.data.vocab);
    } else {
      auto sizes = infer_field_sizes(data.train);
      for (const auto* rows : {&data.valid, &data.test}) {
        const auto more = infer_field_sizes(*rows);
        for (std::size_t f = 0; f < more.size() && f < sizes.size(); ++f) {
          sizes[f] = std::max(sizes[f], more[f]);
        }
      }
      config.data.field_sizes = sizes;
    }
  }
  if (config.data.field_sizes.size() != n) {
    throw ConfigError("data.field_sizes: " +
                      std::to_string(config.data.field_sizes.size()) +
                      " sizes for " + std::to_string(n) + "-field data");
  }
  config.model.field_sizes = config.data.field_sizes;
  return data;
}

class MetricLog {
 public:
  explicit MetricLog(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path.string());
  }

  void write(const MetricRecord& record, bool selected = false) {
    nlohmann::json j = record.to_json();
    if (selected) j["selected"] = true;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::string format_report(const EvalReport& r) {
  return r.to_json().dump();
}

}  // namespace

int cmd_prepare(const PrepareOptions& options, std::ostream& out) {
  if (options.format != "criteo" && options.format != "ffm") {
    throw ConfigError("format: expected criteo or ffm, got '" +
                      options.format + "'");
  }
  if (!(options.ratio > 0.0 && options.ratio < 1.0)) {
    throw ConfigError("ratio: must lie in (0, 1)");
  }
  if (options.output_dir.empty()) throw ConfigError("output: missing directory");
  const auto lines = read_lines(options.input);

  std::size_t malformed = 0;
  auto reject = [&](const Error& e) {
    if (++malformed > options.error_budget) throw;
    log_info("skipping malformed row: ", e.what());
  };

  std::vector<Instance> train, test;
  nlohmann::json vocab_json;
  if (options.format == "criteo") {
    const FieldSchema schema = FieldSchema::criteo();
    std::vector<RawInstance> raws;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      try {
        RawInstance raw = parse_criteo_line(lines[i], schema, i + 1);
        for (const auto& v : raw.continuous) {
          try {
            bucketize_continuous(v, options.max_bucket);
          } catch (const DataError& e) {
            throw ParseError(e.what(), i + 1);
          }
        }
        raws.push_back(std::move(raw));
      } catch (const ParseError& e) {
        reject(e);
      }
    }
    const Split split = split_indices(raws.size(), options.ratio, options.seed);
    const auto train_raw = pick(raws, split.train);
    const Vocabulary vocab = Vocabulary::build(train_raw, schema,
                                               options.min_count,
                                               options.max_bucket);
    for (const auto& raw : train_raw) train.push_back(encode(raw, vocab));
    for (const auto i : split.test) test.push_back(encode(raws[i], vocab));
    vocab_json = vocab.to_json();
  } else {
    std::vector<Instance> rows;
    std::optional<std::size_t> fields;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      try {
        rows.push_back(parse_ffm_line(lines[i], fields, i + 1));
        fields = rows.back().fields();
      } catch (const ParseError& e) {
        reject(e);
      }
    }
    const Split split = split_indices(rows.size(), options.ratio, options.seed);
    train = pick(rows, split.train);
    test = pick(rows, split.test);
    vocab_json = {{"version", 1}, {"field_sizes", infer_field_sizes(rows)}};
  }

  ensure_dir(options.output_dir);
  write_ffm_file(options.output_dir / "train.ffm", train);
  write_ffm_file(options.output_dir / "test.ffm", test);
  write_text(options.output_dir / "vocab.json", vocab_json.dump(1) + "\n");
  write_manifest(options.output_dir / "manifest.txt",
                 {options.seed, options.ratio, train.size(), test.size()});
  out << "prepared " << train.size() << " train / " << test.size()
      << " test rows";
  if (malformed) out << " (" << malformed << " malformed rows skipped)";
  out << '\n';
  return kExitOk;
}

int cmd_synth(const SynthOptions& options, std::ostream& out) {
  if (options.output_dir.empty()) throw ConfigError("output: missing directory");
  if (options.fields == 0) throw ConfigError("fields: must be >= 1");
  const std::vector<std::size_t> sizes(options.fields, options.vocab);
  const Model<float> teacher = make_teacher(sizes, options.k, options.seed);
  const std::size_t test_count = options.test_count.value_or(options.count / 5);
  const auto train = sample_instances(teacher, options.count, options.seed, 0,
                                      options.label_noise);
  const auto test = sample_instances(teacher, test_count, options.seed, 1,
                                     options.label_noise);
  ensure_dir(options.output_dir);
  write_ffm_file(options.output_dir / "train.ffm", train);
  write_ffm_file(options.output_dir / "test.ffm", test);
  save_checkpoint(options.output_dir / "teacher.ckpt", teacher);
  nlohmann::json info = {{"fields", options.fields},
                         {"vocab", options.vocab},
                         {"k", options.k},
                         {"train_rows", train.size()},
                         {"test_rows", test.size()},
                         {"seed", options.seed},
                         {"label_noise", options.label_noise},
                         {"field_sizes", sizes}};
  out << "wrote " << train.size() << " train / " << test.size()
      << " test rows\n";
  try {
    const EvalReport report = evaluate(teacher, test, "test");
    info["teacher_test_auc"] = report.auc;
    info["teacher_test_logloss"] = report.logloss;
    out << "teacher on test: " << format_report(report) << '\n';
  } catch (const MetricError&) {
    // Too few rows (or a single class) for teacher metrics.
  }
  write_text(options.output_dir / "synth.json", info.dump(1) + "\n");
  return kExitOk;
}

int cmd_train(const fs::path& config_path, std::ostream& out,
              const RunOverrides& overrides) {
  RunConfig config = load_config(config_path, overrides);
  RunData data = load_run_data(config);
  config.model.validate();

  ensure_dir(config.output_dir);
  write_text(config.output_dir / "resolved_config.json",
             config.to_json().dump(2) + "\n");
  MetricLog log(config.output_dir / "metrics.jsonl");

  log_info("training ", config.model.display_name(), " on ",
           data.train.size(), " rows");
  TrainResult result = train(
      config.model, config.train, data.train, data.valid,
      [&](const MetricRecord& r) {
        log.write(r);
        log_info("epoch ", r.epoch, " ", r.report.split, " auc=", r.report.auc,
                 " logloss=", r.report.logloss);
      });
  save_checkpoint(config.output_dir / "model.ckpt", result.model);
  if (result.diverged) {
    throw NumericError("training diverged (" + result.divergence +
                       "); last good parameters saved");
  }

  // The selected parameters, re-evaluated so the log ends with the metrics
  // `eval` reproduces from the checkpoint.
  std::vector<std::pair<std::string, const std::vector<Instance>*>> splits = {
      {"train", &data.train}, {"valid", &data.valid}};
  if (!data.test.empty()) splits.emplace_back("test", &data.test);
  for (const auto& [name, rows] : splits) {
    MetricRecord record{result.best_epoch, evaluate(result.model, *rows, name)};
    log.write(record, /*selected=*/true);
    out << format_report(record.report) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data,
             std::ostream& out) {
  const Model<float> model = load_checkpoint(checkpoint);
  const auto rows = read_ffm_file(data);
  if (rows.empty()) throw MetricError("evaluation file " + data.string() + " is empty");
  const auto& spec = model.spec();
  if (rows.front().fields() != spec.fields()) {
    throw DataError("schema mismatch: checkpoint has n=" +
                    std::to_string(spec.fields()) + " fields (k=" +
                    std::to_string(spec.k) + "), data has n=" +
                    std::to_string(rows.front().fields()));
  }
  validate_instances(rows, spec.field_sizes);
  out << format_report(evaluate(model, rows, "eval")) << '\n';
  return kExitOk;
}

int cmd_gradcheck(const GradcheckCommandOptions& options, std::ostream& out) {
  std::vector<std::string> issues;
  if (options.fields < 2 || options.fields > 6) {
    issues.push_back("n: gradcheck needs 2 <= n <= 6");
  }
  if (options.k < 1 || options.k > 4) {
    issues.push_back("k: gradcheck needs 1 <= k <= 4");
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));

  const auto configs = options.configs.empty() ? default_gradcheck_configs()
                                               : options.configs;
  GradcheckSetup setup;
  setup.seed = options.seed;
  setup.options.tolerance = options.tolerance;
  setup.corrupt_block = options.corrupt_block;

  bool all_passed = true;
  char line[256];
  for (const auto& name : configs) {
    const ModelSpec spec = parse_check_config(name, options.fields, options.k);
    for (const auto& check : gradcheck_model(spec, name, setup)) {
      all_passed = all_passed && check.report.passed;
      std::snprintf(line, sizeof line,
                    "%-24s %-22s max_rel_err=%.3e checked=%zu skipped=%zu %s\n",
                    check.config.c_str(), check.block.c_str(),
                    check.report.max_rel_error, check.report.checked,
                    check.report.skipped_kinks,
                    check.report.passed ? "PASS" : "FAIL");
      out << line;
      if (!check.report.passed) {
        out << "    " << check.report.failure << '\n';
      }
    }
  }
  out << (all_passed ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return all_passed ? kExitOk : kExitGradcheck;
}

int cmd_ablate(const fs::path& config_path, std::ostream& out,
               const RunOverrides& overrides) {
  RunConfig config = load_config(config_path, overrides);
  RunData data = load_run_data(config);
  std::vector<ModelSpec> specs;
  for (const auto& name : config.ablation_models) {
    ModelSpec spec = with_model_name(config.model, name);
    spec.validate();
    specs.push_back(std::move(spec));
  }

  ensure_dir(config.output_dir);
  write_text(config.output_dir / "resolved_config.json",
             config.to_json().dump(2) + "\n");
  std::ofstream metrics(config.output_dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw DataError("cannot write metrics log");

  const bool has_test = !data.test.empty();
  const AblationTable table = run_ablation(
      specs, config.train, data.train, data.valid,
      has_test ? data.test : data.valid, has_test ? "test" : "valid",
      [&](const std::string& model, const MetricRecord& r) {
        nlohmann::json j = r.to_json();
        j["model"] = model;
        metrics << j.dump() << '\n';
        metrics.flush();
        log_info(model, " epoch ", r.epoch, " ", r.report.split,
                 " auc=", r.report.auc);
      });
  write_text(config.output_dir / "ablation.txt", table.to_text());
  write_text(config.output_dir / "ablation.json", table.to_json().dump(2) + "\n");
  out << table.to_text();
  return kExitOk;
}

}  // namespace fatffm
