// Command-line front end: prepare, synth, train, eval, gradcheck, ablate.

#include <iostream>

#include "CLI11.hpp"
#include "fatffm/commands.hpp"

int main(int argc, char** argv) {
  using namespace fatffm;
  CLI::App app{"FAT-DeepFFM click-through-rate models"};
  app.require_subcommand(1);

  PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "Split raw data and build the vocabulary");
  prepare->add_option("input", prep.input, "Raw input file")->required();
  prepare->add_option("--format", prep.format, "criteo or ffm")->capture_default_str();
  prepare->add_option("--ratio", prep.ratio, "Train fraction")->capture_default_str();
  prepare->add_option("--seed", prep.seed, "Split seed")->capture_default_str();
  prepare->add_option("-o,--output", prep.output_dir, "Output directory")->required();
  prepare->add_option("--min-count", prep.min_count, "Minimum token count")->capture_default_str();
  prepare->add_option("--max-bucket", prep.max_bucket, "Largest continuous bucket")->capture_default_str();
  prepare->add_option("--error-budget", prep.error_budget, "Malformed rows to skip")->capture_default_str();

  SynthOptions syn;
  std::size_t test_count = 0;
  auto* synth = app.add_subcommand("synth", "Generate data from a random FFM teacher");
  synth->add_option("--fields", syn.fields)->capture_default_str();
  synth->add_option("--vocab", syn.vocab, "Values per field")->capture_default_str();
  synth->add_option("--k", syn.k, "Teacher embedding size")->capture_default_str();
  synth->add_option("--count", syn.count, "Train rows")->capture_default_str();
  auto* test_opt = synth->add_option("--test-count", test_count, "Test rows (default count/5)");
  synth->add_option("--seed", syn.seed)->capture_default_str();
  synth->add_option("--label-noise", syn.label_noise, "Label flip probability")->capture_default_str();
  synth->add_option("-o,--output", syn.output_dir, "Output directory")->required();

  RunOverrides overrides;
  auto add_overrides = [&overrides](CLI::App* cmd) {
    cmd->add_option("--seed", overrides.seed, "Override train.seed");
    cmd->add_option("--epochs", overrides.epochs, "Override train.epochs");
    cmd->add_option("--batch-size", overrides.batch_size, "Override train.batch_size");
    cmd->add_option("--lr", overrides.learning_rate, "Override train.learning_rate");
    cmd->add_option("--threads", overrides.threads, "Override train.threads");
    cmd->add_option("-o,--output", overrides.output_dir, "Override output_dir");
  };

  std::filesystem::path train_config;
  auto* train = app.add_subcommand("train", "Train one model from a JSON config");
  train->add_option("config", train_config)->required();
  add_overrides(train);

  std::filesystem::path ckpt, data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a data file");
  eval->add_option("checkpoint", ckpt)->required();
  eval->add_option("data", data)->required();

  GradcheckCommandOptions gc;
  std::string corrupt;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  gradcheck->add_option("--config", gc.configs, "Model config, repeatable (default: standard suite)");
  gradcheck->add_option("--n", gc.fields, "Fields")->capture_default_str();
  gradcheck->add_option("--k", gc.k, "Embedding size")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed)->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance)->capture_default_str();
  auto* corrupt_opt = gradcheck->add_option("--corrupt-block", corrupt, "Perturb this block's analytic gradient");

  std::filesystem::path ablate_config;
  auto* ablate = app.add_subcommand("ablate", "Train the ablation matrix from a JSON config");
  ablate->add_option("config", ablate_config)->required();
  add_overrides(ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  return run_guarded(
      [&]() -> int {
        if (*prepare) return cmd_prepare(prep, std::cout);
        if (*synth) {
          if (*test_opt) syn.test_count = test_count;
          return cmd_synth(syn, std::cout);
        }
        if (*train) return cmd_train(train_config, std::cout, overrides);
        if (*eval) return cmd_eval(ckpt, data, std::cout);
        if (*gradcheck) {
          if (*corrupt_opt) gc.corrupt_block = corrupt;
          return cmd_gradcheck(gc, std::cout);
        }
        return cmd_ablate(ablate_config, std::cout, overrides);
      },
      std::cerr);
}
