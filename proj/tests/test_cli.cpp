#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fatffm/commands.hpp"
#include "fatffm/data.hpp"
#include "fatffm/error.hpp"
#include "fatffm/run_config.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fatffm;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string criteo_lines(std::size_t count, Rng& rng) {
  std::string text;
  for (std::size_t r = 0; r < count; ++r) {
    text += rng.bernoulli(0.3) ? "1" : "0";
    for (int i = 0; i < 13; ++i) {
      text += "\t";
      if (rng.bernoulli(0.8)) text += std::to_string(rng.below(500));
    }
    for (int i = 0; i < 26; ++i) {
      text += "\t";
      if (rng.bernoulli(0.9)) text += "t" + std::to_string(rng.below(30));
    }
    text += "\n";
  }
  return text;
}

int guarded(const std::function<int()>& body, std::string* err = nullptr) {
  std::ostringstream e;
  const int code = run_guarded(body, e);
  if (err) *err = e.str();
  return code;
}

}  // namespace

TEST_CASE("prepare splits and writes every artifact") {
  const auto dir = testing::scratch_dir("cli_prepare");
  Rng rng(1, 0);
  write_file(dir / "raw.tsv", criteo_lines(1000, rng));
  PrepareOptions opt;
  opt.input = dir / "raw.tsv";
  opt.output_dir = dir / "out";
  opt.min_count = 2;
  std::ostringstream out;
  CHECK(cmd_prepare(opt, out) == kExitOk);
  CHECK(read_ffm_file(dir / "out" / "train.ffm", 39).size() == 900);
  CHECK(read_ffm_file(dir / "out" / "test.ffm", 39).size() == 100);
  CHECK(read_manifest(dir / "out" / "manifest.txt").train_rows == 900);
  const auto vocab = nlohmann::json::parse(read_file(dir / "out" / "vocab.json"));
  CHECK(vocab.at("field_sizes").size() == 39);

  // Identical inputs give identical outputs.
  const std::string first = read_file(dir / "out" / "train.ffm");
  CHECK(cmd_prepare(opt, out) == kExitOk);
  CHECK(read_file(dir / "out" / "train.ffm") == first);
}

TEST_CASE("prepare with an 80/20 ffm split") {
  const auto dir = testing::scratch_dir("cli_prepare_ffm");
  Rng rng(2, 0);
  write_ffm_file(dir / "all.ffm", testing::random_rows({3, 3}, 10, rng));
  PrepareOptions opt;
  opt.input = dir / "all.ffm";
  opt.format = "ffm";
  opt.ratio = 0.8;
  opt.output_dir = dir / "out";
  std::ostringstream out;
  CHECK(cmd_prepare(opt, out) == kExitOk);
  CHECK(read_ffm_file(dir / "out" / "train.ffm").size() == 8);
  CHECK(read_ffm_file(dir / "out" / "test.ffm").size() == 2);
}

TEST_CASE("prepare enforces the error budget") {
  const auto dir = testing::scratch_dir("cli_budget");
  Rng rng(3, 0);
  write_file(dir / "raw.tsv", criteo_lines(20, rng) + "1\tbroken\n" + criteo_lines(20, rng));
  PrepareOptions opt;
  opt.input = dir / "raw.tsv";
  opt.output_dir = dir / "out";
  std::string err;
  CHECK(guarded([&] { std::ostringstream o; return cmd_prepare(opt, o); }, &err) == kExitRuntime);
  CHECK(err.find("line 21") != std::string::npos);
  opt.error_budget = 1;
  std::ostringstream out;
  CHECK(cmd_prepare(opt, out) == kExitOk);
  CHECK(out.str().find("1 malformed") != std::string::npos);
}

TEST_CASE("config validation reports every issue with exit 1") {
  const auto dir = testing::scratch_dir("cli_config");
  write_file(dir / "bad.json", R"({"data": {}, "model": {"variant": "Nope", "k": 0},
                                   "train": {"epochs": 0}})");
  std::string err;
  CHECK(guarded([&] { std::ostringstream o; return cmd_train(dir / "bad.json", o); }, &err) ==
        kExitValidation);
  CHECK(err.find("data.train") != std::string::npos);
  CHECK(err.find("model.variant") != std::string::npos);
  CHECK(err.find("model.k") != std::string::npos);
  CHECK(err.find("output_dir") != std::string::npos);

  write_file(dir / "broken.json", "{not json");
  CHECK(guarded([&] { std::ostringstream o; return cmd_train(dir / "broken.json", o); }) ==
        kExitValidation);
}

TEST_CASE("synth, train and eval end to end") {
  const auto dir = testing::scratch_dir("cli_e2e");
  SynthOptions syn;
  syn.fields = 4;
  syn.vocab = 6;
  syn.k = 3;
  syn.count = 600;
  syn.output_dir = dir / "data";
  std::ostringstream out;
  REQUIRE(cmd_synth(syn, out) == kExitOk);
  CHECK(read_ffm_file(dir / "data" / "test.ffm").size() == 120);

  const nlohmann::json config = {
      {"data", {{"train", "data/train.ffm"}, {"test", "data/test.ffm"}}},
      {"model", {{"variant", "FAT-DeepFFM"}, {"k", 3}, {"hidden", {8}}}},
      {"train", {{"epochs", 2}, {"batch_size", 64}, {"learning_rate", 0.01}}},
      {"output_dir", "run"}};
  write_file(dir / "run.json", config.dump());
  std::ostringstream train_out;
  REQUIRE(cmd_train(dir / "run.json", train_out) == kExitOk);
  for (const char* f : {"model.ckpt", "metrics.jsonl", "resolved_config.json"}) {
    CHECK(fs::exists(dir / "run" / f));
  }

  // The resolved config re-runs to the same artifacts.
  const std::string ckpt = read_file(dir / "run" / "model.ckpt");
  const std::string log = read_file(dir / "run" / "metrics.jsonl");
  std::ostringstream again;
  REQUIRE(cmd_train(dir / "run" / "resolved_config.json", again) == kExitOk);
  CHECK(read_file(dir / "run" / "model.ckpt") == ckpt);
  CHECK(read_file(dir / "run" / "metrics.jsonl") == log);

  std::ostringstream eval_out;
  REQUIRE(cmd_eval(dir / "run" / "model.ckpt", dir / "data" / "test.ffm", eval_out) == kExitOk);
  const auto report = nlohmann::json::parse(eval_out.str());
  // The last logged line is the selected model on the test split.
  const auto last = nlohmann::json::parse(log.substr(log.rfind('\n', log.size() - 2) + 1));
  CHECK(last.at("split") == "test");
  CHECK(report.at("auc").get<double>() == last.at("auc").get<double>());
  CHECK(report.at("logloss").get<double>() == last.at("logloss").get<double>());
}

TEST_CASE("eval rejects mismatched or missing inputs") {
  const auto dir = testing::scratch_dir("cli_eval");
  SynthOptions syn;
  syn.fields = 3;
  syn.vocab = 4;
  syn.k = 2;
  syn.count = 50;
  syn.output_dir = dir;
  std::ostringstream out;
  REQUIRE(cmd_synth(syn, out) == kExitOk);
  Rng rng(1, 0);
  write_ffm_file(dir / "wide.ffm", testing::random_rows({4, 4, 4, 4}, 10, rng));
  std::string err;
  CHECK(guarded([&] { std::ostringstream o; return cmd_eval(dir / "teacher.ckpt", dir / "wide.ffm", o); },
                &err) == kExitRuntime);
  CHECK(err.find("n=3") != std::string::npos);
  CHECK(guarded([&] { std::ostringstream o; return cmd_eval(dir / "nope.ckpt", dir / "test.ffm", o); }) ==
        kExitRuntime);
  std::ostringstream ok;
  CHECK(cmd_eval(dir / "teacher.ckpt", dir / "train.ffm", ok) == kExitOk);
}

TEST_CASE("gradcheck command") {
  GradcheckCommandOptions opt;
  opt.configs = {"LR"};
  std::ostringstream out;
  CHECK(cmd_gradcheck(opt, out) == kExitOk);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // two blocks and a summary

  opt.configs = {"FFM"};
  opt.corrupt_block = "embedding";
  std::ostringstream bad;
  CHECK(cmd_gradcheck(opt, bad) == kExitGradcheck);
  CHECK(bad.str().find("FAIL") != std::string::npos);

  opt.fields = 9;
  CHECK(guarded([&] { std::ostringstream o; return cmd_gradcheck(opt, o); }) == kExitValidation);
}

TEST_CASE("ablate writes a table") {
  const auto dir = testing::scratch_dir("cli_ablate");
  SynthOptions syn;
  syn.fields = 3;
  syn.vocab = 5;
  syn.k = 2;
  syn.count = 300;
  syn.output_dir = dir / "data";
  std::ostringstream out;
  REQUIRE(cmd_synth(syn, out) == kExitOk);
  const nlohmann::json config = {
      {"data", {{"train", "data/train.ffm"}, {"test", "data/test.ffm"}}},
      {"model", {{"k", 2}, {"hidden", {4}}}},
      {"train", {{"epochs", 1}, {"batch_size", 50}, {"learning_rate", 0.01}}},
      {"ablation", {{"models", {"DeepFFM-H", "FAT-DeepFFM-I"}}}},
      {"output_dir", "ab"}};
  write_file(dir / "ab.json", config.dump());
  std::ostringstream table;
  REQUIRE(cmd_ablate(dir / "ab.json", table) == kExitOk);
  // -I group comes first regardless of configured order.
  CHECK(table.str().find("FAT-DeepFFM-I") < table.str().find("DeepFFM-H"));
  CHECK(fs::exists(dir / "ab" / "ablation.json"));
}

TEST_CASE("flags override config fields") {
  const auto dir = testing::scratch_dir("cli_override");
  SynthOptions syn;
  syn.fields = 3;
  syn.vocab = 4;
  syn.k = 2;
  syn.count = 200;
  syn.output_dir = dir / "data";
  std::ostringstream out;
  REQUIRE(cmd_synth(syn, out) == kExitOk);
  const nlohmann::json config = {
      {"data", {{"train", "data/train.ffm"}}},
      {"model", {{"variant", "FFM"}, {"k", 2}}},
      {"train", {{"epochs", 5}, {"batch_size", 50}, {"learning_rate", 0.01}}},
      {"output_dir", "run"}};
  write_file(dir / "c.json", config.dump());
  RunOverrides o;
  o.epochs = 2;
  o.seed = 9;
  o.output_dir = dir / "other";
  REQUIRE(cmd_train(dir / "c.json", out, o) == kExitOk);
  CHECK_FALSE(fs::exists(dir / "run"));
  const auto resolved =
      nlohmann::json::parse(read_file(dir / "other" / "resolved_config.json"));
  CHECK(resolved.at("train").at("epochs") == 2);
  CHECK(resolved.at("train").at("seed") == 9);

  o.batch_size = 0;
  CHECK(guarded([&] { std::ostringstream s; return cmd_train(dir / "c.json", s, o); }) ==
        kExitValidation);
}
