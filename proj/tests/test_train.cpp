#include <cmath>

#include "doctest.h"
#include "fatffm/ablation.hpp"
#include "fatffm/adam.hpp"
#include "fatffm/error.hpp"
#include "fatffm/metrics.hpp"
#include "fatffm/synth.hpp"
#include "fatffm/trainer.hpp"
#include "test_util.hpp"

using namespace fatffm;
using testing::small_spec;

namespace {

// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
double brute_auc(const std::vector<double>& p, const std::vector<int>& y) {
  double good = 0.0, total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[j] != 0) continue;
      total += 1.0;
      good += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
    }
  }
  return good / total;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("metric worked examples") {
  const std::vector<double> half = {0.5};
  const std::vector<int> one = {1};
  CHECK(std::abs(logloss(half, one) - std::log(2.0)) <= 1e-12);

  const std::vector<double> p = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  CHECK(auc(p, y) == 0.75);
  const std::vector<double> perfect = {0.1, 0.2, 0.8, 0.9};
  CHECK(auc(perfect, y) == 1.0);
  const std::vector<double> flat = {0.3, 0.3, 0.3, 0.3};
  CHECK(auc(flat, y) == 0.5);

  const std::vector<double> extreme = {0.0, 1.0};
  const std::vector<int> wrong = {1, 0};
  CHECK(std::isfinite(logloss(extreme, wrong)));
  CHECK(logloss(extreme, wrong) == doctest::Approx(-std::log(kPredictionClip)));
}

TEST_CASE("metric errors") {
  const std::vector<double> p = {0.2, 0.7};
  const std::vector<int> same = {1, 1};
  CHECK_THROWS_AS(auc(p, same), MetricError);
  CHECK_THROWS_AS(auc({}, {}), MetricError);
  CHECK_THROWS_AS(logloss({}, {}), MetricError);
}

TEST_CASE("average-rank AUC equals pair counting with ties") {
  Rng rng(99, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 2 + rng.below(199);
    std::vector<double> p(rows);
    std::vector<int> y(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      p[i] = static_cast<double>(rng.below(8)) / 8.0;
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(auc(p, y) == brute_auc(p, y));
  }
}

TEST_CASE("metric invariances") {
  Rng rng(7, 0);
  std::vector<double> p(150);
  std::vector<int> y(150);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.uniform(0.01, 0.99);
    y[i] = rng.bernoulli(p[i]) ? 1 : 0;
  }
  std::vector<double> warped(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) warped[i] = std::pow(p[i], 3.0) + 2.0;
  CHECK(auc(warped, y) == auc(p, y));

  std::vector<double> rp(p.rbegin(), p.rend());
  std::vector<int> ry(y.rbegin(), y.rend());
  CHECK(logloss(rp, ry) == doctest::Approx(logloss(p, y)).epsilon(1e-14));
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  const auto data = synth_generate({4, 4, 4}, 2, 1, 200);
  auto cfg = quick_config();
  cfg.learning_rate = 0.0;
  const auto spec = small_spec(Variant::kFatDeepFFM, Interaction::kHadamard, 3, 2);
  const auto initial = Model<float>::initialize(spec, cfg.seed);
  const auto result = train(spec, cfg, data.rows, data.rows);
  CHECK(result.model.params() == initial.params());
}

TEST_CASE("training is reproducible") {
  const auto data = synth_generate({5, 5, 5, 5}, 2, 2, 300);
  auto spec = small_spec(Variant::kFatDeepFFM, Interaction::kHadamard, 4, 3, 5);
  spec.dropout = 0.3;
  std::vector<std::pair<std::string, double>> trace_a, trace_b;
  const auto a = train(spec, quick_config(), data.rows, data.rows,
                       [&](const MetricRecord& r) { trace_a.emplace_back(r.report.split, r.report.logloss); });
  const auto b = train(spec, quick_config(), data.rows, data.rows,
                       [&](const MetricRecord& r) { trace_b.emplace_back(r.report.split, r.report.logloss); });
  CHECK(trace_a == trace_b);
  CHECK(a.model.params() == b.model.params());
  CHECK(trace_a.size() == 6);  // train and valid per epoch
}

TEST_CASE("LR fits linearly separable data") {
  // Label = [field 0 index is odd]; separable in one-hot space.
  Rng rng(3, 0);
  std::vector<Instance> rows;
  for (int i = 0; i < 200; ++i) {
    Instance inst;
    const auto a = static_cast<std::uint32_t>(rng.below(6));
    inst.features = {{a, 1.0}, {static_cast<std::uint32_t>(rng.below(4)), 1.0}};
    inst.label = static_cast<int>(a % 2);
    rows.push_back(inst);
  }

  // Independent check of separability: a perceptron on the one-hot
  // encoding reaches zero training errors.
  std::vector<double> w(10, 0.0);
  double b = 0.0;
  bool separated = false;
  for (int pass = 0; pass < 100 && !separated; ++pass) {
    separated = true;
    for (const auto& r : rows) {
      const double z = b + w[r.features[0].index] + w[6 + r.features[1].index];
      const double target = r.label ? 1.0 : -1.0;
      if (z * target <= 0.0) {
        separated = false;
        w[r.features[0].index] += target;
        w[6 + r.features[1].index] += target;
        b += target;
      }
    }
  }
  REQUIRE(separated);

  ModelSpec spec;
  spec.variant = Variant::kLR;
  spec.field_sizes = {6, 4};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 200;
  cfg.learning_rate = 0.05;
  cfg.eval_train = true;
  double last_train_loss = 1.0;
  train(spec, cfg, rows, rows, [&](const MetricRecord& r) {
    if (r.report.split == "train") last_train_loss = r.report.logloss;
  });
  CHECK(last_train_loss < 0.1);
}

TEST_CASE("a small Adam step lowers a single instance's loss") {
  for (const auto* name :
       {"LR", "FM", "FFM", "DeepFFM-I", "DeepFFM-H", "FAT-DeepFFM-I",
        "FAT-DeepFFM-H", "MLP-DeepFFM-H", "CE-DeepFFM-I", "CE-DeepFFM-H"}) {
    CAPTURE(name);
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      ModelSpec base = small_spec(Variant::kFFM, Interaction::kInner, 4, 3);
      const ModelSpec spec = with_model_name(base, name);
      auto model = Model<double>::initialize(spec, seed);
      Rng rng(seed, 1);
      testing::randomize(model.params(), rng, -0.5, 0.5);
      const auto inst = testing::random_instance(spec.field_sizes, rng);
      Workspace<double> ws;
      auto grads = model.params().zeros_like();
      const double before = model.accumulate_gradient(inst, ws, grads);
      AdamHyper h;
      h.learning_rate = 1e-4;
      for (std::size_t b = 0; b < grads.size(); ++b) {
        AdamState<double> state(grads[b].shape(), h);
        adam_step(model.params()[b], grads[b], state);
      }
      const double after = logit_loss(model.logit(inst, ws),
                                      static_cast<double>(inst.label));
      failures += !(after < before);
    }
    CHECK(failures <= 2);
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 0;
  cfg.learning_rate = -1.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() == 3);
  }
  TrainConfig ok;
  ok.patience = 3;
  CHECK(TrainConfig::from_json(ok.to_json()).to_json() == ok.to_json());
}

TEST_CASE("ablation table order and runs") {
  ModelSpec base = small_spec(Variant::kFFM, Interaction::kInner, 3, 2);
  std::vector<ModelSpec> specs;
  for (const auto* name : {"FAT-DeepFFM-H", "DeepFFM-I", "FFM", "CE-DeepFFM-H", "MLP-DeepFFM-I"}) {
    specs.push_back(with_model_name(base, name));
  }
  std::vector<std::string> names;
  for (const auto& s : table_order(specs)) names.push_back(s.display_name());
  CHECK(names == std::vector<std::string>{"FFM", "DeepFFM-I", "MLP-DeepFFM-I",
                                          "FAT-DeepFFM-H", "CE-DeepFFM-H"});

  const auto defaults = default_ablation_models();
  CHECK(defaults == std::vector<std::string>{
                        "DeepFFM-I", "MLP-DeepFFM-I", "CE-DeepFFM-I", "FAT-DeepFFM-I",
                        "DeepFFM-H", "MLP-DeepFFM-H", "CE-DeepFFM-H", "FAT-DeepFFM-H"});

  const auto data = synth_generate({4, 4, 4}, 2, 6, 300);
  const std::span<const Instance> rows(data.rows);
  const auto cfg = quick_config();
  const ModelSpec one = with_model_name(base, "DeepFFM-H");
  const std::vector<ModelSpec> single = {one, one};
  const auto table = run_ablation(single, cfg, rows.first(200), rows.subspan(200),
                                  rows.subspan(200), "valid");
  REQUIRE(table.rows.size() == 2);
  REQUIRE(table.rows[0].report);
  const auto direct = train(one, cfg, rows.first(200), rows.subspan(200));
  const auto report = evaluate(direct.model, rows.subspan(200), "valid");
  CHECK(table.rows[0].report->auc == report.auc);
  CHECK(table.rows[0].report->logloss == report.logloss);
  CHECK(table.rows[1].report->logloss == report.logloss);
  CHECK(table.to_text().find("DeepFFM-H") != std::string::npos);
}
