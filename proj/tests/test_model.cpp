#include <cmath>

#include "doctest.h"
#include "fatffm/checkpoint.hpp"
#include "fatffm/error.hpp"
#include "fatffm/layers.hpp"
#include "fatffm/model.hpp"
#include "fatffm/verify.hpp"
#include "test_util.hpp"

using namespace fatffm;
using testing::small_spec;

namespace {

// Second-order FFM term straight from the embedding table:
// sum_{i<j} <v[row_i, field j], v[row_j, field i]> x_i x_j.
double brute_ffm_pairs(const Tensor<double>& table,
                       const std::vector<std::size_t>& sizes,
                       const Instance& inst) {
  const std::size_t n = sizes.size();
  const std::size_t slots = table.dim(1);
  const std::size_t k = table.dim(2);
  std::vector<std::size_t> row(n);
  std::size_t offset = 0;
  for (std::size_t f = 0; f < n; ++f) {
    row[f] = offset + inst.features[f].index;
    offset += sizes[f];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t si = slots == 1 ? 0 : j;
      const std::size_t sj = slots == 1 ? 0 : i;
      double d = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        d += table[(row[i] * slots + si) * k + t] *
             table[(row[j] * slots + sj) * k + t];
      }
      total += d * inst.features[i].value * inst.features[j].value;
    }
  }
  return total;
}

double brute_linear(const Model<double>& m, const Instance& inst) {
  const auto& w = m.params().get("linear.weight");
  double z = m.params().get("linear.bias")[0];
  std::size_t offset = 0;
  for (std::size_t f = 0; f < inst.fields(); ++f) {
    z += inst.features[f].value * w[offset + inst.features[f].index];
    offset += m.spec().field_sizes[f];
  }
  return z;
}

Model<double> random_model(const ModelSpec& spec, std::uint64_t seed) {
  auto model = Model<double>::initialize(spec, seed);
  Rng rng(seed, 77);
  testing::randomize(model.params(), rng);
  return model;
}

}  // namespace

TEST_CASE("gather picks field-aware columns") {
  // Two fields, sizes {2, 3}, k = 1: table row r, slot s holds 10 r + s.
  const std::vector<std::size_t> sizes = {2, 3};
  const auto offsets = field_offsets(sizes);
  Tensor<double> table({5, 2, 1});
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t s = 0; s < 2; ++s) table[r * 2 + s] = 10.0 * r + s;
  }
  Instance inst{1, {{1, 1.0}, {2, 0.5}}};
  FieldMatrixSet<double> em(2, 1);
  gather_into<double>(inst, table, sizes, offsets, em);
  CHECK(em.column(0, 0)[0] == 10.0);
  CHECK(em.column(0, 1)[0] == 11.0);
  CHECK(em.column(1, 0)[0] == 0.5 * 40.0);
  CHECK(em.column(1, 1)[0] == 0.5 * 41.0);

  Instance bad{1, {{2, 1.0}, {0, 1.0}}};
  CHECK_THROWS_AS(gather_into<double>(bad, table, sizes, offsets, em), DataError);
}

TEST_CASE("compose, excite and rescale on hand-set values") {
  FieldMatrixSet<double> em(2, 2);
  em.data = {1.0, 2.0, -1.0, 0.5, 3.0, -4.0, 0.0, 1.0};
  std::vector<double> pre(4), desc(4);
  std::vector<std::uint32_t> argmax(4);

  SUBCASE("conv1x1 per slot") {
    std::vector<double> w = {1.0, 1.0, 2.0, 0.0, 0.0, 1.0, 1.0, -1.0};
    std::vector<double> b = {0.0, 0.5, -1.0, 0.0};
    ComposerView<double> view{ComposerMode::kConv1x1, w, b, 2};
    compose_into<double>(em, view, pre, argmax, desc);
    CHECK(desc == std::vector<double>{3.0, 0.0, 0.0, 0.0});
    CHECK(pre == std::vector<double>{3.0, -1.5, -5.0, -1.0});
  }
  SUBCASE("global max pool") {
    ComposerView<double> view{ComposerMode::kGlobalMaxPool, {}, {}, 0};
    compose_into<double>(em, view, pre, argmax, desc);
    CHECK(desc == std::vector<double>{2.0, 0.5, 3.0, 1.0});
    CHECK(argmax == std::vector<std::uint32_t>{1, 1, 0, 1});
  }
  SUBCASE("excitation is relu(W2 relu(W1 D)) and rescale multiplies columns") {
    const std::vector<double> d = {1.0, 2.0, 3.0, 4.0};
    const auto w1 = Tensor<double>::matrix(2, 4, {1, 0, 0, 0, 0, 0, 0, -1});
    const auto w2 = Tensor<double>::matrix(4, 2, {1, 0, 2, 0, -1, 0, 0, 5});
    std::vector<double> p1(2), h(2), p2(4), s(4);
    excite_into<double>(d, w1, w2, p1, h, p2, s);
    CHECK(h == std::vector<double>{1.0, 0.0});
    CHECK(s == std::vector<double>{1.0, 2.0, 0.0, 0.0});

    FieldMatrixSet<double> out(2, 2);
    rescale_into<double>(em, s, out);
    CHECK(out.data == std::vector<double>{1.0, 2.0, -2.0, 1.0, 0.0, -0.0, 0.0, 0.0});
  }
}

TEST_CASE("interaction layers agree with brute force") {
  Rng rng(2024, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(4);
    const std::size_t k = 1 + rng.below(4);
    FieldMatrixSet<double> m(n, k);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    const std::size_t pairs = pair_count(n);
    std::vector<double> inner(pairs), had(pairs * k);
    interact_inner_into<double>(m, inner);
    interact_hadamard_into<double>(m, had);
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        double expect = 0.0, seg = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
          const double prod = m.column(i, j)[t] * m.column(j, i)[t];
          expect += prod;
          seg += had[p * k + t];
          CHECK(had[p * k + t] == prod);
        }
        CHECK(std::abs(inner[p] - expect) <= 1e-12);
        CHECK(std::abs(seg - inner[p]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("shallow models match hand-looped formulas") {
  Rng rng(31, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    const std::size_t k = 1 + rng.below(4);
    for (const auto variant : {Variant::kLR, Variant::kFM, Variant::kFFM}) {
      auto spec = small_spec(variant, Interaction::kInner, n, k, 3);
      const auto model = random_model(spec, trial);
      const auto inst = testing::random_instance(spec.field_sizes, rng);
      double expect = brute_linear(model, inst);
      if (variant != Variant::kLR) {
        expect += brute_ffm_pairs(model.params().get("embedding"),
                                  spec.field_sizes, inst);
      }
      Workspace<double> ws;
      CHECK(std::abs(model.logit(inst, ws) - expect) <= 1e-10);
      CHECK(model.predict(inst) == doctest::Approx(sigmoid(expect)));
    }
  }
}

TEST_CASE("FFM with identical slots equals FM") {
  Rng rng(5, 0);
  const auto fm_spec = small_spec(Variant::kFM, Interaction::kInner, 4, 3);
  const auto fm = random_model(fm_spec, 1);
  auto ffm_spec = fm_spec;
  ffm_spec.variant = Variant::kFFM;
  auto params = make_param_layout<double>(ffm_spec);
  params.get("linear.weight") = fm.params().get("linear.weight");
  params.get("linear.bias") = fm.params().get("linear.bias");
  const auto& src = fm.params().get("embedding");
  auto& dst = params.get("embedding");
  for (std::size_t r = 0; r < src.dim(0); ++r) {
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t t = 0; t < 3; ++t) dst[(r * 4 + s) * 3 + t] = src[r * 3 + t];
    }
  }
  const Model<double> ffm(ffm_spec, params);
  Workspace<double> a, b;
  for (int i = 0; i < 50; ++i) {
    const auto inst = testing::random_instance(fm_spec.field_sizes, rng);
    CHECK(std::abs(ffm.logit(inst, a) - fm.logit(inst, b)) < 1e-12);
  }
}

TEST_CASE("attention bypass reproduces DeepFFM bitwise") {
  Rng rng(13, 0);
  for (const auto interaction : {Interaction::kInner, Interaction::kHadamard}) {
    auto fat_spec = small_spec(Variant::kFatDeepFFM, interaction, 4, 3);
    auto deep_spec = fat_spec;
    deep_spec.variant = Variant::kDeepFFM;
    const auto fat = random_model(fat_spec, 3).cast<float>();
    auto deep_params = make_param_layout<float>(deep_spec);
    for (std::size_t b = 0; b < deep_params.size(); ++b) {
      deep_params[b] = fat.params().get(deep_params.name(b));
    }
    const Model<float> deep(deep_spec, deep_params);
    Workspace<float> wf, wd;
    for (int i = 0; i < 100; ++i) {
      const auto inst = testing::random_instance(fat_spec.field_sizes, rng);
      const float a = fat.logit(inst, wf, {.attention_bypass = true});
      const float b = deep.logit(inst, wd);
      CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    }
  }
}

TEST_CASE("field attention is non-negative and unnormalized") {
  Rng rng(17, 0);
  bool above_one = false;
  for (int draw = 0; draw < 500; ++draw) {
    auto spec = small_spec(Variant::kFatDeepFFM, Interaction::kHadamard, 3, 2);
    const auto model = random_model(spec, draw);
    Workspace<double> ws;
    model.logit(testing::random_instance(spec.field_sizes, rng), ws);
    for (const double s : ws.attention) {
      CHECK(s >= 0.0);
      above_one = above_one || s > 1.0;
    }
  }
  CHECK(above_one);
}

TEST_CASE("MLP cross attention weights form a softmax") {
  Rng rng(19, 0);
  auto spec = small_spec(Variant::kMlpDeepFFM, Interaction::kHadamard, 4, 3);
  const auto model = random_model(spec, 4);
  Workspace<double> ws;
  model.logit(testing::random_instance(spec.field_sizes, rng), ws);
  double total = 0.0;
  for (const double a : ws.cross_mlp.weight) {
    CHECK(a > 0.0);
    total += a;
  }
  CHECK(ws.cross_mlp.weight.size() == spec.pairs());
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradients of every variant pass the numeric check") {
  GradcheckSetup setup;
  setup.seed = 3;
  for (const char* name :
       {"LR", "FM", "FFM", "DeepFFM-I", "DeepFFM-H", "FAT-DeepFFM-I",
        "FAT-DeepFFM-H", "FAT-DeepFFM-I/per_field", "FAT-DeepFFM-H/max_pool",
        "MLP-DeepFFM-I", "MLP-DeepFFM-H", "CE-DeepFFM-I", "CE-DeepFFM-H"}) {
    CAPTURE(name);
    const auto spec = parse_check_config(name, 3, 2);
    for (const auto& check : gradcheck_model(spec, name, setup)) {
      CAPTURE(check.block);
      CHECK(check.report.passed);
    }
  }
}

TEST_CASE("gradient check catches a corrupted block") {
  GradcheckSetup setup;
  setup.corrupt_block = "embedding";
  const auto spec = parse_check_config("FAT-DeepFFM-H", 3, 2);
  bool flagged = false;
  for (const auto& check : gradcheck_model(spec, "x", setup)) {
    if (check.block == "embedding") flagged = !check.report.passed;
    else CHECK(check.report.passed);
  }
  CHECK(flagged);
}

TEST_CASE("model construction validates the parameter layout") {
  auto spec = small_spec(Variant::kFFM, Interaction::kInner, 3, 2);
  auto params = make_param_layout<float>(spec);
  CHECK_NOTHROW(Model<float>(spec, params));
  auto wrong = spec;
  wrong.k = 3;
  CHECK_THROWS_AS(Model<float>(wrong, params), ConfigError);
}

TEST_CASE("spec validation lists every issue") {
  ModelSpec spec;
  spec.field_sizes = {5};
  spec.k = 0;
  spec.dropout = 1.0;
  try {
    spec.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() >= 3);
  }
}

TEST_CASE("spec names and JSON") {
  ModelSpec base;
  base.field_sizes = {3, 4, 5};
  CHECK(with_model_name(base, "DeepFFM-I").display_name() == "DeepFFM-I");
  CHECK(with_model_name(base, "CE-DeepFFM-H").display_name() == "CE-DeepFFM-H");
  CHECK(with_model_name(base, "FFM").display_name() == "FFM");
  CHECK_THROWS_AS(with_model_name(base, "Foo-H"), ConfigError);
  const auto spec = with_model_name(base, "MLP-DeepFFM-I");
  CHECK(ModelSpec::from_json(spec.to_json()) == spec);
}

TEST_CASE("checkpoints round-trip and detect damage") {
  auto spec = small_spec(Variant::kFatDeepFFM, Interaction::kHadamard, 3, 2);
  const auto model = random_model(spec, 8).cast<float>();
  const std::string bytes = serialize_checkpoint(model);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.spec() == model.spec());
  CHECK(back.params() == model.params());
  CHECK(serialize_checkpoint(back) == bytes);

  std::string flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)),
                  CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint("not a checkpoint"), CheckpointError);

  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir / "m.ckpt", model);
  CHECK(load_checkpoint(dir / "m.ckpt").params() == model.params());
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}
