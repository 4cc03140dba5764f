#include "fatffm/verify.hpp"

#include <cmath>

#include "fatffm/error.hpp"
#include "fatffm/model.hpp"

namespace fatffm {

ModelSpec parse_check_config(const std::string& text, std::size_t fields,
                             std::size_t k) {
  ModelSpec base;
  base.field_sizes.assign(fields, 3);
  base.k = k;
  base.hidden = {6, 5, 4};
  base.dropout = 0.5;
  base.attention_width = 5;
  std::string name = text;
  std::string option;
  if (const auto slash = text.find('/'); slash != std::string::npos) {
    name = text.substr(0, slash);
    option = text.substr(slash + 1);
  }
  ModelSpec spec = with_model_name(base, name);
  if (option == "max_pool") {
    spec.composer = ComposerMode::kGlobalMaxPool;
  } else if (option == "per_field") {
    spec.composer_sharing = ComposerSharing::kPerField;
  } else if (!option.empty()) {
    throw ConfigError("unknown gradcheck option '" + option + "'");
  }
  return spec;
}

std::vector<std::string> default_gradcheck_configs() {
  return {"LR",           "FM",
          "FFM",          "DeepFFM-I",
          "DeepFFM-H",    "FAT-DeepFFM-I",
          "FAT-DeepFFM-H", "MLP-DeepFFM-H",
          "CE-DeepFFM-H", "FAT-DeepFFM-H/max_pool"};
}

std::vector<BlockCheck> gradcheck_model(const ModelSpec& spec,
                                        const std::string& config_name,
                                        const GradcheckSetup& setup) {
  Model<double> model = Model<double>::initialize(spec, setup.seed);
  std::vector<Instance> rows(setup.instances);
  const ForwardOptions options{.training = true};
  const double scale = 1.0 / static_cast<double>(rows.size());
  Workspace<double> ws;
  ParamSet<double> grads;

  auto draw = [&](Rng rng) {
    for (std::size_t b = 0; b < model.params().size(); ++b) {
      for (auto& v : model.params()[b].values()) v = rng.uniform(-0.8, 0.8);
    }
    for (auto& row : rows) {
      row.label = rng.bernoulli(0.5) ? 1 : 0;
      row.features.clear();
      for (const auto size : spec.field_sizes) {
        row.features.push_back({static_cast<std::uint32_t>(rng.below(size)),
                                rng.uniform(0.5, 1.5)});
      }
    }
    grads = model.params().zeros_like();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Rng mask_rng(setup.seed, /*stream=*/1000 + r);
      model.accumulate_gradient(rows[r], ws, grads, options, &mask_rng, scale);
    }
  };
  auto block_live = [&](std::size_t b) {
    for (const double g : grads[b].values()) {
      if (std::abs(g) > 1e-9) return true;
    }
    return false;
  };
  auto all_live = [&] {
    for (std::size_t b = 0; b < grads.size(); ++b) {
      if (!block_live(b)) return false;
    }
    return true;
  };

  // Small ReLU stacks under dropout can go fully dead, which would make the
  // comparison vacuous; redraw until every block carries gradient.
  const Rng base(setup.seed, /*stream=*/0x9c4e);
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    draw(base.fork(attempt));
    if (all_live()) break;
  }

  auto objective = [&]() {
    GradProbe probe;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Rng mask_rng(setup.seed, /*stream=*/1000 + r);
      const double z = model.logit(rows[r], ws, options, &mask_rng);
      probe.value += scale * logit_loss(z, static_cast<double>(rows[r].label));
      probe.kink_signature =
          probe.kink_signature * 31 + model.kink_signature(ws);
    }
    return probe;
  };

  std::vector<BlockCheck> checks;
  for (std::size_t b = 0; b < model.params().size(); ++b) {
    Tensor<double> analytic = grads[b];
    if (setup.corrupt_block && *setup.corrupt_block == model.params().name(b)) {
      for (auto& g : analytic.values()) g += 0.1;
    }
    const Tensor<double> original = model.params()[b];
    ProbeFn f = [&, b](const Tensor<double>& p) {
      model.params()[b] = p;
      return objective();
    };
    BlockCheck check;
    check.config = config_name;
    check.block = model.params().name(b);
    check.size = original.size();
    check.report = grad_check(f, original, analytic, setup.options);
    if (check.report.passed && !block_live(b)) {
      check.report.passed = false;
      check.report.failure = "gradient is identically zero";
    }
    model.params()[b] = original;
    checks.push_back(std::move(check));
  }
  return checks;
}

}  // namespace fatffm
