#include "fatffm/trainer.hpp"

#include <cmath>
#include <numeric>
#include <thread>

#include "fatffm/adam.hpp"
#include "fatffm/error.hpp"

namespace fatffm {

void TrainConfig::validate() const {
  std::vector<std::string> issues;
  if (epochs == 0) issues.push_back("train.epochs: must be >= 1");
  if (batch_size == 0) issues.push_back("train.batch_size: must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    issues.push_back("train.learning_rate: must be a finite value >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) issues.push_back("train.beta1: must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) issues.push_back("train.beta2: must lie in [0, 1)");
  if (!(epsilon > 0.0)) issues.push_back("train.epsilon: must be > 0");
  if (eval_every == 0) issues.push_back("train.eval_every: must be >= 1");
  if (patience && *patience == 0) issues.push_back("train.patience: must be >= 1");
  if (threads == 0) issues.push_back("train.threads: must be >= 1");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"seed", seed},
          {"eval_every", eval_every},
          {"patience", patience ? nlohmann::json(*patience) : nlohmann::json()},
          {"eval_train", eval_train},
          {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("patience") && !j.at("patience").is_null()) {
      c.patience = j.at("patience").get<std::size_t>();
    }
    c.eval_train = j.value("eval_train", c.eval_train);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  return c;
}

nlohmann::json MetricRecord::to_json() const {
  nlohmann::json j = {{"epoch", epoch}};
  j.update(report.to_json());
  return j;
}

std::vector<double> predict_all(const Model<float>& model,
                                std::span<const Instance> rows) {
  Workspace<float> ws;
  std::vector<double> preds;
  preds.reserve(rows.size());
  for (const auto& row : rows) preds.push_back(model.predict(row, ws));
  return preds;
}

EvalReport evaluate(const Model<float>& model, std::span<const Instance> rows,
                    const std::string& split) {
  const auto preds = predict_all(model, rows);
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (const auto& row : rows) labels.push_back(row.label);
  EvalReport report;
  report.model = model.spec().display_name();
  report.split = split;
  report.count = rows.size();
  report.logloss = logloss(preds, labels);
  report.auc = auc(preds, labels);
  return report;
}

namespace {

struct Worker {
  ParamSet<float> grads;
  Workspace<float> ws;
  double loss = 0.0;
};

// Gradient of the mean batch loss over positions [begin, end) of order.
void batch_gradient(const Model<float>& model,
                    std::span<const Instance> rows,
                    std::span<const std::size_t> order, std::size_t begin,
                    std::size_t end, float scale, const Rng& epoch_rng,
                    Worker& worker) {
  worker.grads.zero();
  worker.loss = 0.0;
  const ForwardOptions options{.training = true};
  for (std::size_t pos = begin; pos < end; ++pos) {
    Rng dropout_rng = epoch_rng.fork(pos);
    worker.loss += model.accumulate_gradient(rows[order[pos]], worker.ws,
                                             worker.grads, options,
                                             &dropout_rng, scale);
  }
}

}  // namespace

TrainResult train(const ModelSpec& spec, const TrainConfig& config,
                  std::span<const Instance> train_rows,
                  std::span<const Instance> valid_rows,
                  const MetricSink& sink) {
  config.validate();
  spec.validate();
  if (train_rows.empty()) throw ConfigError("train: empty training data");
  if (valid_rows.empty()) throw ConfigError("train: empty validation data");
  validate_instances(train_rows, spec.field_sizes);
  validate_instances(valid_rows, spec.field_sizes);

  Model<float> model = Model<float>::initialize(spec, config.seed);
  TrainResult result{model, {}, 0, 0.0, false, {}};
  bool have_best = false;

  const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2,
                        config.epsilon};
  std::vector<AdamState<float>> adam;
  for (std::size_t b = 0; b < model.params().size(); ++b) {
    adam.emplace_back(model.params()[b].shape(), hyper);
  }

  const std::size_t threads = config.threads;
  std::vector<Worker> workers(threads);
  for (auto& w : workers) w.grads = model.params().zeros_like();
  ParamSet<float>& grads = workers[0].grads;

  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Rng shuffle_root(config.seed, /*stream=*/0x5f1e);
  const Rng dropout_root(config.seed, /*stream=*/0xd809);

  std::size_t stale_evals = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = shuffle_root.fork(epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    const Rng epoch_rng = dropout_root.fork(epoch);

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const float scale = 1.0f / static_cast<float>(end - start);
      if (threads == 1) {
        batch_gradient(model, train_rows, order, start, end, scale, epoch_rng,
                       workers[0]);
      } else {
        const std::size_t chunk = (end - start + threads - 1) / threads;
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
          const std::size_t b = std::min(end, start + t * chunk);
          const std::size_t e = std::min(end, b + chunk);
          pool.emplace_back([&, t, b, e] {
            batch_gradient(model, train_rows, order, b, e, scale, epoch_rng,
                           workers[t]);
          });
        }
        pool.clear();
        for (std::size_t t = 1; t < threads; ++t) {
          workers[0].loss += workers[t].loss;
          for (std::size_t blk = 0; blk < grads.size(); ++blk) {
            auto dst = grads[blk].values();
            const auto src = workers[t].grads[blk].values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      }
      if (!std::isfinite(workers[0].loss) || !grads.all_finite()) {
        result.diverged = true;
        result.divergence = "non-finite loss or gradient in epoch " +
                            std::to_string(epoch) + " at batch starting " +
                            std::to_string(start);
        if (!have_best) result.model = model;
        return result;
      }
      for (std::size_t b = 0; b < grads.size(); ++b) {
        adam_step(model.params()[b], grads[b], adam[b]);
      }
    }

    if (epoch % config.eval_every != 0 && epoch != config.epochs) continue;
    auto emit = [&](EvalReport report) {
      MetricRecord record{epoch, std::move(report)};
      if (sink) sink(record);
      result.history.push_back(std::move(record));
    };
    if (config.eval_train) emit(evaluate(model, train_rows, "train"));
    EvalReport valid = evaluate(model, valid_rows, "valid");
    const double valid_loss = valid.logloss;
    emit(std::move(valid));
    if (!std::isfinite(valid_loss)) {
      result.diverged = true;
      result.divergence = "non-finite validation logloss";
      if (!have_best) result.model = model;
      return result;
    }
    if (!have_best || valid_loss < result.best_valid_logloss) {
      have_best = true;
      result.model = model;
      result.best_epoch = epoch;
      result.best_valid_logloss = valid_loss;
      stale_evals = 0;
    } else if (config.patience && ++stale_evals >= *config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace fatffm
