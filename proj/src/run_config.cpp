#include "fatffm/run_config.hpp"

#include <fstream>

#include "fatffm/ablation.hpp"
#include "fatffm/error.hpp"

namespace fatffm {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal();
}

template <typename V>
void read_field(const nlohmann::json& obj, const char* section,
                const char* key, V& out, std::vector<std::string>& issues) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    issues.push_back(std::string(section) + "." + key + ": wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir) {
  std::vector<std::string> issues;
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");

  const int version = j.value("version", kRunConfigVersion);
  if (version != kRunConfigVersion) {
    issues.push_back("version: unsupported config version " +
                     std::to_string(version));
  }

  const nlohmann::json data = j.value("data", nlohmann::json::object());
  std::string train_path;
  read_field(data, "data", "train", train_path, issues);
  if (train_path.empty()) {
    issues.push_back("data.train: missing training data path");
  } else {
    c.data.train = resolve(base_dir, train_path);
  }
  for (auto [key, slot] :
       {std::pair{"valid", &c.data.valid}, std::pair{"test", &c.data.test},
        std::pair{"vocab", &c.data.vocab}}) {
    std::string p;
    read_field(data, "data", key, p, issues);
    if (!p.empty()) *slot = resolve(base_dir, p);
  }
  read_field(data, "data", "valid_fraction", c.data.valid_fraction, issues);
  if (!(c.data.valid_fraction > 0.0 && c.data.valid_fraction < 1.0)) {
    issues.push_back("data.valid_fraction: must lie in (0, 1)");
  }
  read_field(data, "data", "field_sizes", c.data.field_sizes, issues);

  const nlohmann::json model = j.value("model", nlohmann::json::object());
  auto& m = c.model;
  std::string text;
  text.clear();
  read_field(model, "model", "variant", text, issues);
  if (!text.empty()) {
    try {
      m.variant = parse_variant(text);
    } catch (const ConfigError& e) {
      issues.push_back(std::string("model.variant: ") + e.what());
    }
  }
  text.clear();
  read_field(model, "model", "interaction", text, issues);
  if (!text.empty()) {
    try {
      m.interaction = parse_interaction(text);
    } catch (const ConfigError& e) {
      issues.push_back(std::string("model.interaction: ") + e.what());
    }
  }
  read_field(model, "model", "k", m.k, issues);
  read_field(model, "model", "hidden", m.hidden, issues);
  read_field(model, "model", "dropout", m.dropout, issues);
  text.clear();
  read_field(model, "model", "composer", text, issues);
  if (!text.empty()) {
    try {
      m.composer = parse_composer_mode(text);
    } catch (const ConfigError& e) {
      issues.push_back(std::string("model.composer: ") + e.what());
    }
  }
  text.clear();
  read_field(model, "model", "composer_sharing", text, issues);
  if (!text.empty()) {
    try {
      m.composer_sharing = parse_composer_sharing(text);
    } catch (const ConfigError& e) {
      issues.push_back(std::string("model.composer_sharing: ") + e.what());
    }
  }
  read_field(model, "model", "reduction", m.reduction, issues);
  read_field(model, "model", "attention_width", m.attention_width, issues);
  if (m.k == 0) issues.push_back("model.k: embedding size must be >= 1");
  if (!(m.dropout >= 0.0 && m.dropout < 1.0)) {
    issues.push_back("model.dropout: must lie in [0, 1)");
  }
  if (m.reduction == 0) issues.push_back("model.reduction: must be >= 1");

  try {
    c.train = TrainConfig::from_json(j.value("train", nlohmann::json::object()));
    c.train.validate();
  } catch (const ConfigError& e) {
    for (const auto& issue : e.issues()) issues.push_back(issue);
  }

  std::string out;
  read_field(j, "config", "output_dir", out, issues);
  if (out.empty()) {
    issues.push_back("output_dir: missing output directory");
  } else {
    c.output_dir = resolve(base_dir, out);
  }

  const nlohmann::json ablation = j.value("ablation", nlohmann::json::object());
  c.ablation_models = default_ablation_models();
  read_field(ablation, "ablation", "models", c.ablation_models, issues);
  for (const auto& name : c.ablation_models) {
    try {
      with_model_name(c.model, name);
    } catch (const ConfigError& e) {
      issues.push_back(std::string("ablation.models: ") + e.what());
    }
  }

  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " +
                      e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json RunConfig::to_json() const {
  auto opt = [](const std::optional<std::filesystem::path>& p) {
    return p ? nlohmann::json(p->string()) : nlohmann::json();
  };
  nlohmann::json model_json = model.to_json();
  model_json.erase("field_sizes");
  return {{"version", kRunConfigVersion},
          {"data",
           {{"train", data.train.string()},
            {"valid", opt(data.valid)},
            {"test", opt(data.test)},
            {"vocab", opt(data.vocab)},
            {"valid_fraction", data.valid_fraction},
            {"field_sizes", data.field_sizes}}},
          {"model", model_json},
          {"train", train.to_json()},
          {"output_dir", output_dir.string()},
          {"ablation", {{"models", ablation_models}}}};
}

}  // namespace fatffm
