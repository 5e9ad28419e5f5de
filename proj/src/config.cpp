#include "sleicl/config.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;

const ModelSpec& PipelineConfig::model_by_id(const std::string& id) const {
  for (const auto& m : models) {
    if (m.id == id) return m;
  }
  throw ConfigError("unknown model id: " + id);
}

const TaskConfig& PipelineConfig::task_by_name(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.spec.name == name) return t;
  }
  throw ConfigError("unknown task: " + name);
}

const ModelSpec& PipelineConfig::strong_model() const {
  return model_by_id(run.strong_model);
}

const ModelSpec& PipelineConfig::weak_model() const {
  return model_by_id(run.weak_model);
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  if (p.is_absolute()) return p;
  return base_dir / p;
}

namespace {

ModelSpec parse_model(const json& obj) {
  ModelSpec m;
  m.id = obj.at("id").get<std::string>();
  const std::string role = obj.value("role", std::string("weak"));
  if (role == "strong") m.role = ModelRole::strong;
  else if (role == "weak") m.role = ModelRole::weak;
  else throw ConfigError("model " + m.id + ": role must be strong or weak");
  if (obj.contains("param_count_billions") && !obj["param_count_billions"].is_null())
    m.param_count_billions = obj["param_count_billions"].get<double>();
  m.endpoint = obj.at("endpoint").get<std::string>();
  m.max_context_tokens = obj.value("max_context_tokens", 4096);
  m.temperature = obj.value("temperature", 0.0);
  m.max_output_tokens = obj.value("max_output_tokens", 1024);
  m.mock_behavior = obj.value("mock_behavior", std::string("rule"));
  m.noncompliance_p = obj.value("noncompliance_p", 0.0);
  m.mock_seed = obj.value("mock_seed", uint64_t{0});
  return m;
}

TaskConfig parse_task(const json& obj) {
  TaskConfig t;
  t.spec.name = obj.at("name").get<std::string>();
  t.spec.task_type = task_type_from_string(obj.value("task_type", std::string("other")));
  t.spec.description = obj.at("description").get<std::string>();
  t.spec.labels = obj.at("labels").get<std::vector<std::string>>();
  t.spec.few_shot_n = obj.value("few_shot_n", 4);
  t.spec.k_per_label = obj.value("k_per_label", 4);
  t.max_tokens = obj.value("max_tokens", size_t{512});

  const auto& ds = obj.at("dataset");
  t.dataset.path = ds.at("path").get<std::string>();
  if (ds.contains("field_map")) {
    const auto& fm = ds["field_map"];
    t.dataset.field_map.text = fm.value("text", std::string("text"));
    t.dataset.field_map.label = fm.value("label", std::string("label"));
    t.dataset.field_map.id = fm.value("id", std::string("id"));
    t.dataset.field_map.premise = fm.value("premise", std::string{});
    t.dataset.field_map.hypothesis = fm.value("hypothesis", std::string{});
  }
  if (ds.contains("presplit_eval_path") && !ds["presplit_eval_path"].is_null())
    t.dataset.presplit_eval_path = ds["presplit_eval_path"].get<std::string>();

  if (obj.contains("mock_rule") && !obj["mock_rule"].is_null()) {
    const auto& r = obj["mock_rule"];
    MockRule rule;
    rule.trigger_token = r.at("trigger_token").get<std::string>();
    rule.trigger_label = r.at("trigger_label").get<std::string>();
    rule.default_label = r.at("default_label").get<std::string>();
    rule.rule_sentence = r.at("rule_sentence").get<std::string>();
    t.mock_rule = rule;
  }
  return t;
}

}  // namespace

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("config file does not exist: " + path.string());

  json obj;
  try {
    obj = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }

  PipelineConfig config;
  config.base_dir = std::filesystem::absolute(path).parent_path();
  config.config_hash = sha256_hex(obj.dump());

  std::vector<std::string> errors;
  auto fail = [&errors](const std::string& message) { errors.push_back(message); };

  try {
    config.global_seed = obj.value("global_seed", int64_t{0});
    if (obj.contains("dirs")) {
      const auto& dirs = obj["dirs"];
      config.cache_dir = dirs.value("cache", std::string("cache"));
      config.runs_dir = dirs.value("runs", std::string("runs"));
      config.grimoires_dir = dirs.value("grimoires", std::string("grimoires"));
      config.processed_dir = dirs.value("processed", std::string("processed"));
      config.selections_dir = dirs.value("selections", std::string("selections"));
      config.models_dir = dirs.value("models", std::string("models"));
    }
    if (obj.contains("embedding")) {
      const auto& e = obj["embedding"];
      config.embedding.provider = e.value("provider", std::string("trigram-test"));
      config.embedding.url = e.value("url", std::string{});
      config.embedding.api_key_env = e.value("api_key_env", std::string{});
      config.embedding.max_input_bytes = e.value("max_input_bytes", size_t{8192});
    }

    for (const auto& m : obj.value("models", json::array())) {
      try {
        config.models.push_back(parse_model(m));
      } catch (const std::exception& e) {
        fail(std::string("model entry: ") + e.what());
      }
    }
    for (const auto& t : obj.value("tasks", json::array())) {
      try {
        config.tasks.push_back(parse_task(t));
      } catch (const std::exception& e) {
        fail(std::string("task entry: ") + e.what());
      }
    }

    if (obj.contains("selection")) {
      const auto& s = obj["selection"];
      config.selection.c = s.value("c", 4);
      config.selection.n = s.value("n", 1);
      config.selection.k = s.value("k", 4);
      config.selection.kmeans_restarts = s.value("kmeans_restarts", 1);
      config.selection.kmeans_max_iters = s.value("kmeans_max_iters", 100);
      if (s.contains("hss_ratios"))
        config.hss_ratios = s["hss_ratios"].get<std::vector<double>>();
    }
    config.selection.seed = config.global_seed;

    if (obj.contains("grimoire_caps")) {
      config.grimoire_caps.pg_words = obj["grimoire_caps"].value("pg_words", 600);
      config.grimoire_caps.sg_words = obj["grimoire_caps"].value("sg_words", 120);
    }

    if (obj.contains("run")) {
      const auto& r = obj["run"];
      config.run.weak_model = r.value("weak_model", std::string{});
      config.run.strong_model = r.value("strong_model", std::string{});
      if (r.contains("modes"))
        config.run.modes = r["modes"].get<std::vector<std::string>>();
      config.run.min_valid = r.value("min_valid", 500);
      config.run.few_shot_n = r.value("few_shot_n", 4);
      config.run.worker_width = r.value("worker_width", 4);
    }

    if (obj.contains("ranker")) {
      const auto& r = obj["ranker"];
      config.ranker.net.tower_hidden = r.value("tower_hidden", size_t{512});
      config.ranker.net.d_model = r.value("d_model", size_t{256});
      config.ranker.net.res_hidden = r.value("res_hidden", size_t{256});
      if (r.contains("head_hidden"))
        config.ranker.net.head_hidden = r["head_hidden"].get<std::vector<size_t>>();
      config.ranker.net.dropout = r.value("dropout", 0.1);
      config.ranker.hyper.batch = r.value("batch", size_t{1024});
      config.ranker.hyper.lr = r.value("lr", 0.001);
      config.ranker.hyper.epochs = r.value("epochs", 500);
      config.ranker.hyper.early_stop_train_acc = r.value("early_stop_train_acc", 0.0);
    }
    config.ranker.hyper.seed = static_cast<uint64_t>(config.global_seed);
  } catch (const json::exception& e) {
    fail(std::string("config structure: ") + e.what());
  }

  // Semantic validation; every problem is collected.
  std::set<std::string> model_ids;
  int strong_count = 0;
  for (const auto& m : config.models) {
    if (!model_ids.insert(m.id).second) fail("duplicate model id: " + m.id);
    if (m.role == ModelRole::strong) ++strong_count;
  }
  if (strong_count != 1)
    fail("exactly one strong model must be designated, found " +
         std::to_string(strong_count));

  std::set<std::string> task_names;
  for (const auto& t : config.tasks) {
    if (!task_names.insert(t.spec.name).second)
      fail("duplicate task name: " + t.spec.name);
    try {
      t.spec.validate();
    } catch (const std::exception& e) {
      fail(e.what());
    }
    const auto dataset_path = config.resolve(t.dataset.path);
    if (!std::filesystem::exists(dataset_path))
      fail("task " + t.spec.name + ": dataset path does not exist: " +
           dataset_path.string());
    if (t.dataset.presplit_eval_path) {
      const auto eval_path = config.resolve(*t.dataset.presplit_eval_path);
      if (!std::filesystem::exists(eval_path))
        fail("task " + t.spec.name + ": presplit eval path does not exist: " +
             eval_path.string());
    }
    if (t.mock_rule) {
      if (!t.spec.has_label(t.mock_rule->trigger_label))
        fail("task " + t.spec.name + ": mock_rule trigger_label not in labels");
      if (!t.spec.has_label(t.mock_rule->default_label))
        fail("task " + t.spec.name + ": mock_rule default_label not in labels");
    }
  }
  if (config.tasks.empty()) fail("at least one task is required");
  if (config.models.empty()) fail("at least one model is required");

  if (!config.run.weak_model.empty() && model_ids.count(config.run.weak_model) == 0)
    fail("run.weak_model references unknown model: " + config.run.weak_model);
  if (!config.run.strong_model.empty() &&
      model_ids.count(config.run.strong_model) == 0)
    fail("run.strong_model references unknown model: " + config.run.strong_model);
  if (config.run.modes.empty()) fail("run.modes must be non-empty");
  const std::set<std::string> known_modes{"zero_shot", "few_shot", "single_grimoire",
                                          "sleicl_similarity", "sleicl_classifier"};
  for (const auto& mode : config.run.modes) {
    if (known_modes.count(mode) == 0) fail("unknown run mode: " + mode);
  }
  if (config.run.min_valid < 1) fail("run.min_valid must be >= 1");
  for (double r : config.hss_ratios) {
    if (r < 0.0 || r > 1.0)
      fail("selection.hss_ratios entries must lie in [0,1]");
  }
  if (config.embedding.provider != "trigram-test" &&
      config.embedding.provider != "remote")
    fail("embedding.provider must be trigram-test or remote");
  if (config.embedding.provider == "remote" && config.embedding.url.empty())
    fail("embedding.provider=remote requires embedding.url");

  if (!errors.empty()) {
    std::ostringstream message;
    message << "config validation failed with " << errors.size() << " error(s):";
    for (const auto& e : errors) message << "\n  - " << e;
    throw ConfigError(message.str());
  }
  return config;
}

void force_mock(PipelineConfig& config) {
  for (auto& m : config.models) m.endpoint = "mock";
  config.embedding.provider = "trigram-test";
}

}  // namespace sleicl
