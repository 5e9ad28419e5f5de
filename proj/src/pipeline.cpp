#include "sleicl/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;

RunLock::RunLock(const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  lock_path_ = run_dir / ".lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw ConfigError("run directory is locked by another process: " +
                      run_dir.string() + " (remove .lock if stale)");
  ::close(fd);
  held_ = true;
}

RunLock::~RunLock() {
  if (held_) {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
  }
}

Pipeline::Pipeline(PipelineConfig config, std::string run_id, bool dry_run)
    : config_(std::move(config)), run_id_(std::move(run_id)), dry_run_(dry_run) {}

EmbeddingProvider& Pipeline::provider() {
  if (!provider_) {
    std::shared_ptr<EmbeddingProvider> base;
    if (config_.embedding.provider == "remote") {
      base = std::make_shared<RemoteEmbeddingProvider>(
          "remote-embedder", config_.embedding.url, config_.embedding.api_key_env,
          config_.embedding.max_input_bytes);
    } else {
      base = std::make_shared<TrigramHashProvider>(config_.embedding.max_input_bytes);
    }
    provider_ = std::make_shared<CachingProvider>(
        base, config_.resolve(config_.cache_dir) / "embeddings");
  }
  return *provider_;
}

Gateway& Pipeline::gateway() {
  if (!gateway_) {
    std::map<std::string, MockRule> rules;
    for (const auto& t : config_.tasks) {
      if (t.mock_rule) rules[t.spec.name] = *t.mock_rule;
    }
    gateway_ = std::make_unique<Gateway>(std::move(rules), config_.run.worker_width);
  }
  return *gateway_;
}

GrimoireStore& Pipeline::store() {
  if (!store_) {
    store_ = std::make_unique<GrimoireStore>(config_.resolve(config_.grimoires_dir));
  }
  return *store_;
}

std::filesystem::path Pipeline::run_dir() const {
  return config_.resolve(config_.runs_dir) / run_id_;
}

std::filesystem::path Pipeline::model_artifact_path() const {
  return config_.resolve(config_.models_dir) /
         ("utility__" + config_.run.weak_model + "__schema" +
          std::to_string(kFeatureSchemaVersion) + ".json");
}

SampleSet Pipeline::load_processed(const TaskConfig& task) const {
  const auto dir = config_.resolve(config_.processed_dir) / task.spec.name;
  const auto train_path = dir / "train.jsonl";
  const auto eval_path = dir / "eval.jsonl";
  if (!std::filesystem::exists(train_path) || !std::filesystem::exists(eval_path))
    throw DependencyError("missing processed partitions for task " + task.spec.name +
                          " (" + train_path.string() + "); run preprocess first");
  SampleSet set;
  set.task = task.spec.name;
  set.split_seed = config_.global_seed;
  set.train = read_canonical_jsonl(train_path);
  set.eval = read_canonical_jsonl(eval_path);
  return set;
}

void Pipeline::preprocess() {
  for (const auto& task : config_.tasks) {
    const auto dir = config_.resolve(config_.processed_dir) / task.spec.name;
    const auto train_path = dir / "train.jsonl";
    const auto eval_path = dir / "eval.jsonl";
    if (std::filesystem::exists(train_path) && std::filesystem::exists(eval_path)) {
      std::cout << "preprocess " << task.spec.name << ": cached\n";
      continue;
    }
    if (dry_run_) {
      std::cout << "preprocess " << task.spec.name << ": planned model calls: 0\n";
      continue;
    }

    const LoadResult loaded =
        load_samples(config_.resolve(task.dataset.path), task.spec,
                     task.dataset.field_map);
    const auto filtered = filter_overlong(loaded.samples, task.max_tokens);

    SampleSet set;
    if (task.dataset.presplit_eval_path) {
      const LoadResult eval_loaded =
          load_samples(config_.resolve(*task.dataset.presplit_eval_path), task.spec,
                       task.dataset.field_map);
      set.task = task.spec.name;
      set.split_seed = config_.global_seed;
      set.train = filtered;
      set.eval = filter_overlong(eval_loaded.samples, task.max_tokens);
    } else {
      set = split_train_eval(filtered, task.spec.name, config_.global_seed);
    }
    write_canonical_jsonl(train_path, set.train);
    write_canonical_jsonl(eval_path, set.eval);
    std::cout << "preprocess " << task.spec.name << ": " << loaded.samples.size()
              << " rows (" << loaded.skipped_unknown_label << " skipped labels), "
              << filtered.size() << " after length filter, train "
              << set.train.size() << " / eval " << set.eval.size() << "\n";
  }
}

void Pipeline::annotate() {
  const ModelSpec& weak = config_.weak_model();
  const auto cache_dir = config_.resolve(config_.cache_dir) / "annotations";
  for (const auto& task : config_.tasks) {
    const SampleSet set = load_processed(task);
    const auto cache_file =
        cache_dir / (weak.id + "__" + task.spec.name + ".jsonl");
    size_t cached = 0;
    if (std::filesystem::exists(cache_file)) {
      std::set<std::string> train_ids;
      for (const auto& s : set.train) train_ids.insert(s.id);
      for_each_line(cache_file, [&](std::string_view line) {
        json obj = json::parse(line);
        if (train_ids.count(obj.at("sample_id").get<std::string>())) ++cached;
      });
    }
    if (dry_run_) {
      std::cout << "annotate " << task.spec.name
                << ": planned model calls: " << set.train.size() - cached << "\n";
      continue;
    }
    if (cached == set.train.size()) {
      std::cout << "annotate " << task.spec.name << ": cached\n";
      continue;
    }
    const auto annotations =
        gateway().annotate_training_set(weak, task.spec, set.train, cache_dir);
    size_t hard = 0;
    for (const auto& a : annotations) hard += a.is_hard ? 1 : 0;
    std::cout << "annotate " << task.spec.name << ": " << annotations.size()
              << " annotations, " << hard << " hard\n";
  }
}

std::vector<HardnessAnnotation> Pipeline::cached_annotations(
    const TaskConfig& task, const SampleSet& set) const {
  const auto cache_file = config_.resolve(config_.cache_dir) / "annotations" /
                          (config_.run.weak_model + "__" + task.spec.name + ".jsonl");
  if (!std::filesystem::exists(cache_file))
    throw DependencyError("missing hardness annotations for task " + task.spec.name +
                          " (" + cache_file.string() + "); run annotate first");
  std::map<std::string, HardnessAnnotation> by_id;
  for_each_line(cache_file, [&](std::string_view line) {
    json obj = json::parse(line);
    HardnessAnnotation a;
    a.sample_id = obj.at("sample_id").get<std::string>();
    a.predicted_label = obj.value("predicted_label", std::string{});
    a.is_hard = obj.at("is_hard").get<bool>();
    by_id[a.sample_id] = std::move(a);
  });
  std::vector<HardnessAnnotation> out;
  out.reserve(set.train.size());
  for (const auto& s : set.train) {
    auto it = by_id.find(s.id);
    if (it == by_id.end())
      throw DependencyError("annotation cache incomplete for task " +
                            task.spec.name + " (sample " + s.id +
                            "); rerun annotate");
    out.push_back(it->second);
  }
  return out;
}

std::map<std::string, Embedding> Pipeline::train_embeddings(const SampleSet& set) {
  std::map<std::string, Embedding> out;
  for (const auto& s : set.train) out.emplace(s.id, provider().embed(s.text));
  return out;
}

void Pipeline::select() {
  for (const auto& task : config_.tasks) {
    const SampleSet set = load_processed(task);
    const auto out_path =
        config_.resolve(config_.selections_dir) / (task.spec.name + ".json");
    if (std::filesystem::exists(out_path)) {
      std::cout << "select " << task.spec.name << ": cached\n";
      continue;
    }
    if (dry_run_) {
      std::cout << "select " << task.spec.name << ": planned model calls: 0\n";
      continue;
    }
    const auto embeddings = train_embeddings(set);
    const auto annotations = cached_annotations(task, set);

    SelectionParams params = config_.selection;
    params.k = task.spec.k_per_label;
    params.c = task.spec.k_per_label;  // (c=k, n=1) convention

    json doc = json::object();
    auto record = [&](const std::string& key, SelectionMethod method, double r) {
      SelectionParams p = params;
      p.r = r;
      const SampleSelection sel =
          make_selection(task.spec, set, embeddings, method, p,
                         method == SelectionMethod::HSS ? &annotations : nullptr);
      doc[key] = json::parse(sel.to_json());
    };
    record("KCS", SelectionMethod::KCS, 0.0);
    record("HCS", SelectionMethod::HCS, 0.0);
    for (double r : config_.hss_ratios) {
      std::ostringstream key;
      key << "HSS@" << r;
      record(key.str(), SelectionMethod::HSS, r);
    }
    record("RSS", SelectionMethod::RSS, 0.0);
    record("ZeroShot", SelectionMethod::ZeroShot, 0.0);
    write_file(out_path, doc.dump(2) + "\n");
    std::cout << "select " << task.spec.name << ": " << doc.size()
              << " selection records\n";
  }
}

void Pipeline::generate() {
  const ModelSpec& strong = config_.strong_model();
  for (const auto& task : config_.tasks) {
    const SampleSet set = load_processed(task);
    const auto selections_path =
        config_.resolve(config_.selections_dir) / (task.spec.name + ".json");
    if (!std::filesystem::exists(selections_path))
      throw DependencyError("missing selection records for task " + task.spec.name +
                            " (" + selections_path.string() + "); run select first");

    GenerationOptions options;
    options.caps = config_.grimoire_caps;
    options.selection = config_.selection;
    options.selection.k = task.spec.k_per_label;
    options.selection.c = task.spec.k_per_label;
    options.hss_ratios = config_.hss_ratios;

    const auto embeddings = train_embeddings(set);
    const auto annotations = cached_annotations(task, set);

    if (dry_run_) {
      // Two strong-model calls per uncached combination (PG, then SG).
      size_t planned = 0;
      const size_t combos = 3 + config_.hss_ratios.size();
      planned = 2 * (combos + 1);  // +1: zero-shot combo
      std::cout << "generate " << task.spec.name
                << ": planned model calls: " << planned << " (minus cached)\n";
      continue;
    }

    const GenerationResult result = generate_grimoire_set(
        task.spec, set, embeddings, annotations, strong, gateway(), provider(),
        store(), options);
    std::cout << "generate " << task.spec.name << ": " << result.grimoires.size()
              << " grimoires (" << result.cached << " cached, "
              << result.errors.size() << " errors)\n";
    for (const auto& e : result.errors)
      std::cout << "  error " << e.key << ": " << e.message << "\n";
  }
}

void Pipeline::check_manifest() {
  const auto manifest_path = run_dir() / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    json manifest = json::parse(read_file(manifest_path));
    if (manifest.at("config_hash").get<std::string>() != config_.config_hash)
      throw ConfigError("run " + run_id_ +
                        " is immutable: config hash mismatch; use a new --run-id");
    return;
  }
  json manifest{{"run_id", run_id_},
                {"config_hash", config_.config_hash},
                {"code_version", kCodeVersion},
                {"seed", config_.global_seed},
                {"weak_model", config_.run.weak_model}};
  write_file(manifest_path, manifest.dump(2) + "\n");
}

void Pipeline::evaluate() {
  const ModelSpec& weak = config_.weak_model();
  const bool needs_grimoires =
      std::any_of(config_.run.modes.begin(), config_.run.modes.end(),
                  [](const std::string& m) { return m != "zero_shot" && m != "few_shot"; });
  const bool needs_classifier =
      std::count(config_.run.modes.begin(), config_.run.modes.end(),
                 std::string("sleicl_classifier")) > 0;

  std::unique_ptr<UtilityModel> classifier;
  if (needs_classifier && !dry_run_) {
    const auto path = model_artifact_path();
    if (!std::filesystem::exists(path))
      throw DependencyError("missing utility model artifact " + path.string() +
                            "; run train-ranker first");
    classifier = std::make_unique<UtilityModel>(
        UtilityModel::from_json(read_file(path)));
  }

  std::unique_ptr<RunLock> lock;
  if (!dry_run_) {
    lock = std::make_unique<RunLock>(run_dir());
    check_manifest();
  }
  const auto pred_dir = run_dir() / "predictions";

  for (const auto& task : config_.tasks) {
    const SampleSet set = load_processed(task);
    std::vector<Grimoire> candidates;
    if (needs_grimoires) {
      candidates = store().load_all(task.spec.name);
      if (candidates.empty())
        throw DependencyError("no grimoires stored for task " + task.spec.name +
                              "; run generate first");
    }

    struct Job {
      std::string mode;
      std::string grimoire_id;
      std::filesystem::path path;
      std::function<std::vector<EvalRecord>()> run;
    };
    std::vector<Job> jobs;
    auto log_path = [&](const std::string& mode, const std::string& gid) {
      std::string name = task.spec.name + "__" + mode;
      if (!gid.empty()) name += "__" + gid;
      return pred_dir / (name + ".jsonl");
    };

    for (const auto& mode : config_.run.modes) {
      if (mode == "zero_shot") {
        jobs.push_back({mode, "", log_path(mode, ""), [&, this]() {
                          return run_zero_shot(gateway(), weak, task.spec, set.eval,
                                               run_id_);
                        }});
      } else if (mode == "few_shot") {
        jobs.push_back({mode, "", log_path(mode, ""), [&, this]() {
                          return run_few_shot(
                              gateway(), weak, task.spec, set.eval, set.train,
                              config_.run.few_shot_n,
                              static_cast<uint64_t>(config_.global_seed), run_id_);
                        }});
      } else if (mode == "single_grimoire") {
        for (const auto& g : candidates) {
          jobs.push_back({mode, g.id, log_path(mode, g.id), [&, this]() {
                            return run_single_grimoire(gateway(), weak, task.spec,
                                                       set.eval, g, run_id_);
                          }});
        }
      } else if (mode == "sleicl_similarity") {
        jobs.push_back({mode, "", log_path(mode, ""), [&, this]() {
                          return run_sleicl(gateway(), weak, task.spec, set.eval,
                                            candidates,
                                            make_similarity_scorer(provider()), mode,
                                            run_id_);
                        }});
      } else if (mode == "sleicl_classifier") {
        jobs.push_back({mode, "", log_path(mode, ""), [&, this]() {
                          return run_sleicl(
                              gateway(), weak, task.spec, set.eval, candidates,
                              make_classifier_scorer(*classifier, weak, task.spec,
                                                     provider()),
                              mode, run_id_);
                        }});
      }
    }

    for (const auto& job : jobs) {
      if (std::filesystem::exists(job.path)) {
        std::cout << "evaluate " << task.spec.name << " " << job.mode
                  << (job.grimoire_id.empty() ? "" : " " + job.grimoire_id)
                  << ": cached\n";
        continue;
      }
      if (dry_run_) {
        std::cout << "evaluate " << task.spec.name << " " << job.mode
                  << (job.grimoire_id.empty() ? "" : " " + job.grimoire_id)
                  << ": planned model calls: " << set.eval.size() << "\n";
        continue;
      }
      const auto records = job.run();
      write_eval_records(job.path, records);
      const Accuracy acc = accuracy_with_validity(records, config_.run.min_valid);
      std::cout << "evaluate " << task.spec.name << " " << job.mode
                << (job.grimoire_id.empty() ? "" : " " + job.grimoire_id) << ": "
                << records.size() << " predictions, accuracy "
                << (acc.is_nan() ? "NaN" : std::to_string(acc.value)) << "\n";
    }
  }
}

void Pipeline::train_ranker() {
  const auto pred_dir = run_dir() / "predictions";
  if (!std::filesystem::exists(pred_dir))
    throw DependencyError("run " + run_id_ +
                          " has no prediction logs; run evaluate first");

  std::vector<EvalRecord> records;
  for (const auto& entry : std::filesystem::directory_iterator(pred_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    if (entry.path().filename().string().find("__single_grimoire__") ==
        std::string::npos)
      continue;
    const auto batch = read_eval_records(entry.path());
    records.insert(records.end(), batch.begin(), batch.end());
  }
  if (records.empty())
    throw DependencyError("run " + run_id_ +
                          " has no single-grimoire logs to train from");
  if (dry_run_) {
    std::cout << "train-ranker: planned model calls: 0 (" << records.size()
              << " log records)\n";
    return;
  }

  RowContext context;
  context.weak = &config_.weak_model();
  for (const auto& task : config_.tasks) {
    context.tasks.emplace(task.spec.name, task.spec);
    const SampleSet set = load_processed(task);
    auto& by_id = context.samples[task.spec.name];
    for (const auto& s : set.train) by_id.emplace(s.id, s);
    for (const auto& s : set.eval) by_id.emplace(s.id, s);
  }

  const BuildRowsResult built =
      build_training_rows(records, context, store(), provider(),
                          static_cast<uint64_t>(config_.global_seed));
  save_training_rows(run_dir() / "ranker" / "rows.jsonl", built.rows);
  std::cout << "train-ranker: " << built.rows.size() << " rows (" << built.skipped
            << " skipped)\n";

  const TrainResult trained =
      train_utility_classifier(built.rows, config_.ranker.net, config_.ranker.hyper);
  write_file(model_artifact_path(), trained.model.to_json());
  json curve{{"loss", trained.loss_curve},
             {"train_accuracy", trained.acc_curve},
             {"epochs_run", trained.epochs_run}};
  write_file(run_dir() / "ranker" / "loss_curve.json", curve.dump(2) + "\n");
  std::cout << "train-ranker: " << trained.epochs_run << " epochs, final loss "
            << trained.loss_curve.back() << ", train accuracy "
            << trained.acc_curve.back() << "\n";
}

void Pipeline::report() {
  const auto pred_dir = run_dir() / "predictions";
  if (!std::filesystem::exists(pred_dir))
    throw DependencyError("run " + run_id_ +
                          " has no prediction logs; run evaluate first");

  // Group records: baselines and sleicl by mode, single grimoires by their
  // display name so each method is one row across tasks.
  std::map<std::string, RecordGroup> groups;
  std::map<std::string, Grimoire> loaded;
  std::set<std::string> tasks_seen;

  for (const auto& entry : std::filesystem::directory_iterator(pred_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    for (auto& record : read_eval_records(entry.path())) {
      tasks_seen.insert(record.task);
      std::string key, label;
      if (record.mode == "single_grimoire") {
        const std::string cache_key = record.task + "/" + record.grimoire_id;
        auto it = loaded.find(cache_key);
        if (it == loaded.end()) {
          it = loaded.emplace(cache_key,
                              store().load(record.task, record.grimoire_id)).first;
        }
        const Grimoire& g = it->second;
        label = g.display_name();
        // Method order, then r descending, then PG before SG.
        int rank = 4;
        switch (g.method) {
          case SelectionMethod::KCS: rank = 0; break;
          case SelectionMethod::HCS: rank = 1; break;
          case SelectionMethod::HSS: rank = 2; break;
          case SelectionMethod::RSS: rank = 3; break;
          case SelectionMethod::ZeroShot: rank = 4; break;
        }
        const int r_key = g.method == SelectionMethod::HSS
                              ? 100 - static_cast<int>(g.params.r * 100.0 + 0.5)
                              : 0;
        char order[32];
        std::snprintf(order, sizeof order, "%d|%03d|%d|", rank, r_key,
                      g.paradigm == Paradigm::PG ? 0 : 1);
        key = "2|" + std::string(order) + label;
      } else if (record.mode == "zero_shot") {
        label = "Zero-Shot";
        key = "0|" + label;
      } else if (record.mode == "few_shot") {
        label = "Few-Shot (n=" + std::to_string(config_.run.few_shot_n) + ")";
        key = "1|" + label;
      } else if (record.mode == "sleicl_similarity") {
        label = "SLEICL (similarity)";
        key = "3|" + label;
      } else {
        label = "SLEICL (classifier)";
        key = "4|" + label;
      }
      auto& group = groups[key];
      group.label = label;
      group.mode = record.mode;
      group.by_task[record.task].push_back(std::move(record));
    }
  }

  std::vector<std::string> tasks;
  for (const auto& t : config_.tasks) {
    if (tasks_seen.count(t.spec.name)) tasks.push_back(t.spec.name);
  }
  std::vector<RecordGroup> ordered;
  for (auto& [key, group] : groups) ordered.push_back(std::move(group));

  const RunReport run_report = build_report(run_id_, config_.run.weak_model, tasks,
                                            ordered, config_.run.min_valid);
  write_file(run_dir() / "report.json", run_report.to_json() + "\n");
  write_file(run_dir() / "report.txt", run_report.to_text());
  write_file(run_dir() / "report.csv", run_report.to_csv());
  std::cout << run_report.to_text();
  std::cout << "report: wrote " << (run_dir() / "report.json").string() << "\n";
}

}  // namespace sleicl
