#include "sleicl/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;
using nn::Phase;
using nn::Tensor;

size_t llm_param_bucket(double billions) {
  if (std::isnan(billions)) return 4;
  if (billions <= 3.0) return 0;
  if (billions <= 13.0) return 1;
  if (billions <= 100.0) return 2;
  return 3;
}

size_t length_bucket(size_t tokens) {
  if (tokens < 64) return 0;
  if (tokens < 128) return 1;
  if (tokens < 256) return 2;
  if (tokens < 512) return 3;
  if (tokens < 1024) return 4;
  return 5;
}

namespace {

void one_hot(std::vector<double>& out, size_t width, size_t hot) {
  for (size_t i = 0; i < width; ++i) out.push_back(i == hot ? 1.0 : 0.0);
}

size_t method_index(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::KCS: return 0;
    case SelectionMethod::HCS: return 1;
    case SelectionMethod::HSS: return 2;
    case SelectionMethod::RSS: return 3;
    case SelectionMethod::ZeroShot: return 4;
  }
  return 4;
}

}  // namespace

FeatureVector encode_features(const ModelSpec& weak, const TaskSpec& task,
                              const Sample& question, const Grimoire& g,
                              EmbeddingProvider& provider) {
  FeatureVector f;
  f.context.reserve(kContextFeatureWidth);
  f.grimoire.reserve(kGrimoireFeatureWidth);

  one_hot(f.context, 5, llm_param_bucket(weak.param_count_billions));
  one_hot(f.context, 5, static_cast<size_t>(task.task_type));
  one_hot(f.context, 6, length_bucket(whitespace_token_count(task.description)));
  const Embedding desc_emb = provider.embed(task.description);
  f.context.insert(f.context.end(), desc_emb.values.begin(), desc_emb.values.end());
  one_hot(f.context, 6, length_bucket(question.token_estimate));
  const Embedding q_emb = provider.embed(question.text);
  f.context.insert(f.context.end(), q_emb.values.begin(), q_emb.values.end());

  one_hot(f.grimoire, 2, g.paradigm == Paradigm::PG ? 0 : 1);
  one_hot(f.grimoire, 6, length_bucket(g.token_estimate()));
  one_hot(f.grimoire, 5, method_index(g.method));
  const Embedding g_emb = g.embedding ? *g.embedding : provider.embed(g.text);
  f.grimoire.insert(f.grimoire.end(), g_emb.values.begin(), g_emb.values.end());

  return f;
}

double utility_similarity(const Sample& question, const Grimoire& g,
                          EmbeddingProvider& provider) {
  const Embedding q = provider.embed(question.text);
  const Embedding ge = g.embedding ? *g.embedding : provider.embed(g.text);
  return cosine_similarity(q, ge);
}

// --- UtilityModel -----------------------------------------------------------------

UtilityModel::UtilityModel(const NetConfig& config, uint64_t seed_in)
    : seed(seed_in), config_(config) {
  std::mt19937_64 rng(seed_in);
  ctx_fc1_.init(config.ctx_dim, config.tower_hidden, nn::Activation::relu, rng);
  ctx_fc2_.init(config.tower_hidden, config.d_model, nn::Activation::relu, rng);
  ctx_res_.init(config.d_model, config.res_hidden, rng);
  grim_fc1_.init(config.grim_dim, config.tower_hidden, nn::Activation::relu, rng);
  grim_fc2_.init(config.tower_hidden, config.d_model, nn::Activation::relu, rng);
  grim_res_.init(config.d_model, config.res_hidden, rng);
  attn_.init(config.d_model, rng);
  fm1_.init(config.d_model, config.d_model, nn::ForwardMode::dropout,
            config.dropout, rng);
  fm2_.init(config.d_model, config.d_model, nn::ForwardMode::dropout,
            config.dropout, rng);
  fm3_.init(config.d_model, config.d_model, nn::ForwardMode::normalize, 0.0, rng);

  size_t in = 2 * config.d_model;  // flattened 2-row sequence
  head_.resize(config.head_hidden.size() + 1);
  for (size_t i = 0; i < config.head_hidden.size(); ++i) {
    head_[i].init(in, config.head_hidden[i], nn::Activation::relu, rng);
    in = config.head_hidden[i];
  }
  head_.back().init(in, 1, nn::Activation::none, rng);
}

std::vector<double> UtilityModel::forward_batch(const Tensor& ctx, const Tensor& grim,
                                                Phase phase, std::mt19937_64& rng) {
  if (ctx.cols != config_.ctx_dim || grim.cols != config_.grim_dim ||
      ctx.rows != grim.rows)
    throw std::invalid_argument("utility model: feature shape mismatch");
  const size_t batch = ctx.rows;
  last_batch_ = batch;

  const Tensor c = ctx_res_.forward(ctx_fc2_.forward(ctx_fc1_.forward(ctx)));
  const Tensor g = grim_res_.forward(grim_fc2_.forward(grim_fc1_.forward(grim)));

  // Stack per sample: row 2i context, row 2i+1 grimoire.
  Tensor seq(2 * batch, config_.d_model);
  for (size_t i = 0; i < batch; ++i) {
    std::copy(c.row(i), c.row(i) + config_.d_model, seq.row(2 * i));
    std::copy(g.row(i), g.row(i) + config_.d_model, seq.row(2 * i + 1));
  }

  Tensor h = attn_.forward(seq);
  h = fm1_.forward(h, phase, rng);
  h = fm2_.forward(h, phase, rng);
  h = fm3_.forward(h, phase, rng);

  Tensor flat(batch, 2 * config_.d_model);
  for (size_t i = 0; i < batch; ++i) {
    std::copy(h.row(2 * i), h.row(2 * i) + config_.d_model, flat.row(i));
    std::copy(h.row(2 * i + 1), h.row(2 * i + 1) + config_.d_model,
              flat.row(i) + config_.d_model);
  }

  Tensor out = flat;
  for (auto& layer : head_) out = layer.forward(out);

  std::vector<double> logits(batch);
  for (size_t i = 0; i < batch; ++i) logits[i] = out.at(i, 0);
  return logits;
}

void UtilityModel::backward_batch(const std::vector<double>& dlogits) {
  const size_t batch = dlogits.size();
  if (batch != last_batch_)
    throw std::invalid_argument("utility model: backward batch mismatch");

  Tensor d(batch, 1);
  for (size_t i = 0; i < batch; ++i) d.at(i, 0) = dlogits[i];
  Tensor grad = d;
  for (auto it = head_.rbegin(); it != head_.rend(); ++it) grad = it->backward(grad);

  Tensor dseq(2 * batch, config_.d_model);
  for (size_t i = 0; i < batch; ++i) {
    std::copy(grad.row(i), grad.row(i) + config_.d_model, dseq.row(2 * i));
    std::copy(grad.row(i) + config_.d_model, grad.row(i) + 2 * config_.d_model,
              dseq.row(2 * i + 1));
  }

  Tensor dh = fm3_.backward(dseq);
  dh = fm2_.backward(dh);
  dh = fm1_.backward(dh);
  dh = attn_.backward(dh);

  Tensor dc(batch, config_.d_model), dg(batch, config_.d_model);
  for (size_t i = 0; i < batch; ++i) {
    std::copy(dh.row(2 * i), dh.row(2 * i) + config_.d_model, dc.row(i));
    std::copy(dh.row(2 * i + 1), dh.row(2 * i + 1) + config_.d_model, dg.row(i));
  }
  ctx_fc1_.backward(ctx_fc2_.backward(ctx_res_.backward(dc)));
  grim_fc1_.backward(grim_fc2_.backward(grim_res_.backward(dg)));
}

std::vector<nn::ParamRef> UtilityModel::params() {
  std::vector<nn::ParamRef> out;
  ctx_fc1_.collect(out, "ctx.fc1");
  ctx_fc2_.collect(out, "ctx.fc2");
  ctx_res_.collect(out, "ctx.res");
  grim_fc1_.collect(out, "grim.fc1");
  grim_fc2_.collect(out, "grim.fc2");
  grim_res_.collect(out, "grim.res");
  attn_.collect(out, "attn");
  fm1_.collect(out, "fm1");
  fm2_.collect(out, "fm2");
  fm3_.collect(out, "fm3");
  for (size_t i = 0; i < head_.size(); ++i)
    head_[i].collect(out, "head." + std::to_string(i));
  return out;
}

std::string UtilityModel::to_json() const {
  json obj;
  obj["format_version"] = 1;
  obj["schema_version"] = schema_version;
  obj["seed"] = seed;
  obj["epochs_trained"] = epochs_trained;
  obj["lr"] = lr;
  obj["config"] = {{"ctx_dim", config_.ctx_dim},
                   {"grim_dim", config_.grim_dim},
                   {"tower_hidden", config_.tower_hidden},
                   {"d_model", config_.d_model},
                   {"res_hidden", config_.res_hidden},
                   {"head_hidden", config_.head_hidden},
                   {"dropout", config_.dropout}};
  json params_obj = json::object();
  auto& self = const_cast<UtilityModel&>(*this);
  for (const auto& ref : self.params()) params_obj[ref.name] = nn::param_to_json(*ref.param);
  obj["params"] = params_obj;
  return obj.dump();
}

UtilityModel UtilityModel::from_json(const std::string& text) {
  json obj = json::parse(text);
  const int schema = obj.at("schema_version").get<int>();
  if (schema != kFeatureSchemaVersion)
    throw ConfigError("utility model was trained against feature schema " +
                      std::to_string(schema) + ", this build expects " +
                      std::to_string(kFeatureSchemaVersion));
  NetConfig config;
  const auto& c = obj.at("config");
  config.ctx_dim = c.at("ctx_dim").get<size_t>();
  config.grim_dim = c.at("grim_dim").get<size_t>();
  config.tower_hidden = c.at("tower_hidden").get<size_t>();
  config.d_model = c.at("d_model").get<size_t>();
  config.res_hidden = c.at("res_hidden").get<size_t>();
  config.head_hidden = c.at("head_hidden").get<std::vector<size_t>>();
  config.dropout = c.at("dropout").get<double>();

  UtilityModel model(config, obj.at("seed").get<uint64_t>());
  model.schema_version = schema;
  model.epochs_trained = obj.at("epochs_trained").get<int>();
  model.lr = obj.at("lr").get<double>();
  const auto& params_obj = obj.at("params");
  for (const auto& ref : model.params()) {
    nn::param_from_json(params_obj.at(ref.name), *ref.param);
  }
  return model;
}

double tower_forward(UtilityModel& model, const FeatureVector& f, Phase phase) {
  if (f.schema_version != model.schema_version)
    throw ConfigError("feature schema mismatch in tower_forward");
  Tensor ctx(1, f.context.size());
  Tensor grim(1, f.grimoire.size());
  std::copy(f.context.begin(), f.context.end(), ctx.data.begin());
  std::copy(f.grimoire.begin(), f.grimoire.end(), grim.data.begin());
  std::mt19937_64 rng(model.seed);
  const auto logits = model.forward_batch(ctx, grim, phase, rng);
  return nn::sigmoid(logits[0]);
}

// --- training data ------------------------------------------------------------------

BuildRowsResult build_training_rows(const std::vector<EvalRecord>& records,
                                    const RowContext& context,
                                    const GrimoireStore& store,
                                    EmbeddingProvider& provider, uint64_t seed) {
  BuildRowsResult out;
  std::map<std::string, Grimoire> grimoire_cache;

  for (const auto& r : records) {
    if (r.grimoire_id.empty()) continue;  // baselines carry no grimoire
    const auto task_it = context.tasks.find(r.task);
    const auto task_samples = context.samples.find(r.task);
    if (task_it == context.tasks.end() || task_samples == context.samples.end()) {
      ++out.skipped;
      continue;
    }
    const auto sample_it = task_samples->second.find(r.sample_id);
    if (sample_it == task_samples->second.end()) {
      ++out.skipped;
      continue;
    }
    const std::string cache_key = r.task + "/" + r.grimoire_id;
    auto g_it = grimoire_cache.find(cache_key);
    if (g_it == grimoire_cache.end()) {
      if (!store.contains(r.task, r.grimoire_id)) {
        ++out.skipped;
        continue;
      }
      g_it = grimoire_cache.emplace(cache_key, store.load(r.task, r.grimoire_id)).first;
    }

    TrainingRow row;
    row.feature = encode_features(*context.weak, task_it->second, sample_it->second,
                                  g_it->second, provider);
    row.label = (r.valid && r.correct) ? 1 : 0;
    row.provenance = {r.run_id, r.model_id, r.task, r.sample_id, r.grimoire_id};
    out.rows.push_back(std::move(row));
  }

  std::mt19937_64 rng(seed);
  detrand::shuffle(rng, out.rows);
  return out;
}

void save_training_rows(const std::filesystem::path& path,
                        const std::vector<TrainingRow>& rows) {
  std::ostringstream buf;
  for (const auto& row : rows) {
    json obj{{"run_id", row.provenance.run_id},
             {"model_id", row.provenance.model_id},
             {"task", row.provenance.task},
             {"sample_id", row.provenance.sample_id},
             {"grimoire_id", row.provenance.grimoire_id},
             {"label", row.label},
             {"schema_version", kFeatureSchemaVersion}};
    buf << obj.dump() << '\n';
  }
  write_file(path, buf.str());
}

BuildRowsResult load_training_rows(const std::filesystem::path& path,
                                   const RowContext& context,
                                   const GrimoireStore& store,
                                   EmbeddingProvider& provider) {
  BuildRowsResult out;
  std::map<std::string, Grimoire> grimoire_cache;
  for_each_line(path, [&](std::string_view line) {
    json obj = json::parse(line);
    const std::string task = obj.at("task").get<std::string>();
    const std::string sample_id = obj.at("sample_id").get<std::string>();
    const std::string grimoire_id = obj.at("grimoire_id").get<std::string>();

    const auto task_it = context.tasks.find(task);
    const auto task_samples = context.samples.find(task);
    if (task_it == context.tasks.end() || task_samples == context.samples.end() ||
        task_samples->second.find(sample_id) == task_samples->second.end()) {
      ++out.skipped;
      return;
    }
    const std::string cache_key = task + "/" + grimoire_id;
    auto g_it = grimoire_cache.find(cache_key);
    if (g_it == grimoire_cache.end()) {
      if (!store.contains(task, grimoire_id)) {
        ++out.skipped;
        return;
      }
      g_it = grimoire_cache.emplace(cache_key, store.load(task, grimoire_id)).first;
    }
    TrainingRow row;
    row.feature = encode_features(*context.weak, task_it->second,
                                  task_samples->second.at(sample_id), g_it->second,
                                  provider);
    row.label = obj.at("label").get<int>();
    row.provenance = {obj.value("run_id", std::string{}),
                      obj.value("model_id", std::string{}), task, sample_id,
                      grimoire_id};
    out.rows.push_back(std::move(row));
  });
  return out;
}

// --- training ------------------------------------------------------------------------

namespace {

void fill_batch(const std::vector<TrainingRow>& rows,
                const std::vector<size_t>& order, size_t begin, size_t end,
                Tensor& ctx, Tensor& grim, std::vector<double>& labels) {
  const size_t batch = end - begin;
  ctx = Tensor(batch, rows.front().feature.context.size());
  grim = Tensor(batch, rows.front().feature.grimoire.size());
  labels.resize(batch);
  for (size_t i = 0; i < batch; ++i) {
    const TrainingRow& row = rows[order[begin + i]];
    std::copy(row.feature.context.begin(), row.feature.context.end(), ctx.row(i));
    std::copy(row.feature.grimoire.begin(), row.feature.grimoire.end(), grim.row(i));
    labels[i] = row.label;
  }
}

}  // namespace

double classifier_accuracy(UtilityModel& model, const std::vector<TrainingRow>& rows) {
  if (rows.empty()) return 0.0;
  std::mt19937_64 rng(model.seed);
  size_t correct = 0;
  constexpr size_t kChunk = 512;
  for (size_t begin = 0; begin < rows.size(); begin += kChunk) {
    const size_t end = std::min(rows.size(), begin + kChunk);
    const size_t batch = end - begin;
    Tensor ctx(batch, rows.front().feature.context.size());
    Tensor grim(batch, rows.front().feature.grimoire.size());
    std::vector<double> labels(batch);
    for (size_t i = 0; i < batch; ++i) {
      const TrainingRow& row = rows[begin + i];
      std::copy(row.feature.context.begin(), row.feature.context.end(), ctx.row(i));
      std::copy(row.feature.grimoire.begin(), row.feature.grimoire.end(),
                grim.row(i));
      labels[i] = row.label;
    }
    const auto logits = model.forward_batch(ctx, grim, Phase::eval, rng);
    for (size_t i = 0; i < logits.size(); ++i) {
      const int pred = nn::sigmoid(logits[i]) > 0.5 ? 1 : 0;
      if (pred == static_cast<int>(labels[i])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

TrainResult train_utility_classifier(const std::vector<TrainingRow>& rows,
                                     const NetConfig& config,
                                     const TrainHyper& hyper) {
  if (rows.size() < 2)
    throw std::invalid_argument("train_utility_classifier: need at least 2 rows");
  bool has_zero = false, has_one = false;
  for (const auto& r : rows) (r.label == 1 ? has_one : has_zero) = true;
  if (!has_zero || !has_one)
    throw std::invalid_argument(
        "train_utility_classifier: both labels must be present");

  TrainResult result;
  result.model = UtilityModel(config, hyper.seed);
  result.model.lr = hyper.lr;
  nn::AdamConfig adam;
  adam.lr = hyper.lr;

  std::mt19937_64 shuffle_rng(detrand::derive_seed(hyper.seed, 0xB47C));
  std::mt19937_64 dropout_rng(detrand::derive_seed(hyper.seed, 0xD409));

  std::vector<size_t> order(rows.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t batch_size = std::max<size_t>(1, hyper.batch);
  auto param_refs = result.model.params();

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    detrand::shuffle(shuffle_rng, order);
    double loss_sum = 0.0;
    size_t seen = 0, correct = 0;

    for (size_t begin = 0; begin < rows.size(); begin += batch_size) {
      const size_t end = std::min(rows.size(), begin + batch_size);
      Tensor ctx, grim;
      std::vector<double> labels;
      fill_batch(rows, order, begin, end, ctx, grim, labels);

      const auto logits =
          result.model.forward_batch(ctx, grim, Phase::train, dropout_rng);
      const double inv_batch = 1.0 / static_cast<double>(logits.size());
      std::vector<double> dlogits(logits.size());
      for (size_t i = 0; i < logits.size(); ++i) {
        const auto bce = nn::sigmoid_bce(logits[i], labels[i]);
        loss_sum += bce.loss;
        dlogits[i] = bce.dlogit * inv_batch;
        const int pred = nn::sigmoid(logits[i]) > 0.5 ? 1 : 0;
        if (pred == static_cast<int>(labels[i])) ++correct;
      }
      seen += logits.size();

      for (auto& ref : param_refs) ref.param->zero_grad();
      result.model.backward_batch(dlogits);
      for (auto& ref : param_refs) adam_step(*ref.param, adam);
    }

    const double mean_loss = loss_sum / static_cast<double>(seen);
    if (!std::isfinite(mean_loss))
      throw std::runtime_error(
          "train_utility_classifier: non-finite loss at epoch " +
          std::to_string(epoch) + " (lr " + std::to_string(hyper.lr) + ", batch " +
          std::to_string(batch_size) + ")");
    result.loss_curve.push_back(mean_loss);
    result.acc_curve.push_back(static_cast<double>(correct) /
                               static_cast<double>(seen));
    result.epochs_run = epoch + 1;

    if (hyper.early_stop_train_acc > 0.0 &&
        result.acc_curve.back() >= hyper.early_stop_train_acc) {
      if (classifier_accuracy(result.model, rows) >= hyper.early_stop_train_acc)
        break;
    }
  }
  result.model.epochs_trained = result.epochs_run;
  return result;
}

// --- selection ------------------------------------------------------------------------

const Grimoire& select_grimoire(const Sample& question,
                                const std::vector<Grimoire>& candidates,
                                const UtilityFn& scorer) {
  if (candidates.empty())
    throw std::invalid_argument("select_grimoire: empty candidate set");
  size_t best = 0;
  double best_score = scorer(question, candidates[0]);
  for (size_t i = 1; i < candidates.size(); ++i) {
    const double score = scorer(question, candidates[i]);
    if (score > best_score ||
        (score == best_score && candidates[i].id < candidates[best].id)) {
      best = i;
      best_score = score;
    }
  }
  return candidates[best];
}

UtilityFn make_similarity_scorer(EmbeddingProvider& provider) {
  return [&provider](const Sample& q, const Grimoire& g) {
    return utility_similarity(q, g, provider);
  };
}

UtilityFn make_classifier_scorer(UtilityModel& model, const ModelSpec& weak,
                                 const TaskSpec& task, EmbeddingProvider& provider) {
  return [&model, &weak, &task, &provider](const Sample& q, const Grimoire& g) {
    const FeatureVector f = encode_features(weak, task, q, g, provider);
    return tower_forward(model, f, Phase::eval);
  };
}

}  // namespace sleicl
