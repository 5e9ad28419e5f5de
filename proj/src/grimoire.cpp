#include "sleicl/grimoire.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;

std::string to_string(Paradigm p) { return p == Paradigm::PG ? "PG" : "SG"; }

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "PG") return Paradigm::PG;
  if (s == "SG") return Paradigm::SG;
  throw ConfigError("unknown paradigm: " + s);
}

size_t Grimoire::token_estimate() const { return whitespace_token_count(text); }

std::string Grimoire::display_name() const {
  std::string name = method == SelectionMethod::ZeroShot ? "Zero-Shot"
                                                         : to_string(method);
  name += "-" + to_string(paradigm);
  if (method == SelectionMethod::HSS) {
    std::ostringstream r;
    r.precision(2);
    r << " (r=" << params.r << ")";
    name += r.str();
  }
  return name;
}

namespace {

json params_json(const SelectionParams& p, SelectionMethod method) {
  // Only the knobs that shape the selection participate in identity.
  json obj{{"seed", p.seed}};
  switch (method) {
    case SelectionMethod::KCS:
      obj["c"] = p.c;
      obj["n"] = p.n;
      break;
    case SelectionMethod::HCS:
      obj["c"] = p.c;
      break;
    case SelectionMethod::HSS:
      obj["k"] = p.k;
      obj["r"] = p.r;
      break;
    case SelectionMethod::RSS:
      obj["k"] = p.k;
      break;
    case SelectionMethod::ZeroShot:
      return json::object();
  }
  return obj;
}

std::string now_iso8601() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

}  // namespace

std::string grimoire_id(const std::string& task, SelectionMethod method,
                        Paradigm paradigm, const SelectionParams& params,
                        const std::vector<std::string>& selection_ids,
                        const std::string& strong_model) {
  std::ostringstream key;
  key << task << '\x1f' << to_string(method) << '\x1f' << to_string(paradigm)
      << '\x1f' << params_json(params, method).dump() << '\x1f';
  for (const auto& id : selection_ids) key << id << '\x1e';
  key << '\x1f' << strong_model;
  return sha256_hex(key.str()).substr(0, 16);
}

std::string render_pg_prompt(const TaskSpec& task,
                             const std::vector<Sample>& selection, int word_cap) {
  std::ostringstream out;
  out << "Task description: " << task.description << "\n";
  out << "Possible labels: ";
  for (size_t i = 0; i < task.labels.size(); ++i) {
    if (i > 0) out << ", ";
    out << task.labels[i];
  }
  out << ".\n";
  if (!selection.empty()) {
    out << "\nHere are representative labeled examples:\n";
    for (const auto& s : selection) {
      out << "Text: " << s.text << "\nLabel: " << s.label << "\n";
    }
  }
  out << "\n" << kPgInstructionMarker
      << " the skills needed to solve this task: state the rules, explain each "
         "one with reference to the examples, and describe how to apply it.\n";
  out << "Limit your output to at most " << word_cap << " words.";
  return out.str();
}

std::string render_sg_prompt(const std::string& pg_text, int word_cap) {
  std::ostringstream out;
  out << kSgInstructionMarker
      << " so it stays concise while preserving every rule and decision "
         "criterion.\n";
  out << "Limit your output to at most " << word_cap << " words.\n\n";
  out << pg_text;
  return out.str();
}

CapResult enforce_word_cap(const std::string& text, int word_cap) {
  CapResult out;
  out.text = text;
  const auto words = words_of(text);
  const size_t cap = static_cast<size_t>(word_cap);
  if (words.size() <= cap + cap / 10) return out;

  // Walk to the cap'th word, then back to the last sentence end before it.
  size_t consumed = 0;
  size_t word_count = 0;
  size_t cut = std::string::npos;
  size_t last_sentence_end = std::string::npos;
  while (consumed < text.size() && word_count < cap) {
    while (consumed < text.size() &&
           std::isspace(static_cast<unsigned char>(text[consumed])))
      ++consumed;
    const size_t word_start = consumed;
    while (consumed < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[consumed])))
      ++consumed;
    if (consumed > word_start) {
      ++word_count;
      cut = consumed;
      const char tail = text[consumed - 1];
      if (tail == '.' || tail == '!' || tail == '?') last_sentence_end = consumed;
    }
  }
  out.text = trim(text.substr(0, last_sentence_end != std::string::npos
                                     ? last_sentence_end
                                     : cut));
  out.truncated = true;
  return out;
}

SgResult simplify_to_sg(const std::string& pg_text, const ModelSpec& strong,
                        const TaskSpec& task, Gateway& gateway, int word_cap) {
  if (trim(pg_text).empty())
    throw std::invalid_argument("simplify_to_sg: pg_text is empty");
  const size_t pg_tokens = whitespace_token_count(pg_text);
  const std::string system = "Task: " + task.name + "\nYou condense skill notes.";

  SgResult best;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int cap = attempt == 0 ? word_cap : std::max(16, word_cap / 2);
    const ChatResult chat =
        gateway.chat_complete(strong, system, render_sg_prompt(pg_text, cap));
    const std::string candidate = trim(chat.text);
    if (candidate.size() > best.text.size()) best.text = candidate;
    if (whitespace_token_count(candidate) < pg_tokens) {
      return SgResult{candidate, false};
    }
  }
  best.not_shorter = true;  // kept the longest attempt, flagged
  return best;
}

// --- store -------------------------------------------------------------------

GrimoireStore::GrimoireStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path GrimoireStore::record_path(const std::string& task,
                                                 const std::string& id) const {
  return root_ / task / (id + ".json");
}

namespace {

json grimoire_to_json(const Grimoire& g) {
  json obj;
  obj["id"] = g.id;
  obj["task"] = g.task;
  obj["method"] = to_string(g.method);
  obj["paradigm"] = to_string(g.paradigm);
  obj["params"] = {{"c", g.params.c}, {"n", g.params.n}, {"k", g.params.k},
                   {"r", g.params.r}, {"seed", g.params.seed}};
  obj["selection_ids"] = g.selection_ids;
  obj["text"] = g.text;
  obj["strong_model"] = g.strong_model;
  obj["created_at"] = g.created_at;
  obj["truncated"] = g.truncated;
  obj["sg_not_shorter"] = g.sg_not_shorter;
  if (g.embedding) {
    obj["embedding"] = {{"provider_id", g.embedding->provider_id},
                        {"values", g.embedding->values},
                        {"truncated", g.embedding->truncated}};
  }
  return obj;
}

Grimoire grimoire_from_json(const json& obj) {
  Grimoire g;
  g.id = obj.at("id").get<std::string>();
  g.task = obj.at("task").get<std::string>();
  g.method = selection_method_from_string(obj.at("method").get<std::string>());
  g.paradigm = paradigm_from_string(obj.at("paradigm").get<std::string>());
  const auto& p = obj.at("params");
  g.params.c = p.at("c").get<int>();
  g.params.n = p.at("n").get<int>();
  g.params.k = p.at("k").get<int>();
  g.params.r = p.at("r").get<double>();
  g.params.seed = p.at("seed").get<int64_t>();
  g.selection_ids = obj.at("selection_ids").get<std::vector<std::string>>();
  g.text = obj.at("text").get<std::string>();
  g.strong_model = obj.at("strong_model").get<std::string>();
  g.created_at = obj.at("created_at").get<std::string>();
  g.truncated = obj.value("truncated", false);
  g.sg_not_shorter = obj.value("sg_not_shorter", false);
  if (obj.contains("embedding")) {
    Embedding e;
    e.provider_id = obj["embedding"].at("provider_id").get<std::string>();
    e.values = obj["embedding"].at("values").get<std::vector<double>>();
    e.truncated = obj["embedding"].value("truncated", false);
    g.embedding = std::move(e);
  }
  return g;
}

}  // namespace

void GrimoireStore::save(const Grimoire& g) {
  if (trim(g.text).empty())
    throw std::invalid_argument("grimoire text must be non-empty");
  json obj = grimoire_to_json(g);
  const std::string payload = obj.dump();
  obj["checksum"] = sha256_hex(payload);
  write_file(record_path(g.task, g.id), obj.dump(2) + "\n");

  json line{{"id", g.id},
            {"method", to_string(g.method)},
            {"paradigm", to_string(g.paradigm)},
            {"r", g.params.r},
            {"name", g.display_name()}};
  std::ofstream index(root_ / g.task / "index.jsonl", std::ios::app);
  index << line.dump() << '\n';
}

bool GrimoireStore::contains(const std::string& task, const std::string& id) const {
  return std::filesystem::exists(record_path(task, id));
}

Grimoire GrimoireStore::load(const std::string& task, const std::string& id) const {
  const auto path = record_path(task, id);
  if (!std::filesystem::exists(path))
    throw DependencyError("grimoire " + id + " for task " + task + " not found");
  json obj = json::parse(read_file(path));
  const std::string stored_checksum = obj.at("checksum").get<std::string>();
  obj.erase("checksum");
  if (sha256_hex(obj.dump()) != stored_checksum)
    throw std::runtime_error("grimoire record corrupt (checksum mismatch): " +
                             path.string());
  return grimoire_from_json(obj);
}

std::vector<Grimoire> GrimoireStore::load_all(const std::string& task) const {
  std::vector<Grimoire> out;
  const auto dir = root_ / task;
  if (!std::filesystem::exists(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(load(task, f.stem().string()));
  return out;
}

// --- candidate-set generation --------------------------------------------------

GenerationResult generate_grimoire_set(
    const TaskSpec& task, const SampleSet& set,
    const std::map<std::string, Embedding>& train_embeddings,
    const std::vector<HardnessAnnotation>& annotations, const ModelSpec& strong,
    Gateway& gateway, EmbeddingProvider& provider, GrimoireStore& store,
    const GenerationOptions& options) {
  GenerationResult result;

  std::map<std::string, const Sample*> by_id;
  for (const auto& s : set.train) by_id[s.id] = &s;

  // Method/ratio combinations; each yields a PG and its derived SG.
  struct Combo {
    SelectionMethod method;
    double r;
  };
  std::vector<Combo> combos{{SelectionMethod::KCS, 0.0},
                            {SelectionMethod::HCS, 0.0}};
  for (double r : options.hss_ratios) combos.push_back({SelectionMethod::HSS, r});
  combos.push_back({SelectionMethod::RSS, 0.0});
  combos.push_back({SelectionMethod::ZeroShot, 0.0});

  // A fixed epoch timestamp under mock strong models keeps regenerated
  // stores byte-identical.
  const std::string created_at =
      strong.is_mock() ? "1970-01-01T00:00:00Z" : now_iso8601();

  for (const Combo& combo : combos) {
    SelectionParams params = options.selection;
    params.r = combo.r;
    try {
      const SampleSelection selection = make_selection(
          task, set, train_embeddings, combo.method, params,
          combo.method == SelectionMethod::HSS ? &annotations : nullptr);

      std::vector<Sample> resolved;
      for (const auto& id : selection.sample_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
          throw DependencyError("selection references unknown train sample " + id);
        resolved.push_back(*it->second);
      }

      const std::string pg_id = grimoire_id(task.name, combo.method, Paradigm::PG,
                                            params, selection.sample_ids, strong.id);
      Grimoire pg;
      if (store.contains(task.name, pg_id)) {
        pg = store.load(task.name, pg_id);
        ++result.cached;
      } else {
        const ChatResult chat = gateway.chat_complete(
            strong, "Task: " + task.name + "\nYou distill problem-solving skills.",
            render_pg_prompt(task, resolved, options.caps.pg_words));
        const CapResult capped = enforce_word_cap(trim(chat.text),
                                                  options.caps.pg_words);
        pg.id = pg_id;
        pg.task = task.name;
        pg.method = combo.method;
        pg.paradigm = Paradigm::PG;
        pg.params = params;
        pg.selection_ids = selection.sample_ids;
        pg.text = capped.text;
        pg.truncated = capped.truncated;
        pg.strong_model = strong.id;
        pg.created_at = created_at;
        pg.embedding = provider.embed(pg.text);
        store.save(pg);
      }
      result.grimoires.push_back(pg);

      const std::string sg_id = grimoire_id(task.name, combo.method, Paradigm::SG,
                                            params, selection.sample_ids, strong.id);
      if (store.contains(task.name, sg_id)) {
        result.grimoires.push_back(store.load(task.name, sg_id));
        ++result.cached;
      } else {
        const SgResult sg_text =
            simplify_to_sg(pg.text, strong, task, gateway, options.caps.sg_words);
        const CapResult capped = enforce_word_cap(sg_text.text, options.caps.sg_words);
        Grimoire sg = pg;
        sg.id = sg_id;
        sg.paradigm = Paradigm::SG;
        sg.text = capped.text;
        sg.truncated = capped.truncated;
        sg.sg_not_shorter = sg_text.not_shorter;
        sg.embedding = provider.embed(sg.text);
        store.save(sg);
        result.grimoires.push_back(sg);
      }
    } catch (const std::exception& e) {
      Grimoire key;
      key.method = combo.method;
      key.params.r = combo.r;
      result.errors.push_back({key.display_name(), e.what()});
    }
  }
  return result;
}

}  // namespace sleicl
