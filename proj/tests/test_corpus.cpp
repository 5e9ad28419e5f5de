#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "sleicl/common.hpp"
#include "sleicl/corpus.hpp"

using namespace sleicl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("sleicl_corpus_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TaskSpec hate_task() {
  TaskSpec t;
  t.name = "hate-demo";
  t.task_type = TaskType::hate_speech;
  t.description = "Decide whether a sentence is hateful.";
  t.labels = {"hate", "no hate"};
  return t;
}

std::vector<Sample> n_samples(size_t n, const std::string& label = "hate") {
  std::vector<Sample> out;
  for (size_t i = 0; i < n; ++i)
    out.push_back(make_sample("s" + std::to_string(i),
                              "sample text number " + std::to_string(i), label));
  return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("load_samples maps jsonl rows and rejects unknown labels") {
  const auto dir = temp_dir("load");
  const auto path = dir / "rows.jsonl";
  write_file(path,
             "{\"id\":\"a\",\"text\":\"you are kind\",\"label\":\"no hate\"}\n"
             "{\"id\":\"b\",\"text\":\"awful slur here\",\"label\":\"hate\"}\n"
             "{\"id\":\"c\",\"text\":\"fine day\",\"label\":\"no hate\"}\n");
  const auto result = load_samples(path, hate_task(), {"text", "label", "id"});
  CHECK(result.samples.size() == 3);
  CHECK(result.skipped_unknown_label == 0);
  CHECK(result.samples[0].id == "a");
  CHECK(result.samples[1].label == "hate");
  CHECK(result.samples[0].token_estimate == 3);

  write_file(path, "{\"id\":\"a\",\"text\":\"x\",\"label\":\"maybe\"}\n");
  const auto rejected = load_samples(path, hate_task(), {"text", "label", "id"});
  CHECK(rejected.samples.empty());
  CHECK(rejected.skipped_unknown_label == 1);
  CHECK(rejected.unknown_label_tally.at("maybe") == 1);

  write_file(path, "");
  const auto empty = load_samples(path, hate_task(), {"text", "label", "id"});
  CHECK(empty.samples.empty());
  CHECK(empty.skipped_unknown_label == 0);
}

TEST_CASE("load_samples reads delimited files with quoted fields") {
  const auto dir = temp_dir("csv");
  const auto path = dir / "rows.csv";
  write_file(path,
             "text,label\n"
             "\"hello, friend\",no hate\n"
             "plain text,hate\n");
  const auto result = load_samples(path, hate_task(), {"text", "label"});
  REQUIRE(result.samples.size() == 2);
  CHECK(result.samples[0].text == "hello, friend");
  CHECK(result.samples[0].id == "rows-0");
}

TEST_CASE("load_samples joins premise and hypothesis for nli") {
  const auto dir = temp_dir("nli");
  const auto path = dir / "rows.jsonl";
  TaskSpec task;
  task.name = "nli-demo";
  task.task_type = TaskType::nli;
  task.description = "entailment";
  task.labels = {"entailment", "not_entailment"};
  write_file(path,
             "{\"premise\":\"a cat sits\",\"hypothesis\":\"an animal sits\","
             "\"label\":\"entailment\"}\n");
  FieldMap fm;
  fm.label = "label";
  fm.premise = "premise";
  fm.hypothesis = "hypothesis";
  const auto result = load_samples(path, task, fm);
  REQUIRE(result.samples.size() == 1);
  CHECK(result.samples[0].text == "premise: a cat sits\nhypothesis: an animal sits");
}

TEST_CASE("filter_overlong keeps exactly the short samples in order") {
  std::vector<Sample> samples;
  auto with_tokens = [](const std::string& id, size_t tokens) {
    std::string text;
    for (size_t i = 0; i < tokens; ++i) text += "w ";
    return make_sample(id, text, "hate");
  };
  samples.push_back(with_tokens("a", 10));
  samples.push_back(with_tokens("b", 50));
  samples.push_back(with_tokens("c", 900));

  const auto kept = filter_overlong(samples, 512);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].id == "a");
  CHECK(kept[1].id == "b");

  CHECK(filter_overlong(samples, 1000).size() == 3);
  CHECK(filter_overlong(samples, 1).empty());

  // Idempotence.
  const auto twice = filter_overlong(kept, 512);
  CHECK(twice.size() == kept.size());
}

TEST_CASE("split_train_eval takes 2000/1000 on large corpora") {
  const auto set = split_train_eval(n_samples(5000), "t", 9);
  CHECK(set.train.size() == 2000);
  CHECK(set.eval.size() == 1000);
  std::set<std::string> train_ids, eval_ids;
  for (const auto& s : set.train) train_ids.insert(s.id);
  for (const auto& s : set.eval) eval_ids.insert(s.id);
  CHECK(train_ids.size() == 2000);
  for (const auto& id : eval_ids) CHECK(train_ids.count(id) == 0);
}

TEST_CASE("split_train_eval keeps a strict 2:1 ratio on small corpora") {
  // 998 samples: the largest eval split with train > 2*eval is 332/666.
  const auto set = split_train_eval(n_samples(998), "t", 1);
  CHECK(set.eval.size() == 332);
  CHECK(set.train.size() == 666);
  CHECK(set.train.size() > 2 * set.eval.size());
}

TEST_CASE("split_train_eval is deterministic and total-preserving") {
  const auto a = split_train_eval(n_samples(300), "t", 77);
  const auto b = split_train_eval(n_samples(300), "t", 77);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
  for (size_t i = 0; i < a.eval.size(); ++i) CHECK(a.eval[i].id == b.eval[i].id);

  // Corpora below 3000 split locally with train strictly more than twice
  // eval; at 3000 and above the fixed 2000/1000 split applies (ratio 2).
  for (size_t n : {size_t{3}, size_t{4}, size_t{5}, size_t{9}, size_t{10},
                   size_t{11}, size_t{100}, size_t{997}, size_t{998}, size_t{999},
                   size_t{2999}, size_t{3000}, size_t{5000}}) {
    const auto set = split_train_eval(n_samples(n), "t", 5);
    CHECK(set.train.size() + set.eval.size() == std::min<size_t>(n, 3000));
    if (n < 3000) {
      CHECK(set.train.size() > 2 * set.eval.size());
    } else {
      CHECK(set.train.size() == 2 * set.eval.size());
    }
  }
  CHECK_THROWS(split_train_eval(n_samples(2), "t", 5));
}

TEST_CASE("stratify_by_label partitions without loss or duplication") {
  std::vector<Sample> samples;
  samples.push_back(make_sample("1", "x", "A"));
  samples.push_back(make_sample("2", "y", "B"));
  samples.push_back(make_sample("3", "z", "A"));
  samples.push_back(make_sample("4", "w", "B"));
  const auto groups = stratify_by_label(samples);
  REQUIRE(groups.size() == 2);
  CHECK(groups.at("A").size() == 2);
  CHECK(groups.at("B").size() == 2);
  CHECK(groups.at("A")[0].id == "1");  // per-label order preserved
  CHECK(groups.at("A")[1].id == "3");

  size_t total = 0;
  for (const auto& [label, members] : groups) {
    total += members.size();
    for (const auto& s : members) CHECK(s.label == label);
  }
  CHECK(total == samples.size());

  CHECK(stratify_by_label({samples[0]}).size() == 1);
  CHECK(stratify_by_label({}).empty());
}

TEST_CASE("canonical jsonl round-trips with LF endings") {
  const auto dir = temp_dir("jsonl");
  const auto path = dir / "out.jsonl";
  auto samples = n_samples(4, "no hate");
  samples[2].text = "text with \"quotes\" and\nnewline";
  samples[2].token_estimate = whitespace_token_count(samples[2].text);
  write_canonical_jsonl(path, samples);

  const std::string raw = read_file(path);
  CHECK(raw.find("\r\n") == std::string::npos);
  CHECK(raw.back() == '\n');

  const auto loaded = read_canonical_jsonl(path);
  REQUIRE(loaded.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].id == samples[i].id);
    CHECK(loaded[i].text == samples[i].text);
    CHECK(loaded[i].label == samples[i].label);
    CHECK(loaded[i].token_estimate == samples[i].token_estimate);
  }
}

}  // TEST_SUITE
