#include "sleicl/records.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;

void write_eval_records(const std::filesystem::path& path,
                        const std::vector<EvalRecord>& records) {
  std::ostringstream buf;
  for (const auto& r : records) {
    json obj{{"run_id", r.run_id},
             {"mode", r.mode},
             {"model_id", r.model_id},
             {"task", r.task},
             {"grimoire_id", r.grimoire_id},
             {"sample_id", r.sample_id},
             {"gold", r.gold},
             {"raw_response", r.raw_response},
             {"parsed_label", r.parsed_label},
             {"valid", r.valid},
             {"correct", r.correct},
             {"latency_ms", r.latency_ms},
             {"prompt_fingerprint", r.prompt_fingerprint}};
    buf << obj.dump() << '\n';
  }
  write_file(path, buf.str());
}

std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  for_each_line(path, [&](std::string_view line) {
    json obj = json::parse(line);
    EvalRecord r;
    r.run_id = obj.value("run_id", std::string{});
    r.mode = obj.at("mode").get<std::string>();
    r.model_id = obj.value("model_id", std::string{});
    r.task = obj.at("task").get<std::string>();
    r.grimoire_id = obj.value("grimoire_id", std::string{});
    r.sample_id = obj.at("sample_id").get<std::string>();
    r.gold = obj.at("gold").get<std::string>();
    r.raw_response = obj.value("raw_response", std::string{});
    r.parsed_label = obj.value("parsed_label", std::string{});
    r.valid = obj.at("valid").get<bool>();
    r.correct = obj.at("correct").get<bool>();
    r.latency_ms = obj.value("latency_ms", 0.0);
    r.prompt_fingerprint = obj.value("prompt_fingerprint", std::string{});
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace sleicl
