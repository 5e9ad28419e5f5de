#include "sleicl/evalharness.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"

namespace sleicl {

using nlohmann::json;

namespace {

EvalRecord to_record(const Prediction& p, const Sample& sample,
                     const std::string& mode, const std::string& model_id,
                     const std::string& task, const std::string& grimoire_id,
                     const std::string& run_id) {
  EvalRecord r;
  r.run_id = run_id;
  r.mode = mode;
  r.model_id = model_id;
  r.task = task;
  r.grimoire_id = grimoire_id;
  r.sample_id = sample.id;
  r.gold = sample.label;
  r.raw_response = p.raw_response;
  r.parsed_label = p.parsed_label;
  r.valid = p.valid;
  r.correct = p.valid && p.parsed_label == sample.label;
  r.latency_ms = p.latency_ms;
  r.prompt_fingerprint = p.prompt_fingerprint;
  return r;
}

}  // namespace

std::string grimoire_preamble(const Grimoire& g) {
  if (g.text.rfind(kGrimoireFraming.data(), 0) == 0) return g.text;
  return std::string(kGrimoireFraming) + "\n\n" + g.text;
}

std::string few_shot_preamble(const std::vector<Sample>& train, int n,
                              uint64_t sample_seed) {
  if (n <= 0) return {};
  std::mt19937_64 rng(sample_seed);
  const auto picks = detrand::sample_without_replacement(
      rng, train.size(), static_cast<size_t>(n));
  std::ostringstream out;
  out << "Here are some examples:\n";
  for (size_t pick : picks) {
    out << "Text: " << train[pick].text << "\nLabel: " << train[pick].label << "\n";
  }
  return out.str();
}

std::vector<EvalRecord> run_zero_shot(Gateway& gateway, const ModelSpec& weak,
                                      const TaskSpec& task,
                                      const std::vector<Sample>& eval_set,
                                      const std::string& run_id) {
  const auto preds = gateway.predict_batch(weak, task, eval_set,
                                           [](const Sample&) { return std::string{}; });
  std::vector<EvalRecord> out;
  out.reserve(preds.size());
  for (size_t i = 0; i < preds.size(); ++i)
    out.push_back(to_record(preds[i], eval_set[i], "zero_shot", weak.id, task.name,
                            {}, run_id));
  return out;
}

std::vector<EvalRecord> run_few_shot(Gateway& gateway, const ModelSpec& weak,
                                     const TaskSpec& task,
                                     const std::vector<Sample>& eval_set,
                                     const std::vector<Sample>& train, int n,
                                     uint64_t seed, const std::string& run_id) {
  if (static_cast<size_t>(std::max(0, n)) > train.size())
    throw DependencyError("few-shot needs " + std::to_string(n) +
                          " train samples for task " + task.name + ", have " +
                          std::to_string(train.size()));
  const auto preds = gateway.predict_batch(
      weak, task, eval_set, [&](const Sample& s) {
        return few_shot_preamble(
            train, n, detrand::derive_seed(seed, detrand::fnv1a64(s.id)));
      });
  std::vector<EvalRecord> out;
  out.reserve(preds.size());
  for (size_t i = 0; i < preds.size(); ++i)
    out.push_back(to_record(preds[i], eval_set[i], "few_shot", weak.id, task.name,
                            {}, run_id));
  return out;
}

std::vector<EvalRecord> run_single_grimoire(Gateway& gateway, const ModelSpec& weak,
                                            const TaskSpec& task,
                                            const std::vector<Sample>& eval_set,
                                            const Grimoire& g,
                                            const std::string& run_id) {
  if (g.task != task.name)
    throw ConfigError("grimoire " + g.id + " belongs to task " + g.task +
                      ", not " + task.name);
  const std::string preamble = grimoire_preamble(g);
  const auto preds = gateway.predict_batch(
      weak, task, eval_set, [&](const Sample&) { return preamble; });
  std::vector<EvalRecord> out;
  out.reserve(preds.size());
  for (size_t i = 0; i < preds.size(); ++i)
    out.push_back(to_record(preds[i], eval_set[i], "single_grimoire", weak.id,
                            task.name, g.id, run_id));
  return out;
}

std::vector<EvalRecord> run_sleicl(Gateway& gateway, const ModelSpec& weak,
                                   const TaskSpec& task,
                                   const std::vector<Sample>& eval_set,
                                   const std::vector<Grimoire>& candidates,
                                   const UtilityFn& scorer,
                                   const std::string& mode_name,
                                   const std::string& run_id) {
  if (candidates.empty())
    throw DependencyError("sleicl mode needs a non-empty candidate set for task " +
                          task.name);
  std::vector<EvalRecord> out;
  out.reserve(eval_set.size());
  for (const Sample& sample : eval_set) {
    const Grimoire& chosen = select_grimoire(sample, candidates, scorer);
    const Prediction pred =
        gateway.predict(weak, task, sample, grimoire_preamble(chosen));
    out.push_back(to_record(pred, sample, mode_name, weak.id, task.name, chosen.id,
                            run_id));
  }
  return out;
}

Accuracy accuracy_with_validity(const std::vector<EvalRecord>& records,
                                int min_valid) {
  Accuracy acc;
  acc.total = static_cast<int>(records.size());
  for (const auto& r : records) {
    if (r.valid) ++acc.valid;
    if (r.correct) ++acc.correct;
  }
  if (acc.valid >= min_valid && acc.valid > 0) {
    acc.value = static_cast<double>(acc.correct) / static_cast<double>(acc.valid);
  }
  return acc;
}

DiffBucket diff_bucket(double delta_pp) {
  if (std::isnan(delta_pp)) return DiffBucket::not_available;
  if (delta_pp >= 0.0) {
    if (delta_pp < 5.0) return DiffBucket::pos_lt_5;
    if (delta_pp < 10.0) return DiffBucket::pos_5_10;
    if (delta_pp < 20.0) return DiffBucket::pos_10_20;
    if (delta_pp < 30.0) return DiffBucket::pos_20_30;
    return DiffBucket::pos_gt_30;
  }
  if (delta_pp > -5.0) return DiffBucket::neg_gt_m5;
  if (delta_pp > -10.0) return DiffBucket::neg_m5_m10;
  return DiffBucket::neg_lt_m10;
}

std::string to_string(DiffBucket b) {
  switch (b) {
    case DiffBucket::pos_lt_5: return "<5%";
    case DiffBucket::pos_5_10: return "5~10%";
    case DiffBucket::pos_10_20: return "10~20%";
    case DiffBucket::pos_20_30: return "20~30%";
    case DiffBucket::pos_gt_30: return ">30%";
    case DiffBucket::neg_gt_m5: return ">-5%";
    case DiffBucket::neg_m5_m10: return "-5~-10%";
    case DiffBucket::neg_lt_m10: return "<-10%";
    case DiffBucket::not_available: return "n/a";
  }
  return "n/a";
}

// --- report -------------------------------------------------------------------

namespace {

double row_average(const ReportRow& row, const std::vector<std::string>& tasks,
                   int& skipped) {
  double sum = 0.0;
  int counted = 0;
  skipped = 0;
  for (const auto& task : tasks) {
    auto it = row.cells.find(task);
    if (it == row.cells.end() || it->second.accuracy.is_nan()) {
      ++skipped;
      continue;
    }
    sum += it->second.accuracy.value;
    ++counted;
  }
  if (counted == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / counted;
}

void mark_best_second(std::vector<ReportRow>& rows,
                      const std::vector<std::string>& tasks) {
  auto mark_column = [&](auto get_value, auto set_best, auto set_second) {
    double best = -1.0, second = -1.0;
    for (const auto& row : rows) {
      const double v = get_value(row);
      if (std::isnan(v)) continue;
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second && v < best) {
        second = v;
      }
    }
    if (best < 0.0) return;  // all NaN: no markers
    for (auto& row : rows) {
      const double v = get_value(row);
      if (std::isnan(v)) continue;
      if (v == best) set_best(row);
      else if (second >= 0.0 && v == second) set_second(row);
    }
  };

  for (const auto& task : tasks) {
    mark_column(
        [&](const ReportRow& r) {
          auto it = r.cells.find(task);
          return it == r.cells.end() ? std::numeric_limits<double>::quiet_NaN()
                                     : it->second.accuracy.value;
        },
        [&](ReportRow& r) { r.cells[task].best = true; },
        [&](ReportRow& r) { r.cells[task].second = true; });
  }
  mark_column([](const ReportRow& r) { return r.avg; },
              [](ReportRow& r) { r.avg_best = true; },
              [](ReportRow& r) { r.avg_second = true; });
}

DiffCell make_diff(const Accuracy& target, const Accuracy& base) {
  DiffCell cell;
  if (!target.is_nan() && !base.is_nan()) {
    cell.delta_pp = (target.value - base.value) * 100.0;
  }
  cell.bucket = diff_bucket(cell.delta_pp);
  return cell;
}

DiffCell make_diff_value(double target, double base) {
  DiffCell cell;
  if (!std::isnan(target) && !std::isnan(base)) {
    cell.delta_pp = (target - base) * 100.0;
  }
  cell.bucket = diff_bucket(cell.delta_pp);
  return cell;
}

std::string format_pct(double fraction) {
  if (std::isnan(fraction)) return "NaN";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << fraction * 100.0 << "%";
  return out.str();
}

std::string format_delta(double delta_pp) {
  if (std::isnan(delta_pp)) return "NaN";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << std::showpos << delta_pp << "%";
  return out.str();
}

}  // namespace

RunReport build_report(const std::string& run_id, const std::string& weak_model,
                       const std::vector<std::string>& tasks,
                       const std::vector<RecordGroup>& groups, int min_valid) {
  RunReport report;
  report.run_id = run_id;
  report.weak_model = weak_model;
  report.min_valid = min_valid;
  report.tasks = tasks;

  for (const auto& group : groups) {
    ReportRow row;
    row.label = group.label;
    row.mode = group.mode;
    row.grimoire_id = group.grimoire_id;
    for (const auto& [task, records] : group.by_task) {
      ReportCell cell;
      cell.accuracy = accuracy_with_validity(records, min_valid);
      row.cells[task] = cell;
    }
    row.avg = row_average(row, tasks, row.avg_skipped);
    report.rows.push_back(std::move(row));
  }
  mark_best_second(report.rows, tasks);

  // Diff sections: Max(Single Grimoire) and each SLEICL row against each
  // baseline present.
  auto find_row = [&](const std::string& mode) -> const ReportRow* {
    for (const auto& row : report.rows) {
      if (row.mode == mode) return &row;
    }
    return nullptr;
  };

  std::optional<ReportRow> max_single;
  {
    ReportRow best;
    best.label = "Max(Single Grimoire)";
    bool any = false;
    for (const auto& row : report.rows) {
      if (row.mode != "single_grimoire") continue;
      any = true;
      for (const auto& task : tasks) {
        auto it = row.cells.find(task);
        if (it == row.cells.end() || it->second.accuracy.is_nan()) continue;
        auto& cell = best.cells[task];
        if (cell.accuracy.is_nan() ||
            it->second.accuracy.value > cell.accuracy.value) {
          cell.accuracy = it->second.accuracy;
        }
      }
    }
    if (any) {
      best.avg = row_average(best, tasks, best.avg_skipped);
      max_single = std::move(best);
    }
  }

  struct Target {
    std::string name;
    const ReportRow* row;
  };
  std::vector<Target> targets;
  if (max_single) targets.push_back({"Max(Single Grimoire)", &*max_single});
  if (const ReportRow* r = find_row("sleicl_similarity"))
    targets.push_back({"SLEICL (similarity)", r});
  if (const ReportRow* r = find_row("sleicl_classifier"))
    targets.push_back({"SLEICL (classifier)", r});

  for (const auto& [base_mode, base_label] :
       std::vector<std::pair<std::string, std::string>>{
           {"zero_shot", "Zero-Shot"}, {"few_shot", "Few-Shot"}}) {
    const ReportRow* base = find_row(base_mode);
    if (base == nullptr) continue;
    for (const auto& target : targets) {
      DiffRow diff;
      diff.target = target.name;
      diff.base = base_label;
      for (const auto& task : tasks) {
        Accuracy t, b;
        if (auto it = target.row->cells.find(task); it != target.row->cells.end())
          t = it->second.accuracy;
        if (auto it = base->cells.find(task); it != base->cells.end())
          b = it->second.accuracy;
        diff.cells[task] = make_diff(t, b);
      }
      diff.avg = make_diff_value(target.row->avg, base->avg);
      report.diffs.push_back(std::move(diff));
    }
  }
  return report;
}

std::string RunReport::to_json() const {
  json obj;
  obj["schema_version"] = 1;
  obj["run_id"] = run_id;
  obj["weak_model"] = weak_model;
  obj["min_valid"] = min_valid;
  obj["tasks"] = tasks;

  json rows_json = json::array();
  for (const auto& row : rows) {
    json r{{"label", row.label}, {"mode", row.mode}};
    if (!row.grimoire_id.empty()) r["grimoire_id"] = row.grimoire_id;
    json cells = json::object();
    for (const auto& task : tasks) {
      auto it = row.cells.find(task);
      json cell;
      if (it == row.cells.end() || it->second.accuracy.is_nan()) {
        cell["accuracy"] = nullptr;
      } else {
        cell["accuracy"] = it->second.accuracy.value;
      }
      if (it != row.cells.end()) {
        cell["valid"] = it->second.accuracy.valid;
        cell["total"] = it->second.accuracy.total;
        cell["best"] = it->second.best;
        cell["second"] = it->second.second;
      }
      cells[task] = cell;
    }
    r["cells"] = cells;
    r["avg"] = std::isnan(row.avg) ? json(nullptr) : json(row.avg);
    r["avg_skipped"] = row.avg_skipped;
    r["avg_best"] = row.avg_best;
    r["avg_second"] = row.avg_second;
    rows_json.push_back(std::move(r));
  }
  obj["rows"] = rows_json;

  json diffs_json = json::array();
  for (const auto& diff : diffs) {
    json d{{"target", diff.target}, {"base", diff.base}};
    json cells = json::object();
    for (const auto& task : tasks) {
      auto it = diff.cells.find(task);
      json cell;
      if (it == diff.cells.end() || std::isnan(it->second.delta_pp)) {
        cell["delta_pp"] = nullptr;
        cell["bucket"] = to_string(DiffBucket::not_available);
      } else {
        cell["delta_pp"] = it->second.delta_pp;
        cell["bucket"] = to_string(it->second.bucket);
      }
      cells[task] = cell;
    }
    d["cells"] = cells;
    d["avg_delta_pp"] =
        std::isnan(diff.avg.delta_pp) ? json(nullptr) : json(diff.avg.delta_pp);
    d["avg_bucket"] = to_string(diff.avg.bucket);
    diffs_json.push_back(std::move(d));
  }
  obj["diffs"] = diffs_json;
  return obj.dump(2);
}

namespace {

std::string marked(const std::string& text, bool best, bool second) {
  if (best) return "**" + text + "**";
  if (second) return "_" + text + "_";
  return text;
}

void append_table(std::ostringstream& out,
                  const std::vector<std::vector<std::string>>& table) {
  std::vector<size_t> widths;
  for (const auto& row : table) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (size_t i = 0; i < row.size(); ++i)
      widths[i] = std::max(widths[i], row[i].size());
  }
  for (const auto& row : table) {
    for (size_t i = 0; i < row.size(); ++i) {
      out << std::left << std::setw(static_cast<int>(widths[i]) + 2) << row[i];
    }
    out << '\n';
  }
}

}  // namespace

std::string RunReport::to_text() const {
  std::ostringstream out;
  out << "Run " << run_id << " | weak model " << weak_model << " | min_valid "
      << min_valid << "\n";
  out << "(** best, _second_ per column; NaN = fewer than " << min_valid
      << " valid predictions)\n\n";

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"Submodel"};
  header.insert(header.end(), tasks.begin(), tasks.end());
  header.push_back("AVG");
  table.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> line{row.label};
    for (const auto& task : tasks) {
      auto it = row.cells.find(task);
      if (it == row.cells.end()) {
        line.push_back("-");
      } else {
        line.push_back(marked(format_pct(it->second.accuracy.value),
                              it->second.best, it->second.second));
      }
    }
    line.push_back(marked(format_pct(row.avg), row.avg_best, row.avg_second));
    table.push_back(std::move(line));
  }
  append_table(out, table);

  if (!diffs.empty()) {
    out << "\nDifferences vs baseline (percentage points, bucketed)\n\n";
    std::vector<std::vector<std::string>> difft;
    std::vector<std::string> dheader{"DIFF"};
    dheader.insert(dheader.end(), tasks.begin(), tasks.end());
    dheader.push_back("AVG");
    difft.push_back(dheader);
    for (const auto& diff : diffs) {
      std::vector<std::string> line{diff.target + " vs " + diff.base};
      for (const auto& task : tasks) {
        auto it = diff.cells.find(task);
        if (it == diff.cells.end() || std::isnan(it->second.delta_pp)) {
          line.push_back("NaN");
        } else {
          line.push_back(format_delta(it->second.delta_pp) + " [" +
                         to_string(it->second.bucket) + "]");
        }
      }
      line.push_back(std::isnan(diff.avg.delta_pp)
                         ? "NaN"
                         : format_delta(diff.avg.delta_pp) + " [" +
                               to_string(diff.avg.bucket) + "]");
      difft.push_back(std::move(line));
    }
    append_table(out, difft);
  }
  return out.str();
}

std::string RunReport::to_csv() const {
  std::ostringstream out;
  out << "submodel";
  for (const auto& task : tasks) out << "," << task;
  out << ",avg\n";
  for (const auto& row : rows) {
    out << '"' << row.label << '"';
    for (const auto& task : tasks) {
      auto it = row.cells.find(task);
      out << ',';
      if (it != row.cells.end() && !it->second.accuracy.is_nan()) {
        out << std::fixed << std::setprecision(4) << it->second.accuracy.value;
      } else {
        out << "NaN";
      }
    }
    out << ',';
    if (std::isnan(row.avg)) out << "NaN";
    else out << std::fixed << std::setprecision(4) << row.avg;
    out << '\n';
  }
  return out.str();
}

}  // namespace sleicl
