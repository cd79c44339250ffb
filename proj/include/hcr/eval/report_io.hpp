#pragma once

// Score files (JSON lines of per-sample logits or probabilities) and
// EvalReport serialisation.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcr/eval/metrics.hpp"
#include "hcr/features/io.hpp"
#include "hcr/model/hcr.hpp"

namespace hcr {

struct ScoredSample {
  std::string sample_id;
  PredictionTriplet scores;
};

inline void write_score_file(const std::string& path, const std::vector<ScoredSample>& rows) {
  std::string text;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["verb_scores"] = r.scores.verb_scores;
    j["noun_scores"] = r.scores.noun_scores;
    j["action_scores"] = r.scores.action_scores;
    text += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) + "\n";
  }
  detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline std::vector<ScoredSample> read_score_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file " + path);
  std::vector<ScoredSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoredSample s;
      s.sample_id = j.at("sample_id").get<std::string>();
      s.scores.verb_scores = j.at("verb_scores").get<std::vector<double>>();
      s.scores.noun_scores = j.at("noun_scores").get<std::vector<double>>();
      s.scores.action_scores = j.at("action_scores").get<std::vector<double>>();
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Metrics for score rows matched to annotations by sample id.
inline EvalReport evaluate_score_rows(const std::vector<ScoredSample>& rows,
                                      const std::vector<Annotation>& annotations,
                                      const ClassCounts& classes) {
  std::map<std::string, const Annotation*> by_id;
  for (const auto& a : annotations) by_id[a.sample_id] = &a;
  std::array<std::vector<std::vector<double>>, 3> scores;
  std::array<std::vector<std::size_t>, 3> labels;
  for (const auto& r : rows) {
    auto it = by_id.find(r.sample_id);
    if (it == by_id.end()) throw ConfigError("score row for unknown sample " + r.sample_id);
    const Annotation& a = *it->second;
    const std::array<std::size_t, 3> y{a.verb_class, a.noun_class, a.action_class};
    for (std::size_t t = 0; t < 3; ++t) {
      scores[t].push_back(r.scores.task(t));
      labels[t].push_back(y[t]);
    }
  }
  return evaluate_scores(scores, labels, {classes.verbs, classes.nouns, classes.actions});
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["samples"] = r.samples;
  for (std::size_t t = 0; t < 3; ++t) {
    nlohmann::ordered_json tj;
    tj["top5_acc"] = r.tasks[t].top5_acc;
    tj["mean_top5_recall"] = r.tasks[t].mean_top5_recall;
    tj["top1_acc"] = r.tasks[t].top1_acc;
    nlohmann::ordered_json pc = nlohmann::ordered_json::object();
    for (const auto& [c, v] : r.tasks[t].per_class_recall) pc[std::to_string(c)] = v;
    tj["per_class_recall"] = pc;
    j[kTaskNames[t]] = tj;
  }
  j["avg"] = r.avg();
  if (r.loss != 0.0) j["loss"] = r.loss;
  return j;
}

inline std::string table_header() {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s | %-23s | %-23s | %6s\n%-24s | %7s %7s %7s | %7s %7s %7s |\n",
                "", "Top-5 Acc", "M.Top-5 Rec", "Avg.", "", "VERB", "NOUN", "ACT", "VERB", "NOUN",
                "ACT");
  return buf;
}

/// One aligned row in percent: top-5 acc (V N A), mean top-5 recall (V N A), avg.
inline std::string table_row(const std::string& label, const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s | %7.2f %7.2f %7.2f | %7.2f %7.2f %7.2f | %6.2f\n",
                label.c_str(), 100 * r.tasks[0].top5_acc, 100 * r.tasks[1].top5_acc,
                100 * r.tasks[2].top5_acc, 100 * r.tasks[0].mean_top5_recall,
                100 * r.tasks[1].mean_top5_recall, 100 * r.tasks[2].mean_top5_recall, r.avg());
  return buf;
}

}  // namespace hcr
