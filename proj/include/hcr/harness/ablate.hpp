#pragma once

// Ablation matrices: a named list of cells, each a set of RunConfig field
// overrides applied to a base config. Every cell trains and evaluates in
// <base.out_dir>/<matrix>/<label> with the base seed.

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "hcr/harness/trainer.hpp"

namespace hcr {

struct AblationCell {
  std::string label;
  nlohmann::json overrides;
};

struct AblationMatrix {
  std::string name;
  std::vector<AblationCell> cells;
};

inline std::vector<std::string> builtin_matrices() {
  return {"gfl", "feature", "recent", "deltas", "transformer", "transformer_epic", "transformer_egtea", "modality"};
}

inline AblationMatrix builtin_matrix(const std::string& name) {
  AblationMatrix m{name, {}};
  auto cell = [&](std::string label, nlohmann::json o) { m.cells.push_back({std::move(label), std::move(o)}); };
  auto heads_layers = [&](std::initializer_list<std::pair<int, int>> grid) {
    for (auto [h, l] : grid)
      cell("h" + std::to_string(h) + "_l" + std::to_string(l), {{"heads", h}, {"layers", l}});
  };
  if (name == "gfl") {
    for (const char* g : {"none", "g", "f", "gf"}) cell(g, {{"gfl_mode", g}});
  } else if (name == "feature") {
    for (const char* f : {"c", "r", "cr"}) cell(f, {{"feature_mode", f}});
  } else if (name == "recent") {
    for (const char* r : {"old", "recent"}) cell(r, {{"recent_mode", r}});
  } else if (name == "deltas") {
    const std::vector<std::pair<std::string, std::array<double, 4>>> sets = {
        {"0.4", {0.4, 0.3, 0.2, 0.1}},
        {"0.8", {0.8, 0.6, 0.4, 0.2}},
        {"1.2", {1.2, 0.9, 0.6, 0.3}},
        {"1.6", {1.6, 1.2, 0.8, 0.4}}};
    for (const char* r : {"old", "recent"})
      for (const auto& [label, d] : sets) cell(std::string(r) + "_" + label, {{"recent_mode", r}, {"deltas", d}});
  } else if (name == "transformer") {
    heads_layers({{2, 1}, {4, 1}, {8, 1}, {2, 2}, {2, 3}});
  } else if (name == "transformer_epic") {
    heads_layers({{2, 1}, {4, 1}, {6, 1}, {5, 1}, {5, 2}, {5, 3}});
  } else if (name == "transformer_egtea") {
    heads_layers({{3, 1}, {4, 1}, {6, 1}, {2, 1}, {2, 2}, {2, 3}});
  } else if (name == "modality") {
    const std::vector<std::vector<std::string>> sets = {
        {"rgb"}, {"flow"}, {"obj"}, {"rgb", "flow"}, {"rgb", "obj"}, {"flow", "obj"}, {"rgb", "flow", "obj"}};
    for (const auto& s : sets) {
      std::string label;
      for (const auto& x : s) label += (label.empty() ? "" : "+") + x;
      cell(label, {{"modality", s}});
    }
  } else {
    std::string known;
    for (const auto& b : builtin_matrices()) known += " " + b;
    throw ConfigError("unknown ablation matrix '" + name + "' (builtin:" + known + ")");
  }
  return m;
}

/// `{"name": ..., "cells": [{"label": ..., "overrides": {...}}, ...]}`
inline AblationMatrix matrix_from_json(const nlohmann::json& j) {
  AblationMatrix m;
  try {
    m.name = j.value("name", "custom");
    for (const auto& c : j.at("cells")) m.cells.push_back({c.at("label").get<std::string>(), c.value("overrides", nlohmann::json::object())});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ablation matrix: ") + e.what());
  }
  if (m.cells.empty()) throw ConfigError("ablation matrix has no cells");
  return m;
}

struct AblationRow {
  std::string label;
  RunConfig config;
  EvalReport report;  // fused when the cell has several modalities
};

struct AblationOptions {
  std::string eval_annotations;  // scored split
  std::string split = "test";
  std::size_t jobs = 1;
  std::ostream* progress = nullptr;
};

inline RunConfig cell_config(const RunConfig& base, const AblationMatrix& m, const AblationCell& c) {
  RunConfig cfg = base;
  apply_json(cfg, c.overrides);
  cfg.out_dir = (fs::path(base.out_dir) / m.name / c.label).string();
  return cfg;
}

inline std::string ablation_table(const AblationMatrix& m, const std::vector<AblationRow>& rows) {
  std::string out = m.name + "\n" + table_header();
  for (const auto& r : rows) out += table_row(r.label, r.report);
  return out;
}

/// Validates every cell up front, then trains and evaluates them (in
/// parallel when `jobs` > 1). Writes `<out_dir>/<matrix>/table.{json,txt}`.
inline std::vector<AblationRow> ablate(const AblationMatrix& m, const RunConfig& base, const AblationOptions& opt) {
  if (opt.eval_annotations.empty()) throw ConfigError("ablate needs evaluation annotations");
  if (base.out_dir.empty()) throw ConfigError("out_dir is required");
  std::vector<RunConfig> cells;
  std::string problems;
  std::size_t dim = base.dim;
  if (dim == 0) {
    const auto anns = read_annotations(base.annotations);
    if (anns.empty()) throw ConfigError("no training annotations in " + base.annotations);
    dim = read_track(track_path(base.features_dir, anns.front().video_id, base.modalities().front()),
                     anns.front().video_id, base.modalities().front()).dim;
  }
  for (const auto& c : m.cells) {
    try {
      RunConfig cfg = cell_config(base, m, c);
      cfg.validate();
      if (dim % cfg.heads != 0) throw ConfigError("dimension " + std::to_string(dim) + " is not divisible by " + std::to_string(cfg.heads) + " heads");
      cells.push_back(cfg);
    } catch (const Error& e) {
      problems += "\n  " + c.label + ": " + e.what();
    }
  }
  if (!problems.empty()) throw ConfigError("invalid ablation cells:" + problems);

  std::vector<AblationRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const TrainRun run = train(cells[i]);
        const EvalRun ev = evaluate(run.config, opt.eval_annotations, opt.split);
        rows[i] = {m.cells[i].label, run.config, ev.final_report()};
        if (opt.progress) {
          std::lock_guard<std::mutex> lock(mu);
          *opt.progress << table_row(m.cells[i].label, rows[i].report);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const fs::path dir = fs::path(base.out_dir) / m.name;
  nlohmann::ordered_json j;
  j["matrix"] = m.name;
  j["base_config"] = to_json(base);
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json rj;
    rj["label"] = r.label;
    rj["config"] = to_json(r.config);
    rj["report"] = to_json(r.report);
    j["rows"].push_back(std::move(rj));
  }
  write_json(dir / "table.json", j);
  write_text(dir / "table.txt", ablation_table(m, rows));
  return rows;
}

}  // namespace hcr
