#pragma once

// Training and evaluation of per-modality HCR models.
//
// Run directory layout:
//   <out_dir>/config.json                 resolved RunConfig
//   <out_dir>/<modality>/best.hcrw        best-by-validation weights
//   <out_dir>/<modality>/last.hcrw        weights + optimiser state (resume)
//   <out_dir>/<modality>/train_log.jsonl  config line, then one line per epoch
//   <out_dir>/scores_<split>_<modality|fused>.jsonl
//   <out_dir>/report_<split>.{json,txt}

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hcr/eval/report_io.hpp"
#include "hcr/harness/dataset.hpp"
#include "hcr/model/fusion.hpp"
#include "hcr/numerics/adam.hpp"
#include "hcr/numerics/checkpoint.hpp"

namespace hcr {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file(path.string(), std::vector<char>(text.begin(), text.end()));
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

/// Model initialisation seed for one modality of a run.
inline std::uint64_t init_seed(const RunConfig& cfg, Modality m) {
  return Rng(cfg.seed).fork(0x1000 + static_cast<std::uint64_t>(m)).next_u64();
}

struct Predictions {
  std::vector<ScoredSample> rows;
  double mean_loss = 0.0;
};

/// Eval-mode forward over every sample (dropout off, no graph).
inline Predictions predict(const HcrModel& model, const Dataset& ds, std::size_t modality_index) {
  NoGradGuard no_grad;
  ForwardContext ctx;
  Predictions p;
  for (const auto& s : ds.samples) {
    const HcrOutput out = model.forward(s.features.at(modality_index), ctx);
    p.rows.push_back({s.annotation.sample_id, PredictionTriplet::from(out.final_scores)});
    p.mean_loss += hcr_loss(out.branches, s.labels()).item();
  }
  if (!ds.samples.empty()) p.mean_loss /= static_cast<double>(ds.samples.size());
  return p;
}

inline EvalReport report_for(const Predictions& p, const Dataset& ds, const ClassCounts& classes) {
  std::vector<Annotation> anns;
  for (const auto& s : ds.samples) anns.push_back(s.annotation);
  EvalReport r = evaluate_score_rows(p.rows, anns, classes);
  r.loss = p.mean_loss;
  return r;
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<EvalReport> val;
  bool improved = false;
};

struct TrainOptions {
  bool resume = false;
  /// Stop after this epoch as if interrupted (last.hcrw is still written).
  std::optional<std::size_t> stop_after_epoch;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  fs::path dir;
  std::size_t best_epoch = 0;
  std::optional<EvalReport> best_val;
  std::vector<EpochLog> epochs;
};

namespace detail {

struct TrainState {
  std::size_t epoch = 0;  // last completed epoch
  bool has_best = false;
  double best_top5 = 0.0;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;
};

inline std::vector<NamedTensor> resume_snapshot(const ParamStore& store, const AdamState& adam,
                                                const TrainState& st) {
  auto out = snapshot(store);
  const auto& ps = store.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    out.push_back({"optim.m." + ps[i].name, ps[i].tensor.shape(), adam.m[i]});
    out.push_back({"optim.v." + ps[i].name, ps[i].tensor.shape(), adam.v[i]});
  }
  out.push_back({"train.state", {6},
                 {static_cast<double>(st.epoch), static_cast<double>(adam.step), st.has_best ? 1.0 : 0.0,
                  st.best_top5, st.best_loss, static_cast<double>(st.best_epoch)}});
  return out;
}

inline TrainState restore_resume(const std::vector<NamedTensor>& file, ParamStore& store, AdamState& adam) {
  restore(store, file);
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : file) by_name[t.name] = &t;
  const auto& ps = store.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto m = by_name.find("optim.m." + ps[i].name);
    auto v = by_name.find("optim.v." + ps[i].name);
    if (m == by_name.end() || v == by_name.end()) throw ConfigError("resume file lacks optimiser state for " + ps[i].name);
    adam.m[i] = m->second->values;
    adam.v[i] = v->second->values;
  }
  auto st = by_name.find("train.state");
  if (st == by_name.end() || st->second->values.size() != 6) throw ConfigError("resume file lacks train.state");
  const auto& s = st->second->values;
  TrainState out;
  out.epoch = static_cast<std::size_t>(s[0]);
  adam.step = static_cast<std::uint64_t>(s[1]);
  out.has_best = s[2] != 0.0;
  out.best_top5 = s[3];
  out.best_loss = s[4];
  out.best_epoch = static_cast<std::size_t>(s[5]);
  return out;
}

inline nlohmann::ordered_json epoch_json(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["train_loss"] = e.train_loss;
  if (e.val) j["val"] = to_json(*e.val);
  j["improved"] = e.improved;
  return j;
}

inline void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << "\n";
}

}  // namespace detail

/// Trains the model for one modality. `cfg` must already be resolved
/// (dim and class counts set).
inline TrainResult train_modality(const RunConfig& cfg, std::size_t modality_index, const Dataset& train,
                                  const Dataset& val, const fs::path& dir, const TrainOptions& opt = {}) {
  const Modality mod = cfg.modalities().at(modality_index);
  const HcrConfig mc = cfg.model();
  HcrModel model(mc, init_seed(cfg, mod));
  auto& params = model.params().params();
  AdamState adam = AdamState::for_params(params);
  detail::TrainState st;

  fs::create_directories(dir);
  const fs::path last = dir / "last.hcrw", best = dir / "best.hcrw", log = dir / "train_log.jsonl";
  if (opt.resume && fs::exists(last)) {
    st = detail::restore_resume(load_weights(last.string()), model.params(), adam);
  } else {
    nlohmann::ordered_json head;
    head["config"] = to_json(cfg);
    head["modality"] = to_string(mod);
    write_text(log, head.dump() + "\n");
  }
  const nlohmann::ordered_json cfg_json = to_json(cfg);

  TrainResult result;
  result.dir = dir;
  const Rng root(cfg.seed);
  const std::size_t n = train.samples.size();
  if (n == 0) throw ConfigError("training set is empty");

  for (std::size_t epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    e.lr = cfg.lr_at(epoch);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.fork(fnv1a("shuffle") ^ epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      model.params().zero_grad();
      for (std::size_t pos = start; pos < stop; ++pos) {
        const Sample& s = train.samples[order[pos]];
        Rng drop = root.fork((epoch << 32) ^ (pos + 1));
        ForwardContext ctx{true, &drop};
        const HcrOutput out = model.forward(s.features.at(modality_index), ctx);
        const Tensor loss = hcr_loss(out.branches, s.labels());
        loss_sum += loss.item();
        scale(loss, inv_b).backward();
      }
      adam_step(params, adam, e.lr);
    }
    e.train_loss = loss_sum / static_cast<double>(n);

    if (!val.samples.empty()) {
      const Predictions p = predict(model, val, modality_index);
      e.val = report_for(p, val, mc.classes);
      const double top5 = e.val->tasks[2].top5_acc;
      e.improved = !st.has_best || top5 > st.best_top5 || (top5 == st.best_top5 && p.mean_loss < st.best_loss);
      if (e.improved) {
        result.best_val = e.val;
        st.has_best = true;
        st.best_top5 = top5;
        st.best_loss = p.mean_loss;
      }
    } else {
      e.improved = true;
    }
    if (e.improved) {
      st.best_epoch = epoch;
      save_weights(best.string(), snapshot(model.params()));
      nlohmann::ordered_json side;
      side["config"] = cfg_json;
      side["modality"] = to_string(mod);
      side["epoch"] = epoch;
      write_json(dir / "best.hcrw.json", side);
    }
    st.epoch = epoch;
    save_weights(last.string(), detail::resume_snapshot(model.params(), adam, st));
    detail::append_line(log, detail::epoch_json(e).dump());
    if (opt.progress) {
      *opt.progress << to_string(mod) << " epoch " << epoch << " lr " << e.lr << " loss " << e.train_loss;
      if (e.val) *opt.progress << " val action top5 " << e.val->tasks[2].top5_acc;
      *opt.progress << (e.improved ? " *" : "") << "\n";
    }
    result.epochs.push_back(e);
    if (opt.stop_after_epoch && epoch >= *opt.stop_after_epoch) break;
  }
  result.best_epoch = st.best_epoch;
  return result;
}

struct TrainRun {
  RunConfig config;  // resolved
  std::vector<TrainResult> modalities;
};

/// Full `train` command: load annotations, resolve config, split off
/// validation videos, train every configured modality.
inline TrainRun train(const RunConfig& raw, const TrainOptions& opt = {}) {
  raw.validate();
  if (raw.out_dir.empty()) throw ConfigError("out_dir is required");
  const Dataset all = load_dataset(raw, raw.annotations);
  TrainRun run;
  run.config = resolve(raw, all);
  run.config.validate();
  run.config.model().validate();
  auto [tr, va] = split_train_val(all, run.config.val_fraction);
  const fs::path out(run.config.out_dir);
  write_json(out / "config.json", to_json(run.config));
  const auto mods = run.config.modalities();
  for (std::size_t i = 0; i < mods.size(); ++i) {
    run.modalities.push_back(train_modality(run.config, i, tr, va, out / to_string(mods[i]), opt));
  }
  return run;
}

struct EvalRun {
  std::vector<std::pair<std::string, EvalReport>> reports;  // per modality, then "fused"
  std::vector<std::pair<std::string, std::vector<ScoredSample>>> scores;

  const EvalReport& get(const std::string& name) const {
    for (const auto& [k, r] : reports)
      if (k == name) return r;
    throw ConfigError("no report named " + name);
  }
  const EvalReport& final_report() const { return reports.back().second; }
};

/// Loads `<modality>/best.hcrw` for each modality of a resolved config.
inline HcrModel load_model(const RunConfig& cfg, Modality m, const fs::path& run_dir) {
  HcrModel model(cfg.model(), init_seed(cfg, m));
  restore(model.params(), load_weights((run_dir / to_string(m) / "best.hcrw").string()), true);
  return model;
}

/// `eval`: score every sample in `annotations_path` with each modality's best
/// checkpoint, fuse when there are several, write score files and reports.
inline EvalRun evaluate(const RunConfig& cfg, const std::string& annotations_path, const std::string& split) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg, annotations_path);
  if (ds.dim != cfg.dim) {
    throw ConfigError("features have dimension " + std::to_string(ds.dim) + " but the model expects " +
                      std::to_string(cfg.dim));
  }
  const fs::path dir(cfg.out_dir);
  const auto mods = cfg.modalities();
  const HcrConfig mc = cfg.model();
  EvalRun run;
  for (std::size_t i = 0; i < mods.size(); ++i) {
    const HcrModel model = load_model(cfg, mods[i], dir);
    const Predictions p = predict(model, ds, i);
    write_score_file((dir / ("scores_" + split + "_" + to_string(mods[i]) + ".jsonl")).string(), p.rows);
    run.reports.emplace_back(to_string(mods[i]), report_for(p, ds, mc.classes));
    run.scores.emplace_back(to_string(mods[i]), p.rows);
  }
  if (mods.size() > 1) {
    const auto weights = cfg.fusion();
    std::vector<ScoredSample> fused;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
      std::vector<PredictionTriplet> per;
      for (const auto& [name, rows] : run.scores) per.push_back(rows[s].scores);
      fused.push_back({ds.samples[s].annotation.sample_id, late_fuse(per, weights)});
    }
    write_score_file((dir / ("scores_" + split + "_fused.jsonl")).string(), fused);
    std::vector<Annotation> anns;
    for (const auto& s : ds.samples) anns.push_back(s.annotation);
    run.reports.emplace_back("fused", evaluate_score_rows(fused, anns, mc.classes));
    run.scores.emplace_back("fused", std::move(fused));
  }
  nlohmann::ordered_json j;
  j["config"] = to_json(cfg);
  j["split"] = split;
  for (const auto& [name, r] : run.reports) j["reports"][name] = to_json(r);
  write_json(dir / ("report_" + split + ".json"), j);
  std::string table = table_header();
  for (const auto& [name, r] : run.reports) table += table_row(name, r);
  write_text(dir / ("report_" + split + ".txt"), table);
  return run;
}

/// Resolved config of a trained run directory.
inline RunConfig load_run_dir_config(const fs::path& run_dir) {
  return load_run_config((run_dir / "config.json").string());
}

}  // namespace hcr
