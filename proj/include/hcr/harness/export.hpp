#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcr/harness/trainer.hpp"

namespace hcr {

namespace detail {

inline nlohmann::ordered_json matrix_json(const Tensor& t) {
  if (!t.defined()) return nullptr;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  const std::size_t r = t.rows(), c = t.cols();
  const auto& v = t.data();
  for (std::size_t i = 0; i < r; ++i) rows.push_back(std::vector<double>(v.begin() + i * c, v.begin() + (i + 1) * c));
  return rows;
}

}  // namespace detail

/// GFL attention records for one sample: for each of the 4x3 (recent i,
/// complete j) pairs, one record per stage.
///   single  temporal attention only (A_t); output A_t C
///   dual    A_t and channel attention A_c; output A_t C A_c
///   guided  guide attention A_g and channel attention B_c; output R_G
/// Maps a stage does not use, or the mode does not compute, are null.
inline nlohmann::ordered_json attention_json(const HcrModel& model, const SampleFeatures& x) {
  if (model.config().gfl_mode == GflMode::None) throw ConfigError("gfl_mode none has no attention to export");
  NoGradGuard no_grad;
  const HcrOutput out = model.forward(x, ForwardContext{});
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < HcrModel::kBranches; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const GflOutput& g = out.mcrfa[i].gfl[j];
      auto record = [&](const char* stage, const Tensor& t, const Tensor& c, const Tensor& guide, const Tensor& o) {
        nlohmann::ordered_json r;
        r["pair"] = {i + 1, j + 1};
        r["stage"] = stage;
        r["n"] = model.config().n[j];
        r["attn_temporal"] = detail::matrix_json(t);
        r["attn_channel"] = detail::matrix_json(c);
        r["attn_guide"] = detail::matrix_json(guide);
        r["output"] = detail::matrix_json(o);
        records.push_back(std::move(r));
      };
      record("single", g.attn_temporal, Tensor(), Tensor(), g.single_attended);
      record("dual", g.attn_temporal, g.attn_channel, Tensor(), g.dual_attended);
      if (g.guided.defined()) record("guided", Tensor(), g.attn_guide_channel, g.attn_guide, g.guided);
    }
  }
  return records;
}

/// Exports attention for `sample_ids` (all samples when empty) from the best
/// checkpoint of every modality in a trained run.
inline nlohmann::ordered_json export_attention(const RunConfig& cfg, const std::string& annotations_path,
                                               const std::vector<std::string>& sample_ids) {
  cfg.validate();
  auto anns = read_annotations(annotations_path);
  if (!sample_ids.empty()) {
    std::vector<Annotation> picked;
    std::vector<std::string> unknown;
    for (const auto& id : sample_ids) {
      auto it = std::find_if(anns.begin(), anns.end(), [&](const Annotation& a) { return a.sample_id == id; });
      if (it == anns.end()) unknown.push_back(id);
      else picked.push_back(*it);
    }
    if (!unknown.empty()) {
      std::string msg = "unknown sample id(s):";
      for (const auto& u : unknown) msg += " " + u;
      throw ConfigError(msg);
    }
    anns = std::move(picked);
  }
  const Dataset ds = load_dataset(cfg, anns);
  const auto mods = cfg.modalities();
  nlohmann::ordered_json j;
  j["config"] = to_json(cfg);
  j["samples"] = nlohmann::ordered_json::array();
  std::vector<HcrModel> models;
  for (Modality m : mods) models.push_back(load_model(cfg, m, cfg.out_dir));
  for (const auto& s : ds.samples) {
    nlohmann::ordered_json sj;
    sj["sample_id"] = s.annotation.sample_id;
    for (std::size_t k = 0; k < mods.size(); ++k) sj["modalities"][to_string(mods[k])] = attention_json(models[k], s.features[k]);
    j["samples"].push_back(std::move(sj));
  }
  return j;
}

}  // namespace hcr
