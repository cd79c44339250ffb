#pragma once

// Run configuration shared by the CLI, config files and output artifacts.
// JSON field names match the long CLI flags with '-' replaced by '_'.

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcr/model/hcr.hpp"

namespace hcr {

struct RunConfig {
  // Model.
  std::size_t dim = 0;  // 0: take from the feature files
  std::array<std::size_t, 3> n{2, 3, 5};
  std::array<double, 4> deltas{1.6, 1.2, 0.8, 0.4};
  std::size_t heads = 5;
  std::size_t layers = 1;
  std::size_t ffn_mult = 4;
  double dropout = 0.3;
  bool positional_encoding = false;
  std::array<std::size_t, 3> classes{0, 0, 0};  // verb, noun, action; 0: infer
  std::vector<std::string> modality{"rgb"};
  std::vector<double> fusion_weights;  // empty: uniform
  std::string gfl_mode = "gf";
  std::string feature_mode = "cr";
  std::string recent_mode = "recent";

  // Optimisation.
  double lr = 1e-4;
  std::size_t lr_decay_every = 8;
  double lr_decay_factor = 0.1;
  std::size_t batch_size = 10;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double tau = 1.0;
  double val_fraction = 0.1;

  // Paths.
  std::string features_dir;
  std::string annotations;
  std::string out_dir;

  std::vector<Modality> modalities() const {
    std::vector<Modality> out;
    for (const auto& m : modality) out.push_back(parse_modality(m));
    if (out.empty()) throw ConfigError("at least one modality is required");
    return out;
  }

  std::vector<double> fusion() const {
    const std::size_t m = modality.size();
    if (fusion_weights.empty()) return std::vector<double>(m, 1.0 / static_cast<double>(m));
    if (fusion_weights.size() != m) {
      throw ConfigError("fusion_weights has " + std::to_string(fusion_weights.size()) +
                        " entries for " + std::to_string(m) + " modalities");
    }
    double s = 0.0;
    for (double w : fusion_weights) s += w;
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("fusion_weights must sum to 1");
    return fusion_weights;
  }

  /// Learning rate in effect for a 1-based epoch.
  double lr_at(std::size_t epoch) const {
    if (lr_decay_every == 0) return lr;
    const std::size_t decays = (epoch - 1) / lr_decay_every;
    double rate = lr;
    for (std::size_t i = 0; i < decays; ++i) rate *= lr_decay_factor;
    return rate;
  }

  HcrConfig model() const {
    HcrConfig c;
    c.dim = dim;
    c.n = n;
    c.deltas = deltas;
    c.heads = heads;
    c.layers = layers;
    c.ffn_mult = ffn_mult;
    c.dropout = dropout;
    c.positional_encoding = positional_encoding;
    c.classes = {classes[0], classes[1], classes[2]};
    c.gfl_mode = parse_gfl_mode(gfl_mode);
    c.feature_mode = parse_feature_mode(feature_mode);
    c.recent_mode = parse_recent_mode(recent_mode);
    return c;
  }

  void validate() const {
    model();  // parses the enum strings
    modalities();
    fusion();
    validate_deltas(deltas);
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(tau >= 0.0)) throw ConfigError("tau must be non-negative");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["n"] = c.n;
  j["deltas"] = c.deltas;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["ffn_mult"] = c.ffn_mult;
  j["dropout"] = c.dropout;
  j["positional_encoding"] = c.positional_encoding;
  j["classes"] = c.classes;
  j["modality"] = c.modality;
  j["fusion_weights"] = c.fusion_weights;
  j["gfl_mode"] = c.gfl_mode;
  j["feature_mode"] = c.feature_mode;
  j["recent_mode"] = c.recent_mode;
  j["lr"] = c.lr;
  j["lr_decay_every"] = c.lr_decay_every;
  j["lr_decay_factor"] = c.lr_decay_factor;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["tau"] = c.tau;
  j["val_fraction"] = c.val_fraction;
  j["features_dir"] = c.features_dir;
  j["annotations"] = c.annotations;
  j["out_dir"] = c.out_dir;
  return j;
}

/// Overlays the fields present in `j` onto `c`; unknown keys are an error.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "dim") c.dim = v.get<std::size_t>();
      else if (k == "n") c.n = v.get<std::array<std::size_t, 3>>();
      else if (k == "deltas") c.deltas = v.get<std::array<double, 4>>();
      else if (k == "heads") c.heads = v.get<std::size_t>();
      else if (k == "layers") c.layers = v.get<std::size_t>();
      else if (k == "ffn_mult") c.ffn_mult = v.get<std::size_t>();
      else if (k == "dropout") c.dropout = v.get<double>();
      else if (k == "positional_encoding") c.positional_encoding = v.get<bool>();
      else if (k == "classes") c.classes = v.get<std::array<std::size_t, 3>>();
      else if (k == "modality") c.modality = v.is_string() ? std::vector<std::string>{v.get<std::string>()}
                                                           : v.get<std::vector<std::string>>();
      else if (k == "fusion_weights") c.fusion_weights = v.get<std::vector<double>>();
      else if (k == "gfl_mode") c.gfl_mode = v.get<std::string>();
      else if (k == "feature_mode") c.feature_mode = v.get<std::string>();
      else if (k == "recent_mode") c.recent_mode = v.get<std::string>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "lr_decay_every") c.lr_decay_every = v.get<std::size_t>();
      else if (k == "lr_decay_factor") c.lr_decay_factor = v.get<double>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "tau") c.tau = v.get<double>();
      else if (k == "val_fraction") c.val_fraction = v.get<double>();
      else if (k == "features_dir") c.features_dir = v.get<std::string>();
      else if (k == "annotations") c.annotations = v.get<std::string>();
      else if (k == "out_dir") c.out_dir = v.get<std::string>();
      else throw ConfigError("unknown config field: " + k);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config field " + k + ": " + e.what());
    }
  }
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  apply_json(c, j);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace hcr
