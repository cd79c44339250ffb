#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hcr/features/io.hpp"
#include "hcr/harness/config.hpp"

namespace hcr {

struct Sample {
  Annotation annotation;
  std::vector<SampleFeatures> features;  // one per configured modality, in order

  Labels labels() const {
    return {annotation.verb_class, annotation.noun_class, annotation.action_class};
  }
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;
  std::array<std::size_t, 3> max_label_plus_one{0, 0, 0};
};

/// Loads tracks for every annotated video and extracts complete/recent tokens
/// with the configured geometry. Fails listing every missing feature file.
inline Dataset load_dataset(const RunConfig& cfg, const std::vector<Annotation>& annotations) {
  const auto mods = cfg.modalities();
  std::vector<std::string> missing;
  for (const auto& a : annotations) {
    for (Modality m : mods) {
      if (!std::filesystem::exists(track_path(cfg.features_dir, a.video_id, m))) {
        missing.push_back(a.video_id + " (" + to_string(m) + ")");
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing feature files for " + std::to_string(missing.size()) + " annotated video(s):";
    for (const auto& s : missing) msg += " " + s;
    throw IoError(msg);
  }

  HcrConfig geometry;
  geometry.n = cfg.n;
  geometry.deltas = cfg.deltas;
  geometry.recent_mode = parse_recent_mode(cfg.recent_mode);

  Dataset ds;
  std::map<std::pair<std::string, Modality>, FrameFeatureTrack> cache;
  for (const auto& a : annotations) {
    Sample s;
    s.annotation = a;
    for (Modality m : mods) {
      auto key = std::make_pair(a.video_id, m);
      auto it = cache.find(key);
      if (it == cache.end()) {
        it = cache.emplace(key, read_track(track_path(cfg.features_dir, a.video_id, m), a.video_id, m)).first;
      }
      const FrameFeatureTrack& track = it->second;
      if (ds.dim == 0) ds.dim = track.dim;
      if (track.dim != ds.dim) {
        throw DimensionError("video " + a.video_id + " (" + to_string(m) + ") has dimension " +
                             std::to_string(track.dim) + ", expected " + std::to_string(ds.dim));
      }
      const auto window = ObservationWindow::before_action(track, a.start_time_s, cfg.tau);
      s.features.push_back(extract_sample(track, window, geometry));
    }
    ds.max_label_plus_one[0] = std::max(ds.max_label_plus_one[0], a.verb_class + 1);
    ds.max_label_plus_one[1] = std::max(ds.max_label_plus_one[1], a.noun_class + 1);
    ds.max_label_plus_one[2] = std::max(ds.max_label_plus_one[2], a.action_class + 1);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline Dataset load_dataset(const RunConfig& cfg, const std::string& annotations_path) {
  return load_dataset(cfg, read_annotations(annotations_path));
}

/// Fills in dim and class counts left at 0 from the data.
inline RunConfig resolve(RunConfig cfg, const Dataset& ds) {
  if (cfg.dim == 0) cfg.dim = ds.dim;
  for (std::size_t t = 0; t < 3; ++t)
    if (cfg.classes[t] == 0) cfg.classes[t] = ds.max_label_plus_one[t];
  return cfg;
}

/// Validation membership by a stable hash of the video id.
inline bool is_validation_video(const std::string& video_id, double fraction) {
  if (fraction <= 0.0) return false;
  const auto bucket = fnv1a(video_id) % 10000;
  return static_cast<double>(bucket) < fraction * 10000.0;
}

inline std::pair<Dataset, Dataset> split_train_val(const Dataset& all, double fraction) {
  Dataset train, val;
  train.dim = val.dim = all.dim;
  train.max_label_plus_one = val.max_label_plus_one = all.max_label_plus_one;
  for (const auto& s : all.samples) {
    (is_validation_video(s.annotation.video_id, fraction) ? val : train).samples.push_back(s);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace hcr
