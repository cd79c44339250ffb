#pragma once

// Planted-signal synthetic datasets.
//
// Every video gets an action label a; verb = a mod V, noun = a mod N. Frames
// carry Gaussian noise plus, depending on the signal mode, a class prototype:
//   recent_window  action prototype on the final `tail_s` seconds only
//   global         action prototype on every frame
//   mixed          verb prototype on every frame, noun prototype on the tail
//                  (needs A = V*N with gcd(V, N) = 1 so the pair fixes a)
//   none           no prototype
// An optional per-video baseline offset is added to every frame.

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcr/features/io.hpp"
#include "hcr/model/hcr.hpp"

namespace hcr {

enum class SignalMode { RecentWindow, Global, Mixed, None };

inline std::string to_string(SignalMode m) {
  switch (m) {
    case SignalMode::RecentWindow: return "recent_window";
    case SignalMode::Global: return "global";
    case SignalMode::Mixed: return "mixed";
    case SignalMode::None: return "none";
  }
  return "?";
}

inline SignalMode parse_signal_mode(const std::string& s) {
  if (s == "recent_window") return SignalMode::RecentWindow;
  if (s == "global") return SignalMode::Global;
  if (s == "mixed") return SignalMode::Mixed;
  if (s == "none") return SignalMode::None;
  throw ConfigError("unknown signal_mode '" + s + "' (expected recent_window, global, mixed or none)");
}

struct SyntheticSpec {
  std::size_t n_videos = 400;  // training videos
  std::size_t n_test = 100;
  std::size_t frames_per_video = 80;
  double fps = 10.0;
  std::size_t dim = 16;
  ClassCounts classes{3, 4, 5};
  SignalMode signal_mode = SignalMode::RecentWindow;
  double noise_sigma = 1.0;
  double signal_amplitude = 1.0;
  double baseline_sigma = 0.0;
  double tail_s = 0.4;
  double tau = 1.0;
  std::vector<std::string> modalities{"rgb"};
  // Modality k carries the signal only for actions with a % M == k.
  bool complementary = false;

  void validate() const {
    if (n_videos == 0) throw ConfigError("n_videos must be positive");
    if (dim == 0) throw ConfigError("dim must be positive");
    if (!(fps > 0.0)) throw ConfigError("fps must be positive");
    if (classes.verbs == 0 || classes.nouns == 0 || classes.actions == 0)
      throw ConfigError("class counts must be positive");
    if (noise_sigma < 0.0 || baseline_sigma < 0.0) throw ConfigError("noise levels must be non-negative");
    if (tau < 0.0) throw ConfigError("tau must be non-negative");
    if (tail_frames() == 0 || tail_frames() > frames_per_video)
      throw ConfigError("tail_s must cover between 1 frame and the whole video");
    if (frames_per_video < 2) throw ConfigError("frames_per_video must be at least 2");
    if (signal_mode == SignalMode::Mixed) {
      if (classes.actions != classes.verbs * classes.nouns || std::gcd(classes.verbs, classes.nouns) != 1)
        throw ConfigError("mixed mode needs actions = verbs * nouns with coprime verb and noun counts");
    }
    if (modalities.empty()) throw ConfigError("at least one modality is required");
    for (const auto& m : modalities) parse_modality(m);
  }

  std::size_t tail_frames() const { return time_to_frame(tail_s, fps); }

  double duration_s() const { return static_cast<double>(frames_per_video) / fps; }
};

inline nlohmann::ordered_json to_json(const SyntheticSpec& s) {
  nlohmann::ordered_json j;
  j["n_videos"] = s.n_videos;
  j["n_test"] = s.n_test;
  j["frames_per_video"] = s.frames_per_video;
  j["fps"] = s.fps;
  j["dim"] = s.dim;
  j["classes"] = {s.classes.verbs, s.classes.nouns, s.classes.actions};
  j["signal_mode"] = to_string(s.signal_mode);
  j["noise_sigma"] = s.noise_sigma;
  j["signal_amplitude"] = s.signal_amplitude;
  j["baseline_sigma"] = s.baseline_sigma;
  j["tail_s"] = s.tail_s;
  j["tau"] = s.tau;
  j["modalities"] = s.modalities;
  j["complementary"] = s.complementary;
  return j;
}

inline void apply_json(SyntheticSpec& s, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "n_videos") s.n_videos = v.get<std::size_t>();
      else if (k == "n_test") s.n_test = v.get<std::size_t>();
      else if (k == "frames_per_video") s.frames_per_video = v.get<std::size_t>();
      else if (k == "fps") s.fps = v.get<double>();
      else if (k == "dim") s.dim = v.get<std::size_t>();
      else if (k == "classes") {
        const auto c = v.get<std::array<std::size_t, 3>>();
        s.classes = {c[0], c[1], c[2]};
      }
      else if (k == "signal_mode") s.signal_mode = parse_signal_mode(v.get<std::string>());
      else if (k == "noise_sigma") s.noise_sigma = v.get<double>();
      else if (k == "signal_amplitude") s.signal_amplitude = v.get<double>();
      else if (k == "baseline_sigma") s.baseline_sigma = v.get<double>();
      else if (k == "tail_s") s.tail_s = v.get<double>();
      else if (k == "tau") s.tau = v.get<double>();
      else if (k == "modalities") s.modalities = v.get<std::vector<std::string>>();
      else if (k == "complementary") s.complementary = v.get<bool>();
      else throw ConfigError("unknown synthetic spec field: " + k);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synthetic spec field " + k + ": " + e.what());
    }
  }
}

/// Per-modality class prototypes, `[class][dim]`.
struct Prototypes {
  std::vector<std::vector<double>> action, verb, noun;
};

inline Prototypes make_prototypes(const SyntheticSpec& spec, std::uint64_t seed, Modality m) {
  Rng rng = Rng(seed).fork(fnv1a("prototypes") ^ static_cast<std::uint64_t>(m));
  auto draw = [&](std::size_t k) {
    std::vector<std::vector<double>> out(k, std::vector<double>(spec.dim));
    for (auto& row : out)
      for (auto& v : row) v = rng.normal();
    return out;
  };
  Prototypes p;
  p.action = draw(spec.classes.actions);
  p.verb = draw(spec.classes.verbs);
  p.noun = draw(spec.classes.nouns);
  return p;
}

inline Annotation synthetic_label(const SyntheticSpec& spec, std::uint64_t seed, std::size_t video) {
  Rng rng = Rng(seed).fork(fnv1a("labels") ^ (video + 1));
  Annotation a;
  char id[32];
  std::snprintf(id, sizeof id, "syn_%05zu", video);
  a.video_id = id;
  a.sample_id = a.video_id;
  a.action_class = rng.below(spec.classes.actions);
  a.verb_class = a.action_class % spec.classes.verbs;
  a.noun_class = a.action_class % spec.classes.nouns;
  a.start_time_s = spec.duration_s() + spec.tau;
  a.stop_time_s = a.start_time_s + 1.0;
  return a;
}

inline FrameFeatureTrack synthetic_track(const SyntheticSpec& spec, std::uint64_t seed, const Annotation& a,
                                         std::size_t video, Modality m, const Prototypes& proto) {
  FrameFeatureTrack t;
  t.video_id = a.video_id;
  t.modality = m;
  t.fps = static_cast<float>(spec.fps);  // stored as f32 on disk
  t.dim = spec.dim;
  const std::size_t frames = spec.frames_per_video, d = spec.dim;
  t.values.assign(frames * d, 0.0);

  Rng rng = Rng(seed).fork((fnv1a("frames") ^ (video + 1)) * 31 + static_cast<std::uint64_t>(m));
  std::vector<double> baseline(d);
  for (auto& b : baseline) b = rng.normal(0.0, spec.baseline_sigma);

  const std::size_t tail_begin = frames - spec.tail_frames();
  double amp = spec.signal_amplitude;
  if (spec.complementary) {
    const auto it = std::find(spec.modalities.begin(), spec.modalities.end(), to_string(m));
    const auto k = static_cast<std::size_t>(it - spec.modalities.begin());
    if (a.action_class % spec.modalities.size() != k) amp = 0.0;
  }
  for (std::size_t f = 0; f < frames; ++f) {
    const bool tail = f >= tail_begin;
    for (std::size_t k = 0; k < d; ++k) {
      double v = baseline[k] + rng.normal(0.0, spec.noise_sigma);
      switch (spec.signal_mode) {
        case SignalMode::RecentWindow:
          if (tail) v += amp * proto.action[a.action_class][k];
          break;
        case SignalMode::Global:
          v += amp * proto.action[a.action_class][k];
          break;
        case SignalMode::Mixed:
          v += amp * proto.verb[a.verb_class][k];
          if (tail) v += amp * proto.noun[a.noun_class][k];
          break;
        case SignalMode::None:
          break;
      }
      t.values[f * d + k] = static_cast<float>(v);  // f32 on disk
    }
  }
  return t;
}

struct SyntheticPaths {
  std::filesystem::path features_dir, train, test, manifest;
};

/// Writes `<out>/features/<modality>/<video>.hcrf`, `train.jsonl`,
/// `test.jsonl` and `dataset.json`. Output depends only on (spec, seed).
inline SyntheticPaths gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                    const std::filesystem::path& out) {
  spec.validate();
  std::filesystem::create_directories(out);
  SyntheticPaths p{out / "features", out / "train.jsonl", out / "test.jsonl", out / "dataset.json"};
  std::vector<Modality> mods;
  std::vector<Prototypes> protos;
  for (const auto& name : spec.modalities) {
    mods.push_back(parse_modality(name));
    protos.push_back(make_prototypes(spec, seed, mods.back()));
  }
  std::vector<Annotation> train, test;
  const std::size_t total = spec.n_videos + spec.n_test;
  for (std::size_t v = 0; v < total; ++v) {
    const Annotation a = synthetic_label(spec, seed, v);
    for (std::size_t i = 0; i < mods.size(); ++i) {
      write_track(track_path(p.features_dir, a.video_id, mods[i]), synthetic_track(spec, seed, a, v, mods[i], protos[i]));
    }
    (v < spec.n_videos ? train : test).push_back(a);
  }
  write_annotations(p.train.string(), train);
  write_annotations(p.test.string(), test);
  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["spec"] = to_json(spec);
  const std::string text = manifest.dump(2) + "\n";
  detail::write_file(p.manifest.string(), std::vector<char>(text.begin(), text.end()));
  return p;
}

}  // namespace hcr
