#pragma once

// Feature files ("HCRF") and JSON-lines action annotations.
//
// HCRF layout, little-endian:
//   "HCRF" | version u32 | D u32 | frame_count u32 | fps f32 |
//   payload f32[frame_count × D], row-major

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcr/features/track.hpp"
#include "hcr/numerics/checkpoint.hpp"

namespace hcr {

inline constexpr char kFeatureMagic[4] = {'H', 'C', 'R', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline std::vector<char> encode_track(const FrameFeatureTrack& track) {
  std::vector<char> out(kFeatureMagic, kFeatureMagic + 4);
  detail::put_le<std::uint32_t>(out, kFeatureVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(track.dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(track.frame_count()));
  detail::put_le<float>(out, static_cast<float>(track.fps));
  for (double v : track.values) detail::put_le<float>(out, static_cast<float>(v));
  return out;
}

inline FrameFeatureTrack decode_track(const std::vector<char>& bytes, std::string video_id,
                                      Modality modality, const std::string& what = "features") {
  detail::ByteReader r(bytes, what);
  if (r.bytes(4) != std::string(kFeatureMagic, 4)) throw IoError(what + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureVersion) throw IoError(what + ": unsupported version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>();
  const auto frames = r.get<std::uint32_t>();
  const auto fps = r.get<float>();
  std::vector<double> values(static_cast<std::size_t>(dim) * frames);
  for (double& v : values) v = static_cast<double>(r.get<float>());
  if (!r.at_end()) throw IoError(what + ": trailing bytes");
  return FrameFeatureTrack(std::move(video_id), modality, static_cast<double>(fps), dim, std::move(values));
}

/// Conventional location: <features_dir>/<modality>/<video_id>.hcrf
inline std::filesystem::path track_path(const std::filesystem::path& features_dir,
                                        const std::string& video_id, Modality m) {
  return features_dir / to_string(m) / (video_id + ".hcrf");
}

inline void write_track(const std::filesystem::path& path, const FrameFeatureTrack& track) {
  std::filesystem::create_directories(path.parent_path());
  detail::write_file(path.string(), encode_track(track));
}

inline FrameFeatureTrack read_track(const std::filesystem::path& path, std::string video_id,
                                    Modality m) {
  return decode_track(detail::read_file(path.string()), std::move(video_id), m, path.string());
}

struct Annotation {
  std::string sample_id;
  std::string video_id;
  double start_time_s = 0.0;
  double stop_time_s = 0.0;
  std::size_t verb_class = 0;
  std::size_t noun_class = 0;
  std::size_t action_class = 0;
};

inline nlohmann::ordered_json to_json(const Annotation& a) {
  return {{"sample_id", a.sample_id},         {"video_id", a.video_id},
          {"start_time_s", a.start_time_s},   {"stop_time_s", a.stop_time_s},
          {"verb_class", a.verb_class},       {"noun_class", a.noun_class},
          {"action_class", a.action_class}};
}

/// Reads one annotation per non-empty line. `sample_id` is optional and
/// defaults to "<video_id>#<line>".
inline std::vector<Annotation> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path);
  std::vector<Annotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Annotation a;
      a.video_id = j.at("video_id").get<std::string>();
      a.start_time_s = j.at("start_time_s").get<double>();
      a.stop_time_s = j.at("stop_time_s").get<double>();
      a.verb_class = j.at("verb_class").get<std::size_t>();
      a.noun_class = j.at("noun_class").get<std::size_t>();
      a.action_class = j.at("action_class").get<std::size_t>();
      a.sample_id = j.contains("sample_id") ? j["sample_id"].get<std::string>()
                                            : a.video_id + "#" + std::to_string(lineno);
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_annotations(const std::string& path, const std::vector<Annotation>& anns) {
  std::string text;
  for (const auto& a : anns) text += to_json(a).dump() + "\n";
  detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace hcr
