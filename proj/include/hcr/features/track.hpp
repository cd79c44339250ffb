#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hcr/numerics/errors.hpp"
#include "hcr/numerics/tensor.hpp"

namespace hcr {

enum class Modality { Rgb, Flow, Obj };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Flow: return "flow";
    case Modality::Obj: return "obj";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "rgb" || s == "RGB") return Modality::Rgb;
  if (s == "flow" || s == "FLOW") return Modality::Flow;
  if (s == "obj" || s == "OBJ") return Modality::Obj;
  throw ConfigError("unknown modality: " + s);
}

/// Uniformly sampled per-frame features of one video in one modality.
struct FrameFeatureTrack {
  std::string video_id;
  Modality modality = Modality::Rgb;
  double fps = 0.0;
  std::size_t dim = 0;
  std::vector<double> values;  // frame_count × dim, row-major

  FrameFeatureTrack() = default;
  FrameFeatureTrack(std::string id, Modality m, double rate, std::size_t d, std::vector<double> v)
      : video_id(std::move(id)), modality(m), fps(rate), dim(d), values(std::move(v)) {
    if (dim == 0 || values.size() % dim != 0) {
      throw DimensionError("track " + video_id + ": " + std::to_string(values.size()) +
                           " values do not form frames of dimension " + std::to_string(dim));
    }
    if (!(fps > 0.0)) throw ConfigError("track " + video_id + ": fps must be positive");
  }

  std::size_t frame_count() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> frame(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim, dim);
  }
};

/// Half-open frame index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

/// Frame index for a time in seconds; the epsilon absorbs binary rounding
/// such as 0.8 * 10 = 7.999...
inline std::size_t time_to_frame(double seconds, double fps) {
  const double f = std::floor(seconds * fps + 1e-9);
  return f <= 0.0 ? 0 : static_cast<std::size_t>(f);
}

/// The observed span [observed_start, observed_end) ending tau seconds
/// before the action starts.
struct ObservationWindow {
  double tau = 0.0;
  std::size_t observed_start = 0;
  std::size_t observed_end = 0;

  std::size_t length() const { return observed_end - observed_start; }

  static ObservationWindow before_action(const FrameFeatureTrack& track, double action_start_s,
                                         double tau) {
    ObservationWindow w;
    w.tau = tau;
    const double end_s = action_start_s - tau;
    w.observed_end = end_s <= 0.0 ? 0 : std::min(time_to_frame(end_s, track.fps), track.frame_count());
    w.validate(track);
    return w;
  }

  void validate(const FrameFeatureTrack& track) const {
    if (observed_end > track.frame_count() || observed_start >= observed_end ||
        observed_end - observed_start < 2) {
      throw ConfigError("video " + track.video_id + ": observed span [" +
                        std::to_string(observed_start) + ", " + std::to_string(observed_end) +
                        ") needs at least 2 frames within " +
                        std::to_string(track.frame_count()) + " frames");
    }
  }
};

/// Three token matrices C1..C3 with n(j) rows each.
struct CompleteFeatureSet {
  std::array<Tensor, 3> scales;
  std::array<std::size_t, 3> n{};
};

/// Four 2-token matrices R1..R4 for windows of decreasing duration.
struct RecentFeatureSet {
  std::array<Tensor, 4> windows;
  std::array<double, 4> deltas{};
};

}  // namespace hcr
