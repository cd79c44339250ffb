#pragma once

// Complete/recent token extraction by fragment max-pooling.

#include <algorithm>
#include <array>
#include <vector>

#include "hcr/features/track.hpp"

namespace hcr {

enum class RecentMode { Recent, Old };

inline std::string to_string(RecentMode m) { return m == RecentMode::Recent ? "recent" : "old"; }

inline RecentMode parse_recent_mode(const std::string& s) {
  if (s == "recent") return RecentMode::Recent;
  if (s == "old") return RecentMode::Old;
  throw ConfigError("unknown recent mode: " + s);
}

/// Splits [0, frame_count) into n contiguous pieces whose sizes differ by at
/// most one, the first (frame_count mod n) pieces taking the extra frame.
/// With fewer frames than pieces every piece is a single frame chosen by
/// nearest-earlier resampling, floor(k * frame_count / n).
inline std::vector<IndexRange> partition_fragments(std::size_t frame_count, std::size_t n) {
  if (n == 0) throw ConfigError("partition_fragments: fragment count must be positive");
  if (frame_count == 0) throw ConfigError("partition_fragments: no frames to partition");
  std::vector<IndexRange> out;
  out.reserve(n);
  if (frame_count < n) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = k * frame_count / n;
      out.push_back({idx, idx + 1});
    }
    return out;
  }
  const std::size_t q = frame_count / n, r = frame_count % n;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t len = q + (k < r ? 1 : 0);
    out.push_back({begin, begin + len});
    begin += len;
  }
  return out;
}

/// Elementwise maximum over the frames in `range`.
inline std::vector<double> maxpool_fragment(const FrameFeatureTrack& track, IndexRange range) {
  if (range.begin >= range.end) throw ConfigError("maxpool_fragment: empty range");
  if (range.end > track.frame_count()) {
    throw DimensionError("maxpool_fragment: range end " + std::to_string(range.end) +
                         " beyond " + std::to_string(track.frame_count()) + " frames");
  }
  auto first = track.frame(range.begin);
  std::vector<double> out(first.begin(), first.end());
  for (std::size_t i = range.begin + 1; i < range.end; ++i) {
    auto f = track.frame(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(out[j], f[j]);
  }
  return out;
}

namespace detail {

// Max-pools `pieces` fragments of the span [begin, end) into a token matrix.
inline Tensor pool_span(const FrameFeatureTrack& track, std::size_t begin, std::size_t end,
                        std::size_t pieces) {
  std::vector<double> tokens;
  tokens.reserve(pieces * track.dim);
  for (const IndexRange& r : partition_fragments(end - begin, pieces)) {
    auto tok = maxpool_fragment(track, {begin + r.begin, begin + r.end});
    tokens.insert(tokens.end(), tok.begin(), tok.end());
  }
  return Tensor::matrix(pieces, track.dim, std::move(tokens));
}

}  // namespace detail

inline CompleteFeatureSet extract_complete(const FrameFeatureTrack& track,
                                           const ObservationWindow& window,
                                           std::array<std::size_t, 3> n) {
  window.validate(track);
  CompleteFeatureSet out;
  out.n = n;
  for (std::size_t j = 0; j < 3; ++j) {
    out.scales[j] = detail::pool_span(track, window.observed_start, window.observed_end, n[j]);
  }
  return out;
}

inline void validate_deltas(const std::array<double, 4>& deltas) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(deltas[i] > 0.0)) throw ConfigError("recent window durations must be positive");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) {
      throw ConfigError("recent window durations must be strictly decreasing");
    }
  }
}

/// Frame span of recent window `delta` seconds long. Recent mode ends at the
/// observed end; old mode ends at the observed midpoint. Spans are clamped to
/// the observed start and always keep at least one frame.
inline IndexRange recent_span(const FrameFeatureTrack& track, const ObservationWindow& window,
                              double delta, RecentMode mode) {
  const std::size_t end = mode == RecentMode::Recent
                              ? window.observed_end
                              : window.observed_start + window.length() / 2;
  const std::size_t len = time_to_frame(delta, track.fps);
  std::size_t begin = end - window.observed_start > len ? end - len : window.observed_start;
  if (begin >= end) begin = end - 1;
  return {begin, end};
}

inline RecentFeatureSet extract_recent(const FrameFeatureTrack& track,
                                       const ObservationWindow& window,
                                       const std::array<double, 4>& deltas,
                                       RecentMode mode = RecentMode::Recent) {
  window.validate(track);
  validate_deltas(deltas);
  RecentFeatureSet out;
  out.deltas = deltas;
  for (std::size_t i = 0; i < 4; ++i) {
    const IndexRange span = recent_span(track, window, deltas[i], mode);
    out.windows[i] = detail::pool_span(track, span.begin, span.end, 2);
  }
  return out;
}

}  // namespace hcr
