#pragma once

#include <cmath>
#include <vector>

#include "hcr/model/hcr.hpp"

namespace hcr {

inline std::vector<double> softmax_probs(const std::vector<double>& logits) {
  if (logits.empty()) return {};
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

/// Late fusion: softmax each modality's scores per task, then take the
/// weighted average of the probability vectors.
inline PredictionTriplet late_fuse(const std::vector<PredictionTriplet>& modalities,
                                   const std::vector<double>& weights) {
  if (modalities.empty()) throw ConfigError("late_fuse: need at least one modality");
  if (weights.size() != modalities.size()) {
    throw ConfigError("late_fuse: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(modalities.size()) + " modalities");
  }
  PredictionTriplet out;
  for (std::size_t task = 0; task < 3; ++task) {
    const std::size_t k = modalities.front().task(task).size();
    std::vector<double> acc(k, 0.0);
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      const auto& s = modalities[m].task(task);
      if (s.size() != k) throw DimensionError("late_fuse: modalities disagree on class count");
      const auto p = softmax_probs(s);
      for (std::size_t c = 0; c < k; ++c) acc[c] += weights[m] * p[c];
    }
    out.task(task) = std::move(acc);
  }
  return out;
}

inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
}

}  // namespace hcr
