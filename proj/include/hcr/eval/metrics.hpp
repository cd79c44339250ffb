#pragma once

// Top-k accuracy and mean (macro) top-k recall. A class's rank counts the
// classes scoring strictly higher plus equal-scoring classes with a lower
// index, so ties resolve deterministically toward lower indices.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hcr/numerics/errors.hpp"

namespace hcr {

inline std::size_t rank_of(const std::vector<double>& scores, std::size_t label) {
  if (label >= scores.size()) {
    throw NumericError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(scores.size()) + " classes");
  }
  const double s = scores[label];
  std::size_t rank = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > s || (scores[c] == s && c < label)) ++rank;
  }
  return rank;
}

inline bool in_top_k(const std::vector<double>& scores, std::size_t label, std::size_t k) {
  return rank_of(scores, label) < k;
}

namespace detail {
inline void require_samples(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::size_t>& labels) {
  if (scores.empty()) throw NumericError("metric over an empty sample set");
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
}
}  // namespace detail

inline double top_k_accuracy(const std::vector<std::vector<double>>& scores,
                             const std::vector<std::size_t>& labels, std::size_t k) {
  detail::require_samples(scores, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += in_top_k(scores[i], labels[i], k) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

inline double top5_accuracy(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::size_t>& labels) {
  return top_k_accuracy(scores, labels, 5);
}

/// Per-class top-k recall for every class present in `labels`.
inline std::map<std::size_t, double> per_class_recall(const std::vector<std::vector<double>>& scores,
                                                      const std::vector<std::size_t>& labels,
                                                      std::size_t k) {
  detail::require_samples(scores, labels);
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts;  // class -> (hits, total)
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& c = counts[labels[i]];
    c.first += in_top_k(scores[i], labels[i], k) ? 1 : 0;
    ++c.second;
  }
  std::map<std::size_t, double> out;
  for (const auto& [cls, c] : counts) out[cls] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

/// Mean over classes with at least one ground-truth sample. `class_count`
/// bounds the labels.
inline double mean_top_k_recall(const std::vector<std::vector<double>>& scores,
                                const std::vector<std::size_t>& labels, std::size_t class_count,
                                std::size_t k) {
  for (std::size_t l : labels) {
    if (l >= class_count) throw NumericError("label " + std::to_string(l) + " out of range");
  }
  const auto recall = per_class_recall(scores, labels, k);
  double s = 0.0;
  for (const auto& [cls, r] : recall) s += r;
  return s / static_cast<double>(recall.size());
}

inline double mean_top5_recall(const std::vector<std::vector<double>>& scores,
                               const std::vector<std::size_t>& labels, std::size_t class_count) {
  return mean_top_k_recall(scores, labels, class_count, 5);
}

inline constexpr std::array<const char*, 3> kTaskNames = {"verb", "noun", "action"};

struct TaskMetrics {
  double top5_acc = 0.0;
  double mean_top5_recall = 0.0;
  double top1_acc = 0.0;  // debug only
  std::map<std::size_t, double> per_class_recall;
};

struct EvalReport {
  std::array<TaskMetrics, 3> tasks;  // verb, noun, action
  std::size_t samples = 0;
  double loss = 0.0;  // mean total loss when computed from logits, else 0

  /// Mean of the six headline numbers, in percent.
  double avg() const {
    double s = 0.0;
    for (const auto& t : tasks) s += t.top5_acc + t.mean_top5_recall;
    return 100.0 * s / 6.0;
  }
};

/// `scores[task][sample]`, `labels[task][sample]`, `class_counts[task]`.
inline EvalReport evaluate_scores(const std::array<std::vector<std::vector<double>>, 3>& scores,
                                  const std::array<std::vector<std::size_t>, 3>& labels,
                                  const std::array<std::size_t, 3>& class_counts) {
  EvalReport r;
  r.samples = labels[0].size();
  for (std::size_t t = 0; t < 3; ++t) {
    r.tasks[t].top5_acc = top5_accuracy(scores[t], labels[t]);
    r.tasks[t].top1_acc = top_k_accuracy(scores[t], labels[t], 1);
    r.tasks[t].mean_top5_recall = mean_top5_recall(scores[t], labels[t], class_counts[t]);
    r.tasks[t].per_class_recall = per_class_recall(scores[t], labels[t], 5);
  }
  return r;
}

}  // namespace hcr
