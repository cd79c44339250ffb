#pragma once

// Full single-modality model: four MCRFA branches (one per recent window),
// per-branch verb/noun/action heads, final scores summed over branches.

#include <array>
#include <string>
#include <vector>

#include "hcr/features/pipeline.hpp"
#include "hcr/model/mcrfa.hpp"

namespace hcr {

enum class FeatureMode { CompleteRecent, CompleteOnly, RecentOnly };

inline std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::CompleteRecent: return "cr";
    case FeatureMode::CompleteOnly: return "c";
    case FeatureMode::RecentOnly: return "r";
  }
  return "?";
}

inline FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "cr" || s == "c+r" || s == "C+R") return FeatureMode::CompleteRecent;
  if (s == "c" || s == "C" || s == "c_only") return FeatureMode::CompleteOnly;
  if (s == "r" || s == "R" || s == "r_only") return FeatureMode::RecentOnly;
  throw ConfigError("unknown feature mode: " + s);
}

struct ClassCounts {
  std::size_t verbs = 0;
  std::size_t nouns = 0;
  std::size_t actions = 0;
};

struct Labels {
  std::size_t verb = 0;
  std::size_t noun = 0;
  std::size_t action = 0;
};

struct HcrConfig {
  std::size_t dim = 16;
  std::array<std::size_t, 3> n{2, 3, 5};
  std::array<double, 4> deltas{1.6, 1.2, 0.8, 0.4};
  std::size_t heads = 5;
  std::size_t layers = 1;
  std::size_t ffn_mult = 4;
  double dropout = 0.3;
  bool positional_encoding = false;
  ClassCounts classes;
  GflMode gfl_mode = GflMode::Full;
  FeatureMode feature_mode = FeatureMode::CompleteRecent;
  RecentMode recent_mode = RecentMode::Recent;

  void validate() const {
    if (dim == 0) throw ConfigError("feature dim must be positive");
    for (std::size_t v : n)
      if (v == 0) throw ConfigError("complete fragment counts must be positive");
    validate_deltas(deltas);
    if (heads == 0 || dim % heads != 0) {
      throw ConfigError("feature dim " + std::to_string(dim) + " is not divisible by " +
                        std::to_string(heads) + " attention heads");
    }
    if (classes.verbs == 0 || classes.nouns == 0 || classes.actions == 0) {
      throw ConfigError("class counts must all be at least 1");
    }
    if (!(dropout >= 0.0) || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  }

  McrfaConfig mcrfa() const {
    return {dim, n, heads, layers, ffn_mult, dropout, positional_encoding};
  }
};

/// Complete and recent tokens of one sample in one modality.
struct SampleFeatures {
  CompleteFeatureSet complete;
  RecentFeatureSet recent;
};

inline SampleFeatures extract_sample(const FrameFeatureTrack& track, const ObservationWindow& window,
                                     const HcrConfig& cfg) {
  return {extract_complete(track, window, cfg.n),
          extract_recent(track, window, cfg.deltas, cfg.recent_mode)};
}

/// Verb/noun/action logits as graph tensors, each [1×K].
struct TripletTensors {
  Tensor verb, noun, action;
};

/// Plain score vectors for one sample.
struct PredictionTriplet {
  std::vector<double> verb_scores;
  std::vector<double> noun_scores;
  std::vector<double> action_scores;

  static PredictionTriplet from(const TripletTensors& t) {
    return {t.verb.values(), t.noun.values(), t.action.values()};
  }
  std::vector<double>& task(std::size_t k) { return k == 0 ? verb_scores : k == 1 ? noun_scores : action_scores; }
  const std::vector<double>& task(std::size_t k) const {
    return k == 0 ? verb_scores : k == 1 ? noun_scores : action_scores;
  }
};

struct HcrOutput {
  TripletTensors final_scores;
  std::array<TripletTensors, 4> branches;
  std::array<McrfaOutput, 4> mcrfa;
};

class HcrModel {
 public:
  static constexpr std::size_t kBranches = 4;

  HcrModel(const HcrConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const McrfaConfig mc = cfg_.mcrfa();
    for (std::size_t i = 0; i < kBranches; ++i) branches_[i] = Mcrfa(store_, i + 1, mc, rng);
    const std::size_t flat = Mcrfa::kTokens * cfg_.dim;
    for (std::size_t i = 0; i < kBranches; ++i) {
      const std::string p = "head." + std::to_string(i + 1);
      heads_[i][0] = Linear(store_, p + ".verb", flat, cfg_.classes.verbs, rng);
      heads_[i][1] = Linear(store_, p + ".noun", flat, cfg_.classes.nouns, rng);
      heads_[i][2] = Linear(store_, p + ".action", flat, cfg_.classes.actions, rng);
    }
    if (cfg_.feature_mode == FeatureMode::CompleteOnly) {
      for (std::size_t i = 0; i < kBranches; ++i) {
        recent_const_[i] = store_.add_weight("const.recent." + std::to_string(i + 1), 2, cfg_.dim, rng);
      }
    } else if (cfg_.feature_mode == FeatureMode::RecentOnly) {
      for (std::size_t j = 0; j < 3; ++j) {
        complete_const_[j] =
            store_.add_weight("const.complete." + std::to_string(j + 1), cfg_.n[j], cfg_.dim, rng);
      }
    }
  }

  HcrModel(const HcrModel&) = delete;
  HcrModel& operator=(const HcrModel&) = delete;
  HcrModel(HcrModel&&) = default;

  const HcrConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  Mcrfa& branch(std::size_t i) { return branches_.at(i); }
  Linear& head(std::size_t branch, std::size_t task) { return heads_.at(branch).at(task); }

  HcrOutput forward(const SampleFeatures& x, const ForwardContext& ctx) const {
    check_input(x);
    std::array<Tensor, 3> complete;
    for (std::size_t j = 0; j < 3; ++j) {
      complete[j] = cfg_.feature_mode == FeatureMode::RecentOnly ? complete_const_[j] : x.complete.scales[j];
    }
    HcrOutput out;
    for (std::size_t i = 0; i < kBranches; ++i) {
      const Tensor& recent =
          cfg_.feature_mode == FeatureMode::CompleteOnly ? recent_const_[i] : x.recent.windows[i];
      out.mcrfa[i] = branches_[i].forward(recent, complete, cfg_.gfl_mode, ctx);
      const Tensor flat = reshape(out.mcrfa[i].fused, {1, Mcrfa::kTokens * cfg_.dim});
      out.branches[i] = {heads_[i][0](flat), heads_[i][1](flat), heads_[i][2](flat)};
    }
    out.final_scores = out.branches[0];
    for (std::size_t i = 1; i < kBranches; ++i) {
      out.final_scores.verb = add(out.final_scores.verb, out.branches[i].verb);
      out.final_scores.noun = add(out.final_scores.noun, out.branches[i].noun);
      out.final_scores.action = add(out.final_scores.action, out.branches[i].action);
    }
    return out;
  }

 private:
  void check_input(const SampleFeatures& x) const {
    for (std::size_t j = 0; j < 3; ++j) {
      const Tensor& c = x.complete.scales[j];
      if (cfg_.feature_mode == FeatureMode::RecentOnly && !c.defined()) continue;
      if (!c.defined() || c.rank() != 2 || c.dim(0) != cfg_.n[j] || c.dim(1) != cfg_.dim) {
        throw DimensionError("complete scale " + std::to_string(j + 1) + " has shape " +
                             (c.defined() ? shape_str(c.shape()) : "<none>") + ", model expects " +
                             shape_str({cfg_.n[j], cfg_.dim}));
      }
    }
    for (std::size_t i = 0; i < 4; ++i) {
      const Tensor& r = x.recent.windows[i];
      if (cfg_.feature_mode == FeatureMode::CompleteOnly && !r.defined()) continue;
      if (!r.defined() || r.rank() != 2 || r.dim(0) != 2 || r.dim(1) != cfg_.dim) {
        throw DimensionError("recent window " + std::to_string(i + 1) + " has shape " +
                             (r.defined() ? shape_str(r.shape()) : "<none>") + ", model expects " +
                             shape_str({2, cfg_.dim}));
      }
    }
  }

  HcrConfig cfg_;
  ParamStore store_;
  std::array<Mcrfa, kBranches> branches_;
  std::array<std::array<Linear, 3>, kBranches> heads_;
  std::array<Tensor, kBranches> recent_const_;
  std::array<Tensor, 3> complete_const_;
};

/// Sum over the four branches of verb, noun and action cross-entropy.
inline Tensor hcr_loss(const std::array<TripletTensors, 4>& branches, const Labels& y) {
  Tensor total;
  for (const auto& b : branches) {
    const Tensor term = add(add(cross_entropy(b.verb, {y.verb}), cross_entropy(b.noun, {y.noun})),
                            cross_entropy(b.action, {y.action}));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

}  // namespace hcr
