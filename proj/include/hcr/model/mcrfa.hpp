#pragma once

#include <array>
#include <string>
#include <vector>

#include "hcr/model/gfl.hpp"

namespace hcr {

/// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
               std::size_t ffn_mult, Rng& rng)
      : attn_(store, prefix + ".attn", dim, heads, rng),
        norm1_(store, prefix + ".ln1", dim),
        fc1_(store, prefix + ".fc1", dim, dim * ffn_mult, rng),
        fc2_(store, prefix + ".fc2", dim * ffn_mult, dim, rng),
        norm2_(store, prefix + ".ln2", dim) {}

  Tensor operator()(const Tensor& x, std::vector<Tensor>* attn_weights = nullptr) const {
    const Tensor h = norm1_(add(x, attn_(x, attn_weights)));
    return norm2_(add(h, fc2_(relu(fc1_(h)))));
  }

  /// Zeroes the output projections so both residual branches add nothing.
  void zero_residual_outputs() {
    attn_.output_proj().zero();
    fc2_.zero();
  }

 private:
  MultiHeadAttention attn_;
  LayerNormParams norm1_;
  Linear fc1_, fc2_;
  LayerNormParams norm2_;
};

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParamStore& store, const std::string& prefix, std::size_t dim,
                     std::size_t heads, std::size_t layers, std::size_t ffn_mult, Rng& rng) {
    if (heads == 0 || dim % heads != 0) {
      throw ConfigError("transformer: dim " + std::to_string(dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
    }
    for (std::size_t l = 0; l < layers; ++l) {
      layers_.emplace_back(store, prefix + "." + std::to_string(l), dim, heads, ffn_mult, rng);
    }
  }

  std::size_t depth() const { return layers_.size(); }

  Tensor operator()(const Tensor& tokens) const {
    if (tokens.rank() != 2 || tokens.dim(0) == 0) {
      throw DimensionError("transformer: needs at least one token, got " + shape_str(tokens.shape()));
    }
    Tensor x = tokens;
    for (const auto& layer : layers_) x = layer(x);
    return x;
  }

  void zero_residual_outputs() {
    for (auto& l : layers_) l.zero_residual_outputs();
  }

 private:
  std::vector<EncoderLayer> layers_;
};

struct McrfaConfig {
  std::size_t dim = 16;
  std::array<std::size_t, 3> n{2, 3, 5};
  std::size_t heads = 5;
  std::size_t layers = 1;
  std::size_t ffn_mult = 4;
  double dropout = 0.3;
  bool positional_encoding = false;
};

struct McrfaOutput {
  Tensor fused;       // F_i, 7×D
  Tensor aggregated;  // G_i, 7×D (encoder input)
  std::array<GflOutput, 3> gfl;
};

/// One recent feature against the three complete scales: three GFLs,
/// max/linear aggregation into 7 tokens, then a Transformer encoder.
///
/// Aggregated tokens: row 0 is the per-channel max over all updated complete
/// tokens; rows 1..6 are the shared linear map of R_i1, R_i2, R_i3 (2 tokens
/// each, in that order).
class Mcrfa {
 public:
  static constexpr std::size_t kTokens = 7;

  Mcrfa() = default;
  Mcrfa(ParamStore& store, std::size_t branch, const McrfaConfig& cfg, Rng& rng) : cfg_(cfg) {
    const std::string b = std::to_string(branch);
    for (std::size_t j = 0; j < 3; ++j) {
      gfls_[j] = Gfl(store, "gfl." + b + "." + std::to_string(j + 1), cfg.n[j], cfg.dim,
                     cfg.dropout, rng);
    }
    agg_ = Linear(store, "mcrfa." + b + ".agg", cfg.dim, cfg.dim, rng);
    if (cfg.positional_encoding) {
      Rng pos_rng = rng.fork(branch);
      std::vector<double> v(kTokens * cfg.dim);
      for (double& x : v) x = pos_rng.normal(0.0, 0.02);
      positional_ = store.add("mcrfa." + b + ".positional", Tensor::matrix(kTokens, cfg.dim, v));
    }
    encoder_ = TransformerEncoder(store, "mcrfa." + b + ".encoder", cfg.dim, cfg.heads,
                                  cfg.layers, cfg.ffn_mult, rng);
  }

  const McrfaConfig& config() const { return cfg_; }
  Gfl& gfl(std::size_t j) { return gfls_.at(j); }
  Linear& aggregation() { return agg_; }
  TransformerEncoder& encoder() { return encoder_; }

  /// G_i from the three GFL outputs.
  Tensor aggregate(const std::array<GflOutput, 3>& g) const {
    const Tensor cc = concat_rows({g[0].complete_updated, g[1].complete_updated, g[2].complete_updated});
    const Tensor rr = agg_(concat_rows({g[0].recent_updated, g[1].recent_updated, g[2].recent_updated}));
    Tensor tokens = concat_rows({max_rows(cc), rr});
    if (positional_.defined()) tokens = add(tokens, positional_);
    return tokens;
  }

  McrfaOutput forward(const Tensor& recent, const std::array<Tensor, 3>& complete, GflMode mode,
                      const ForwardContext& ctx) const {
    McrfaOutput out;
    for (std::size_t j = 0; j < 3; ++j) out.gfl[j] = gfls_[j].forward(recent, complete[j], mode, ctx);
    out.aggregated = aggregate(out.gfl);
    out.fused = encoder_(out.aggregated);
    return out;
  }

 private:
  McrfaConfig cfg_;
  std::array<Gfl, 3> gfls_;
  Linear agg_;
  Tensor positional_;
  TransformerEncoder encoder_;
};

}  // namespace hcr
