#pragma once

// Guide-Feedback Loop between one recent feature R (2×D) and one complete
// feature C (n×D).
//
//   stage 1  A_t = softmax_rows(C·Wl + bl)          n×n  temporal
//            A_c = softmax_rows(Cᵀ·Wr + br)         D×D  channel
//            GGF = C + FFN1(A_t · C · A_c)
//   stage 2  A_g = softmax_rows(R·Wg + bg)          2×n
//            B_c = softmax_rows(GGFᵀ·Wh + bh)       D×D
//            R_G = A_g · GGF · B_c
//   stage 3  R'  = R + FFN3(R_G)
//            C'  = GGF + mean_tokens(R')            (broadcast over n rows)
//
// FFN(x) = dropout(Lin(ReLU(LN(Lin(x))))).

#include <string>

#include "hcr/model/context.hpp"
#include "hcr/numerics/attention.hpp"

namespace hcr {

enum class GflMode { Full, GuideOnly, FeedbackOnly, None };

inline std::string to_string(GflMode m) {
  switch (m) {
    case GflMode::Full: return "gf";
    case GflMode::GuideOnly: return "g";
    case GflMode::FeedbackOnly: return "f";
    case GflMode::None: return "none";
  }
  return "?";
}

inline GflMode parse_gfl_mode(const std::string& s) {
  if (s == "gf" || s == "full") return GflMode::Full;
  if (s == "g" || s == "guide_only") return GflMode::GuideOnly;
  if (s == "f" || s == "feedback_only") return GflMode::FeedbackOnly;
  if (s == "none") return GflMode::None;
  throw ConfigError("unknown gfl mode: " + s);
}

/// Two-layer residual branch body: Lin -> LN -> ReLU -> Lin -> dropout.
struct ResidualFfn {
  Linear in;
  LayerNormParams norm;
  Linear out;

  ResidualFfn() = default;
  ResidualFfn(ParamStore& store, const std::string& prefix, std::size_t dim, Rng& rng)
      : in(store, prefix + ".fc1", dim, dim, rng),
        norm(store, prefix + ".ln", dim),
        out(store, prefix + ".fc2", dim, dim, rng) {}

  Tensor operator()(const Tensor& x, double p, const ForwardContext& ctx) const {
    return ctx.drop(out(relu(norm(in(x)))), p);
  }
};

struct GflOutput {
  Tensor recent_updated;    // 2×D
  Tensor complete_updated;  // n×D
  Tensor ggf;               // n×D
  Tensor attn_temporal;     // n×n
  Tensor attn_channel;      // D×D
  Tensor attn_guide;        // 2×n
  Tensor attn_guide_channel;  // D×D
  Tensor single_attended;   // A_t · C
  Tensor dual_attended;     // A_t · C · A_c
  Tensor guided;            // R_G
};

class Gfl {
 public:
  Gfl() = default;
  Gfl(ParamStore& store, const std::string& prefix, std::size_t n, std::size_t dim,
      double dropout_p, Rng& rng)
      : n_(n), dim_(dim), p_(dropout_p) {
    if (n == 0 || dim == 0) throw ConfigError("gfl: token count and dim must be positive");
    conv_l_ = Linear(store, prefix + ".stage1.conv_l", dim, n, rng);
    conv_r_ = Linear(store, prefix + ".stage1.conv_r", n, dim, rng);
    ffn1_ = ResidualFfn(store, prefix + ".stage1.ffn", dim, rng);
    conv_recent_ = Linear(store, prefix + ".stage2.conv_recent", dim, n, rng);
    conv_channel_ = Linear(store, prefix + ".stage2.conv_channel", n, dim, rng);
    ffn3_ = ResidualFfn(store, prefix + ".stage3.ffn", dim, rng);
  }

  std::size_t tokens() const { return n_; }
  std::size_t dim() const { return dim_; }

  /// Zeroes the last linear layer of both residual branches.
  void zero_residual_outputs() {
    ffn1_.out.zero();
    ffn3_.out.zero();
  }

  struct Stage1 {
    Tensor ggf, attn_temporal, attn_channel, single_attended, dual_attended;
  };
  struct Stage2 {
    Tensor guided, attn_guide, attn_channel;
  };

  Stage1 stage1_ggf(const Tensor& c, const ForwardContext& ctx) const {
    check(c, n_, "complete");
    Stage1 s;
    s.attn_temporal = softmax(conv_l_(c), 1);
    s.attn_channel = softmax(conv_r_(transpose(c)), 1);
    s.single_attended = matmul(s.attn_temporal, c);
    s.dual_attended = matmul(s.single_attended, s.attn_channel);
    s.ggf = add(c, ffn1_(s.dual_attended, p_, ctx));
    return s;
  }

  Stage2 stage2_guide(const Tensor& r, const Tensor& ggf) const {
    check(r, 2, "recent");
    check(ggf, n_, "guiding");
    Stage2 s;
    s.attn_guide = softmax(conv_recent_(r), 1);
    s.attn_channel = softmax(conv_channel_(transpose(ggf)), 1);
    s.guided = matmul(matmul(s.attn_guide, ggf), s.attn_channel);
    return s;
  }

  /// Residual update of a recent feature from `source` (R_G, or R itself
  /// when guidance is disabled).
  Tensor update_recent(const Tensor& source, const Tensor& r, const ForwardContext& ctx) const {
    return add(r, ffn3_(source, p_, ctx));
  }

  static Tensor feedback(const Tensor& ggf, const Tensor& r_updated) {
    return add_row(ggf, mean_rows(r_updated));
  }

  std::pair<Tensor, Tensor> stage3_feedback(const Tensor& r_guided, const Tensor& r,
                                            const Tensor& ggf, const ForwardContext& ctx) const {
    check(r_guided, 2, "guided recent");
    check(r, 2, "recent");
    check(ggf, n_, "guiding");
    Tensor r_ij = update_recent(r_guided, r, ctx);
    Tensor c_ij = feedback(ggf, r_ij);
    return {r_ij, c_ij};
  }

  GflOutput forward(const Tensor& r, const Tensor& c, GflMode mode, const ForwardContext& ctx) const {
    check(r, 2, "recent");
    check(c, n_, "complete");
    GflOutput out;
    if (mode == GflMode::None) {
      out.recent_updated = r;
      out.complete_updated = c;
      return out;
    }
    Stage1 s1 = stage1_ggf(c, ctx);
    out.ggf = s1.ggf;
    out.attn_temporal = s1.attn_temporal;
    out.attn_channel = s1.attn_channel;
    out.single_attended = s1.single_attended;
    out.dual_attended = s1.dual_attended;
    if (mode == GflMode::FeedbackOnly) {
      out.recent_updated = update_recent(r, r, ctx);
      out.complete_updated = feedback(s1.ggf, out.recent_updated);
      return out;
    }
    Stage2 s2 = stage2_guide(r, s1.ggf);
    out.attn_guide = s2.attn_guide;
    out.attn_guide_channel = s2.attn_channel;
    out.guided = s2.guided;
    out.recent_updated = update_recent(s2.guided, r, ctx);
    out.complete_updated = mode == GflMode::Full ? feedback(s1.ggf, out.recent_updated) : s1.ggf;
    return out;
  }

 private:
  void check(const Tensor& x, std::size_t rows, const char* what) const {
    if (x.rank() != 2 || x.dim(0) != rows || x.dim(1) != dim_) {
      throw DimensionError(std::string("gfl: ") + what + " feature has shape " +
                           shape_str(x.shape()) + ", expected " +
                           shape_str({rows, dim_}));
    }
  }

  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  double p_ = 0.0;
  Linear conv_l_, conv_r_;
  ResidualFfn ffn1_;
  Linear conv_recent_, conv_channel_;
  ResidualFfn ffn3_;
};

}  // namespace hcr
