#include <gtest/gtest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "hcr/model/gfl.hpp"
#include "oracle.hpp"

using namespace hcr;

namespace {

struct Fixture {
  ParamStore store;
  Gfl gfl;
  Tensor r, c;

  Fixture(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    gfl = Gfl(store, "gfl", n, d, 0.3, rng);
    // Non-trivial LayerNorm affine parameters.
    for (auto& p : store.params()) {
      if (p.name.find(".ln.") != std::string::npos)
        for (double& v : p.tensor.mutable_data()) v += rng.uniform(-0.5, 0.5);
    }
    r = gradcheck::random({2, d}, rng, -2, 2);
    c = gradcheck::random({n, d}, rng, -2, 2);
  }

  void zero(const std::string& name) {
    for (double& v : store.get(name).mutable_data()) v = 0.0;
  }
  void zero_linear(const std::string& prefix) {
    zero(prefix + ".weight");
    zero(prefix + ".bias");
  }
};

void expect_rows_sum_to_one(const Tensor& a) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const ForwardContext kEval{};

}  // namespace

TEST(GflStage1, ZeroProjectionsGiveUniformAttentionAndIdentityGgf) {
  Fixture f(3, 4, 1);
  f.zero_linear("gfl.stage1.conv_l");
  f.zero_linear("gfl.stage1.conv_r");
  f.gfl.zero_residual_outputs();
  const auto s = f.gfl.stage1_ggf(f.c, kEval);
  for (double v : s.attn_temporal.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  for (double v : s.attn_channel.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 4.0);
  // U_n C U_D has every entry equal to the mean of C.
  const double mean = std::accumulate(f.c.values().begin(), f.c.values().end(), 0.0) / 12.0;
  for (double v : s.dual_attended.values()) EXPECT_NEAR(v, mean, 1e-15);
  EXPECT_EQ(s.ggf.values(), f.c.values());
}

TEST(GflStage1, SingleTokenTemporalAttentionIsOne) {
  Fixture f(1, 4, 2);
  const auto s = f.gfl.stage1_ggf(f.c, kEval);
  ASSERT_EQ(s.attn_temporal.numel(), 1u);
  EXPECT_EQ(s.attn_temporal[0], 1.0);
}

TEST(GflStage1, MatchesOracle) {
  Fixture f(3, 4, 3);
  const auto s = f.gfl.stage1_ggf(f.c, kEval);
  const oracle::Params P{f.store};
  const auto o = oracle::gfl(P, "gfl", oracle::from(f.r), oracle::from(f.c), "gf");
  EXPECT_LT(oracle::max_abs_diff(o.a_t, s.attn_temporal), 1e-10);
  EXPECT_LT(oracle::max_abs_diff(o.a_c, s.attn_channel), 1e-10);
  EXPECT_LT(oracle::max_abs_diff(o.ggf, s.ggf), 1e-10);
}

TEST(GflStage2, ZeroProjectionsAverageTheGuide) {
  Fixture f(3, 4, 4);
  f.zero_linear("gfl.stage2.conv_recent");
  f.zero_linear("gfl.stage2.conv_channel");
  const Tensor ggf = f.gfl.stage1_ggf(f.c, kEval).ggf;
  const auto s = f.gfl.stage2_guide(f.r, ggf);
  for (double v : s.attn_guide.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  const double mean = std::accumulate(ggf.values().begin(), ggf.values().end(), 0.0) / 12.0;
  for (double v : s.guided.values()) EXPECT_NEAR(v, mean, 1e-14);
}

TEST(GflStage2, SingleGuideTokenGivesIdenticalRows) {
  Fixture f(1, 5, 5);
  const Tensor ggf = f.gfl.stage1_ggf(f.c, kEval).ggf;
  const auto s = f.gfl.stage2_guide(f.r, ggf);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(s.guided.at(0, k), s.guided.at(1, k));
}

TEST(GflStage2, MatchesOracle) {
  Fixture f(3, 4, 6);
  const Tensor ggf = f.gfl.stage1_ggf(f.c, kEval).ggf;
  const auto s = f.gfl.stage2_guide(f.r, ggf);
  const auto o = oracle::gfl(oracle::Params{f.store}, "gfl", oracle::from(f.r), oracle::from(f.c), "gf");
  EXPECT_LT(oracle::max_abs_diff(o.a_g, s.attn_guide), 1e-10);
  EXPECT_LT(oracle::max_abs_diff(o.b_c, s.attn_channel), 1e-10);
  EXPECT_LT(oracle::max_abs_diff(o.r_g, s.guided), 1e-10);
}

TEST(GflStage3, ZeroOutputLayerKeepsRecentExactly) {
  Fixture f(3, 4, 7);
  f.gfl.zero_residual_outputs();
  const auto s1 = f.gfl.stage1_ggf(f.c, kEval);
  const auto s2 = f.gfl.stage2_guide(f.r, s1.ggf);
  const auto [r_ij, c_ij] = f.gfl.stage3_feedback(s2.guided, f.r, s1.ggf, kEval);
  EXPECT_EQ(r_ij.values(), f.r.values());
}

TEST(GflStage3, ZeroRecentLeavesGgf) {
  Fixture f(3, 4, 8);
  const Tensor ggf = f.gfl.stage1_ggf(f.c, kEval).ggf;
  EXPECT_EQ(Gfl::feedback(ggf, Tensor::zeros({2, 4})).values(), ggf.values());
}

TEST(GflStage3, MatchesOracle) {
  Fixture f(5, 4, 9);
  const auto out = f.gfl.forward(f.r, f.c, GflMode::Full, kEval);
  const auto o = oracle::gfl(oracle::Params{f.store}, "gfl", oracle::from(f.r), oracle::from(f.c), "gf");
  EXPECT_LT(oracle::max_abs_diff(o.r_out, out.recent_updated), 1e-10);
  EXPECT_LT(oracle::max_abs_diff(o.c_out, out.complete_updated), 1e-10);
}

TEST(GflForward, NoneModePassesThrough) {
  Fixture f(3, 4, 10);
  const auto out = f.gfl.forward(f.r, f.c, GflMode::None, kEval);
  EXPECT_EQ(out.recent_updated.values(), f.r.values());
  EXPECT_EQ(out.complete_updated.values(), f.c.values());
}

TEST(GflForward, FullModeWithZeroOutputLayers) {
  Fixture f(3, 4, 11);
  f.gfl.zero_residual_outputs();
  const auto out = f.gfl.forward(f.r, f.c, GflMode::Full, kEval);
  EXPECT_EQ(out.recent_updated.values(), f.r.values());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      const double mean_r = (f.r.at(0, k) + f.r.at(1, k)) / 2.0;
      EXPECT_NEAR(out.complete_updated.at(i, k), f.c.at(i, k) + mean_r, 1e-15);
    }
}

TEST(GflForward, ModesProduceDistinctOutputs) {
  Fixture f(3, 4, 12);
  std::vector<std::vector<double>> seen;
  for (auto mode : {GflMode::Full, GflMode::GuideOnly, GflMode::FeedbackOnly, GflMode::None}) {
    const auto out = f.gfl.forward(f.r, f.c, mode, kEval);
    std::vector<double> v = out.recent_updated.values();
    v.insert(v.end(), out.complete_updated.values().begin(), out.complete_updated.values().end());
    for (const auto& s : seen) EXPECT_NE(s, v) << to_string(mode);
    seen.push_back(v);
  }
}

TEST(GflForward, ModesMatchOracle) {
  for (auto mode : {GflMode::Full, GflMode::GuideOnly, GflMode::FeedbackOnly, GflMode::None}) {
    Fixture f(3, 6, 13);
    const auto out = f.gfl.forward(f.r, f.c, mode, kEval);
    const auto o = oracle::gfl(oracle::Params{f.store}, "gfl", oracle::from(f.r), oracle::from(f.c), to_string(mode));
    EXPECT_LT(oracle::max_abs_diff(o.r_out, out.recent_updated), 1e-10) << to_string(mode);
    EXPECT_LT(oracle::max_abs_diff(o.c_out, out.complete_updated), 1e-10) << to_string(mode);
  }
}

TEST(GflForward, ShapesAndAttentionRowsHold) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.below(6), d = 2 + rng.below(7);
    Fixture f(n, d, seed);
    const auto out = f.gfl.forward(f.r, f.c, GflMode::Full, kEval);
    EXPECT_EQ(out.recent_updated.shape(), f.r.shape());
    EXPECT_EQ(out.complete_updated.shape(), f.c.shape());
    EXPECT_EQ(out.attn_temporal.shape(), (Shape{n, n}));
    EXPECT_EQ(out.attn_channel.shape(), (Shape{d, d}));
    EXPECT_EQ(out.attn_guide.shape(), (Shape{2, n}));
    for (const Tensor* a : {&out.attn_temporal, &out.attn_channel, &out.attn_guide, &out.attn_guide_channel})
      expect_rows_sum_to_one(*a);
  }
}

TEST(GflForward, WrongShapesRejected) {
  Fixture f(3, 4, 14);
  EXPECT_THROW(f.gfl.forward(f.r, Tensor::zeros({2, 4}), GflMode::Full, kEval), DimensionError);
  EXPECT_THROW(f.gfl.forward(Tensor::zeros({3, 4}), f.c, GflMode::Full, kEval), DimensionError);
  EXPECT_THROW(f.gfl.forward(f.r, Tensor::zeros({3, 5}), GflMode::Full, kEval), DimensionError);
}

TEST(GflForward, GradientMatchesCentralDifferencesForEveryParameter) {
  for (auto mode : {GflMode::Full, GflMode::GuideOnly, GflMode::FeedbackOnly}) {
    Fixture f(3, 4, 15);
    std::vector<Tensor> inputs{f.r, f.c};
    for (const auto& p : f.store.params()) inputs.push_back(p.tensor);
    auto loss = [&] {
      const auto out = f.gfl.forward(f.r, f.c, mode, kEval);
      return add(gradcheck::probe(out.recent_updated, 1), gradcheck::probe(out.complete_updated, 2));
    };
    EXPECT_LT(gradcheck::check(loss, inputs).rel_err, 1e-4) << to_string(mode);
  }
}

TEST(GflForward, ChannelPermutationIsEquivariant) {
  const std::size_t n = 3, d = 5;
  Fixture f(n, d, 16);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  auto permute = [&](const Tensor& t) {
    std::vector<double> v(t.numel());
    const Shape& s = t.shape();
    if (s.size() == 1) {
      for (std::size_t k = 0; k < s[0]; ++k) v[k] = s[0] == d ? t[perm[k]] : t[k];
    } else {
      for (std::size_t i = 0; i < s[0]; ++i)
        for (std::size_t j = 0; j < s[1]; ++j) {
          const std::size_t si = s[0] == d ? perm[i] : i, sj = s[1] == d ? perm[j] : j;
          v[i * s[1] + j] = t[si * s[1] + sj];
        }
    }
    return Tensor(s, v);
  };
  const auto base = f.gfl.forward(f.r, f.c, GflMode::Full, kEval);

  ParamStore store2;
  Rng rng(99);
  Gfl g2(store2, "gfl", n, d, 0.3, rng);
  for (const auto& p : f.store.params()) {
    const Tensor src = permute(p.tensor);
    std::copy(src.values().begin(), src.values().end(), store2.get(p.name).mutable_data().begin());
  }
  const auto moved = g2.forward(permute(f.r), permute(f.c), GflMode::Full, kEval);
  EXPECT_LT(max_diff(moved.recent_updated, permute(base.recent_updated)), 1e-12);
  EXPECT_LT(max_diff(moved.complete_updated, permute(base.complete_updated)), 1e-12);
}

TEST(GflForward, TrainingDropoutIsSeedDeterministic) {
  Fixture f(3, 4, 17);
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    return f.gfl.forward(f.r, f.c, GflMode::Full, ForwardContext{true, &rng}).recent_updated.values();
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
  EXPECT_NE(run(5), f.gfl.forward(f.r, f.c, GflMode::Full, kEval).recent_updated.values());
}

TEST(GflMode, ParsesAllSpellings) {
  EXPECT_EQ(parse_gfl_mode("gf"), GflMode::Full);
  EXPECT_EQ(parse_gfl_mode("g"), GflMode::GuideOnly);
  EXPECT_EQ(parse_gfl_mode("f"), GflMode::FeedbackOnly);
  EXPECT_EQ(parse_gfl_mode("none"), GflMode::None);
  EXPECT_THROW(parse_gfl_mode("gff"), ConfigError);
}
