#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hcr/harness/ablate.hpp"
#include "hcr/harness/export.hpp"
#include "hcr/harness/synthetic.hpp"
#include "hcr/harness/trainer.hpp"

using namespace hcr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Harness : public ::testing::Test {
 protected:
  static fs::path root;
  static SyntheticPaths data;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("hcr_harness_" + std::to_string(::getpid()));
    fs::remove_all(root);
    SyntheticSpec spec;
    spec.n_videos = 40;
    spec.n_test = 20;
    spec.dim = 8;
    data = gen_synthetic(spec, 3, root / "data");
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static RunConfig base(const std::string& out) {
    RunConfig c;
    c.features_dir = data.features_dir.string();
    c.annotations = data.train.string();
    c.out_dir = (root / out).string();
    c.heads = 2;
    c.epochs = 2;
    c.lr = 1e-3;
    c.seed = 11;
    return c;
  }
};

fs::path Harness::root;
SyntheticPaths Harness::data;

/// Nearest class centroid over a per-video summary vector.
double nearest_centroid_top1(const SyntheticSpec& spec, const SyntheticPaths& p, bool tail_only) {
  auto summary = [&](const Annotation& a) {
    const auto t = read_track(track_path(p.features_dir, a.video_id, Modality::Rgb), a.video_id, Modality::Rgb);
    const std::size_t begin = tail_only ? t.frame_count() - spec.tail_frames() : 0;
    std::vector<double> m(t.dim, 0.0);
    for (std::size_t f = begin; f < t.frame_count(); ++f)
      for (std::size_t k = 0; k < t.dim; ++k) m[k] += t.values[f * t.dim + k];
    for (double& v : m) v /= static_cast<double>(t.frame_count() - begin);
    return m;
  };
  const std::size_t classes = spec.classes.actions;
  std::vector<std::vector<double>> centroid(classes, std::vector<double>(spec.dim, 0.0));
  std::vector<std::size_t> count(classes, 0);
  for (const auto& a : read_annotations(p.train.string())) {
    const auto m = summary(a);
    for (std::size_t k = 0; k < spec.dim; ++k) centroid[a.action_class][k] += m[k];
    ++count[a.action_class];
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (double& v : centroid[c]) v /= static_cast<double>(std::max<std::size_t>(count[c], 1));
  std::size_t hit = 0, total = 0;
  for (const auto& a : read_annotations(p.test.string())) {
    const auto m = summary(a);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
      if (count[c] == 0) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < spec.dim; ++k) d += (m[k] - centroid[c][k]) * (m[k] - centroid[c][k]);
      if (d < best_d) best_d = d, best = c;
    }
    hit += best == a.action_class;
    ++total;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

double matrix_row_sum(const nlohmann::json& row) {
  double s = 0.0;
  for (const auto& v : row) s += v.get<double>();
  return s;
}

}  // namespace

TEST(RunConfigTest, DefaultsFollowTheTrainingRecipe) {
  const RunConfig c;
  const auto j = to_json(c);
  EXPECT_EQ(j["lr"].get<double>(), 1e-4);
  EXPECT_EQ(j["lr_decay_every"], 8);
  EXPECT_EQ(j["lr_decay_factor"].get<double>(), 0.1);
  EXPECT_EQ(j["batch_size"], 10);
  EXPECT_EQ(j["deltas"], (std::vector<double>{1.6, 1.2, 0.8, 0.4}));
  EXPECT_EQ(j["n"], (std::vector<std::size_t>{2, 3, 5}));
  EXPECT_EQ(j["heads"], 5);
  EXPECT_EQ(j["layers"], 1);
  EXPECT_EQ(j["tau"].get<double>(), 1.0);
  EXPECT_EQ(j["gfl_mode"], "gf");
  EXPECT_EQ(j["feature_mode"], "cr");
  EXPECT_EQ(j["recent_mode"], "recent");
}

TEST(RunConfigTest, LearningRateSchedule) {
  const RunConfig c;
  for (std::size_t e = 1; e <= 8; ++e) EXPECT_EQ(c.lr_at(e), 1e-4) << e;
  EXPECT_DOUBLE_EQ(c.lr_at(9), 1e-5);
  EXPECT_DOUBLE_EQ(c.lr_at(16), 1e-5);
  EXPECT_DOUBLE_EQ(c.lr_at(17), 1e-6);
}

TEST(RunConfigTest, JsonRoundTripAndUnknownKey) {
  RunConfig c;
  c.heads = 2;
  c.modality = {"rgb", "obj"};
  c.fusion_weights = {0.25, 0.75};
  c.gfl_mode = "g";
  const RunConfig back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"learning_rate", 1.0}}), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"lr", "fast"}}), ConfigError);
}

TEST(RunConfigTest, ValidationErrors) {
  RunConfig c;
  c.gfl_mode = "both";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig();
  c.deltas = {1.6, 1.2, 0.4, 0.8};
  EXPECT_ANY_THROW(c.validate());
  c = RunConfig();
  c.modality = {"rgb", "flow"};
  c.fusion_weights = {0.5, 0.6};
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig();
  c.dim = 16;
  c.classes = {3, 4, 5};
  EXPECT_THROW(c.model().validate(), ConfigError);  // 5 heads do not divide 16
}

TEST_F(Harness, SyntheticIsByteIdenticalPerSeed) {
  SyntheticSpec spec;
  spec.n_videos = 6;
  spec.n_test = 2;
  spec.dim = 4;
  const auto a = gen_synthetic(spec, 5, root / "synth_a");
  const auto b = gen_synthetic(spec, 5, root / "synth_b");
  const auto c = gen_synthetic(spec, 6, root / "synth_c");
  EXPECT_EQ(slurp(a.train), slurp(b.train));
  EXPECT_EQ(slurp(a.test), slurp(b.test));
  for (const auto& ann : read_annotations(a.train.string())) {
    const auto rel = fs::relative(track_path(a.features_dir, ann.video_id, Modality::Rgb), a.features_dir);
    EXPECT_EQ(slurp(a.features_dir / rel), slurp(b.features_dir / rel));
    EXPECT_NE(slurp(a.features_dir / rel), slurp(c.features_dir / rel));
  }
}

TEST_F(Harness, NoiseFreeTailCentroidOracleIsPerfect) {
  SyntheticSpec spec;
  spec.n_videos = 200;  // every class seen in training
  spec.n_test = 40;
  spec.noise_sigma = 0.0;
  spec.classes = {4, 5, 20};
  const auto p = gen_synthetic(spec, 8, root / "clean");
  EXPECT_EQ(nearest_centroid_top1(spec, p, true), 1.0);
}

TEST_F(Harness, NoSignalStaysNearChance) {
  SyntheticSpec spec;
  spec.n_videos = 200;
  spec.n_test = 200;
  spec.signal_mode = SignalMode::None;
  const auto p = gen_synthetic(spec, 9, root / "nosignal");
  const double chance = 1.0 / 5.0, sigma = std::sqrt(chance * (1 - chance) / 200.0);
  for (bool tail : {true, false}) EXPECT_NEAR(nearest_centroid_top1(spec, p, tail), chance, 3 * sigma);
}

TEST_F(Harness, SyntheticLabelsAreConsistent) {
  SyntheticSpec spec;
  spec.classes = {3, 4, 12};
  spec.signal_mode = SignalMode::Mixed;
  spec.validate();
  for (std::size_t v = 0; v < 50; ++v) {
    const Annotation a = synthetic_label(spec, 1, v);
    EXPECT_LT(a.action_class, 12u);
    EXPECT_EQ(a.verb_class, a.action_class % 3);
    EXPECT_EQ(a.noun_class, a.action_class % 4);
    EXPECT_DOUBLE_EQ(a.start_time_s, spec.duration_s() + spec.tau);
  }
  spec.classes = {2, 4, 8};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST_F(Harness, MissingFeatureFilesAreListed) {
  auto anns = read_annotations(data.train.string());
  anns[0].video_id = "ghost_a";
  anns[3].video_id = "ghost_b";
  RunConfig c = base("missing");
  try {
    load_dataset(c, anns);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ghost_a"), std::string::npos);
    EXPECT_NE(msg.find("ghost_b"), std::string::npos);
    EXPECT_NE(msg.find("2 annotated"), std::string::npos);
  }
}

TEST_F(Harness, TrainingIsBitDeterministic) {
  const auto a = train(base("det_a"));
  const auto b = train(base("det_b"));
  for (const char* f : {"rgb/best.hcrw", "rgb/last.hcrw"}) {
    const std::string x = slurp(root / "det_a" / f), y = slurp(root / "det_b" / f);
    EXPECT_FALSE(x.empty());
    EXPECT_EQ(x, y) << f;
  }
  auto ca = a.config, cb = b.config;
  evaluate(ca, data.test.string(), "test");
  evaluate(cb, data.test.string(), "test");
  const std::string ra = slurp(root / "det_a" / "report_test.txt"), rb = slurp(root / "det_b" / "report_test.txt");
  EXPECT_EQ(ra, rb);
  EXPECT_EQ(slurp(root / "det_a" / "scores_test_rgb.jsonl"), slurp(root / "det_b" / "scores_test_rgb.jsonl"));

  RunConfig other = base("det_c");
  other.seed = 12;
  train(other);
  EXPECT_NE(slurp(root / "det_a" / "rgb/last.hcrw"), slurp(root / "det_c" / "rgb/last.hcrw"));
}

TEST_F(Harness, TrainLogRecordsScheduleAndConfig) {
  RunConfig c = base("log");
  c.epochs = 3;
  c.lr_decay_every = 2;
  train(c);
  std::ifstream in(root / "log" / "rgb" / "train_log.jsonl");
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0]["config"]["lr_decay_every"], 2);
  EXPECT_DOUBLE_EQ(lines[1]["lr"].get<double>(), 1e-3);
  EXPECT_DOUBLE_EQ(lines[2]["lr"].get<double>(), 1e-3);
  EXPECT_DOUBLE_EQ(lines[3]["lr"].get<double>(), 1e-4);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_TRUE(lines[i].contains("train_loss"));
    EXPECT_TRUE(lines[i]["val"].contains("action"));
  }
  const auto side = nlohmann::json::parse(slurp(root / "log" / "rgb" / "best.hcrw.json"));
  EXPECT_EQ(side["config"]["seed"], 11);
  const auto cfg = nlohmann::json::parse(slurp(root / "log" / "config.json"));
  EXPECT_EQ(cfg["dim"], 8);
  EXPECT_EQ(cfg["classes"], (std::vector<std::size_t>{3, 4, 5}));
}

TEST_F(Harness, ResumeReproducesUninterruptedRun) {
  RunConfig c = base("full");
  c.epochs = 3;
  train(c);
  RunConfig r = base("resumed");
  r.epochs = 3;
  TrainOptions stop;
  stop.stop_after_epoch = 1;
  train(r, stop);
  EXPECT_NE(slurp(root / "full/rgb/last.hcrw"), slurp(root / "resumed/rgb/last.hcrw"));
  TrainOptions resume;
  resume.resume = true;
  train(r, resume);
  for (const char* f : {"rgb/last.hcrw", "rgb/best.hcrw"})
    EXPECT_EQ(slurp(root / "full" / f), slurp(root / "resumed" / f)) << f;
  // Logs agree apart from the echoed output directory.
  std::string log = slurp(root / "resumed/rgb/train_log.jsonl");
  const std::string from = (root / "resumed").string(), to = (root / "full").string();
  log.replace(log.find(from), from.size(), to);
  EXPECT_EQ(slurp(root / "full/rgb/train_log.jsonl"), log);
}

TEST_F(Harness, EvaluateIsRepeatableAndConsistent) {
  const auto run = train(base("eval"));
  RunConfig cfg = run.config;
  const auto a = evaluate(cfg, data.train.string(), "train");
  const std::string first = slurp(root / "eval" / "report_train.json");
  const auto b = evaluate(cfg, data.train.string(), "train");
  EXPECT_EQ(first, slurp(root / "eval" / "report_train.json"));
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a.final_report().tasks[t].top5_acc, b.final_report().tasks[t].top5_acc);
    EXPECT_GE(a.final_report().tasks[t].top5_acc, a.final_report().tasks[t].top1_acc);
  }
  const auto j = nlohmann::json::parse(first);
  EXPECT_EQ(j["config"]["heads"], 2);
  EXPECT_EQ(j["split"], "train");
  EXPECT_TRUE(j["reports"].contains("rgb"));
}

TEST_F(Harness, MismatchedCheckpointNamesParameters) {
  const auto run = train(base("mismatch"));
  RunConfig cfg = run.config;
  cfg.layers = 2;
  try {
    evaluate(cfg, data.test.string(), "test");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("missing: mcrfa.1.encoder.1.attn.q.weight"), std::string::npos) << msg;
  }
  cfg = run.config;
  cfg.classes[2] = 6;
  try {
    evaluate(cfg, data.test.string(), "test");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("shape: head.1.action.weight"), std::string::npos) << e.what();
  }
}

TEST_F(Harness, FusionBeatsBestSingleModalityOnComplementaryData) {
  SyntheticSpec spec;
  spec.n_videos = 200;
  spec.n_test = 100;
  spec.classes = {4, 5, 20};
  spec.modalities = {"rgb", "flow", "obj"};
  spec.complementary = true;
  const auto p = gen_synthetic(spec, 1, root / "fusion_data");
  RunConfig c = base("fusion");
  c.features_dir = p.features_dir.string();
  c.annotations = p.train.string();
  c.modality = spec.modalities;
  c.epochs = 10;
  c.dim = 16;
  const auto run = train(c);
  const auto ev = evaluate(run.config, p.test.string(), "test");
  ASSERT_EQ(ev.reports.size(), 4u);
  double best_single = 0.0;
  for (std::size_t m = 0; m < 3; ++m) best_single = std::max(best_single, ev.reports[m].second.tasks[2].top5_acc);
  EXPECT_GE(ev.get("fused").tasks[2].top5_acc, best_single);
  EXPECT_TRUE(fs::exists(root / "fusion" / "scores_test_fused.jsonl"));
  for (const auto& row : ev.scores.back().second) {
    double s = 0.0;
    for (double v : row.scores.action_scores) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Ablation, BuiltinMatrixCardinalities) {
  EXPECT_EQ(builtin_matrix("gfl").cells.size(), 4u);
  EXPECT_EQ(builtin_matrix("feature").cells.size(), 3u);
  EXPECT_EQ(builtin_matrix("recent").cells.size(), 2u);
  EXPECT_EQ(builtin_matrix("deltas").cells.size(), 8u);
  EXPECT_EQ(builtin_matrix("transformer_epic").cells.size(), 6u);
  EXPECT_EQ(builtin_matrix("transformer_egtea").cells.size(), 6u);
  EXPECT_EQ(builtin_matrix("modality").cells.size(), 7u);
  EXPECT_THROW(builtin_matrix("nope"), ConfigError);
  for (const auto& name : builtin_matrices()) {
    for (const auto& cell : builtin_matrix(name).cells) {
      RunConfig c;
      apply_json(c, cell.overrides);
      EXPECT_NO_THROW(c.validate()) << name << "/" << cell.label;
    }
  }
}

TEST(Ablation, MatrixFromJson) {
  const auto m = matrix_from_json(nlohmann::json::parse(
      R"({"name": "mine", "cells": [{"label": "a", "overrides": {"layers": 2}}, {"label": "b", "overrides": {}}]})"));
  EXPECT_EQ(m.name, "mine");
  ASSERT_EQ(m.cells.size(), 2u);
  RunConfig base;
  base.out_dir = "/tmp/x";
  const RunConfig c = cell_config(base, m, m.cells[0]);
  EXPECT_EQ(c.layers, 2u);
  EXPECT_EQ(c.out_dir, "/tmp/x/mine/a");
}

TEST_F(Harness, AblateWritesOneRowPerCell) {
  RunConfig c = base("ablate");
  c.epochs = 1;
  AblationOptions opt;
  opt.eval_annotations = data.test.string();
  opt.jobs = 2;
  const auto rows = ablate(builtin_matrix("feature"), c, opt);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].label, "c");
  const auto j = nlohmann::json::parse(slurp(root / "ablate" / "feature" / "table.json"));
  EXPECT_EQ(j["rows"].size(), 3u);
  EXPECT_EQ(j["rows"][1]["config"]["feature_mode"], "r");
  const std::string txt = slurp(root / "ablate" / "feature" / "table.txt");
  EXPECT_NE(txt.find("cr "), std::string::npos);

  AblationMatrix bad{"bad", {{"h3", {{"heads", 3}}}, {"ok", {}}}};
  try {
    ablate(bad, c, opt);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("h3"), std::string::npos);
  }
}

TEST_F(Harness, AttentionExport) {
  const auto run = train(base("export"));
  const auto anns = read_annotations(data.test.string());
  const auto j = export_attention(run.config, data.test.string(), {anns[0].sample_id, anns[1].sample_id});
  ASSERT_EQ(j["samples"].size(), 2u);
  EXPECT_EQ(j["config"]["n"], (std::vector<std::size_t>{2, 3, 5}));
  const auto& recs = j["samples"][0]["modalities"]["rgb"];
  EXPECT_EQ(recs.size(), 4u * 3u * 3u);
  std::set<std::pair<int, int>> pairs;
  for (const auto& r : recs) {
    pairs.insert({r["pair"][0].get<int>(), r["pair"][1].get<int>()});
    const std::size_t n = r["n"];
    EXPECT_EQ(n, std::vector<std::size_t>({2, 3, 5})[r["pair"][1].get<std::size_t>() - 1]);
    for (const char* key : {"attn_temporal", "attn_channel", "attn_guide"}) {
      if (r[key].is_null()) continue;
      for (const auto& row : r[key]) EXPECT_NEAR(matrix_row_sum(row), 1.0, 1e-9);
    }
    if (!r["attn_temporal"].is_null()) EXPECT_EQ(r["attn_temporal"].size(), n);
    if (!r["attn_guide"].is_null()) {
      EXPECT_EQ(r["attn_guide"].size(), 2u);
      EXPECT_EQ(r["attn_guide"][0].size(), n);
    }
  }
  EXPECT_EQ(pairs.size(), 12u);
  for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
    if (recs[k]["stage"] == "single") {
      ASSERT_EQ(recs[k + 1]["stage"], "dual");
      EXPECT_NE(recs[k]["output"], recs[k + 1]["output"]);
    }
  }
  try {
    export_attention(run.config, data.test.string(), {"syn_99999", anns[0].sample_id, "bogus"});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("syn_99999"), std::string::npos);
    EXPECT_NE(msg.find("bogus"), std::string::npos);
  }
  RunConfig none = run.config;
  none.gfl_mode = "none";
  HcrModel m(none.model(), 1);
  EXPECT_THROW(attention_json(m, load_dataset(none, data.test.string()).samples[0].features[0]), ConfigError);
}
