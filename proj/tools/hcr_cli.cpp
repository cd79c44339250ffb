// hcr: train, evaluate and ablate HCR anticipation models.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hcr/harness/ablate.hpp"
#include "hcr/harness/export.hpp"
#include "hcr/harness/synthetic.hpp"
#include "hcr/harness/trainer.hpp"

namespace {

using hcr::RunConfig;
using json = nlohmann::json;

template <typename T>
std::vector<T> split_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) out.push_back(item);
    else if constexpr (std::is_floating_point_v<T>) out.push_back(std::stod(item));
    else out.push_back(static_cast<T>(std::stoull(item)));
  }
  return out;
}

/// RunConfig flags. Values given on the command line override --config.
struct RunFlags {
  std::string config;
  std::map<std::string, std::string> raw;  // field -> text as typed
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON run config (same field names as the flags)");
    auto flag = [&](const std::string& field, const std::string& help) {
      std::string name = field;
      std::replace(name.begin(), name.end(), '_', '-');
      opts[field] = app->add_option("--" + name, raw[field], help);
    };
    flag("dim", "feature dimension (0: from the feature files)");
    flag("n", "complete fragment counts, e.g. 2,3,5");
    flag("deltas", "recent window durations in seconds, e.g. 1.6,1.2,0.8,0.4");
    flag("heads", "attention heads");
    flag("layers", "encoder layers");
    flag("ffn_mult", "encoder FFN width multiplier");
    flag("dropout", "dropout probability");
    flag("positional_encoding", "learned positional encoding (true/false)");
    flag("classes", "verb,noun,action class counts (0: from the annotations)");
    flag("modality", "comma-separated modalities: rgb, flow, obj");
    flag("fusion_weights", "late fusion weights, one per modality");
    flag("gfl_mode", "none, g, f or gf");
    flag("feature_mode", "c, r or cr");
    flag("recent_mode", "recent or old");
    flag("lr", "initial learning rate");
    flag("lr_decay_every", "epochs between learning rate decays");
    flag("lr_decay_factor", "learning rate decay factor");
    flag("batch_size", "minibatch size");
    flag("epochs", "training epochs");
    flag("seed", "run seed");
    flag("tau", "anticipation time in seconds");
    flag("val_fraction", "fraction of training videos held out for validation");
    flag("features_dir", "directory holding <modality>/<video>.hcrf");
    flag("annotations", "training annotations (JSON lines)");
    flag("out_dir", "run output directory");
  }

  json overrides() const {
    static const std::set<std::string> strings = {"gfl_mode", "feature_mode", "recent_mode", "features_dir",
                                                  "annotations", "out_dir"};
    json j = json::object();
    for (const auto& [field, opt] : opts) {
      if (opt->count() == 0) continue;
      const std::string& v = raw.at(field);
      if (strings.count(field)) j[field] = v;
      else if (field == "modality") j[field] = split_list<std::string>(v);
      else if (field == "n" || field == "classes") j[field] = split_list<std::size_t>(v);
      else if (field == "deltas" || field == "fusion_weights") j[field] = split_list<double>(v);
      else if (field == "positional_encoding") {
        if (v != "true" && v != "false") throw hcr::ConfigError("--positional-encoding expects true or false");
        j[field] = v == "true";
      } else {
        try {
          j[field] = json::parse(v);
        } catch (const json::exception&) {
          throw hcr::ConfigError("--" + field + ": cannot parse '" + v + "'");
        }
      }
    }
    return j;
  }

  RunConfig build(RunConfig base = {}) const {
    if (!config.empty()) base = hcr::load_run_config(config);
    hcr::apply_json(base, overrides());
    return base;
  }
};

void write_json_out(const std::string& path, const nlohmann::ordered_json& j) {
  if (path.empty() || path == "-") std::cout << j.dump(2) << "\n";
  else hcr::write_json(path, j);
}

int run(int argc, char** argv) {
  CLI::App app{"HCR egocentric action anticipation"};
  app.require_subcommand(1);

  // train
  RunFlags train_flags;
  bool resume = false, quiet = false;
  auto* train = app.add_subcommand("train", "train one model per modality");
  train_flags.add(train);
  train->add_flag("--resume", resume, "continue from <out_dir>/<modality>/last.hcrw");
  train->add_flag("-q,--quiet", quiet, "no per-epoch progress");

  // eval
  std::string eval_run, eval_ann, eval_split = "test", eval_features;
  auto* eval = app.add_subcommand("eval", "score a split with a trained run");
  eval->add_option("--run-dir", eval_run, "trained run directory")->required();
  eval->add_option("--annotations", eval_ann, "annotations to score")->required();
  eval->add_option("--split", eval_split, "split name used in output file names");
  eval->add_option("--features-dir", eval_features, "feature directory (default: the run's)");

  // ablate
  RunFlags ablate_flags;
  std::string matrix, ablate_eval, ablate_split = "test";
  std::size_t jobs = 1;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate an ablation matrix");
  ablate_flags.add(ablate);
  ablate->add_option("--matrix", matrix, "builtin matrix name or JSON matrix file")->required();
  ablate->add_option("--eval-annotations", ablate_eval, "annotations scored for every cell")->required();
  ablate->add_option("--split", ablate_split, "split name used in output file names");
  ablate->add_option("--jobs", jobs, "cells trained in parallel");

  // gen-synthetic
  hcr::SyntheticSpec spec;
  std::string spec_file, synth_out, signal_mode, classes, modalities;
  std::uint64_t synth_seed = 0;
  auto* gen = app.add_subcommand("gen-synthetic", "write a planted-signal dataset");
  gen->add_option("--out", synth_out, "output directory")->required();
  gen->add_option("--seed", synth_seed, "generator seed");
  gen->add_option("--spec", spec_file, "JSON synthetic spec (flags override)");
  auto* o_videos = gen->add_option("--n-videos", spec.n_videos, "training videos");
  auto* o_test = gen->add_option("--n-test", spec.n_test, "test videos");
  auto* o_frames = gen->add_option("--frames", spec.frames_per_video, "frames per video");
  auto* o_fps = gen->add_option("--fps", spec.fps, "frames per second");
  auto* o_dim = gen->add_option("--dim", spec.dim, "feature dimension");
  gen->add_option("--classes", classes, "verb,noun,action class counts");
  gen->add_option("--signal-mode", signal_mode, "recent_window, global, mixed or none");
  auto* o_noise = gen->add_option("--noise-sigma", spec.noise_sigma, "per-frame noise deviation");
  auto* o_amp = gen->add_option("--amplitude", spec.signal_amplitude, "prototype scale");
  auto* o_base = gen->add_option("--baseline-sigma", spec.baseline_sigma, "per-video offset deviation");
  auto* o_tail = gen->add_option("--tail", spec.tail_s, "planted tail length in seconds");
  auto* o_tau = gen->add_option("--tau", spec.tau, "anticipation time in seconds");
  gen->add_option("--modality", modalities, "comma-separated modalities");
  bool complementary = false;
  gen->add_flag("--complementary", complementary, "split the signal across modalities by action class");

  // export-attention
  std::string exp_run, exp_ann, exp_out, exp_features;
  std::vector<std::string> exp_ids;
  auto* exp = app.add_subcommand("export-attention", "dump GFL attention maps as JSON");
  exp->add_option("--run-dir", exp_run, "trained run directory")->required();
  exp->add_option("--annotations", exp_ann, "annotations containing the samples")->required();
  exp->add_option("--sample-id", exp_ids, "sample ids (default: all)");
  exp->add_option("--out", exp_out, "output file (default: stdout)");
  exp->add_option("--features-dir", exp_features, "feature directory (default: the run's)");

  // fuse
  std::vector<std::string> score_files;
  std::string weights, fuse_out, fuse_ann, fuse_classes;
  auto* fuse = app.add_subcommand("fuse", "late-fuse per-modality score files");
  fuse->add_option("--scores", score_files, "score files, one per modality")->required();
  fuse->add_option("--weights", weights, "comma-separated weights (default: uniform)");
  fuse->add_option("--out", fuse_out, "fused score file")->required();
  fuse->add_option("--annotations", fuse_ann, "annotations for a report");
  fuse->add_option("--classes", fuse_classes, "verb,noun,action class counts for the report");

  CLI11_PARSE(app, argc, argv);

  if (*train) {
    const RunConfig cfg = train_flags.build();
    hcr::TrainOptions opt;
    opt.resume = resume;
    opt.progress = quiet ? nullptr : &std::cerr;
    const auto result = hcr::train(cfg, opt);
    for (const auto& m : result.modalities) {
      std::cout << m.dir.string() << ": best epoch " << m.best_epoch;
      if (m.best_val) std::cout << ", val action top-5 " << m.best_val->tasks[2].top5_acc;
      std::cout << "\n";
    }
  } else if (*eval) {
    RunConfig cfg = hcr::load_run_dir_config(eval_run);
    cfg.out_dir = eval_run;
    if (!eval_features.empty()) cfg.features_dir = eval_features;
    const auto ev = hcr::evaluate(cfg, eval_ann, eval_split);
    std::cout << hcr::table_header();
    for (const auto& [name, r] : ev.reports) std::cout << hcr::table_row(name, r);
  } else if (*ablate) {
    const RunConfig base = ablate_flags.build();
    const hcr::AblationMatrix m = std::filesystem::exists(matrix)
                                      ? hcr::matrix_from_json(json::parse(std::ifstream(matrix)))
                                      : hcr::builtin_matrix(matrix);
    hcr::AblationOptions opt;
    opt.eval_annotations = ablate_eval;
    opt.split = ablate_split;
    opt.jobs = jobs;
    const auto rows = hcr::ablate(m, base, opt);
    std::cout << hcr::ablation_table(m, rows);
  } else if (*gen) {
    hcr::SyntheticSpec s;
    if (!spec_file.empty()) {
      std::ifstream in(spec_file);
      if (!in) throw hcr::IoError("cannot open " + spec_file);
      hcr::apply_json(s, json::parse(in));
    }
    if (o_videos->count()) s.n_videos = spec.n_videos;
    if (o_test->count()) s.n_test = spec.n_test;
    if (o_frames->count()) s.frames_per_video = spec.frames_per_video;
    if (o_fps->count()) s.fps = spec.fps;
    if (o_dim->count()) s.dim = spec.dim;
    if (o_noise->count()) s.noise_sigma = spec.noise_sigma;
    if (o_amp->count()) s.signal_amplitude = spec.signal_amplitude;
    if (o_base->count()) s.baseline_sigma = spec.baseline_sigma;
    if (o_tail->count()) s.tail_s = spec.tail_s;
    if (o_tau->count()) s.tau = spec.tau;
    if (!signal_mode.empty()) s.signal_mode = hcr::parse_signal_mode(signal_mode);
    if (!classes.empty()) {
      const auto c = split_list<std::size_t>(classes);
      if (c.size() != 3) throw hcr::ConfigError("--classes expects verb,noun,action");
      s.classes = {c[0], c[1], c[2]};
    }
    if (!modalities.empty()) s.modalities = split_list<std::string>(modalities);
    if (complementary) s.complementary = true;
    const auto p = hcr::gen_synthetic(s, synth_seed, synth_out);
    std::cout << "features:    " << p.features_dir.string() << "\ntrain:       " << p.train.string()
              << "\ntest:        " << p.test.string() << "\n";
  } else if (*exp) {
    RunConfig cfg = hcr::load_run_dir_config(exp_run);
    cfg.out_dir = exp_run;
    if (!exp_features.empty()) cfg.features_dir = exp_features;
    write_json_out(exp_out, hcr::export_attention(cfg, exp_ann, exp_ids));
  } else if (*fuse) {
    std::vector<std::vector<hcr::ScoredSample>> inputs;
    for (const auto& f : score_files) inputs.push_back(hcr::read_score_file(f));
    const auto w = weights.empty() ? hcr::uniform_weights(inputs.size()) : split_list<double>(weights);
    std::vector<hcr::ScoredSample> fused;
    for (std::size_t s = 0; s < inputs[0].size(); ++s) {
      std::vector<hcr::PredictionTriplet> per;
      for (std::size_t m = 0; m < inputs.size(); ++m) {
        if (inputs[m].size() != inputs[0].size() || inputs[m][s].sample_id != inputs[0][s].sample_id)
          throw hcr::ConfigError("score files list different samples (" + score_files[m] + ")");
        per.push_back(inputs[m][s].scores);
      }
      fused.push_back({inputs[0][s].sample_id, hcr::late_fuse(per, w)});
    }
    hcr::write_score_file(fuse_out, fused);
    if (!fuse_ann.empty()) {
      const auto c = split_list<std::size_t>(fuse_classes);
      if (c.size() != 3) throw hcr::ConfigError("--classes verb,noun,action is required with --annotations");
      const auto r = hcr::evaluate_score_rows(fused, hcr::read_annotations(fuse_ann), {c[0], c[1], c[2]});
      std::cout << hcr::table_header() << hcr::table_row("fused", r);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hcr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
