// Copyright 2026 The milt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file
/// The `milt` command line: train / predict / eval-instances / eval-groups /
/// attribute / calibrate / synth / gradcheck / stats.
///
/// Exit codes: 0 success, 1 data or validation error, 2 usage error.
/// Diagnostics go to `err`; machine-readable output goes to `--out` when
/// given and to `out` otherwise.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "milt/dataset.hpp"
#include "milt/error.hpp"
#include "milt/inference.hpp"
#include "milt/similarity.hpp"
#include "milt/synth.hpp"
#include "milt/trainer.hpp"

namespace milt::cli {

namespace detail {

struct DataFlags {
  std::string instances;
  std::string groups;
  std::vector<std::string> filter_tags;
  std::vector<std::string> filter_groups;
};

struct TrainFlags {
  DataFlags data;
  std::string model;
  Hyperparams hp;
  std::size_t max_iters = 1050;
  std::size_t knn = 0;
  std::string lambda_scope = "batch";
  std::string graph_cache;
  unsigned threads = 1;
  bool allow_uncovered = false;
  bool verbose = false;
};

struct SynthFlags {
  SynthConfig config;
  double separation = 2.0;
  std::string out_dir = ".";
};

// Writes to --out when set, else to the command's output stream.
inline void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(fallback);
    return;
  }
  auto file = milt::detail::open_output(path);
  write(file);
  if (!file) throw error(errc::io_error, "failed writing '" + path + "'");
}

inline void add_filter_flags(CLI::App* cmd, DataFlags& data) {
  cmd->add_option("--filter-tag", data.filter_tags, "Keep only groups carrying this tag (repeatable)");
  cmd->add_option("--filter-group", data.filter_groups, "Keep only the group with this id (repeatable)");
}

inline Dataset load_filtered(const DataFlags& data) {
  Dataset dataset = load_dataset(data.instances, data.groups);
  if (data.filter_tags.empty() && data.filter_groups.empty()) return dataset;
  GroupSelector selector;
  selector.ids.insert(data.filter_groups.begin(), data.filter_groups.end());
  selector.tags.insert(data.filter_tags.begin(), data.filter_tags.end());
  return filter_groups(dataset, selector);
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Transfer group-level labels to the instances inside each group", "milt"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::function<void()> action;
  const CLI::Range band_range(0.0, std::nextafter(0.5, 0.0), "[0, 0.5)");

  // -- train ---------------------------------------------------------------
  detail::TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Fit an instance scorer from group scores");
  train_cmd->add_option("--instances", tf.data.instances, "Instances JSON-lines file")->required();
  train_cmd->add_option("--groups", tf.data.groups, "Groups JSON-lines file")->required();
  train_cmd->add_option("--model", tf.model, "Output model file")->required();
  train_cmd->add_option("--alpha", tf.hp.alpha_tradeoff, "Trade-off alpha; lambda = alpha*|I|^2/|G|");
  train_cmd->add_option("--lr", tf.hp.learning_rate, "SGD learning rate");
  train_cmd->add_option("--batch-groups", tf.hp.batch_groups, "Groups per mini-batch");
  train_cmd->add_option("--inner-iters", tf.hp.inner_iters, "SGD steps per mini-batch");
  train_cmd->add_option("--epochs", tf.hp.epochs, "Passes over the groups");
  train_cmd->add_option("--max-iters", tf.max_iters, "Cap on total SGD steps (0 = no cap)");
  train_cmd->add_option("--gamma", tf.hp.gamma, "RBF bandwidth: w = exp(-gamma*|xi-xj|^2)");
  train_cmd->add_flag("--bias", tf.hp.use_bias, "Learn an intercept");
  train_cmd->add_option("--lambda-scope", tf.lambda_scope, "Compute lambda per 'batch' or from the 'global' sizes")
      ->check(CLI::IsMember({"batch", "global"}));
  train_cmd->add_option("--knn", tf.knn, "Use a global kNN graph with this k (0 = dense per-batch graphs)");
  train_cmd->add_option("--graph-cache", tf.graph_cache, "Reuse/write the kNN graph at this path");
  train_cmd->add_option("--seed", tf.hp.seed, "Random seed");
  train_cmd->add_option("--threads", tf.threads, "Worker threads for graph construction");
  train_cmd->add_flag("--allow-uncovered", tf.allow_uncovered, "Accept instances that belong to no group");
  train_cmd->add_flag("-v,--verbose", tf.verbose, "Log every mini-batch");
  detail::add_filter_flags(train_cmd, tf.data);
  train_cmd->callback([&] {
    action = [&] {
      Hyperparams hp = tf.hp;
      hp.max_total_iters = tf.max_iters > 0 ? std::optional<std::size_t>(tf.max_iters) : std::nullopt;
      hp.knn = tf.knn > 0 ? std::optional<std::size_t>(tf.knn) : std::nullopt;
      hp.lambda_scope = parse_lambda_scope(tf.lambda_scope);
      const Dataset dataset = detail::load_filtered(tf.data);
      validate(dataset, /*strict_coverage=*/!tf.allow_uncovered);

      TrainOptions options;
      options.threads = tf.threads;
      options.on_warning = [&](std::string_view msg) { err << "warning: " << msg << '\n'; };
      if (tf.verbose) {
        options.on_batch = [&](const BatchLog& log) {
          err << "epoch " << log.epoch << " batch " << log.batch << " groups " << log.num_groups << " instances "
              << log.num_instances << " lambda " << log.lambda << " objective " << log.objective_before << " -> "
              << log.objective_after << '\n';
        };
      }
      std::optional<SimilarityGraph> cached;
      if (hp.knn && !tf.graph_cache.empty()) {
        SimilarityConfig config;
        config.gamma = hp.gamma;
        config.knn = hp.knn;
        config.cache = true;
        config.threads = tf.threads;
        cached = load_or_build_graph(tf.graph_cache, dataset, config);
        options.global_graph = &*cached;
      }
      const Model model = train(dataset, hp, options);
      save_model(tf.model, model);
      err << "trained " << model.summary.iterations << " steps over " << model.summary.batches
          << " batches in " << std::fixed << std::setprecision(2) << model.summary.wall_seconds
          << " s; final batch objective " << std::defaultfloat << model.summary.final_objective << '\n';
    };
  });

  // -- predict -------------------------------------------------------------
  std::string model_path;
  std::string instances_path;
  std::string groups_path;
  std::string out_path;
  double band = NeutralBand::default_width;

  auto* predict_cmd = app.add_subcommand("predict", "Score instances with a trained model");
  predict_cmd->add_option("--model", model_path, "Model file")->required();
  predict_cmd->add_option("--instances", instances_path, "Instances JSON-lines file")->required();
  predict_cmd->add_option("--out", out_path, "Predictions file (default: standard output)");
  predict_cmd->add_option("--band", band, "Neutral band half-width b")->check(band_range);
  predict_cmd->callback([&] {
    action = [&] {
      const Model model = load_model(model_path);
      const auto instances = load_instances(instances_path, model.dim);
      const auto predictions = predict(model, instances, NeutralBand(band));
      detail::emit(out_path, out, [&](std::ostream& os) { write_predictions(os, predictions); });
    };
  });

  // -- eval-instances ------------------------------------------------------
  std::string policy = "ignore";
  auto* evali_cmd = app.add_subcommand("eval-instances", "Precision/recall of instance labels against hidden truth");
  evali_cmd->add_option("--model", model_path, "Model file")->required();
  evali_cmd->add_option("--instances", instances_path, "Instances file with 'label' fields")->required();
  evali_cmd->add_option("--band", band, "Neutral band half-width b")->check(band_range);
  evali_cmd->add_option("--policy", policy, "'ignore' neutral predictions or use 'none' (b = 0)")
      ->check(CLI::IsMember({"ignore", "none"}));
  evali_cmd->add_option("--out", out_path, "Metrics file (default: standard output)");
  evali_cmd->callback([&] {
    action = [&] {
      const Model model = load_model(model_path);
      const auto instances = load_instances(instances_path, model.dim);
      const auto predictions = predict(model, instances, NeutralBand(band));
      const auto truths = truth_labels(instances);
      const MetricsReport report = evaluate_instances(
          predictions, truths, policy == "none" ? NeutralPolicy::no_neutral_band : NeutralPolicy::ignore_neutral);
      nlohmann::ordered_json j = to_json(report);
      j["band"] = policy == "none" ? 0.0 : band;
      std::vector<double> scores;
      for (const auto& p : predictions) scores.push_back(p.score);
      const bool both = std::ranges::count(truths, 1) > 0 && std::ranges::count(truths, 0) > 0;
      j["auc"] = both ? nlohmann::ordered_json(auc(scores, truths)) : nlohmann::ordered_json(nullptr);
      detail::emit(out_path, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    };
  });

  // -- eval-groups ---------------------------------------------------------
  detail::DataFlags gdata;
  auto* evalg_cmd = app.add_subcommand("eval-groups", "Accuracy of averaged instance scores as a group classifier");
  evalg_cmd->add_option("--model", model_path, "Model file")->required();
  evalg_cmd->add_option("--instances", gdata.instances, "Instances JSON-lines file")->required();
  evalg_cmd->add_option("--groups", gdata.groups, "Groups file with binary scores")->required();
  evalg_cmd->add_option("--out", out_path, "Metrics file (default: standard output)");
  detail::add_filter_flags(evalg_cmd, gdata);
  evalg_cmd->callback([&] {
    action = [&] {
      const Model model = load_model(model_path);
      const Dataset dataset = detail::load_filtered(gdata);
      nlohmann::ordered_json j;
      j["accuracy"] = evaluate_groups(model, dataset);
      j["groups"] = dataset.num_groups();
      detail::emit(out_path, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    };
  });

  // -- attribute -----------------------------------------------------------
  std::string group_id;
  bool as_json = false;
  auto* attr_cmd = app.add_subcommand("attribute", "Per-instance scores within one group, most positive first");
  attr_cmd->add_option("--model", model_path, "Model file")->required();
  attr_cmd->add_option("--instances", instances_path, "Instances JSON-lines file")->required();
  attr_cmd->add_option("--groups", groups_path, "Groups JSON-lines file")->required();
  attr_cmd->add_option("--group", group_id, "Group id to report")->required();
  attr_cmd->add_option("--band", band, "Neutral band half-width b")->check(band_range);
  attr_cmd->add_flag("--json", as_json, "Emit JSON instead of a table");
  attr_cmd->callback([&] {
    action = [&] {
      const Model model = load_model(model_path);
      const Dataset dataset = load_dataset(instances_path, groups_path, model.dim);
      const auto g = dataset.find_group(group_id);
      if (!g) throw error(errc::unknown_group, "no group with id '" + group_id + "'");
      const AttributionReport report = attribute(model, dataset.group(*g), dataset, NeutralBand(band));
      if (as_json) {
        out << to_json(report).dump(2) << '\n';
      } else {
        write_attribution_table(out, report);
      }
    };
  });

  // -- calibrate -----------------------------------------------------------
  double target_recall = 0.762;
  auto* cal_cmd = app.add_subcommand("calibrate", "Pick the widest neutral band that keeps a target recall");
  cal_cmd->add_option("--model", model_path, "Model file")->required();
  cal_cmd->add_option("--instances", instances_path, "Instances to score")->required();
  cal_cmd->add_option("--target-recall", target_recall, "Fraction of instances that must stay non-neutral")
      ->check(CLI::Range(0.0, 1.0));
  cal_cmd->add_option("--out", out_path, "Result file (default: standard output)");
  cal_cmd->callback([&] {
    action = [&] {
      const Model model = load_model(model_path);
      const auto instances = load_instances(instances_path, model.dim);
      const auto scores = score_instances(model, instances);
      const NeutralBand calibrated = calibrate_band(scores, target_recall);
      std::size_t decided = 0;
      for (double s : scores) decided += classify(s, calibrated) != Sentiment::neutral ? 1 : 0;
      nlohmann::ordered_json j;
      j["band"] = calibrated.width();
      j["target_recall"] = target_recall;
      j["recall"] = static_cast<double>(decided) / static_cast<double>(scores.size());
      detail::emit(out_path, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    };
  });

  // -- synth ---------------------------------------------------------------
  detail::SynthFlags sf;
  std::string composition = "uniform";
  std::string score_mode = "proportion";
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset with hidden instance labels");
  synth_cmd->add_option("--out-dir", sf.out_dir, "Directory for instances.jsonl and groups.jsonl");
  synth_cmd->add_option("--seed", sf.config.seed, "Random seed");
  synth_cmd->add_option("--dim", sf.config.dim, "Feature dimension");
  synth_cmd->add_option("--n-groups", sf.config.n_groups, "Number of groups");
  synth_cmd->add_option("--group-size", sf.config.group_size_min, "Group size (minimum when --group-size-max is set)");
  synth_cmd->add_option("--group-size-max", sf.config.group_size_max, "Maximum group size");
  synth_cmd->add_option("--separation", sf.separation, "Class means at +-separation on the first axis");
  synth_cmd->add_option("--noise", sf.config.noise_std, "Isotropic noise standard deviation");
  synth_cmd->add_option("--composition", composition, "Positive share per group: fixed, uniform or bernoulli-bag")
      ->check(CLI::IsMember({"fixed", "uniform", "bernoulli-bag"}));
  synth_cmd->add_option("--fixed-fraction", sf.config.fixed_fraction, "Positive share for --composition fixed");
  synth_cmd->add_option("--score-mode", score_mode, "Group score: proportion or binary (majority)")
      ->check(CLI::IsMember({"proportion", "binary"}));
  synth_cmd->callback([&] {
    action = [&] {
      SynthConfig config = sf.config;
      if (synth_cmd->count("--group-size-max") == 0) config.group_size_max = config.group_size_min;
      config.positive_mean = SynthConfig::axis_mean(config.dim, sf.separation);
      config.negative_mean = SynthConfig::axis_mean(config.dim, -sf.separation);
      config.composition = parse_composition(composition);
      config.score_mode = parse_score_mode(score_mode);
      const Dataset dataset = generate(config);
      std::error_code ec;
      std::filesystem::create_directories(sf.out_dir, ec);
      if (ec) throw error(errc::io_error, "cannot create '" + sf.out_dir + "': " + ec.message());
      const std::filesystem::path dir(sf.out_dir);
      auto inst = milt::detail::open_output(dir / "instances.jsonl");
      write_instances(inst, dataset.instances(), /*with_labels=*/true);
      auto grp = milt::detail::open_output(dir / "groups.jsonl");
      write_groups(grp, dataset.groups());
      if (!inst || !grp) throw error(errc::io_error, "failed writing into '" + sf.out_dir + "'");
      err << "wrote " << dataset.num_instances() << " instances and " << dataset.num_groups() << " groups to "
          << sf.out_dir << '\n';
    };
  });

  // -- gradcheck -----------------------------------------------------------
  std::uint64_t gc_seed = 0;
  std::size_t gc_trials = 20;
  double gc_step = 1e-6;
  bool gc_failed = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare the analytic gradient with finite differences");
  gc_cmd->add_option("--seed", gc_seed, "Random seed");
  gc_cmd->add_option("--trials", gc_trials, "Number of random problems");
  gc_cmd->add_option("--step", gc_step, "Central-difference step");
  gc_cmd->callback([&] {
    action = [&] {
      const GradcheckResult r = gradcheck(gc_seed, gc_trials, gc_step);
      nlohmann::ordered_json j;
      j["trials"] = r.trials;
      j["max_relative_error"] = r.max_relative_error;
      j["tolerance"] = 1e-5;
      j["pass"] = r.max_relative_error < 1e-5;
      out << j.dump(2) << '\n';
      gc_failed = !(r.max_relative_error < 1e-5);
    };
  });

  // -- stats ---------------------------------------------------------------
  detail::DataFlags sdata;
  auto* stats_cmd = app.add_subcommand("stats", "Summarize a dataset");
  stats_cmd->add_option("--instances", sdata.instances, "Instances JSON-lines file")->required();
  stats_cmd->add_option("--groups", sdata.groups, "Groups JSON-lines file")->required();
  detail::add_filter_flags(stats_cmd, sdata);
  stats_cmd->callback([&] {
    action = [&] {
      const Dataset dataset = detail::load_filtered(sdata);
      const ValidationReport report = check(dataset, /*strict_coverage=*/false);
      if (!report.ok()) throw validation_error(report);
      const DatasetStats s = stats(dataset);
      nlohmann::ordered_json j;
      j["instances"] = s.num_instances;
      j["groups"] = s.num_groups;
      j["dim"] = s.dim;
      j["mean_group_size"] = s.mean_group_size;
      j["score_histogram"] = s.score_histogram;
      j["uncovered_instances"] = report.uncovered.size();
      out << j.dump(2) << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return gc_failed ? 1 : 0;
}

}  // namespace milt::cli
