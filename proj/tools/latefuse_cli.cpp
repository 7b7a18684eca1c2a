// Copyright 2026 The latefuse Authors
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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latefuse/latefuse.hpp"

namespace fs = std::filesystem;
using namespace latefuse;

namespace {

std::pair<std::string, std::string> split_name_path(const std::string& arg) {
  auto pos = arg.find('=');
  require(pos != std::string::npos && pos > 0 && pos + 1 < arg.size(),
          "expected NAME=PATH, got '" + arg + "'");
  return {arg.substr(0, pos), arg.substr(pos + 1)};
}

std::optional<std::size_t> hidden_option(long hidden) {
  if (hidden <= 0) return std::nullopt;  // 0 selects the 1-layer linear-softmax net
  return static_cast<std::size_t>(hidden);
}

AlignedDataset load_prob_modalities(const std::vector<std::string>& prob_args,
                                    const std::string& labels_path, std::size_t n_classes,
                                    std::vector<std::string>* file_order) {
  std::map<std::string, IdProbabilities> probs;
  for (const auto& arg : prob_args) {
    auto [name, path] = split_name_path(arg);
    auto loaded = load_probability_matrix(path, n_classes);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    if (file_order && file_order->empty()) *file_order = loaded.ids;
    probs.emplace(name, IdProbabilities{std::move(loaded.ids), std::move(loaded.probs)});
  }
  std::optional<IdLabels> labels;
  if (!labels_path.empty()) labels = load_label_csv(labels_path);
  return align_modalities(probs, {}, labels);
}

VariantSpec standard_variant(std::size_t v, bool with_denoised) {
  static const double kRates[] = {0.01, 0.02, 0.005};
  VariantSpec spec;
  bool two_layer = v % 2 == 0;
  spec.hidden_dim = two_layer ? std::optional<std::size_t>(kDefaultHiddenDim) : std::nullopt;
  spec.learning_rate = kRates[(v / 2) % 3];
  spec.batch_size = (v / 6) % 2 == 0 ? 64 : 128;
  spec.denoised = with_denoised && v % 2 == 1;
  spec.name = "v" + std::string(v < 10 ? "0" : "") + std::to_string(v) +
              (two_layer ? "_2layer" : "_1layer") + "_lr" + format_double(spec.learning_rate) +
              (spec.denoised ? "_denoised" : "");
  return spec;
}

int cmd_synth(const std::string& out_dir, std::size_t n, std::size_t n_classes, double noise,
              std::uint64_t seed, std::size_t test_n, std::size_t n_variants,
              std::size_t oracle_mc) {
  GeneratorConfig train_cfg = complementary_preset(n, n_classes, noise, seed);
  GeneratorConfig test_cfg = complementary_preset(test_n, n_classes, 0.0, derive_seed(seed, 999));

  fs::path dir(out_dir);
  auto train = generate(train_cfg);
  save_synthetic_dataset(dir / "train", train);
  auto test = generate(test_cfg);
  save_synthetic_dataset(dir / "test", test);

  PipelineManifest manifest;
  manifest.n_classes = n_classes;
  manifest.labels = "train/labels.csv";
  for (const auto& m : train_cfg.modalities)
    manifest.modalities.push_back({m.name, "train/" + m.name + "_probs.csv",
                                   "train/" + m.name + "_features.csv"});
  for (const auto& m : test_cfg.modalities)
    manifest.test_modalities.push_back({m.name, "test/" + m.name + "_probs.csv",
                                        "test/" + m.name + "_features.csv"});
  manifest.test_labels = "test/labels.csv";
  manifest.denoise.enabled = noise > 0.0;
  manifest.seed = seed;
  manifest.out_dir = "out";
  for (std::size_t v = 0; v < n_variants; ++v)
    manifest.variants.push_back(standard_variant(v, manifest.denoise.enabled));
  save_manifest(dir / "manifest.json", manifest);

  std::cout << "wrote " << n << " train and " << test_n << " test samples under " << out_dir
            << "\nmanifest: " << (dir / "manifest.json").string() << "\n";
  if (oracle_mc > 0) {
    auto oracle = bayes_oracle(train_cfg, oracle_mc);
    for (const auto& [name, est] : oracle.unimodal)
      std::cout << "oracle " << name << ": accuracy " << format_double(est.accuracy)
                << " macro_f1 " << format_double(est.macro_f1) << " (se "
                << format_double(est.std_error) << ")\n";
    std::cout << "oracle fused: accuracy " << format_double(oracle.fused.accuracy)
              << " macro_f1 " << format_double(oracle.fused.macro_f1) << " (se "
              << format_double(oracle.fused.std_error) << ")\n";
  }
  return 0;
}

int cmd_denoise(const std::vector<std::string>& feature_paths, const std::string& labels_path,
                std::size_t n_classes, std::size_t folds, double fraction, long hidden,
                const TrainConfig& train_cfg, std::uint64_t seed, const std::string& out_dir,
                std::size_t jobs) {
  std::map<std::string, IdFeatures> feats;
  for (const auto& path : feature_paths) {
    std::string name = fs::path(path).stem().string();
    feats.emplace(name, load_feature_csv(path));
  }
  auto labels = load_label_csv(labels_path);
  auto dataset = align_modalities({}, feats, labels);
  require(!dataset.features.empty(), "denoise: no feature files given");

  std::vector<Matrix> blocks;
  for (const auto& [name, m] : dataset.features) blocks.push_back(m);
  Matrix raw = feature_level_fuse(blocks, FuseMode::kConcat);
  Matrix features = ColumnStats::fit(raw).apply(raw);
  NetworkLayout layout{features.cols(), hidden_option(hidden), n_classes};

  auto cv = cross_val_probabilities(features, dataset.labels, folds, layout, train_cfg, seed,
                                    jobs);
  auto thresholds = class_thresholds(cv.probs, dataset.labels);
  auto report = rank_label_errors(cv.probs, dataset.labels, thresholds, dataset.ids);
  auto pruned = prune_dataset(dataset, report, fraction);

  fs::path dir(out_dir);
  save_noise_report(dir / "noise_report.csv", report);
  save_lines(dir / "removed_ids.txt", pruned.removed_ids);
  std::cout << "candidates: " << report.candidates.size()
            << "\nremoved: " << pruned.removed_ids.size()
            << "\nskipped (class protection): " << pruned.skipped_ids.size()
            << "\nreport: " << (dir / "noise_report.csv").string() << "\n";
  return 0;
}

int cmd_fuse_train(const std::vector<std::string>& prob_args, const std::string& labels_path,
                   std::size_t n_classes, std::size_t folds, long hidden,
                   const TrainConfig& train_cfg, std::uint64_t seed,
                   const std::string& out_dir, std::size_t jobs) {
  auto dataset = load_prob_modalities(prob_args, labels_path, n_classes, nullptr);
  require(dataset.has_labels(), "fuse-train: labels required");
  auto input = assemble_fusion_input(dataset);
  NetworkLayout layout{input.matrix.cols(), hidden_option(hidden), n_classes};
  auto ensemble = train_policy_ensemble(input, dataset.labels, folds, layout, train_cfg, seed,
                                        jobs);
  save_policy_ensemble(out_dir, ensemble);
  for (const auto& w : ensemble.warnings) std::cerr << "warning: " << w << "\n";
  for (std::size_t f = 0; f < ensemble.members.size(); ++f)
    std::cout << "member " << f << ": best epoch " << ensemble.members[f].best_epoch
              << ", fold macro_f1 " << format_double(ensemble.members[f].best_val_score)
              << "\n";
  std::cout << "ensemble: " << (fs::path(out_dir) / "ensemble.json").string() << "\n";
  return 0;
}

int cmd_predict(const std::string& ensemble_dir, const std::vector<std::string>& prob_args,
                std::size_t n_classes, const std::string& out_path) {
  auto ensemble = load_policy_ensemble(ensemble_dir);
  std::vector<std::string> file_order;
  auto dataset = load_prob_modalities(prob_args, "", n_classes, &file_order);
  auto input = assemble_fusion_input(dataset);
  require(input.modality_order == ensemble.modality_order,
          "predict: modality set differs from the ensemble's training data");
  auto pred = policy_predict(ensemble, input);
  detail::write_ordered_predictions(out_path, dataset.ids, file_order, pred.votes);
  std::cout << "wrote " << pred.labels.size() << " predictions to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& predictions_path, const std::string& labels_path,
                 std::size_t n_classes, const std::string& out_path) {
  auto preds = load_predictions(predictions_path);
  auto labels = load_label_csv(labels_path);
  auto label_of = detail::index_ids(labels.ids, "evaluate labels");
  require(preds.ids.size() == labels.ids.size(),
          "evaluate: prediction and label files cover different sample counts");
  std::vector<int> y(preds.ids.size());
  for (std::size_t i = 0; i < preds.ids.size(); ++i) {
    auto it = label_of.find(preds.ids[i]);
    require(it != label_of.end(), "evaluate: no label for id '" + preds.ids[i] + "'");
    y[i] = labels.labels[it->second];
  }
  auto cm = confusion(preds.labels, y, n_classes);
  std::string text = format_evaluation({{"macro_f1", macro_f1(cm)},
                                        {"accuracy", accuracy(preds.labels, y)}},
                                       &cm);
  std::cout << text;
  if (!out_path.empty()) detail::write_file(out_path, text);
  return 0;
}

int cmd_run(const std::string& manifest_path, std::optional<std::uint64_t> seed_override,
            const std::string& out_dir_override, std::size_t jobs) {
  auto manifest = detail::run_stage("manifest", [&] { return load_manifest(manifest_path); });
  if (seed_override) manifest.seed = *seed_override;
  if (!out_dir_override.empty()) manifest.out_dir = out_dir_override;
  auto report = run_pipeline(manifest, jobs);
  std::cout << "eval slice: " << report.eval_slice << "\n";
  for (const auto& [name, value] : report.metrics)
    std::cout << name << " " << format_double(value) << "\n";
  for (const auto& [name, path] : report.artifacts)
    std::cout << "artifact " << name << ": " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latefuse: multimodal decision-level fusion pipeline"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::size_t jobs = 1;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
  std::size_t synth_n = 20000, synth_classes = 27, synth_test_n = 5000, synth_variants = 0,
              synth_oracle = 0;
  double synth_noise = 0.0;
  synth->add_option("--n", synth_n, "training samples");
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--noise", synth_noise, "label flip rate in [0,1)");
  synth->add_option("--test-n", synth_test_n, "test samples");
  synth->add_option("--variants", synth_variants, "standard variant specs to put in the manifest");
  synth->add_option("--oracle", synth_oracle, "Monte Carlo samples for the Bayes oracle (0 = skip)");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out-dir", out_dir, "output directory")->required();

  // denoise
  auto* denoise = app.add_subcommand("denoise", "rank and prune suspected label errors");
  std::vector<std::string> den_features;
  std::string den_labels;
  std::size_t den_classes = 0, den_folds = 4;
  double den_fraction = 0.10;
  long den_hidden = 0;
  TrainConfig den_train;
  denoise->add_option("--features", den_features, "feature CSV (repeatable)")->required();
  denoise->add_option("--labels", den_labels, "label CSV")->required();
  denoise->add_option("--classes", den_classes, "number of classes")->required();
  denoise->add_option("--folds", den_folds, "cross-validation folds");
  denoise->add_option("--fraction", den_fraction, "fraction of ranked candidates to remove");
  denoise->add_option("--hidden", den_hidden, "hidden units of the base net (0 = linear)");
  denoise->add_option("--epochs", den_train.epochs, "training epochs");
  denoise->add_option("--lr", den_train.learning_rate, "learning rate");
  denoise->add_option("--batch", den_train.batch_size, "batch size");
  denoise->add_option("--seed", seed, "seed");
  denoise->add_option("--out-dir", out_dir, "output directory");
  denoise->add_option("--jobs", jobs, "parallel fold training");

  // fuse-train
  auto* fuse = app.add_subcommand("fuse-train", "train the decision-fusion policy ensemble");
  std::vector<std::string> fuse_probs;
  std::string fuse_labels;
  std::size_t fuse_classes = 0, fuse_folds = kDefaultPolicyFolds;
  long fuse_hidden = static_cast<long>(kDefaultHiddenDim);
  TrainConfig fuse_train;
  fuse->add_option("--probs", fuse_probs, "NAME=probability CSV (repeatable)")->required();
  fuse->add_option("--labels", fuse_labels, "label CSV")->required();
  fuse->add_option("--classes", fuse_classes, "number of classes")->required();
  fuse->add_option("--folds", fuse_folds, "policy folds");
  fuse->add_option("--hidden", fuse_hidden, "hidden units (0 = 1-layer)");
  fuse->add_option("--epochs", fuse_train.epochs, "training epochs");
  fuse->add_option("--lr", fuse_train.learning_rate, "learning rate");
  fuse->add_option("--batch", fuse_train.batch_size, "batch size");
  fuse->add_option("--seed", seed, "seed");
  fuse->add_option("--out-dir", out_dir, "ensemble output directory")->required();
  fuse->add_option("--jobs", jobs, "parallel fold training");

  // predict
  auto* predict = app.add_subcommand("predict", "majority-vote inference with a saved ensemble");
  std::string pred_ensemble, pred_out = "predictions.csv";
  std::vector<std::string> pred_probs;
  std::size_t pred_classes = 0;
  predict->add_option("--ensemble", pred_ensemble, "ensemble directory")->required();
  predict->add_option("--probs", pred_probs, "NAME=probability CSV (repeatable)")->required();
  predict->add_option("--classes", pred_classes, "number of classes")->required();
  predict->add_option("--out", pred_out, "prediction CSV path");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a prediction file against labels");
  std::string eval_preds, eval_labels, eval_out;
  std::size_t eval_classes = 0;
  evaluate->add_option("--predictions", eval_preds, "prediction CSV")->required();
  evaluate->add_option("--labels", eval_labels, "label CSV")->required();
  evaluate->add_option("--classes", eval_classes, "number of classes")->required();
  evaluate->add_option("--out", eval_out, "write the report here too");

  // run
  auto* run = app.add_subcommand("run", "execute the full pipeline from a manifest");
  std::string run_manifest, run_out;
  std::uint64_t run_seed = 0;
  bool run_seed_set = false;
  run->add_option("--manifest", run_manifest, "manifest JSON")->required();
  run->add_option("--seed", run_seed, "override the manifest seed")
      ->each([&](const std::string&) { run_seed_set = true; });
  run->add_option("--out-dir", run_out, "override the manifest out_dir");
  run->add_option("--jobs", jobs, "parallel fold training");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth))
      return cmd_synth(out_dir, synth_n, synth_classes, synth_noise, seed, synth_test_n,
                       synth_variants, synth_oracle);
    if (app.got_subcommand(denoise))
      return cmd_denoise(den_features, den_labels, den_classes, den_folds, den_fraction,
                         den_hidden, den_train, seed, out_dir, jobs);
    if (app.got_subcommand(fuse))
      return cmd_fuse_train(fuse_probs, fuse_labels, fuse_classes, fuse_folds, fuse_hidden,
                            fuse_train, seed, out_dir, jobs);
    if (app.got_subcommand(predict))
      return cmd_predict(pred_ensemble, pred_probs, pred_classes, pred_out);
    if (app.got_subcommand(evaluate))
      return cmd_evaluate(eval_preds, eval_labels, eval_classes, eval_out);
    if (app.got_subcommand(run))
      return cmd_run(run_manifest,
                     run_seed_set ? std::optional<std::uint64_t>(run_seed) : std::nullopt,
                     run_out, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
