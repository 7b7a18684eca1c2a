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

#ifndef LATEFUSE_PIPELINE_HPP
#define LATEFUSE_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "latefuse/core.hpp"
#include "latefuse/csv.hpp"
#include "latefuse/dataio.hpp"
#include "latefuse/fusion.hpp"
#include "latefuse/metrics.hpp"
#include "latefuse/nn.hpp"
#include "latefuse/noise.hpp"
#include "latefuse/synth.hpp"

// End-to-end orchestration from a manifest: load/align -> 9:1 split ->
// optional confident-learning denoise -> unimodal baselines -> feature-level
// fusion baseline -> 8-fold decision-level policy training -> ensemble
// prediction -> variant ensemble -> evaluation report. One root seed derives
// every stage seed, so a run is reproducible from the manifest alone.

namespace latefuse {

struct ModalitySpec {
  std::string name;
  std::string probabilities;  // path, required
  std::string features;       // path, optional
};

struct DenoiseConfig {
  bool enabled = false;
  std::size_t folds = 4;
  double fraction = 0.10;
  std::optional<std::size_t> hidden_dim;  // base classifier; none = linear softmax
  TrainConfig train;
};

struct FusionStageConfig {
  std::size_t folds = kDefaultPolicyFolds;
  std::optional<std::size_t> hidden_dim = kDefaultHiddenDim;
  TrainConfig train;
  // "validation" trains the policy on the validation split (the default
  // protocol); "train-heldout" carves the policy set out of the training
  // split instead, keeping validation untouched.
  std::string train_on = "validation";
};

struct FeatureFusionConfig {
  bool enabled = true;  // silently skipped when no modality has features
  std::string mode = "concat";
  std::optional<std::size_t> hidden_dim = kDefaultHiddenDim;
  TrainConfig train;
};

/// One entry of the pipeline-level ensemble: a decision-fusion classifier
/// with config deltas (layout, optimizer knobs, denoised-vs-raw upstream).
struct VariantSpec {
  std::string name;
  std::optional<std::size_t> hidden_dim = kDefaultHiddenDim;
  double learning_rate = 0.01;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  bool denoised = false;
};

struct PipelineManifest {
  std::size_t n_classes = 0;
  std::vector<std::string> class_codes;  // external code per class index, optional
  std::string labels;
  std::vector<ModalitySpec> modalities;
  std::vector<ModalitySpec> test_modalities;
  std::string test_labels;
  double train_fraction = 0.9;
  DenoiseConfig denoise;
  FusionStageConfig fusion;
  FeatureFusionConfig feature_fusion;
  std::vector<VariantSpec> variants;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::filesystem::path base_dir;  // manifest location; relative paths resolve here
};

// --- manifest (de)serialization ---------------------------------------------

namespace detail {

inline void train_config_from_json(const nlohmann::json& j, TrainConfig& c) {
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("optimizer")) {
    std::string opt = j.at("optimizer").get<std::string>();
    require(opt == "adam" || opt == "sgd", "manifest: unknown optimizer '" + opt + "'");
    c.optimizer = opt == "adam" ? Optimizer::kAdam : Optimizer::kSgd;
  }
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer", c.optimizer == Optimizer::kAdam ? "adam" : "sgd"}};
}

inline std::optional<std::size_t> hidden_from_json(const nlohmann::json& j,
                                                   std::optional<std::size_t> fallback) {
  if (!j.contains("hidden_dim")) return fallback;
  if (j.at("hidden_dim").is_null()) return std::nullopt;
  return j.at("hidden_dim").get<std::size_t>();
}

inline nlohmann::json hidden_to_json(const std::optional<std::size_t>& h) {
  return h ? nlohmann::json(*h) : nlohmann::json(nullptr);
}

inline std::vector<ModalitySpec> modalities_from_json(const nlohmann::json& j) {
  std::vector<ModalitySpec> out;
  for (const auto& m : j) {
    ModalitySpec spec;
    spec.name = m.at("name").get<std::string>();
    spec.probabilities = m.at("probabilities").get<std::string>();
    spec.features = m.value("features", "");
    out.push_back(std::move(spec));
  }
  return out;
}

inline nlohmann::json modalities_to_json(const std::vector<ModalitySpec>& mods) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : mods) {
    nlohmann::json jm{{"name", m.name}, {"probabilities", m.probabilities}};
    if (!m.features.empty()) jm["features"] = m.features;
    out.push_back(std::move(jm));
  }
  return out;
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const PipelineManifest& m) {
  nlohmann::json j;
  j["n_classes"] = m.n_classes;
  if (!m.class_codes.empty()) j["class_codes"] = m.class_codes;
  j["labels"] = m.labels;
  j["modalities"] = detail::modalities_to_json(m.modalities);
  if (!m.test_modalities.empty()) {
    j["test"]["modalities"] = detail::modalities_to_json(m.test_modalities);
    if (!m.test_labels.empty()) j["test"]["labels"] = m.test_labels;
  }
  j["split"] = {{"train_fraction", m.train_fraction}};
  j["denoise"] = detail::train_config_to_json(m.denoise.train);
  j["denoise"]["enabled"] = m.denoise.enabled;
  j["denoise"]["folds"] = m.denoise.folds;
  j["denoise"]["fraction"] = m.denoise.fraction;
  j["denoise"]["hidden_dim"] = detail::hidden_to_json(m.denoise.hidden_dim);
  j["fusion"] = detail::train_config_to_json(m.fusion.train);
  j["fusion"]["folds"] = m.fusion.folds;
  j["fusion"]["hidden_dim"] = detail::hidden_to_json(m.fusion.hidden_dim);
  j["fusion"]["train_on"] = m.fusion.train_on;
  j["feature_fusion"] = detail::train_config_to_json(m.feature_fusion.train);
  j["feature_fusion"]["enabled"] = m.feature_fusion.enabled;
  j["feature_fusion"]["mode"] = m.feature_fusion.mode;
  j["feature_fusion"]["hidden_dim"] = detail::hidden_to_json(m.feature_fusion.hidden_dim);
  j["variants"] = nlohmann::json::array();
  for (const auto& v : m.variants) {
    j["variants"].push_back({{"name", v.name},
                             {"hidden_dim", detail::hidden_to_json(v.hidden_dim)},
                             {"learning_rate", v.learning_rate},
                             {"epochs", v.epochs},
                             {"batch_size", v.batch_size},
                             {"denoised", v.denoised}});
  }
  j["seed"] = m.seed;
  j["out_dir"] = m.out_dir;
  return j;
}

inline PipelineManifest manifest_from_json(const nlohmann::json& j,
                                           const std::filesystem::path& base_dir = {}) {
  PipelineManifest m;
  m.base_dir = base_dir;
  m.n_classes = j.at("n_classes").get<std::size_t>();
  if (j.contains("class_codes")) {
    m.class_codes = j.at("class_codes").get<std::vector<std::string>>();
    require(m.class_codes.size() == m.n_classes,
            "manifest: class_codes must list one code per class");
  }
  m.labels = j.at("labels").get<std::string>();
  m.modalities = detail::modalities_from_json(j.at("modalities"));
  require(!m.modalities.empty(), "manifest: at least one modality required");
  if (j.contains("test")) {
    m.test_modalities = detail::modalities_from_json(j.at("test").at("modalities"));
    m.test_labels = j.at("test").value("labels", "");
  }
  if (j.contains("split"))
    m.train_fraction = j.at("split").value("train_fraction", 0.9);
  if (j.contains("denoise")) {
    const auto& d = j.at("denoise");
    m.denoise.enabled = d.value("enabled", false);
    m.denoise.folds = d.value("folds", std::size_t{4});
    m.denoise.fraction = d.value("fraction", 0.10);
    m.denoise.hidden_dim = detail::hidden_from_json(d, std::nullopt);
    detail::train_config_from_json(d, m.denoise.train);
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    m.fusion.folds = f.value("folds", kDefaultPolicyFolds);
    m.fusion.hidden_dim = detail::hidden_from_json(f, kDefaultHiddenDim);
    m.fusion.train_on = f.value("train_on", "validation");
    require(m.fusion.train_on == "validation" || m.fusion.train_on == "train-heldout",
            "manifest: fusion.train_on must be 'validation' or 'train-heldout'");
    detail::train_config_from_json(f, m.fusion.train);
  }
  if (j.contains("feature_fusion")) {
    const auto& f = j.at("feature_fusion");
    m.feature_fusion.enabled = f.value("enabled", true);
    m.feature_fusion.mode = f.value("mode", "concat");
    parse_fuse_mode(m.feature_fusion.mode);  // validate
    m.feature_fusion.hidden_dim = detail::hidden_from_json(f, kDefaultHiddenDim);
    detail::train_config_from_json(f, m.feature_fusion.train);
  }
  if (j.contains("variants")) {
    for (const auto& jv : j.at("variants")) {
      VariantSpec v;
      v.name = jv.at("name").get<std::string>();
      v.hidden_dim = detail::hidden_from_json(jv, kDefaultHiddenDim);
      v.learning_rate = jv.value("learning_rate", 0.01);
      v.epochs = jv.value("epochs", std::size_t{40});
      v.batch_size = jv.value("batch_size", std::size_t{64});
      v.denoised = jv.value("denoised", false);
      m.variants.push_back(std::move(v));
    }
  }
  m.seed = j.value("seed", std::uint64_t{0});
  m.out_dir = j.value("out_dir", "out");
  return m;
}

inline PipelineManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j, path.parent_path());
}

inline void save_manifest(const std::filesystem::path& path, const PipelineManifest& m) {
  detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

// --- run report --------------------------------------------------------------

struct RunReport {
  std::string eval_slice;  // "test" or "validation"
  nlohmann::json config_echo;
  nlohmann::json seeds;
  nlohmann::json stages;
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> artifacts;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "latefuse-run-report-v1";
    j["eval_slice"] = eval_slice;
    j["config"] = config_echo;
    j["seeds"] = seeds;
    j["stages"] = stages;
    j["metrics"] = metrics;
    j["artifacts"] = artifacts;
    return j;
  }
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

inline AlignedDataset load_aligned(const PipelineManifest& m,
                                   const std::vector<ModalitySpec>& specs,
                                   const std::string& labels_path,
                                   std::vector<std::string>* file_order,
                                   std::vector<std::string>* warnings) {
  std::map<std::string, IdProbabilities> probs;
  std::map<std::string, IdFeatures> feats;
  for (const auto& spec : specs) {
    require(!spec.probabilities.empty(),
            "manifest: modality '" + spec.name + "' needs a probabilities file");
    auto loaded = load_probability_matrix(resolve(m.base_dir, spec.probabilities), m.n_classes);
    if (warnings)
      warnings->insert(warnings->end(), loaded.warnings.begin(), loaded.warnings.end());
    if (file_order && file_order->empty()) *file_order = loaded.ids;
    probs.emplace(spec.name, IdProbabilities{std::move(loaded.ids), std::move(loaded.probs)});
    if (!spec.features.empty())
      feats.emplace(spec.name, load_feature_csv(resolve(m.base_dir, spec.features)));
  }
  std::optional<IdLabels> labels;
  if (!labels_path.empty()) labels = load_label_csv(resolve(m.base_dir, labels_path));
  return align_modalities(probs, feats, labels);
}

inline AlignedDataset drop_ids(const AlignedDataset& ds, const std::set<std::string>& gone) {
  std::vector<std::size_t> keep;
  keep.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!gone.count(ds.ids[i])) keep.push_back(i);
  return ds.subset(keep);
}

inline std::vector<Matrix> feature_blocks(const AlignedDataset& ds) {
  std::vector<Matrix> blocks;
  for (const auto& [name, feats] : ds.features) blocks.push_back(feats);
  return blocks;
}

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage " + name + ": " + e.what());
  }
}

// Writes predictions in the original input-file order when one is known
// (test sets), otherwise in aligned (sorted-id) order.
inline void write_ordered_predictions(const std::filesystem::path& path,
                                      const std::vector<std::string>& aligned_ids,
                                      const std::vector<std::string>& file_order,
                                      const VoteResult& votes) {
  if (file_order.empty()) {
    save_predictions(path, aligned_ids, votes);
    return;
  }
  auto row_of = index_ids(aligned_ids, "predictions");
  VoteResult ordered;
  ordered.n_classes = votes.n_classes;
  ordered.winners.resize(file_order.size());
  ordered.counts.resize(file_order.size() * votes.n_classes);
  ordered.tie_broken.resize(file_order.size());
  for (std::size_t i = 0; i < file_order.size(); ++i) {
    std::size_t r = row_of.at(file_order[i]);
    ordered.winners[i] = votes.winners[r];
    ordered.tie_broken[i] = votes.tie_broken[r];
    for (std::size_t cls = 0; cls < votes.n_classes; ++cls)
      ordered.counts[i * votes.n_classes + cls] = votes.count(r, cls);
  }
  save_predictions(path, file_order, ordered);
}

}  // namespace detail

/// Executes the full protocol described by the manifest and writes every
/// intermediate artifact below out_dir. Rerunning the same manifest
/// reproduces all outputs byte for byte.
inline RunReport run_pipeline(const PipelineManifest& manifest, std::size_t jobs = 1) {
  RunReport report;
  report.config_echo = manifest_to_json(manifest);

  const std::uint64_t seed_split = derive_seed(manifest.seed, 101);
  const std::uint64_t seed_denoise = derive_seed(manifest.seed, 102);
  const std::uint64_t seed_fusion = derive_seed(manifest.seed, 103);
  const std::uint64_t seed_feature = derive_seed(manifest.seed, 105);
  const std::uint64_t seed_heldout = derive_seed(manifest.seed, 106);
  report.seeds = {{"root", manifest.seed},     {"split", seed_split},
                  {"denoise", seed_denoise},   {"fusion", seed_fusion},
                  {"feature_fusion", seed_feature}, {"train_heldout", seed_heldout}};
  nlohmann::json variant_seeds = nlohmann::json::object();
  for (std::size_t v = 0; v < manifest.variants.size(); ++v)
    variant_seeds[manifest.variants[v].name] = derive_seed(manifest.seed, 104, v);
  report.seeds["variants"] = variant_seeds;

  const std::filesystem::path out_dir = detail::resolve(manifest.base_dir, manifest.out_dir);
  std::filesystem::create_directories(out_dir);

  // -- load ------------------------------------------------------------------
  AlignedDataset full;
  std::optional<AlignedDataset> test;
  std::vector<std::string> test_order;
  detail::run_stage("load", [&] {
    require(manifest.n_classes >= 2, "manifest: n_classes must be >= 2");
    require(!manifest.labels.empty(), "manifest: labels file required");
    std::vector<std::string> warnings;
    full = detail::load_aligned(manifest, manifest.modalities, manifest.labels, nullptr,
                                &warnings);
    require(full.has_labels(), "manifest: training labels required");
    if (!manifest.test_modalities.empty())
      test = detail::load_aligned(manifest, manifest.test_modalities, manifest.test_labels,
                                  &test_order, &warnings);
    report.stages["load"] = {{"n_samples", full.size()},
                             {"n_modalities", full.probabilities.size()},
                             {"n_test", test ? test->size() : 0},
                             {"warnings", warnings}};
    return 0;
  });

  // -- split -----------------------------------------------------------------
  AlignedDataset train_split, val_split;
  detail::run_stage("split", [&] {
    std::tie(train_split, val_split) =
        split_train_val(full, SplitSpec{manifest.train_fraction, seed_split});
    report.stages["split"] = {{"train_fraction", manifest.train_fraction},
                              {"train_size", train_split.size()},
                              {"val_size", val_split.size()}};
    return 0;
  });

  // -- denoise ---------------------------------------------------------------
  bool denoise_wanted = manifest.denoise.enabled;
  for (const auto& v : manifest.variants) denoise_wanted |= v.denoised;
  std::set<std::string> removed;
  if (denoise_wanted) {
    detail::run_stage("denoise", [&] {
      require(!full.features.empty(),
              "denoise requires feature files for the base classifier");
      Matrix raw = feature_level_fuse(detail::feature_blocks(full), FuseMode::kConcat);
      Matrix features = ColumnStats::fit(raw).apply(raw);
      NetworkLayout base_layout{features.cols(), manifest.denoise.hidden_dim,
                                manifest.n_classes};
      auto cv = cross_val_probabilities(features, full.labels, manifest.denoise.folds,
                                        base_layout, manifest.denoise.train, seed_denoise,
                                        jobs);
      auto thresholds = class_thresholds(cv.probs, full.labels);
      auto noise_report = rank_label_errors(cv.probs, full.labels, thresholds, full.ids);
      save_noise_report(out_dir / "noise" / "noise_report.csv", noise_report);
      auto pruned = prune_dataset(full, noise_report, manifest.denoise.fraction);
      save_lines(out_dir / "noise" / "removed_ids.txt", pruned.removed_ids);
      removed.insert(pruned.removed_ids.begin(), pruned.removed_ids.end());
      report.artifacts["noise_report"] = (out_dir / "noise" / "noise_report.csv").string();
      report.artifacts["removed_ids"] = (out_dir / "noise" / "removed_ids.txt").string();
      report.stages["denoise"] = {{"folds", manifest.denoise.folds},
                                  {"fraction", manifest.denoise.fraction},
                                  {"candidates", noise_report.candidates.size()},
                                  {"removed", pruned.removed_ids.size()},
                                  {"skipped", pruned.skipped_ids.size()},
                                  {"joint_skipped", noise_report.joint.skipped}};
      return 0;
    });
  }

  // -- evaluation slice and unimodal baselines --------------------------------
  const AlignedDataset& eval_set = test ? *test : val_split;
  report.eval_slice = test ? "test" : "validation";
  const bool eval_labeled = eval_set.has_labels();
  detail::run_stage("baselines", [&] {
    nlohmann::json stage;
    for (const auto& [name, probs] : eval_set.probabilities) {
      std::vector<int> preds(eval_set.size());
      for (std::size_t i = 0; i < eval_set.size(); ++i)
        preds[i] = static_cast<int>(argmax(probs.row(i)));
      if (eval_labeled) {
        report.metrics["unimodal_" + name + "_macro_f1"] =
            macro_f1(preds, eval_set.labels, manifest.n_classes);
        report.metrics["unimodal_" + name + "_accuracy"] = accuracy(preds, eval_set.labels);
      }
      stage[name] = "argmax of " + std::to_string(eval_set.size()) + " probability rows";
    }
    report.stages["baselines"] = stage;
    return 0;
  });

  // policy training slice: the validation split by default, or a held-out
  // slice of the training split under "train-heldout"
  AlignedDataset policy_raw;
  detail::run_stage("policy-slice", [&] {
    if (manifest.fusion.train_on == "validation") {
      policy_raw = val_split;
    } else {
      policy_raw = split_train_val(train_split, SplitSpec{0.9, seed_heldout}).second;
    }
    return 0;
  });
  AlignedDataset policy_clean =
      removed.empty() ? policy_raw : detail::drop_ids(policy_raw, removed);

  // -- feature-level fusion baseline ------------------------------------------
  if (manifest.feature_fusion.enabled &&
      (full.features.empty() || eval_set.features.empty() || !eval_labeled)) {
    report.stages["feature_fusion"] = "skipped: needs feature files and a labeled evaluation slice";
  } else if (manifest.feature_fusion.enabled) {
    detail::run_stage("feature-fusion", [&] {
      FuseMode mode = parse_fuse_mode(manifest.feature_fusion.mode);
      AlignedDataset head_train =
          removed.empty() ? train_split : detail::drop_ids(train_split, removed);
      AlignedDataset head_val =
          removed.empty() ? val_split : detail::drop_ids(val_split, removed);

      std::vector<int> preds;
      if (mode == FuseMode::kAttention) {
        // standardize each modality block on training statistics
        auto train_blocks = detail::feature_blocks(head_train);
        auto val_blocks = detail::feature_blocks(head_val);
        auto eval_blocks = detail::feature_blocks(eval_set);
        for (std::size_t b = 0; b < train_blocks.size(); ++b) {
          auto stats = ColumnStats::fit(train_blocks[b]);
          train_blocks[b] = stats.apply(train_blocks[b]);
          val_blocks[b] = stats.apply(val_blocks[b]);
          eval_blocks[b] = stats.apply(eval_blocks[b]);
        }
        auto result = train_attention_fusion(
            train_blocks, head_train.labels, val_blocks, head_val.labels,
            NetworkLayout{train_blocks[0].cols(), manifest.feature_fusion.hidden_dim,
                          manifest.n_classes},
            manifest.feature_fusion.train, seed_feature);
        Matrix fused_eval = attention_fuse(eval_blocks, result.model.params);
        preds = predict_classes(result.model.head, fused_eval);
        report.stages["feature_fusion"] = {{"mode", "attention"},
                                           {"best_epoch", result.best_epoch},
                                           {"best_val_score", result.best_val_score}};
      } else {
        Matrix fused_train = feature_level_fuse(detail::feature_blocks(head_train), mode);
        auto stats = ColumnStats::fit(fused_train);
        fused_train = stats.apply(fused_train);
        Matrix fused_val =
            stats.apply(feature_level_fuse(detail::feature_blocks(head_val), mode));
        Matrix fused_eval =
            stats.apply(feature_level_fuse(detail::feature_blocks(eval_set), mode));
        NetworkLayout layout{fused_train.cols(), manifest.feature_fusion.hidden_dim,
                             manifest.n_classes};
        TrainConfig cfg = manifest.feature_fusion.train;
        cfg.shuffle_seed = derive_seed(seed_feature, 1);
        auto model = train(init_network(layout, derive_seed(seed_feature, 0)), fused_train,
                           head_train.labels, fused_val, head_val.labels, cfg);
        preds = predict_classes(model.best_network, fused_eval);
        report.stages["feature_fusion"] = {{"mode", manifest.feature_fusion.mode},
                                           {"best_epoch", model.best_epoch},
                                           {"best_val_score", model.best_val_score}};
      }
      report.metrics["feature_fusion_macro_f1"] =
          macro_f1(preds, eval_set.labels, manifest.n_classes);
      report.metrics["feature_fusion_accuracy"] = accuracy(preds, eval_set.labels);
      return 0;
    });
  }

  // -- decision-level fusion ----------------------------------------------------
  const AlignedDataset& policy_set = manifest.denoise.enabled ? policy_clean : policy_raw;
  FusionInput eval_fusion;
  PolicyEnsemble ensemble;
  detail::run_stage("policy", [&] {
    FusionInput policy_input = assemble_fusion_input(policy_set);
    NetworkLayout layout{policy_input.matrix.cols(), manifest.fusion.hidden_dim,
                         manifest.n_classes};
    ensemble = train_policy_ensemble(policy_input, policy_set.labels, manifest.fusion.folds,
                                     layout, manifest.fusion.train, seed_fusion, jobs);
    save_policy_ensemble(out_dir / "policy", ensemble);
    report.artifacts["policy_ensemble"] = (out_dir / "policy" / "ensemble.json").string();

    eval_fusion = assemble_fusion_input(eval_set);
    auto pred = policy_predict(ensemble, eval_fusion);
    detail::write_ordered_predictions(out_dir / "predictions.csv", eval_set.ids, test_order,
                                      pred.votes);
    report.artifacts["predictions"] = (out_dir / "predictions.csv").string();

    nlohmann::json stage{{"folds", manifest.fusion.folds},
                         {"train_on", manifest.fusion.train_on},
                         {"policy_set_size", policy_set.size()},
                         {"warnings", ensemble.warnings}};
    if (eval_labeled) {
      report.metrics["decision_fusion_macro_f1"] =
          macro_f1(pred.labels, eval_set.labels, manifest.n_classes);
      report.metrics["decision_fusion_accuracy"] = accuracy(pred.labels, eval_set.labels);
      double best_member = 0.0;
      for (const auto& member : ensemble.members) {
        auto member_preds = predict_classes(member.best_network, eval_fusion.matrix);
        best_member = std::max(
            best_member, macro_f1(member_preds, eval_set.labels, manifest.n_classes));
      }
      report.metrics["decision_fusion_best_member_macro_f1"] = best_member;
    }
    report.stages["policy"] = stage;
    return 0;
  });

  // -- variant ensemble ----------------------------------------------------------
  if (!manifest.variants.empty()) {
    detail::run_stage("variants", [&] {
      std::vector<std::vector<int>> variant_preds;
      std::vector<Matrix> variant_probs;
      nlohmann::json stage = nlohmann::json::object();
      for (std::size_t v = 0; v < manifest.variants.size(); ++v) {
        const auto& spec = manifest.variants[v];
        const AlignedDataset& slice = spec.denoised ? policy_clean : policy_raw;
        FusionInput input = assemble_fusion_input(slice);
        NetworkLayout layout{input.matrix.cols(), spec.hidden_dim, manifest.n_classes};
        TrainConfig cfg = manifest.fusion.train;
        cfg.learning_rate = spec.learning_rate;
        cfg.epochs = spec.epochs;
        cfg.batch_size = spec.batch_size;
        auto var_ensemble =
            train_policy_ensemble(input, slice.labels, manifest.fusion.folds, layout, cfg,
                                  derive_seed(manifest.seed, 104, v), jobs);
        save_policy_ensemble(out_dir / "variants" / spec.name, var_ensemble);
        auto pred = policy_predict(var_ensemble, eval_fusion);
        if (eval_labeled)
          report.metrics["variant_" + spec.name + "_macro_f1"] =
              macro_f1(pred.labels, eval_set.labels, manifest.n_classes);
        stage[spec.name] = {{"hidden_dim", detail::hidden_to_json(spec.hidden_dim)},
                            {"learning_rate", spec.learning_rate},
                            {"denoised", spec.denoised}};
        variant_preds.push_back(std::move(pred.labels));
        variant_probs.push_back(std::move(pred.mean_probs));
      }
      auto vote = pipeline_ensemble(variant_preds, variant_probs, manifest.n_classes);
      detail::write_ordered_predictions(out_dir / "ensemble_predictions.csv", eval_set.ids,
                                        test_order, vote);
      report.artifacts["ensemble_predictions"] =
          (out_dir / "ensemble_predictions.csv").string();
      if (eval_labeled) {
        report.metrics["variant_ensemble_macro_f1"] =
            macro_f1(vote.winners, eval_set.labels, manifest.n_classes);
        report.metrics["variant_ensemble_accuracy"] =
            accuracy(vote.winners, eval_set.labels);
      }
      report.stages["variants"] = stage;
      return 0;
    });
  }

  // -- evaluation report -----------------------------------------------------------
  detail::run_stage("report", [&] {
    std::vector<std::pair<std::string, double>> metric_list(report.metrics.begin(),
                                                            report.metrics.end());
    std::string eval_text;
    if (eval_labeled) {
      auto preds = load_predictions(out_dir / "predictions.csv");
      auto row_of = detail::index_ids(eval_set.ids, "evaluation");
      std::vector<int> aligned_preds(eval_set.size());
      for (std::size_t i = 0; i < preds.ids.size(); ++i)
        aligned_preds[row_of.at(preds.ids[i])] = preds.labels[i];
      auto cm = confusion(aligned_preds, eval_set.labels, manifest.n_classes);
      eval_text = format_evaluation(metric_list, &cm);
    } else {
      eval_text = format_evaluation(metric_list, nullptr);
    }
    detail::write_file(out_dir / "evaluation.txt", eval_text);
    report.artifacts["evaluation"] = (out_dir / "evaluation.txt").string();
    report.artifacts["run_report"] = (out_dir / "run_report.json").string();
    detail::write_file(out_dir / "run_report.json", report.to_json().dump(2) + "\n");
    return 0;
  });

  return report;
}

}  // namespace latefuse

#endif  // LATEFUSE_PIPELINE_HPP
