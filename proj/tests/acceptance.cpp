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

// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria 5 and 6 share one pipeline run on the
// complementary preset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "latefuse/latefuse.hpp"

using namespace latefuse;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d. %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "latefuse_acceptance";
  fs::create_directories(dir);
  return dir;
}

// --- criterion 1: gradient correctness --------------------------------------

void criterion_gradients() {
  auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(20260811);
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    for (bool two_layer : {false, true}) {
      NetworkLayout layout{54, two_layer ? std::optional<std::size_t>(6) : std::nullopt, 27};
      auto net = init_network(layout, rng.next());
      Matrix x(16, 54);
      for (double& v : x.data()) v = rng.normal();
      std::vector<int> y(16);
      for (auto& v : y) v = static_cast<int>(rng.uniform_below(27));
      worst = std::max(worst, finite_diff_check(net, x, y, 1e-5));
    }
  }
  double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "max relative error " << worst << " over 20 seeds x 2 layouts in " << elapsed << "s";
  report(1, "gradient correctness", worst < 1e-5 && elapsed < 10.0, detail.str());
}

// --- criterion 2: metric oracle ----------------------------------------------

void criterion_metrics() {
  double score = macro_f1({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
  bool exact = std::abs(score - 11.0 / 15.0) <= 1e-9;
  bool perfect = macro_f1({0, 1, 2, 1}, {0, 1, 2, 1}, 3) == 1.0;
  std::ostringstream detail;
  detail << "macro_f1 = " << score << " (expected 0.733333...), perfect -> "
         << (perfect ? "1.0" : "not 1.0");
  report(2, "metric oracle", exact && perfect, detail.str());
}

// --- criterion 3: confident-learning hand trace -------------------------------

void criterion_hand_trace() {
  ProbabilityMatrix probs(Matrix(3, 2, {0.9, 0.1, 0.2, 0.8, 0.3, 0.7}));
  std::vector<int> labels{0, 0, 1};
  auto t = class_thresholds(probs, labels);
  bool thresholds_ok = t[0] == (0.9 + 0.2) / 2.0 && t[1] == 0.7 &&
                       std::abs(t[0] - 0.55) < 1e-12;

  auto joint = confident_joint(probs, labels, t);
  bool joint_ok = joint(0, 0) == 1 && joint(0, 1) == 1 && joint(1, 0) == 0 &&
                  joint(1, 1) == 1 && joint.skipped == 0;

  auto noise = rank_label_errors(probs, labels, t, {"s1", "s2", "s3"});
  bool candidate_ok = noise.candidates.size() == 1 && noise.candidates[0].id == "s2" &&
                      noise.candidates[0].given_label == 0 &&
                      noise.candidates[0].assigned_label == 1 &&
                      noise.candidates[0].self_confidence == 0.2;

  std::ostringstream detail;
  detail << "thresholds [" << t[0] << ", " << t[1] << "], joint [[" << joint(0, 0) << ","
         << joint(0, 1) << "],[" << joint(1, 0) << "," << joint(1, 1) << "]], "
         << noise.candidates.size() << " candidate(s)";
  report(3, "confident-learning hand trace", thresholds_ok && joint_ok && candidate_ok,
         detail.str());
}

// --- criterion 4: noise recovery ----------------------------------------------

void criterion_noise_recovery() {
  auto start = std::chrono::steady_clock::now();

  GeneratorConfig cfg;
  cfg.n_samples = 5000;
  cfg.n_classes = 10;
  cfg.class_priors.assign(10, 0.1);
  cfg.n_groups = 1;
  cfg.group_of.assign(10, 0);
  cfg.label_noise_rate = 0.10;
  cfg.seed = 7;
  ModalityModel m;
  m.name = "feat";
  m.kappa = 60.0;  // large concentration: rows sharply identify the true class
  m.alpha0 = 0.3;
  m.confusion = Matrix(10, 10);
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t z = 0; z < 10; ++z) m.confusion(y, z) = y == z ? 0.99 : 0.01 / 9.0;
  cfg.modalities = {m};

  auto synth = generate(cfg);
  std::set<std::string> flipped(synth.flipped_ids.begin(), synth.flipped_ids.end());

  Matrix raw = synth.data.features.at("feat");
  Matrix features = ColumnStats::fit(raw).apply(raw);
  auto cv = cross_val_probabilities(features, synth.data.labels, 4,
                                    {features.cols(), std::nullopt, 10}, TrainConfig{}, 99, 4);
  auto thresholds = class_thresholds(cv.probs, synth.data.labels);
  auto noise = rank_label_errors(cv.probs, synth.data.labels, thresholds, synth.data.ids);
  auto pruned = prune_dataset(synth.data, noise, 0.10);

  std::size_t hits = 0;
  for (const auto& id : pruned.removed_ids) hits += flipped.count(id);
  double precision = pruned.removed_ids.empty()
                         ? 0.0
                         : double(hits) / double(pruned.removed_ids.size());
  double elapsed = seconds_since(start);

  std::ostringstream detail;
  detail << flipped.size() << " flips injected, " << pruned.removed_ids.size()
         << " removed, precision " << precision << " in " << elapsed << "s";
  report(4, "noise recovery", precision >= 0.70 && elapsed < 60.0, detail.str());
}

// --- criteria 5 and 6: preset ordering and ensemble properties -----------------

struct PresetRun {
  RunReport report;
  double elapsed = 0.0;
};

PresetRun run_preset_pipeline() {
  auto start = std::chrono::steady_clock::now();
  auto dir = work_dir() / "preset";
  fs::remove_all(dir);
  fs::create_directories(dir);

  save_synthetic_dataset(dir / "train", generate(complementary_preset(20000, 27, 0.0, 1)));
  save_synthetic_dataset(dir / "test",
                         generate(complementary_preset(5000, 27, 0.0, derive_seed(1, 999))));

  PipelineManifest manifest;
  manifest.n_classes = 27;
  manifest.labels = "train/labels.csv";
  for (const auto& name : {"image", "text"}) {
    manifest.modalities.push_back({name, std::string("train/") + name + "_probs.csv", ""});
    manifest.test_modalities.push_back({name, std::string("test/") + name + "_probs.csv", ""});
  }
  manifest.test_labels = "test/labels.csv";
  manifest.feature_fusion.enabled = false;  // not part of these criteria
  manifest.seed = 1;
  manifest.out_dir = "out";
  manifest.base_dir = dir;

  PresetRun run;
  run.report = run_pipeline(manifest, 8);
  run.elapsed = seconds_since(start);
  return run;
}

void criterion_table1_ordering(const PresetRun& run) {
  double image = run.report.metrics.at("unimodal_image_macro_f1");
  double text = run.report.metrics.at("unimodal_text_macro_f1");
  double fusion = run.report.metrics.at("decision_fusion_macro_f1");
  bool ordering = image < text && fusion >= std::max(image, text) + 0.02;
  std::ostringstream detail;
  detail << "image " << image << " < text " << text << " < fusion " << fusion << " (margin "
         << fusion - std::max(image, text) << ", limit 0.02) in " << run.elapsed << "s";
  report(5, "Table-1 ordering replication", ordering && run.elapsed < 300.0, detail.str());
}

void criterion_ensemble_properties(const PresetRun& run) {
  // member-permutation invariance on random votes
  SplitMix64 rng(313);
  bool permutation_ok = true;
  for (int trial = 0; trial < 20 && permutation_ok; ++trial) {
    std::size_t k = 1 + rng.uniform_below(9);
    std::size_t n = 1 + rng.uniform_below(40);
    std::size_t c = 2 + rng.uniform_below(8);
    std::vector<std::vector<int>> votes(k, std::vector<int>(n));
    for (auto& member : votes)
      for (auto& v : member) v = static_cast<int>(rng.uniform_below(c));
    Matrix mean_probs(n, c);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = rng.dirichlet(std::vector<double>(c, 1.0));
      std::copy(row.begin(), row.end(), mean_probs.row(i).begin());
    }
    auto base = majority_vote(votes, c, mean_probs);
    auto shuffled = votes;
    rng.shuffle(shuffled);
    auto permuted = majority_vote(shuffled, c, mean_probs);
    permutation_ok = permuted.winners == base.winners;
  }

  // K=1 reduces to the single member's argmax
  auto net = init_network({6, 6, 3}, 77);
  TrainedModel member;
  member.best_network = net;
  member.best_epoch = 1;
  member.config = TrainConfig{};
  PolicyEnsemble single;
  single.members = {member};
  single.layout = net.layout;
  single.modality_order = {"a", "b"};
  FusionInput input;
  input.modality_order = {"a", "b"};
  input.n_classes = 3;
  input.matrix = Matrix(40, 6);
  SplitMix64 noise_rng(5);
  {
    std::vector<double> alphas(3, 1.0);
    for (std::size_t i = 0; i < 40; ++i) {
      auto r1 = noise_rng.dirichlet(alphas);
      auto r2 = noise_rng.dirichlet(alphas);
      for (std::size_t k = 0; k < 3; ++k) {
        input.matrix(i, k) = r1[k];
        input.matrix(i, 3 + k) = r2[k];
      }
    }
  }
  bool k1_ok = policy_predict(single, input).labels ==
               predict_classes(net, input.matrix);

  // documented tie-break example
  Matrix tie_stats(1, 3, {0.01, 0.48, 0.51});
  auto tie = majority_vote({{1}, {2}}, 3, tie_stats);
  bool tie_ok = tie.winners == std::vector<int>{2} && tie.tie_broken[0];

  // 8-member ensemble stays within 0.01 of its best member on the preset run
  double ensemble = run.report.metrics.at("decision_fusion_macro_f1");
  double best_member = run.report.metrics.at("decision_fusion_best_member_macro_f1");
  bool member_ok = ensemble >= best_member - 0.01;

  std::ostringstream detail;
  detail << "permutation " << (permutation_ok ? "ok" : "BROKEN") << ", K=1 "
         << (k1_ok ? "ok" : "BROKEN") << ", tie-break " << (tie_ok ? "ok" : "BROKEN")
         << ", ensemble " << ensemble << " vs best member " << best_member;
  report(6, "ensemble properties", permutation_ok && k1_ok && tie_ok && member_ok,
         detail.str());
}

// --- criterion 7: determinism ---------------------------------------------------

void criterion_determinism() {
  auto dir = work_dir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  save_synthetic_dataset(dir / "train", generate(complementary_preset(1200, 6, 0.1, 17)));
  save_synthetic_dataset(dir / "test",
                         generate(complementary_preset(300, 6, 0.0, derive_seed(17, 999))));

  PipelineManifest manifest;
  manifest.n_classes = 6;
  manifest.labels = "train/labels.csv";
  for (const auto& name : {"image", "text"}) {
    manifest.modalities.push_back({name, std::string("train/") + name + "_probs.csv",
                                   std::string("train/") + name + "_features.csv"});
    manifest.test_modalities.push_back({name, std::string("test/") + name + "_probs.csv",
                                        std::string("test/") + name + "_features.csv"});
  }
  manifest.test_labels = "test/labels.csv";
  manifest.denoise.enabled = true;
  manifest.denoise.train.epochs = 8;
  manifest.fusion.train.epochs = 10;
  manifest.feature_fusion.train.epochs = 8;
  manifest.seed = 17;
  manifest.out_dir = "out";
  manifest.base_dir = dir;
  VariantSpec variant;
  variant.name = "one_layer";
  variant.hidden_dim = std::nullopt;
  variant.epochs = 10;
  manifest.variants = {variant};

  run_pipeline(manifest, 4);
  std::map<std::string, std::string> first;
  for (auto& entry : fs::recursive_directory_iterator(dir / "out"))
    if (entry.is_regular_file())
      first[fs::relative(entry.path(), dir / "out").string()] = slurp(entry.path());

  run_pipeline(manifest, 1);
  std::map<std::string, std::string> second;
  for (auto& entry : fs::recursive_directory_iterator(dir / "out"))
    if (entry.is_regular_file())
      second[fs::relative(entry.path(), dir / "out").string()] = slurp(entry.path());

  bool identical = first.size() == second.size() && !first.empty();
  std::size_t checked = 0;
  if (identical)
    for (const auto& [path, content] : first) {
      identical = identical && second.count(path) && second.at(path) == content;
      ++checked;
    }
  std::ostringstream detail;
  detail << checked << " artifacts compared byte-for-byte across two runs";
  report(7, "determinism", identical, detail.str());
}

// --- criterion 8: protocol conformance -------------------------------------------

void criterion_protocol() {
  std::vector<std::string> problems;

  if (SplitSpec{}.train_fraction != 0.9) problems.push_back("split fraction");
  {
    // floor arithmetic at a large odd N
    SplitMix64 rng(3);
    Matrix m(84916, 2);
    AlignedDataset ds;
    for (std::size_t i = 0; i < 84916; ++i) {
      ds.ids.push_back("s" + std::to_string(1000000 + i));
      ds.labels.push_back(static_cast<int>(rng.uniform_below(2)));
      m(i, 0) = 0.5;
      m(i, 1) = 0.5;
    }
    ds.probabilities.emplace("m", ProbabilityMatrix(std::move(m)));
    auto [train, val] = split_train_val(ds, SplitSpec{});
    if (train.size() != 76424 || val.size() != 8492) problems.push_back("9:1 floor sizes");
  }

  if (DenoiseConfig{}.folds != 4) problems.push_back("denoise folds");
  if (DenoiseConfig{}.fraction != 0.10) problems.push_back("prune fraction");
  if (FusionStageConfig{}.folds != 8 || kDefaultPolicyFolds != 8)
    problems.push_back("policy folds");
  if (FusionStageConfig{}.hidden_dim != std::optional<std::size_t>(6) || kDefaultHiddenDim != 6)
    problems.push_back("hidden size");

  TrainConfig tc;
  if (tc.learning_rate != 0.01 || tc.epochs != 40 || tc.batch_size != 64 ||
      tc.optimizer != Optimizer::kAdam || tc.beta1 != 0.9 || tc.beta2 != 0.999 ||
      tc.epsilon != 1e-8)
    problems.push_back("train config defaults");

  // a minimal manifest picks up the same defaults
  auto manifest = manifest_from_json(nlohmann::json{
      {"n_classes", 27},
      {"labels", "labels.csv"},
      {"modalities", {{{"name", "text"}, {"probabilities", "p.csv"}}}}});
  if (manifest.train_fraction != 0.9 || manifest.denoise.folds != 4 ||
      manifest.fusion.folds != 8 || manifest.fusion.hidden_dim != std::optional<std::size_t>(6) ||
      manifest.fusion.train.learning_rate != 0.01 || manifest.fusion.train.epochs != 40 ||
      manifest.fusion.train_on != "validation")
    problems.push_back("manifest defaults");

  // best checkpoint equals the history maximum
  {
    SplitMix64 rng(9);
    Matrix x(60, 2);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
      y[i] = static_cast<int>(i % 2);
      x(i, 0) = (y[i] == 0 ? 1.0 : -1.0) + 0.5 * rng.normal();
      x(i, 1) = rng.normal();
    }
    TrainConfig cfg;
    cfg.epochs = 10;
    auto model = train(init_network({2, 6, 2}, 4), x, y, x, y, cfg);
    double peak = 0.0;
    for (const auto& e : model.history) peak = std::max(peak, e.val_macro_f1);
    if (model.best_val_score != peak) problems.push_back("checkpoint max");
    if (macro_f1(predict_classes(model.best_network, x), y, 2) != model.best_val_score)
      problems.push_back("checkpoint reproduction");
  }

  std::ostringstream detail;
  if (problems.empty()) {
    detail << "9:1 floor split, 4-fold OOF, 8-fold policy, hidden 6, Adam lr 0.01, 40 epochs,"
              " best-F1 checkpoint";
  } else {
    detail << "violations:";
    for (const auto& p : problems) detail << " " << p << ";";
  }
  report(8, "protocol conformance", problems.empty(), detail.str());
}

// --- criterion 9: round trips ---------------------------------------------------

void criterion_round_trips() {
  auto dir = work_dir() / "roundtrip";
  fs::create_directories(dir);
  bool probs_ok = true, ckpt_ok = true, clean_ok = true;

  {
    SplitMix64 rng(606);
    Matrix m(64, 9);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < 64; ++i) {
      ids.push_back("r" + std::to_string(100 + i));
      auto row = rng.dirichlet(std::vector<double>(9, 0.5));
      std::copy(row.begin(), row.end(), m.row(i).begin());
    }
    ProbabilityMatrix probs(std::move(m));
    save_probability_matrix(dir / "probs.csv", ids, probs);
    auto loaded = load_probability_matrix(dir / "probs.csv", 9);
    probs_ok = loaded.ids == ids && loaded.warnings.empty();
    for (std::size_t i = 0; probs_ok && i < 64; ++i)
      for (std::size_t k = 0; k < 9; ++k) {
        double a = probs(i, k), b = loaded.probs(i, k);
        if (std::memcmp(&a, &b, sizeof a) != 0) probs_ok = false;
      }
  }

  {
    SplitMix64 rng(707);
    Matrix x(50, 3);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      y[i] = static_cast<int>(i % 3);
      for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
    }
    TrainConfig cfg;
    cfg.epochs = 4;
    auto model = train(init_network({3, 6, 3}, 8), x, y, x, y, cfg);
    save_checkpoint(dir / "a.json", model);
    auto loaded = load_checkpoint(dir / "a.json");
    save_checkpoint(dir / "b.json", loaded);
    ckpt_ok = slurp(dir / "a.json") == slurp(dir / "b.json") &&
              loaded.best_network == model.best_network;
  }

  {
    SplitMix64 rng(808);
    static const char* pieces[] = {"<p>",   "</p>", "<",   ">",   "&#",  "&#39;", "&#x27;",
                                   ";",     "&",    "#",   " ",   "\t",  "\n",    "a",
                                   "é",     "60",   "x",   "38",  "div", "/",     "L",
                                   "&#60;", "text", "0",   "&#xD800;",   "  b  "};
    for (int i = 0; i < 1000 && clean_ok; ++i) {
      std::string s;
      std::size_t n = rng.uniform_below(24);
      for (std::size_t j = 0; j < n; ++j) s += pieces[rng.uniform_below(std::size(pieces))];
      auto once = clean_text(s);
      clean_ok = clean_text(once) == once;
    }
  }

  std::ostringstream detail;
  detail << "probability CSV " << (probs_ok ? "bit-exact" : "BROKEN") << ", checkpoint "
         << (ckpt_ok ? "bit-exact" : "BROKEN") << ", clean_text idempotent on 1000 strings "
         << (clean_ok ? "ok" : "BROKEN");
  report(9, "round trips", probs_ok && ckpt_ok && clean_ok, detail.str());
}

template <typename Fn>
void guarded(int id, const std::string& name, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  std::printf("latefuse acceptance suite\n");
  guarded(1, "gradient correctness", criterion_gradients);
  guarded(2, "metric oracle", criterion_metrics);
  guarded(3, "confident-learning hand trace", criterion_hand_trace);
  guarded(4, "noise recovery", criterion_noise_recovery);
  try {
    auto preset = run_preset_pipeline();
    guarded(5, "Table-1 ordering replication", [&] { criterion_table1_ordering(preset); });
    guarded(6, "ensemble properties", [&] { criterion_ensemble_properties(preset); });
  } catch (const std::exception& e) {
    report(5, "Table-1 ordering replication", false, std::string("exception: ") + e.what());
    report(6, "ensemble properties", false, "preset run failed");
  }
  guarded(7, "determinism", criterion_determinism);
  guarded(8, "protocol conformance", criterion_protocol);
  guarded(9, "round trips", criterion_round_trips);

  std::printf("%s\n", g_failures == 0 ? "all criteria passed" : "FAILURES present");
  return g_failures == 0 ? 0 : 1;
}
