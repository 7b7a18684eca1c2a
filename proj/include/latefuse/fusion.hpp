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

#ifndef LATEFUSE_FUSION_HPP
#define LATEFUSE_FUSION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latefuse/core.hpp"
#include "latefuse/csv.hpp"
#include "latefuse/dataio.hpp"
#include "latefuse/nn.hpp"

// Decision-level fusion: per-modality class probabilities concatenated into
// policy-network inputs, K policy nets trained fold-wise, majority voting.
// Feature-level fusion baselines (concat / sum / attention) live here too.

namespace latefuse {

inline constexpr std::size_t kDefaultPolicyFolds = 8;

/// N x (M*C) matrix: each modality's probability row, concatenated in the
/// dataset's canonical (lexicographic) modality order.
struct FusionInput {
  std::vector<std::string> modality_order;
  std::size_t n_classes = 0;
  Matrix matrix;

  std::size_t size() const { return matrix.rows(); }
};

inline FusionInput assemble_fusion_input(const AlignedDataset& dataset) {
  require(!dataset.probabilities.empty(), "assemble_fusion_input: no probability modalities");
  for (const auto& [name, feats] : dataset.features)
    require(dataset.probabilities.count(name) > 0,
            "assemble_fusion_input: modality '" + name + "' has no probabilities");

  FusionInput input;
  input.n_classes = dataset.n_classes();
  for (const auto& [name, probs] : dataset.probabilities) {
    require(probs.n_classes() == input.n_classes,
            "assemble_fusion_input: modality '" + name + "' has a different class count");
    input.modality_order.push_back(name);
  }

  const std::size_t m = input.modality_order.size();
  const std::size_t c = input.n_classes;
  input.matrix = Matrix(dataset.size(), m * c);
  std::size_t block = 0;
  for (const auto& [name, probs] : dataset.probabilities) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      auto src = probs.row(i);
      std::copy(src.begin(), src.end(), input.matrix.row(i).begin() + block * c);
    }
    ++block;
  }
  return input;
}

/// K policy networks trained in K-fold cross-validation over the same
/// fusion inputs; member f trains on the other k-1 folds and checkpoints
/// by macro-F1 on fold f.
struct PolicyEnsemble {
  std::vector<TrainedModel> members;
  FoldAssignment fold_spec;
  std::vector<std::string> modality_order;
  NetworkLayout layout;
  std::vector<std::string> warnings;
};

inline PolicyEnsemble train_policy_ensemble(const FusionInput& input,
                                            const std::vector<int>& labels, std::size_t k,
                                            const NetworkLayout& layout,
                                            const TrainConfig& config, std::uint64_t seed,
                                            std::size_t jobs = 1) {
  require(input.size() == labels.size(), "train_policy_ensemble: size mismatch");
  require(layout.input_dim == input.matrix.cols(),
          "train_policy_ensemble: layout input_dim must be M*C");
  require(layout.output_dim >= input.n_classes,
          "train_policy_ensemble: layout output_dim too small");

  PolicyEnsemble ensemble;
  ensemble.modality_order = input.modality_order;
  ensemble.layout = layout;
  ensemble.fold_spec = make_folds(labels, k, derive_seed(seed, 0), /*stratified=*/true);
  ensemble.members.resize(k);

  std::vector<std::vector<std::string>> fold_warnings(k);
  parallel_for(k, jobs, [&](std::size_t f) {
    auto train_rows = ensemble.fold_spec.complement_indices(f);
    auto val_rows = ensemble.fold_spec.fold_indices(f);
    Matrix train_x = detail::gather_rows(input.matrix, train_rows);
    auto train_y = detail::gather(labels, train_rows);
    Matrix val_x = detail::gather_rows(input.matrix, val_rows);
    auto val_y = detail::gather(labels, val_rows);

    std::vector<bool> seen(layout.output_dim, false);
    for (int y : train_y) seen[static_cast<std::size_t>(y)] = true;
    for (std::size_t cls = 0; cls < input.n_classes; ++cls)
      if (!seen[cls])
        fold_warnings[f].push_back("fold " + std::to_string(f) + ": class " +
                                   std::to_string(cls) + " absent from training split");

    TrainConfig fold_config = config;
    fold_config.shuffle_seed = derive_seed(seed, 11, f);
    Network net = init_network(layout, derive_seed(seed, 10, f));
    ensemble.members[f] = train(std::move(net), train_x, train_y, val_x, val_y, fold_config);
  });
  for (auto& w : fold_warnings)
    ensemble.warnings.insert(ensemble.warnings.end(), w.begin(), w.end());
  return ensemble;
}

struct VoteResult {
  std::vector<int> winners;
  std::size_t n_classes = 0;
  std::vector<std::uint32_t> counts;  // N x C vote counts, row-major
  std::vector<bool> tie_broken;

  std::uint32_t count(std::size_t i, std::size_t cls) const {
    return counts[i * n_classes + cls];
  }
  std::uint32_t winner_votes(std::size_t i) const {
    return count(i, static_cast<std::size_t>(winners[i]));
  }
};

/// Majority vote across members. Ties on the top count go to the tied
/// class with the greatest mean predicted probability; any remaining tie
/// goes to the smallest class index, and the sample is flagged.
inline VoteResult majority_vote(const std::vector<std::vector<int>>& member_votes,
                                std::size_t n_classes, const Matrix& mean_probs) {
  require(!member_votes.empty(), "majority_vote: no members");
  const std::size_t n = member_votes[0].size();
  require(n > 0, "majority_vote: empty vote rows");
  for (const auto& votes : member_votes)
    require(votes.size() == n, "majority_vote: member vote length mismatch");
  require(mean_probs.rows() == n && mean_probs.cols() == n_classes,
          "majority_vote: tie stats shape mismatch");

  VoteResult result;
  result.n_classes = n_classes;
  result.winners.resize(n);
  result.counts.assign(n * n_classes, 0);
  result.tie_broken.assign(n, false);

  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& votes : member_votes) {
      int v = votes[i];
      require(v >= 0 && static_cast<std::size_t>(v) < n_classes,
              "majority_vote: vote out of range");
      ++result.counts[i * n_classes + static_cast<std::size_t>(v)];
    }
    std::uint32_t top = 0;
    for (std::size_t cls = 0; cls < n_classes; ++cls)
      top = std::max(top, result.count(i, cls));
    std::size_t n_tied = 0;
    std::size_t winner = 0;
    double winner_prob = -1.0;
    for (std::size_t cls = 0; cls < n_classes; ++cls) {
      if (result.count(i, cls) != top) continue;
      ++n_tied;
      if (mean_probs(i, cls) > winner_prob) {
        winner = cls;
        winner_prob = mean_probs(i, cls);
      }
    }
    result.winners[i] = static_cast<int>(winner);
    result.tie_broken[i] = n_tied > 1;
  }
  return result;
}

struct PolicyPrediction {
  std::vector<int> labels;
  VoteResult votes;
  Matrix mean_probs;  // mean over members; the vote tie statistic
};

/// Ensemble inference: each member's argmax prediction enters a majority
/// vote; the mean of the members' probability rows is the tie statistic.
inline PolicyPrediction policy_predict(const PolicyEnsemble& ensemble,
                                       const FusionInput& input) {
  require(!ensemble.members.empty(), "policy_predict: empty ensemble");
  require(input.matrix.cols() == ensemble.layout.input_dim,
          "policy_predict: input dimension mismatch");

  const std::size_t n = input.size();
  const std::size_t c = ensemble.layout.output_dim;
  const auto k = static_cast<double>(ensemble.members.size());

  PolicyPrediction pred;
  pred.mean_probs = Matrix(n, c);
  std::vector<std::vector<int>> member_votes;
  member_votes.reserve(ensemble.members.size());
  for (const auto& member : ensemble.members) {
    ProbabilityMatrix probs = forward(member.best_network, input.matrix);
    std::vector<int> votes(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = probs.row(i);
      votes[i] = static_cast<int>(argmax(row));
      auto acc = pred.mean_probs.row(i);
      for (std::size_t j = 0; j < c; ++j) acc[j] += row[j] / k;
    }
    member_votes.push_back(std::move(votes));
  }
  pred.votes = majority_vote(member_votes, c, pred.mean_probs);
  pred.labels = pred.votes.winners;
  return pred;
}

/// Majority vote across pipeline variants; same tie-break contract, with
/// the across-variant mean of each variant's mean class probabilities as
/// the tie statistic.
inline VoteResult pipeline_ensemble(const std::vector<std::vector<int>>& variant_predictions,
                                    const std::vector<Matrix>& variant_mean_probs,
                                    std::size_t n_classes) {
  require(!variant_predictions.empty(), "pipeline_ensemble: no variants");
  require(variant_predictions.size() == variant_mean_probs.size(),
          "pipeline_ensemble: prediction/probability count mismatch");
  const std::size_t n = variant_predictions[0].size();
  Matrix mean(n, n_classes);
  const auto v = static_cast<double>(variant_mean_probs.size());
  for (const auto& probs : variant_mean_probs) {
    require(probs.rows() == n && probs.cols() == n_classes,
            "pipeline_ensemble: probability shape mismatch");
    for (std::size_t idx = 0; idx < mean.data().size(); ++idx)
      mean.data()[idx] += probs.data()[idx] / v;
  }
  return majority_vote(variant_predictions, n_classes, mean);
}

// --- feature-level fusion --------------------------------------------------

enum class FuseMode { kConcat, kSum, kAttention };

inline FuseMode parse_fuse_mode(const std::string& name) {
  if (name == "concat") return FuseMode::kConcat;
  if (name == "sum") return FuseMode::kSum;
  if (name == "attention") return FuseMode::kAttention;
  throw Error("unknown feature fusion mode '" + name + "'");
}

/// Concatenation or elementwise summation of per-modality feature blocks.
/// Attention fusion carries learned parameters; see AttentionFusion below.
inline Matrix feature_level_fuse(const std::vector<Matrix>& modalities, FuseMode mode) {
  require(!modalities.empty(), "feature_level_fuse: no modalities");
  const std::size_t n = modalities[0].rows();
  for (const auto& m : modalities)
    require(m.rows() == n, "feature_level_fuse: row count mismatch");

  if (mode == FuseMode::kConcat) {
    std::size_t dim = 0;
    for (const auto& m : modalities) dim += m.cols();
    Matrix out(n, dim);
    std::size_t offset = 0;
    for (const auto& m : modalities) {
      for (std::size_t i = 0; i < n; ++i) {
        auto src = m.row(i);
        std::copy(src.begin(), src.end(), out.row(i).begin() + offset);
      }
      offset += m.cols();
    }
    return out;
  }
  require(mode == FuseMode::kSum, "feature_level_fuse: attention requires parameters");
  const std::size_t dim = modalities[0].cols();
  for (const auto& m : modalities)
    require(m.cols() == dim, "feature_level_fuse: sum needs equal dims");
  Matrix out(n, dim);
  for (const auto& m : modalities)
    for (std::size_t idx = 0; idx < out.data().size(); ++idx)
      out.data()[idx] += m.data()[idx];
  return out;
}

/// Per-modality linear scoring for attention fusion: score_m = w_m . f_m
/// + b_m, alpha = softmax over modalities, fused row = sum alpha_m f_m.
struct AttentionParams {
  Matrix score_w;               // M x D
  std::vector<double> score_b;  // M

  static AttentionParams zeros(std::size_t n_modalities, std::size_t dim) {
    AttentionParams p;
    p.score_w = Matrix(n_modalities, dim);
    p.score_b.assign(n_modalities, 0.0);
    return p;
  }
};

namespace detail {

inline std::vector<double> attention_weights(const std::vector<Matrix>& modalities,
                                             const AttentionParams& params, std::size_t i) {
  const std::size_t m = modalities.size();
  std::vector<double> scores(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto w = params.score_w.row(j);
    auto f = modalities[j].row(i);
    double s = params.score_b[j];
    for (std::size_t d = 0; d < f.size(); ++d) s += w[d] * f[d];
    scores[j] = s;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (double& s : scores) s /= sum;
  return scores;
}

}  // namespace detail

inline Matrix attention_fuse(const std::vector<Matrix>& modalities,
                             const AttentionParams& params) {
  require(!modalities.empty(), "attention_fuse: no modalities");
  const std::size_t n = modalities[0].rows();
  const std::size_t dim = modalities[0].cols();
  for (const auto& m : modalities)
    require(m.rows() == n && m.cols() == dim, "attention_fuse: equal dims required");
  require(params.score_w.rows() == modalities.size() && params.score_w.cols() == dim,
          "attention_fuse: parameter shape mismatch");

  Matrix out(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto alpha = detail::attention_weights(modalities, params, i);
    auto oi = out.row(i);
    for (std::size_t j = 0; j < modalities.size(); ++j) {
      auto f = modalities[j].row(i);
      for (std::size_t d = 0; d < dim; ++d) oi[d] += alpha[j] * f[d];
    }
  }
  return out;
}

/// Attention fusion trained jointly with its downstream classifier head:
/// gradients flow from the head's input back through the fused features
/// into the modality scores.
struct AttentionFusionModel {
  AttentionParams params;
  Network head;
};

struct AttentionTrainResult {
  AttentionFusionModel model;
  std::size_t best_epoch = 0;
  double best_val_score = 0.0;
  std::vector<EpochStats> history;
};

namespace detail {

struct AttentionGrads {
  Matrix score_w;
  std::vector<double> score_b;
  Gradients head;
};

inline std::pair<double, AttentionGrads> attention_loss_and_grad(
    const AttentionFusionModel& model, const std::vector<Matrix>& modalities,
    const std::vector<int>& labels) {
  const std::size_t m = modalities.size();
  const std::size_t n = modalities[0].rows();
  const std::size_t dim = modalities[0].cols();

  std::vector<std::vector<double>> alphas(n);
  Matrix fused(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    alphas[i] = attention_weights(modalities, model.params, i);
    auto oi = fused.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      auto f = modalities[j].row(i);
      for (std::size_t d = 0; d < dim; ++d) oi[d] += alphas[i][j] * f[d];
    }
  }

  auto head_lg = loss_and_grad(model.head, fused, labels, /*with_input_grads=*/true);

  AttentionGrads grads;
  grads.head = std::move(head_lg.grads);
  grads.score_w = Matrix(m, dim);
  grads.score_b.assign(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = head_lg.input_grads.row(i);
    // dL/dalpha_j = g . f_j, then through the softmax jacobian
    std::vector<double> dalpha(m);
    double inner = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      auto f = modalities[j].row(i);
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += g[d] * f[d];
      dalpha[j] = dot;
      inner += alphas[i][j] * dot;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double ds = alphas[i][j] * (dalpha[j] - inner);
      grads.score_b[j] += ds;
      auto f = modalities[j].row(i);
      auto gw = grads.score_w.row(j);
      for (std::size_t d = 0; d < dim; ++d) gw[d] += ds * f[d];
    }
  }
  return {head_lg.loss, std::move(grads)};
}

}  // namespace detail

inline AttentionTrainResult train_attention_fusion(
    const std::vector<Matrix>& train_mods, const std::vector<int>& train_y,
    const std::vector<Matrix>& val_mods, const std::vector<int>& val_y,
    const NetworkLayout& head_layout, const TrainConfig& config, std::uint64_t seed) {
  require(!train_mods.empty() && train_mods[0].rows() > 0, "train_attention_fusion: empty train set");
  require(!val_mods.empty() && val_mods[0].rows() > 0, "train_attention_fusion: empty val set");
  const std::size_t m = train_mods.size();
  const std::size_t dim = train_mods[0].cols();
  require(head_layout.input_dim == dim, "train_attention_fusion: head input_dim mismatch");

  AttentionTrainResult result;
  AttentionFusionModel model;
  model.params = AttentionParams::zeros(m, dim);  // uniform attention at start
  model.head = init_network(head_layout, derive_seed(seed, 20));

  AdamState head_adam = AdamState::like(model.head);
  Matrix mw(m, dim), vw(m, dim);
  std::vector<double> mb(m, 0.0), vb(m, 0.0);
  std::uint64_t step = 0;

  const std::size_t n = train_mods[0].rows();
  SplitMix64 shuffle_rng(derive_seed(seed, 21));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, n - start);
      std::vector<std::size_t> rows(order.begin() + start, order.begin() + start + bs);
      std::vector<Matrix> batch_mods;
      batch_mods.reserve(m);
      for (const auto& mod : train_mods) batch_mods.push_back(detail::gather_rows(mod, rows));
      auto batch_y = detail::gather(train_y, rows);

      auto [loss, grads] = detail::attention_loss_and_grad(model, batch_mods, batch_y);
      loss_sum += loss * static_cast<double>(bs);

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t idx = 0; idx < mw.data().size(); ++idx)
        detail::adam_update(model.params.score_w.data()[idx], mw.data()[idx], vw.data()[idx],
                            grads.score_w.data()[idx], config.learning_rate, config.beta1,
                            config.beta2, config.epsilon, bc1, bc2);
      for (std::size_t j = 0; j < m; ++j)
        detail::adam_update(model.params.score_b[j], mb[j], vb[j], grads.score_b[j],
                            config.learning_rate, config.beta1, config.beta2, config.epsilon,
                            bc1, bc2);
      // head_adam.step advances once per batch, same as `step`
      adam_step(head_adam, model.head, grads.head, config.learning_rate, config.beta1,
                config.beta2, config.epsilon);
    }

    Matrix val_fused = attention_fuse(val_mods, model.params);
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.val_macro_f1 = macro_f1(predict_classes(model.head, val_fused), val_y,
                                  head_layout.output_dim);
    result.history.push_back(stats);
    if (result.best_epoch == 0 || stats.val_macro_f1 > result.best_val_score) {
      result.best_epoch = epoch;
      result.best_val_score = stats.val_macro_f1;
      result.model = model;
    }
  }
  return result;
}

// --- prediction output and ensemble persistence ----------------------------

/// `id,predicted_label,votes_for_winner,tie_broken`, one row per sample in
/// the given order.
inline void save_predictions(const std::filesystem::path& path,
                             const std::vector<std::string>& ids, const VoteResult& votes) {
  require(ids.size() == votes.winners.size(), "save_predictions: id count mismatch");
  std::ostringstream out;
  out << "id,predicted_label,votes_for_winner,tie_broken\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    detail::check_id(ids[i]);
    out << ids[i] << ',' << votes.winners[i] << ',' << votes.winner_votes(i) << ','
        << (votes.tie_broken[i] ? 1 : 0) << "\n";
  }
  detail::write_file(path, out.str());
}

inline IdLabels load_predictions(const std::filesystem::path& path) {
  auto lines = detail::read_lines(path);
  require(!lines.empty(), path.string() + ": empty file");
  auto header = detail::split_fields(lines[0]);
  require(header.size() >= 2 && header[0] == "id" && header[1] == "predicted_label",
          path.string() + ": expected header 'id,predicted_label,...'");
  IdLabels out;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string context = path.string() + ":" + std::to_string(r + 1);
    auto fields = detail::split_fields(lines[r]);
    require(fields.size() == header.size(), context + ": wrong column count");
    out.ids.emplace_back(fields[0]);
    out.labels.push_back(static_cast<int>(parse_long(fields[1], context)));
  }
  return out;
}

/// Writes member checkpoints plus an ensemble manifest (ordered member
/// paths, modality order, layout, fold spec) under `dir`.
inline void save_policy_ensemble(const std::filesystem::path& dir,
                                 const PolicyEnsemble& ensemble) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format"] = "latefuse-ensemble-v1";
  j["modality_order"] = ensemble.modality_order;
  j["layout"] = layout_to_json(ensemble.layout);
  j["folds"] = {{"n", ensemble.fold_spec.n},
                {"k", ensemble.fold_spec.k},
                {"seed", ensemble.fold_spec.seed},
                {"stratified", ensemble.fold_spec.stratified},
                {"fold_of", ensemble.fold_spec.fold_of}};
  j["warnings"] = ensemble.warnings;
  j["members"] = nlohmann::json::array();
  for (std::size_t f = 0; f < ensemble.members.size(); ++f) {
    std::string name = "member_" + std::to_string(f) + ".json";
    save_checkpoint(dir / name, ensemble.members[f]);
    j["members"].push_back(name);
  }
  detail::write_file(dir / "ensemble.json", j.dump(2) + "\n");
}

inline PolicyEnsemble load_policy_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ensemble.json");
  require(in.good(), "cannot open ensemble manifest in '" + dir.string() + "'");
  nlohmann::json j;
  in >> j;
  require(j.value("format", "") == "latefuse-ensemble-v1",
          dir.string() + ": not a latefuse ensemble");
  PolicyEnsemble ensemble;
  ensemble.modality_order = j.at("modality_order").get<std::vector<std::string>>();
  ensemble.layout = layout_from_json(j.at("layout"));
  const auto& jf = j.at("folds");
  ensemble.fold_spec.n = jf.at("n").get<std::size_t>();
  ensemble.fold_spec.k = jf.at("k").get<std::size_t>();
  ensemble.fold_spec.seed = jf.at("seed").get<std::uint64_t>();
  ensemble.fold_spec.stratified = jf.at("stratified").get<bool>();
  ensemble.fold_spec.fold_of = jf.at("fold_of").get<std::vector<std::size_t>>();
  ensemble.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& name : j.at("members")) {
    auto member = load_checkpoint(dir / name.get<std::string>());
    require(member.best_network.layout == ensemble.layout,
            dir.string() + ": member layout differs from the ensemble layout");
    ensemble.members.push_back(std::move(member));
  }
  return ensemble;
}

}  // namespace latefuse

#endif  // LATEFUSE_FUSION_HPP
