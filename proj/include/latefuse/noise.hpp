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

#ifndef LATEFUSE_NOISE_HPP
#define LATEFUSE_NOISE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latefuse/core.hpp"
#include "latefuse/csv.hpp"
#include "latefuse/dataio.hpp"
#include "latefuse/nn.hpp"

// Confident-learning label-noise detection: out-of-fold predicted
// probabilities from a base classifier, per-class confidence thresholds,
// the confident joint, and a ranking of suspected label errors by
// self-confidence.

namespace latefuse {

/// Counts of (given label j, confidently assigned class k). Samples whose
/// candidate set is empty are skipped, so sum(counts) + skipped == N.
struct ConfidentJoint {
  std::size_t n_classes = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t skipped = 0;

  std::uint64_t operator()(std::size_t given, std::size_t assigned) const {
    return counts[given * n_classes + assigned];
  }
  std::uint64_t& operator()(std::size_t given, std::size_t assigned) {
    return counts[given * n_classes + assigned];
  }
};

struct NoiseCandidate {
  std::size_t row = 0;  // row in the scored dataset
  std::string id;
  int given_label = 0;
  int assigned_label = 0;
  double self_confidence = 0.0;  // predicted probability of the given label
};

struct NoiseReport {
  std::vector<double> thresholds;
  ConfidentJoint joint;
  std::vector<NoiseCandidate> candidates;  // ascending self-confidence
};

struct CrossValResult {
  ProbabilityMatrix probs;  // out-of-fold predictions, row-aligned to input
  FoldAssignment folds;
  std::vector<TrainedModel> fold_models;
};

namespace detail {

inline std::size_t class_count(const std::vector<int>& labels) {
  int c = 0;
  for (int y : labels) {
    require(y >= 0, "labels: negative class index");
    c = std::max(c, y + 1);
  }
  return static_cast<std::size_t>(c);
}

/// Confidently assigned class per sample, or -1 when the candidate set
/// {k : p(k) >= t_k} is empty. Argmax ties break to the smallest class.
inline std::vector<int> confident_assign(const ProbabilityMatrix& probs,
                                         const std::vector<int>& labels,
                                         const std::vector<double>& thresholds) {
  require(probs.n_samples() == labels.size(), "confident_assign: size mismatch");
  require(probs.n_classes() == thresholds.size(), "confident_assign: threshold count mismatch");
  std::vector<int> assigned(labels.size(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = probs.row(i);
    int best = -1;
    double best_p = -1.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] >= thresholds[k] && row[k] > best_p) {
        best = static_cast<int>(k);
        best_p = row[k];
      }
    }
    assigned[i] = best;
  }
  return assigned;
}

}  // namespace detail

/// Out-of-fold class probabilities: row i is predicted by the base
/// classifier trained on every fold except fold(i). Folds are stratified;
/// classes with fewer than k samples are reported as an error rather than
/// silently rebalanced. The checkpoint slice for each fold model is its
/// own training complement — the held-out fold never influences training
/// or checkpoint selection.
inline CrossValResult cross_val_probabilities(const Matrix& features,
                                              const std::vector<int>& labels,
                                              std::size_t k, const NetworkLayout& layout,
                                              const TrainConfig& config, std::uint64_t seed,
                                              std::size_t jobs = 1) {
  require(features.rows() == labels.size(), "cross_val_probabilities: size mismatch");
  require(k >= 2, "cross_val_probabilities: k must be >= 2");
  require(layout.input_dim == features.cols(), "cross_val_probabilities: layout input_dim mismatch");
  const std::size_t c = detail::class_count(labels);
  require(layout.output_dim >= c, "cross_val_probabilities: layout output_dim too small");

  std::vector<std::size_t> per_class(c, 0);
  for (int y : labels) ++per_class[static_cast<std::size_t>(y)];
  for (std::size_t cls = 0; cls < c; ++cls)
    require(per_class[cls] >= k, "cross_val_probabilities: class " + std::to_string(cls) +
                                     " has " + std::to_string(per_class[cls]) +
                                     " samples, fewer than k=" + std::to_string(k));

  CrossValResult result;
  result.folds = make_folds(labels, k, derive_seed(seed, 0), /*stratified=*/true);
  result.fold_models.resize(k);

  Matrix oof(features.rows(), layout.output_dim);
  parallel_for(k, jobs, [&](std::size_t f) {
    auto train_rows = result.folds.complement_indices(f);
    auto hold_rows = result.folds.fold_indices(f);
    Matrix train_x = detail::gather_rows(features, train_rows);
    auto train_y = detail::gather(labels, train_rows);

    TrainConfig fold_config = config;
    fold_config.shuffle_seed = derive_seed(seed, 2, f);
    Network net = init_network(layout, derive_seed(seed, 1, f));
    result.fold_models[f] = train(std::move(net), train_x, train_y, train_x, train_y, fold_config);

    Matrix hold_x = detail::gather_rows(features, hold_rows);
    ProbabilityMatrix preds = forward(result.fold_models[f].best_network, hold_x);
    for (std::size_t r = 0; r < hold_rows.size(); ++r) {
      auto src = preds.row(r);
      std::copy(src.begin(), src.end(), oof.row(hold_rows[r]).begin());
    }
  });
  result.probs = ProbabilityMatrix(std::move(oof));
  return result;
}

/// Per-class confidence threshold t_j: mean predicted probability of class
/// j over the samples whose given label is j.
inline std::vector<double> class_thresholds(const ProbabilityMatrix& probs,
                                            const std::vector<int>& labels) {
  require(probs.n_samples() == labels.size(), "class_thresholds: size mismatch");
  const std::size_t c = probs.n_classes();
  std::vector<double> sums(c, 0.0);
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto y = static_cast<std::size_t>(labels[i]);
    require(y < c, "class_thresholds: label out of range");
    sums[y] += probs(i, y);
    ++counts[y];
  }
  std::vector<double> t(c);
  for (std::size_t j = 0; j < c; ++j) {
    require(counts[j] > 0, "class_thresholds: class " + std::to_string(j) + " has no samples");
    t[j] = sums[j] / static_cast<double>(counts[j]);
  }
  return t;
}

/// Builds the confident joint: each sample's candidate set is the classes
/// whose predicted probability reaches their threshold (inclusive); the
/// sample is counted at (given label, argmax over the candidate set), or
/// skipped when the set is empty.
inline ConfidentJoint confident_joint(const ProbabilityMatrix& probs,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& thresholds) {
  const std::size_t c = probs.n_classes();
  ConfidentJoint joint;
  joint.n_classes = c;
  joint.counts.assign(c * c, 0);
  auto assigned = detail::confident_assign(probs, labels, thresholds);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (assigned[i] < 0) {
      ++joint.skipped;
    } else {
      ++joint(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(assigned[i]));
    }
  }
  return joint;
}

/// Ranks suspected label errors: exactly the samples counted off-diagonal
/// in the confident joint, scored by self-confidence (predicted probability
/// of the given label) in ascending order; ties break by sample id.
inline NoiseReport rank_label_errors(const ProbabilityMatrix& probs,
                                     const std::vector<int>& labels,
                                     const std::vector<double>& thresholds,
                                     const std::vector<std::string>& ids = {}) {
  if (!ids.empty())
    require(ids.size() == labels.size(), "rank_label_errors: id count mismatch");

  NoiseReport report;
  report.thresholds = thresholds;
  report.joint = confident_joint(probs, labels, thresholds);

  auto assigned = detail::confident_assign(probs, labels, thresholds);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (assigned[i] < 0 || assigned[i] == labels[i]) continue;
    NoiseCandidate cand;
    cand.row = i;
    cand.id = ids.empty() ? std::to_string(i) : ids[i];
    cand.given_label = labels[i];
    cand.assigned_label = assigned[i];
    cand.self_confidence = probs(i, static_cast<std::size_t>(labels[i]));
    report.candidates.push_back(std::move(cand));
  }
  std::sort(report.candidates.begin(), report.candidates.end(),
            [](const NoiseCandidate& a, const NoiseCandidate& b) {
              if (a.self_confidence != b.self_confidence)
                return a.self_confidence < b.self_confidence;
              return a.id < b.id;
            });
  return report;
}

struct PruneResult {
  AlignedDataset cleaned;
  std::vector<std::string> removed_ids;
  std::vector<std::string> skipped_ids;  // protected: removal would empty a class
};

namespace detail {

inline PruneResult prune_top(const AlignedDataset& dataset, const NoiseReport& report,
                             std::size_t quota) {
  require(dataset.has_labels(), "prune_dataset: labels required");
  const std::size_t c = class_count(dataset.labels);
  std::vector<std::size_t> remaining(c, 0);
  for (int y : dataset.labels) ++remaining[static_cast<std::size_t>(y)];

  std::vector<bool> removed(dataset.size(), false);
  PruneResult result;
  quota = std::min(quota, report.candidates.size());
  for (std::size_t r = 0; r < quota; ++r) {
    const auto& cand = report.candidates[r];
    require(cand.row < dataset.size(), "prune_dataset: candidate row out of range");
    require(dataset.labels[cand.row] == cand.given_label,
            "prune_dataset: report does not match dataset labels");
    auto cls = static_cast<std::size_t>(cand.given_label);
    if (remaining[cls] <= 1) {
      result.skipped_ids.push_back(dataset.ids[cand.row]);
      continue;
    }
    removed[cand.row] = true;
    --remaining[cls];
    result.removed_ids.push_back(dataset.ids[cand.row]);
  }

  std::vector<std::size_t> keep;
  keep.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!removed[i]) keep.push_back(i);
  result.cleaned = dataset.subset(keep);
  return result;
}

}  // namespace detail

/// Removes the top ceil(fraction * |candidates|) ranked candidates from
/// the dataset. A removal that would leave a class empty is skipped and
/// reported instead.
inline PruneResult prune_dataset(const AlignedDataset& dataset, const NoiseReport& report,
                                 double fraction = 0.10) {
  require(fraction >= 0.0 && fraction <= 1.0, "prune_dataset: fraction out of [0,1]");
  auto quota = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(report.candidates.size())));
  return detail::prune_top(dataset, report, quota);
}

/// Same as prune_dataset but with an absolute removal budget.
inline PruneResult prune_dataset_count(const AlignedDataset& dataset, const NoiseReport& report,
                                       std::size_t count) {
  return detail::prune_top(dataset, report, count);
}

/// CSV export: `rank,id,given_label,assigned_label,self_confidence`.
inline void save_noise_report(const std::filesystem::path& path, const NoiseReport& report) {
  std::ostringstream out;
  out << "rank,id,given_label,assigned_label,self_confidence\n";
  for (std::size_t r = 0; r < report.candidates.size(); ++r) {
    const auto& cand = report.candidates[r];
    out << (r + 1) << ',' << cand.id << ',' << cand.given_label << ','
        << cand.assigned_label << ',' << format_double(cand.self_confidence) << "\n";
  }
  detail::write_file(path, out.str());
}

}  // namespace latefuse

#endif  // LATEFUSE_NOISE_HPP
