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

#ifndef LATEFUSE_DATAIO_HPP
#define LATEFUSE_DATAIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "latefuse/core.hpp"
#include "latefuse/rng.hpp"

namespace latefuse {

/// N x C row-stochastic matrix: per-sample class probabilities emitted by
/// one modality scorer. Entries are >= 0 and each row sums to 1 within
/// kRowSumTolerance; construction validates.
class ProbabilityMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-6;

  ProbabilityMatrix() = default;
  explicit ProbabilityMatrix(Matrix m) : m_(std::move(m)) { validate(); }

  std::size_t n_samples() const { return m_.rows(); }
  std::size_t n_classes() const { return m_.cols(); }

  double operator()(std::size_t i, std::size_t k) const { return m_(i, k); }
  std::span<const double> row(std::size_t i) const { return m_.row(i); }
  const Matrix& matrix() const { return m_; }

  ProbabilityMatrix subset(const std::vector<std::size_t>& rows) const {
    Matrix out(rows.size(), m_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = m_.row(rows[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    ProbabilityMatrix p;
    p.m_ = std::move(out);  // rows of a valid matrix stay valid
    return p;
  }

  friend bool operator==(const ProbabilityMatrix& a, const ProbabilityMatrix& b) {
    return a.m_ == b.m_;
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < m_.rows(); ++i) {
      double sum = 0.0;
      for (double v : m_.row(i)) {
        require(std::isfinite(v), "ProbabilityMatrix: non-finite entry in row " + std::to_string(i));
        require(v >= 0.0, "ProbabilityMatrix: negative entry in row " + std::to_string(i));
        sum += v;
      }
      require(std::abs(sum - 1.0) <= kRowSumTolerance,
              "ProbabilityMatrix: row " + std::to_string(i) + " sums to " +
                  std::to_string(sum) + ", outside tolerance");
    }
  }

  Matrix m_;
};

// Unaligned carriers as they come out of files: rows in source order, ids
// alongside.
struct IdProbabilities {
  std::vector<std::string> ids;
  ProbabilityMatrix probs;
};
struct IdFeatures {
  std::vector<std::string> ids;
  Matrix features;
};
struct IdLabels {
  std::vector<std::string> ids;
  std::vector<int> labels;
};

/// Sample ids plus row-aligned modality matrices. Canonical row order is
/// sorted-by-id; modality maps iterate lexicographically. Immutable after
/// construction by convention; safe to share across readers.
struct AlignedDataset {
  std::vector<std::string> ids;
  std::vector<int> labels;  // empty when unlabeled
  std::map<std::string, ProbabilityMatrix> probabilities;
  std::map<std::string, Matrix> features;

  std::size_t size() const { return ids.size(); }
  bool has_labels() const { return !labels.empty(); }

  std::size_t n_classes() const {
    require(!probabilities.empty(), "AlignedDataset: no probability modalities");
    return probabilities.begin()->second.n_classes();
  }

  /// Rows must be ascending; relative order (and thus sorted-id order) is
  /// preserved, so a subset of an aligned dataset is itself aligned.
  AlignedDataset subset(const std::vector<std::size_t>& rows) const {
    AlignedDataset out;
    out.ids.reserve(rows.size());
    for (std::size_t r : rows) {
      require(r < size(), "subset: row out of range");
      out.ids.push_back(ids[r]);
    }
    if (has_labels()) {
      out.labels.reserve(rows.size());
      for (std::size_t r : rows) out.labels.push_back(labels[r]);
    }
    for (const auto& [name, probs] : probabilities) out.probabilities.emplace(name, probs.subset(rows));
    for (const auto& [name, feats] : features) {
      Matrix m(rows.size(), feats.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = feats.row(rows[r]);
        std::copy(src.begin(), src.end(), m.row(r).begin());
      }
      out.features.emplace(name, std::move(m));
    }
    return out;
  }

  friend bool operator==(const AlignedDataset& a, const AlignedDataset& b) {
    return a.ids == b.ids && a.labels == b.labels &&
           a.probabilities == b.probabilities && a.features == b.features;
  }
};

namespace detail {

inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto s = src.row(rows[r]);
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(src[r]);
  return out;
}

inline std::unordered_map<std::string, std::size_t> index_ids(
    const std::vector<std::string>& ids, const std::string& what) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto [it, inserted] = index.emplace(ids[i], i);
    require(inserted, what + ": duplicate id '" + ids[i] + "'");
  }
  return index;
}

inline std::vector<std::size_t> rows_in_canonical_order(
    const std::vector<std::string>& canonical,
    const std::vector<std::string>& ids, const std::string& what) {
  auto index = index_ids(ids, what);
  require(index.size() == canonical.size(),
          what + ": id set differs from the other modalities");
  std::vector<std::size_t> rows;
  rows.reserve(canonical.size());
  for (const auto& id : canonical) {
    auto it = index.find(id);
    require(it != index.end(), what + ": id '" + id + "' missing");
    rows.push_back(it->second);
  }
  return rows;
}

}  // namespace detail

/// Builds an AlignedDataset from per-modality carriers. Every carrier must
/// cover the same id set; rows are reordered to sorted-id order.
inline AlignedDataset align_modalities(
    const std::map<std::string, IdProbabilities>& probs,
    const std::map<std::string, IdFeatures>& feats = {},
    const std::optional<IdLabels>& labels = std::nullopt) {
  require(!probs.empty() || !feats.empty(), "align_modalities: no modalities given");

  // canonical ids: sorted union check against the first carrier
  std::vector<std::string> canonical =
      !probs.empty() ? probs.begin()->second.ids : feats.begin()->second.ids;
  detail::index_ids(canonical, "align_modalities");
  std::sort(canonical.begin(), canonical.end());

  AlignedDataset out;
  out.ids = canonical;
  for (const auto& [name, carrier] : probs) {
    auto rows = detail::rows_in_canonical_order(canonical, carrier.ids,
                                                "modality '" + name + "'");
    // subset() demands ascending rows only for aligned reuse; here we are
    // permuting, which it also handles since it copies row by row
    out.probabilities.emplace(name, carrier.probs.subset(rows));
  }
  for (const auto& [name, carrier] : feats) {
    auto rows = detail::rows_in_canonical_order(canonical, carrier.ids,
                                                "modality '" + name + "'");
    Matrix m(rows.size(), carrier.features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = carrier.features.row(rows[r]);
      std::copy(src.begin(), src.end(), m.row(r).begin());
    }
    out.features.emplace(name, std::move(m));
  }
  if (labels) {
    auto rows = detail::rows_in_canonical_order(canonical, labels->ids, "labels");
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) {
      int y = labels->labels[r];
      require(y >= 0, "align_modalities: negative label");
      out.labels.push_back(y);
    }
    if (!out.probabilities.empty()) {
      int c = static_cast<int>(out.n_classes());
      for (int y : out.labels)
        require(y < c, "align_modalities: label " + std::to_string(y) +
                           " out of range for C=" + std::to_string(c));
    }
  }
  return out;
}

/// Per-column mean/stddev fitted on one matrix (training data) and applied
/// to others. Feature files arrive on arbitrary scales; heads that consume
/// them train on standardized columns.
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static ColumnStats fit(const Matrix& m) {
    require(m.rows() > 0, "ColumnStats: empty matrix");
    ColumnStats s;
    s.mean.assign(m.cols(), 0.0);
    s.stddev.assign(m.cols(), 0.0);
    const auto n = static_cast<double>(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) s.mean[j] += m(i, j) / n;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) {
        double d = m(i, j) - s.mean[j];
        s.stddev[j] += d * d / n;
      }
    for (double& v : s.stddev) v = v > 0.0 ? std::sqrt(v) : 1.0;
    return s;
  }

  Matrix apply(const Matrix& m) const {
    require(m.cols() == mean.size(), "ColumnStats: column count mismatch");
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        out(i, j) = (m(i, j) - mean[j]) / stddev[j];
    return out;
  }
};

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

/// Random disjoint train/validation split; train gets floor(fraction * N)
/// samples, the remainder goes to validation. Deterministic in the seed.
inline std::pair<AlignedDataset, AlignedDataset> split_train_val(
    const AlignedDataset& dataset, const SplitSpec& spec) {
  require(dataset.has_labels(), "split_train_val: labels required");
  require(dataset.size() >= 2, "split_train_val: need at least 2 samples");
  require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
          "split_train_val: train_fraction must be in (0,1)");

  const std::size_t n = dataset.size();
  const auto train_size = static_cast<std::size_t>(
      std::floor(spec.train_fraction * static_cast<double>(n)));

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  SplitMix64 rng(spec.seed);
  rng.shuffle(perm);

  std::vector<std::size_t> train_rows(perm.begin(), perm.begin() + train_size);
  std::vector<std::size_t> val_rows(perm.begin() + train_size, perm.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  return {dataset.subset(train_rows), dataset.subset(val_rows)};
}

/// Per-sample fold indices for k-fold cross-validation. Fold sizes differ
/// by at most one; under stratification the same holds per class.
struct FoldAssignment {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;
  std::uint64_t seed = 0;
  bool stratified = true;

  std::vector<std::size_t> fold_indices(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
      if (fold_of[i] == f) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> complement_indices(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
      if (fold_of[i] != f) out.push_back(i);
    return out;
  }

  friend bool operator==(const FoldAssignment& a, const FoldAssignment& b) {
    return a.n == b.n && a.k == b.k && a.fold_of == b.fold_of &&
           a.seed == b.seed && a.stratified == b.stratified;
  }
};

/// Stratified dealing walks classes in ascending order with one continuous
/// round-robin cursor, so both the global and the per-class fold counts
/// stay within one of each other.
inline FoldAssignment make_folds(const std::vector<int>& labels, std::size_t k,
                                 std::uint64_t seed, bool stratified = true) {
  const std::size_t n = labels.size();
  require(k >= 2, "make_folds: k must be >= 2");
  require(k <= n, "make_folds: k exceeds sample count");

  FoldAssignment fa;
  fa.n = n;
  fa.k = k;
  fa.seed = seed;
  fa.stratified = stratified;
  fa.fold_of.assign(n, 0);

  SplitMix64 rng(seed);
  if (!stratified) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t i = 0; i < n; ++i) fa.fold_of[perm[i]] = i % k;
    return fa;
  }

  int n_classes = 0;
  for (int y : labels) {
    require(y >= 0, "make_folds: negative label");
    n_classes = std::max(n_classes, y + 1);
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  for (int c = 0; c < n_classes; ++c)
    require(!by_class[static_cast<std::size_t>(c)].empty(),
            "make_folds: class " + std::to_string(c) + " has no samples");

  std::size_t cursor = 0;
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t idx : members) fa.fold_of[idx] = cursor++ % k;
  }
  return fa;
}

}  // namespace latefuse

#endif  // LATEFUSE_DATAIO_HPP
