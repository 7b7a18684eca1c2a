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

#ifndef LATEFUSE_METRICS_HPP
#define LATEFUSE_METRICS_HPP

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

/// C x C count matrix; entry (i, j) counts samples with true class i
/// predicted as class j.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t operator()(std::size_t true_c, std::size_t pred_c) const {
    return counts[true_c * n_classes + pred_c];
  }
  std::uint64_t& operator()(std::size_t true_c, std::size_t pred_c) {
    return counts[true_c * n_classes + pred_c];
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& preds,
                                 const std::vector<int>& labels,
                                 std::size_t n_classes) {
  require(preds.size() == labels.size(), "confusion: length mismatch");
  require(n_classes >= 1, "confusion: need at least one class");
  ConfusionMatrix cm;
  cm.n_classes = n_classes;
  cm.counts.assign(n_classes * n_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    int p = preds[i], y = labels[i];
    require(p >= 0 && static_cast<std::size_t>(p) < n_classes,
            "confusion: prediction out of range");
    require(y >= 0 && static_cast<std::size_t>(y) < n_classes,
            "confusion: label out of range");
    ++cm(static_cast<std::size_t>(y), static_cast<std::size_t>(p));
  }
  return cm;
}

/// Unweighted mean of per-class F1 over all configured classes. Any 0/0 —
/// in precision, recall, or the F1 denominator — counts as 0, so classes
/// with no support and no predictions pull the average down.
inline double macro_f1(const ConfusionMatrix& cm) {
  const std::size_t c = cm.n_classes;
  double sum_f1 = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t tp = cm(k, k);
    std::uint64_t fn = 0, fp = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j != k) {
        fn += cm(k, j);
        fp += cm(j, k);
      }
    }
    double precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    sum_f1 += f1;
  }
  return sum_f1 / static_cast<double>(c);
}

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                       std::size_t n_classes) {
  return macro_f1(confusion(preds, labels, n_classes));
}

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  require(preds.size() == labels.size(), "accuracy: length mismatch");
  require(!preds.empty(), "accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Plain-text evaluation report: one `name value` line per metric at six
/// decimal places, then the confusion matrix.
inline std::string format_evaluation(
    const std::vector<std::pair<std::string, double>>& metrics,
    const ConfusionMatrix* cm = nullptr) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  for (const auto& [name, value] : metrics) out << name << " " << value << "\n";
  if (cm != nullptr) {
    out << "confusion_matrix " << cm->n_classes << " " << cm->n_classes << "\n";
    for (std::size_t i = 0; i < cm->n_classes; ++i) {
      for (std::size_t j = 0; j < cm->n_classes; ++j) {
        if (j) out << " ";
        out << (*cm)(i, j);
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace latefuse

#endif  // LATEFUSE_METRICS_HPP
