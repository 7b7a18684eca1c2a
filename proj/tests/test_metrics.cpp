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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "latefuse/metrics.hpp"
#include "latefuse/rng.hpp"

using namespace latefuse;

namespace {

// Independent oracle: per-class precision/recall computed directly from the
// raw vectors, never touching ConfusionMatrix.
double brute_force_macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                            std::size_t c) {
  double total = 0.0;
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      bool p = preds[i] == static_cast<int>(cls);
      bool y = labels[i] == static_cast<int>(cls);
      if (p && y) ++tp;
      if (p && !y) ++fp;
      if (!p && y) ++fn;
    }
    double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
    double recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
    double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    total += f1;
  }
  return total / static_cast<double>(c);
}

}  // namespace

TEST_CASE("confusion counts truth rows against prediction columns") {
  auto perfect = confusion({0, 1}, {0, 1}, 2);
  CHECK(perfect(0, 0) == 1);
  CHECK(perfect(1, 1) == 1);
  CHECK(perfect(0, 1) == 0);

  auto swapped = confusion({1, 0}, {0, 1}, 2);
  CHECK(swapped(0, 1) == 1);
  CHECK(swapped(1, 0) == 1);
  CHECK(swapped(0, 0) == 0);

  auto mixed = confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
  CHECK(mixed(0, 0) == 1);
  CHECK(mixed(0, 1) == 1);
  CHECK(mixed(1, 0) == 0);
  CHECK(mixed(1, 1) == 2);
  CHECK(mixed.total() == 4);
}

TEST_CASE("confusion rejects bad inputs") {
  CHECK_THROWS_AS(confusion({0}, {0, 1}, 2), Error);
  CHECK_THROWS_AS(confusion({2}, {0}, 2), Error);
  CHECK_THROWS_AS(confusion({0}, {-1}, 2), Error);
}

TEST_CASE("macro_f1 matches hand-derived values") {
  CHECK(macro_f1({0, 1, 2}, {0, 1, 2}, 3) == 1.0);
  // per-class F1: 2/3 and 4/5 -> mean 11/15
  CHECK(std::abs(macro_f1({0, 1, 1, 1}, {0, 0, 1, 1}, 2) - 11.0 / 15.0) < 1e-12);
  // all predictions class 0 versus labels [0,1]: F1 = (2/3 + 0) / 2
  CHECK(std::abs(macro_f1({0, 0}, {0, 1}, 2) - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("macro_f1 zero-division convention fills empty classes with 0") {
  // class 2 has no support and no predictions -> F1 contribution 0
  CHECK(std::abs(macro_f1({0, 1}, {0, 1}, 3) - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("accuracy") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({1, 1}, {2, 2}) == 0.0);
  CHECK(accuracy({0, 1, 1, 0}, {0, 1, 1, 1}) == 0.75);
  CHECK_THROWS_AS(accuracy({0}, {0, 1}), Error);
}

TEST_CASE("macro_f1 properties on random cases") {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t c = 2 + rng.uniform_below(6);
    std::size_t n = 5 + rng.uniform_below(60);
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.uniform_below(c));
      labels[i] = static_cast<int>(rng.uniform_below(c));
    }
    double score = macro_f1(preds, labels, c);
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);

    // equals the brute-force P/R oracle
    CHECK(score == Catch::Approx(brute_force_macro_f1(preds, labels, c)).margin(1e-14));

    // and the confusion-matrix route
    CHECK(score == macro_f1(confusion(preds, labels, c)));

    // invariant under simultaneous sample permutation
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<int> p2(n), l2(n);
    for (std::size_t i = 0; i < n; ++i) {
      p2[i] = preds[perm[i]];
      l2[i] = labels[perm[i]];
    }
    CHECK(macro_f1(p2, l2, c) == score);

    // invariant under class relabeling applied to both sides
    std::vector<int> relabel(c);
    std::iota(relabel.begin(), relabel.end(), 0);
    rng.shuffle(relabel);
    for (std::size_t i = 0; i < n; ++i) {
      p2[i] = relabel[static_cast<std::size_t>(preds[i])];
      l2[i] = relabel[static_cast<std::size_t>(labels[i])];
    }
    CHECK(macro_f1(p2, l2, c) == Catch::Approx(score).margin(1e-14));
  }
}

TEST_CASE("format_evaluation uses six decimal places") {
  auto cm = confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
  std::string text = format_evaluation({{"macro_f1", macro_f1(cm)}}, &cm);
  CHECK(text.find("macro_f1 0.733333\n") != std::string::npos);
  CHECK(text.find("confusion_matrix 2 2\n") != std::string::npos);
  CHECK(text.find("1 1\n") != std::string::npos);
  CHECK(text.find("0 2\n") != std::string::npos);
}
