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

#include <filesystem>
#include <set>

#include "latefuse/csv.hpp"
#include "latefuse/synth.hpp"

using namespace latefuse;

namespace {

GeneratorConfig identity_config(std::size_t n, std::size_t c, double kappa,
                                std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_samples = n;
  cfg.n_classes = c;
  cfg.class_priors.assign(c, 1.0 / static_cast<double>(c));
  cfg.n_groups = 1;
  cfg.group_of.assign(c, 0);
  cfg.seed = seed;
  ModalityModel m;
  m.name = "m";
  m.kappa = kappa;
  m.alpha0 = 0.05;
  m.confusion = Matrix(c, c);
  for (std::size_t y = 0; y < c; ++y) m.confusion(y, y) = 1.0;
  cfg.modalities = {m};
  return cfg;
}

}  // namespace

TEST_CASE("default priors carry a 13.4x class imbalance") {
  auto priors = default_class_priors(27);
  double total = 0.0, lo = 1.0, hi = 0.0;
  for (double p : priors) {
    total += p;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  CHECK(total == Catch::Approx(1.0).margin(1e-12));
  CHECK(hi / lo == Catch::Approx(10209.0 / 764.0).margin(1e-9));
}

TEST_CASE("default group map partitions classes near-evenly") {
  auto groups = default_group_map(27, 4);
  std::vector<std::size_t> sizes(4, 0);
  for (auto g : groups) ++sizes[g];
  std::multiset<std::size_t> ms(sizes.begin(), sizes.end());
  CHECK(ms == std::multiset<std::size_t>{6, 7, 7, 7});
}

TEST_CASE("generate with zero noise keeps observed labels true") {
  auto cfg = complementary_preset(500, 9, 0.0, 3);
  auto synth = generate(cfg);
  CHECK(synth.flipped_ids.empty());
  CHECK(synth.data.labels == synth.true_labels);
  CHECK(synth.data.probabilities.size() == 2);
  CHECK(synth.data.features.size() == 2);
  CHECK(synth.data.size() == 500);
}

TEST_CASE("flipped samples differ from their true labels") {
  auto cfg = complementary_preset(2000, 9, 0.25, 5);
  auto synth = generate(cfg);
  std::set<std::string> flipped(synth.flipped_ids.begin(), synth.flipped_ids.end());
  REQUIRE(!flipped.empty());
  for (std::size_t i = 0; i < synth.data.size(); ++i) {
    if (flipped.count(synth.data.ids[i])) {
      CHECK(synth.data.labels[i] != synth.true_labels[i]);
    } else {
      CHECK(synth.data.labels[i] == synth.true_labels[i]);
    }
  }
}

TEST_CASE("flip count concentrates around the binomial mean") {
  auto cfg = complementary_preset(10000, 27, 0.10, 11);
  auto synth = generate(cfg);
  auto flips = static_cast<double>(synth.flipped_ids.size());
  // 3 sigma of Binomial(10000, 0.1): sigma = 30
  CHECK(std::abs(flips - 1000.0) <= 90.0);
}

TEST_CASE("large kappa with identity perception approaches one-hot rows") {
  auto cfg = identity_config(300, 6, 400.0, 7);
  auto synth = generate(cfg);
  const auto& probs = synth.data.probabilities.at("m");
  std::size_t hits = 0;
  double mass = 0.0;
  for (std::size_t i = 0; i < probs.n_samples(); ++i) {
    auto y = static_cast<std::size_t>(synth.true_labels[i]);
    mass += probs(i, y);
    hits += argmax(probs.row(i)) == y;
  }
  CHECK(mass / 300.0 > 0.95);
  CHECK(static_cast<double>(hits) / 300.0 > 0.99);
}

TEST_CASE("generation is deterministic in the seed") {
  auto cfg = complementary_preset(300, 9, 0.1, 21);
  auto a = generate(cfg);
  auto b = generate(cfg);
  CHECK(a.data == b.data);
  CHECK(a.true_labels == b.true_labels);
  CHECK(a.flipped_ids == b.flipped_ids);

  cfg.seed = 22;
  auto c = generate(cfg);
  CHECK_FALSE(a.data == c.data);
}

TEST_CASE("generator validates its config") {
  auto cfg = complementary_preset(100, 9, 0.0, 1);
  cfg.class_priors[0] += 0.5;
  CHECK_THROWS_AS(generate(cfg), Error);

  auto cfg2 = complementary_preset(100, 9, 0.0, 1);
  cfg2.label_noise_rate = 1.0;
  CHECK_THROWS_AS(generate(cfg2), Error);

  auto cfg3 = complementary_preset(100, 9, 0.0, 1);
  cfg3.modalities[0].kappa = 0.0;
  CHECK_THROWS_AS(generate(cfg3), Error);
}

TEST_CASE("synthetic datasets round-trip through the CSV formats") {
  auto dir = std::filesystem::temp_directory_path() / "latefuse_synth_tests";
  auto cfg = complementary_preset(60, 5, 0.2, 13);
  auto synth = generate(cfg);
  save_synthetic_dataset(dir, synth);

  auto probs = load_probability_matrix(dir / "image_probs.csv", 5);
  CHECK(probs.ids == synth.data.ids);
  CHECK(probs.probs == synth.data.probabilities.at("image"));

  auto labels = load_label_csv(dir / "labels.csv");
  CHECK(labels.labels == synth.data.labels);

  auto truth_lines = load_lines(dir / "truth.csv");
  REQUIRE(truth_lines.size() == 61);
  CHECK(truth_lines[0] == "id,true_label,flipped");
}

TEST_CASE("bayes oracle closed forms") {
  SECTION("uniform perception reduces to the prior") {
    GeneratorConfig cfg;
    cfg.n_samples = 10;
    cfg.n_classes = 4;
    cfg.class_priors = {0.1, 0.2, 0.3, 0.4};
    cfg.n_groups = 1;
    cfg.group_of.assign(4, 0);
    cfg.seed = 50;
    ModalityModel m;
    m.name = "m";
    m.kappa = 10.0;
    m.alpha0 = 0.5;
    m.confusion = Matrix(4, 4);
    for (auto& v : m.confusion.data()) v = 0.25;
    cfg.modalities = {m};

    auto oracle = bayes_oracle(cfg, 4000);
    // posterior equals the prior for every row: accuracy = max prior
    CHECK(std::abs(oracle.unimodal.at("m").accuracy - 0.4) <=
          3.0 * oracle.unimodal.at("m").std_error + 1e-9);
    CHECK(oracle.fused.accuracy == oracle.unimodal.at("m").accuracy);
  }
  SECTION("identity perception with huge kappa is nearly perfect") {
    auto cfg = identity_config(10, 5, 500.0, 8);
    auto oracle = bayes_oracle(cfg, 2000);
    CHECK(oracle.unimodal.at("m").accuracy > 0.99);
  }
  SECTION("n_mc below 1000 is rejected") {
    auto cfg = identity_config(10, 5, 50.0, 8);
    CHECK_THROWS_AS(bayes_oracle(cfg, 999), Error);
  }
}

TEST_CASE("complementary preset leaves fusion headroom") {
  auto cfg = complementary_preset(1000, 27, 0.0, 1);
  auto oracle = bayes_oracle(cfg, 12000);
  double best_uni = 0.0;
  for (const auto& [name, est] : oracle.unimodal) best_uni = std::max(best_uni, est.accuracy);
  // fusing both modalities beats the best single one by at least 2 points
  CHECK(oracle.fused.accuracy >= best_uni + 0.02);
  // and never loses to it beyond Monte Carlo error
  CHECK(oracle.fused.accuracy >= best_uni - 3.0 * oracle.fused.std_error);
  // the image-like modality is the weak one
  CHECK(oracle.unimodal.at("image").accuracy < oracle.unimodal.at("text").accuracy);
}
