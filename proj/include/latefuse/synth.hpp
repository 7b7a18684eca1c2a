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

#ifndef LATEFUSE_SYNTH_HPP
#define LATEFUSE_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "latefuse/core.hpp"
#include "latefuse/csv.hpp"
#include "latefuse/dataio.hpp"
#include "latefuse/metrics.hpp"
#include "latefuse/rng.hpp"

// Synthetic multimodal datasets with known ground truth. Each sample draws
// a true class from imbalanced priors; each modality perceives it through a
// confusion matrix and emits a Dirichlet-concentrated probability row plus
// a jittered logit feature row. A Monte Carlo Bayes oracle bounds what any
// classifier (unimodal or fused) can achieve on a given config.

namespace latefuse {

struct ModalityModel {
  std::string name;
  Matrix confusion;    // C x C row-stochastic perception matrix
  double kappa = 12.0;  // concentration toward the perceived class profile
  double alpha0 = 0.5;  // base Dirichlet concentration
};

struct GeneratorConfig {
  std::size_t n_samples = 0;
  std::size_t n_classes = 27;
  std::vector<double> class_priors;   // defaults to ~13.4x imbalance
  std::size_t n_groups = 4;
  std::vector<std::size_t> group_of;  // class -> top-level group
  std::vector<ModalityModel> modalities;
  double label_noise_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Geometric ramp of priors with a 10209/764 (~13.4x) spread between the
/// most and least frequent classes.
inline std::vector<double> default_class_priors(std::size_t n_classes) {
  require(n_classes >= 1, "default_class_priors: need at least one class");
  const double ratio = 10209.0 / 764.0;
  std::vector<double> priors(n_classes);
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    double t = n_classes == 1 ? 0.0
                              : static_cast<double>(c) / static_cast<double>(n_classes - 1);
    priors[c] = std::pow(ratio, t);
    total += priors[c];
  }
  for (double& p : priors) p /= total;
  return priors;
}

/// Near-equal contiguous class blocks, one per group.
inline std::vector<std::size_t> default_group_map(std::size_t n_classes, std::size_t n_groups) {
  require(n_groups >= 1 && n_groups <= n_classes, "default_group_map: bad group count");
  std::vector<std::size_t> group_of(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) group_of[c] = c * n_groups / n_classes;
  return group_of;
}

namespace detail {

inline void validate_generator_config(const GeneratorConfig& cfg) {
  require(cfg.n_samples >= 1, "GeneratorConfig: n_samples must be >= 1");
  require(cfg.n_classes >= 2, "GeneratorConfig: need at least 2 classes");
  require(cfg.class_priors.size() == cfg.n_classes, "GeneratorConfig: prior count mismatch");
  double total = 0.0;
  for (double p : cfg.class_priors) {
    require(p >= 0.0, "GeneratorConfig: negative prior");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-6, "GeneratorConfig: priors must sum to 1");
  require(cfg.group_of.size() == cfg.n_classes, "GeneratorConfig: group map size mismatch");
  for (std::size_t g : cfg.group_of)
    require(g < cfg.n_groups, "GeneratorConfig: group index out of range");
  require(!cfg.modalities.empty(), "GeneratorConfig: need at least one modality");
  for (const auto& m : cfg.modalities) {
    require(!m.name.empty(), "GeneratorConfig: modality needs a name");
    require(m.kappa > 0.0 && m.alpha0 > 0.0, "GeneratorConfig: kappa and alpha0 must be positive");
    require(m.confusion.rows() == cfg.n_classes && m.confusion.cols() == cfg.n_classes,
            "GeneratorConfig: confusion matrix must be C x C");
    for (std::size_t r = 0; r < cfg.n_classes; ++r) {
      double row_sum = 0.0;
      for (double v : m.confusion.row(r)) {
        require(v >= 0.0, "GeneratorConfig: negative confusion entry");
        row_sum += v;
      }
      require(std::abs(row_sum - 1.0) <= 1e-6, "GeneratorConfig: confusion rows must sum to 1");
    }
  }
  require(cfg.label_noise_rate >= 0.0 && cfg.label_noise_rate < 1.0,
          "GeneratorConfig: label_noise_rate must be in [0,1)");
}

inline std::size_t draw_categorical(SplitMix64& rng, std::span<const double> probs) {
  double u = rng.u01();
  double cum = 0.0;
  for (std::size_t c = 0; c + 1 < probs.size(); ++c) {
    cum += probs[c];
    if (u < cum) return c;
  }
  return probs.size() - 1;
}

inline std::string sample_id(std::size_t i, std::size_t width) {
  std::string digits = std::to_string(i);
  return "s" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace detail

/// Default two-modality preset: the image-like modality mostly confuses
/// subclasses within the four top-level groups, the text-like modality is
/// globally stronger but errs anywhere. The group signal in one and the
/// global signal in the other leave headroom that only fusion can use.
inline GeneratorConfig complementary_preset(std::size_t n_samples, std::size_t n_classes = 27,
                                            double label_noise_rate = 0.0,
                                            std::uint64_t seed = 0) {
  GeneratorConfig cfg;
  cfg.n_samples = n_samples;
  cfg.n_classes = n_classes;
  cfg.class_priors = default_class_priors(n_classes);
  cfg.n_groups = std::min<std::size_t>(4, n_classes);
  cfg.group_of = default_group_map(n_classes, cfg.n_groups);
  cfg.label_noise_rate = label_noise_rate;
  cfg.seed = seed;

  std::vector<std::size_t> group_size(cfg.n_groups, 0);
  for (std::size_t g : cfg.group_of) ++group_size[g];

  ModalityModel image;
  image.name = "image";
  image.kappa = 30.0;
  image.alpha0 = 0.25;
  image.confusion = Matrix(n_classes, n_classes);
  for (std::size_t y = 0; y < n_classes; ++y) {
    const std::size_t g = cfg.group_of[y];
    const auto in_group = static_cast<double>(group_size[g] - 1);
    const auto out_group = static_cast<double>(n_classes - group_size[g]);
    for (std::size_t z = 0; z < n_classes; ++z) {
      if (z == y) image.confusion(y, z) = 0.30;
      else if (cfg.group_of[z] == g) image.confusion(y, z) = in_group > 0 ? 0.66 / in_group : 0.0;
      else image.confusion(y, z) = out_group > 0 ? 0.04 / out_group : 0.0;
    }
    if (in_group == 0) image.confusion(y, y) += 0.66;      // singleton group
    if (out_group == 0) image.confusion(y, y) += 0.04;
  }

  ModalityModel text;
  text.name = "text";
  text.kappa = 30.0;
  text.alpha0 = 0.25;
  text.confusion = Matrix(n_classes, n_classes);
  for (std::size_t y = 0; y < n_classes; ++y)
    for (std::size_t z = 0; z < n_classes; ++z)
      text.confusion(y, z) = z == y ? 0.75 : 0.25 / static_cast<double>(n_classes - 1);

  cfg.modalities = {std::move(image), std::move(text)};
  return cfg;
}

struct SyntheticDataset {
  AlignedDataset data;                  // observed labels + probs + features
  std::vector<int> true_labels;         // row-aligned hidden truth
  std::vector<std::string> flipped_ids;
};

/// Draws the dataset. Every sample's randomness comes from its own
/// counter-based stream derived from (seed, sample, modality), so output
/// is independent of generation order.
inline SyntheticDataset generate(const GeneratorConfig& cfg) {
  detail::validate_generator_config(cfg);
  const std::size_t n = cfg.n_samples;
  const std::size_t c = cfg.n_classes;
  const std::size_t width = std::to_string(n - 1).size();

  SyntheticDataset out;
  out.data.ids.resize(n);
  out.data.labels.resize(n);
  out.true_labels.resize(n);

  std::vector<Matrix> probs(cfg.modalities.size(), Matrix(n, c));
  std::vector<Matrix> feats(cfg.modalities.size(), Matrix(n, c));

  for (std::size_t i = 0; i < n; ++i) {
    out.data.ids[i] = detail::sample_id(i, width);

    SplitMix64 label_rng(derive_seed(cfg.seed, i, 0));
    auto y = static_cast<int>(detail::draw_categorical(label_rng, cfg.class_priors));
    out.true_labels[i] = y;
    int observed = y;
    if (cfg.label_noise_rate > 0.0 && label_rng.u01() < cfg.label_noise_rate) {
      auto other = label_rng.uniform_below(c - 1);
      observed = static_cast<int>(other >= static_cast<std::uint64_t>(y) ? other + 1 : other);
      out.flipped_ids.push_back(out.data.ids[i]);
    }
    out.data.labels[i] = observed;

    for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
      const auto& modality = cfg.modalities[m];
      SplitMix64 rng(derive_seed(cfg.seed, i, m + 1));
      std::size_t z = detail::draw_categorical(rng, modality.confusion.row(static_cast<std::size_t>(y)));
      std::vector<double> alphas(c);
      for (std::size_t k = 0; k < c; ++k)
        alphas[k] = modality.alpha0 + modality.kappa * modality.confusion(z, k);
      auto row = rng.dirichlet(alphas);
      for (std::size_t k = 0; k < c; ++k) {
        probs[m](i, k) = row[k];
        double p = std::clamp(row[k], 1e-12, 1.0 - 1e-12);
        feats[m](i, k) = std::log(p / (1.0 - p)) + 0.1 * rng.normal();
      }
    }
  }

  for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
    out.data.probabilities.emplace(cfg.modalities[m].name,
                                   ProbabilityMatrix(std::move(probs[m])));
    out.data.features.emplace(cfg.modalities[m].name, std::move(feats[m]));
  }
  return out;
}

/// Writes the dataio CSV formats plus the test-only truth file
/// `id,true_label,flipped`.
inline void save_synthetic_dataset(const std::filesystem::path& dir,
                                   const SyntheticDataset& synth) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, probs] : synth.data.probabilities)
    save_probability_matrix(dir / (name + "_probs.csv"), synth.data.ids, probs);
  for (const auto& [name, feats] : synth.data.features)
    save_feature_csv(dir / (name + "_features.csv"), synth.data.ids, feats);
  save_label_csv(dir / "labels.csv", synth.data.ids, synth.data.labels);

  std::ostringstream truth;
  truth << "id,true_label,flipped\n";
  std::set<std::string> flipped(synth.flipped_ids.begin(), synth.flipped_ids.end());
  for (std::size_t i = 0; i < synth.data.ids.size(); ++i)
    truth << synth.data.ids[i] << ',' << synth.true_labels[i] << ','
          << (flipped.count(synth.data.ids[i]) ? 1 : 0) << "\n";
  detail::write_file(dir / "truth.csv", truth.str());
}

struct OracleEstimate {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double std_error = 0.0;
};

struct OracleResult {
  std::map<std::string, OracleEstimate> unimodal;
  OracleEstimate fused;
  std::size_t n_mc = 0;
};

namespace detail {

// Per-modality cached Dirichlet parameters for each perceived class z.
struct ModalityLikelihood {
  std::vector<std::vector<double>> alphas;  // per z
  std::vector<double> log_norm;             // log B(alpha(z))
  const Matrix* confusion = nullptr;

  explicit ModalityLikelihood(const ModalityModel& m, std::size_t c) : confusion(&m.confusion) {
    alphas.resize(c);
    log_norm.resize(c);
    for (std::size_t z = 0; z < c; ++z) {
      alphas[z].resize(c);
      double alpha_sum = 0.0;
      double lg_sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        alphas[z][k] = m.alpha0 + m.kappa * (*confusion)(z, k);
        alpha_sum += alphas[z][k];
        lg_sum += std::lgamma(alphas[z][k]);
      }
      log_norm[z] = lg_sum - std::lgamma(alpha_sum);
    }
  }

  // log p(row | true class y) = logsumexp_z log Q[y,z] + log Dir(row; alpha(z))
  double log_likelihood(std::span<const double> log_row, std::size_t y) const {
    const std::size_t c = alphas.size();
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(c);
    for (std::size_t z = 0; z < c; ++z) {
      double q = (*confusion)(y, z);
      if (q <= 0.0) continue;
      double ll = std::log(q) - log_norm[z];
      for (std::size_t k = 0; k < c; ++k) ll += (alphas[z][k] - 1.0) * log_row[k];
      terms.push_back(ll);
      best = std::max(best, ll);
    }
    require(!terms.empty(), "bayes_oracle: class with no perception support");
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - best);
    return best + std::log(sum);
  }
};

inline OracleEstimate summarize(const std::vector<int>& preds, const std::vector<int>& truth,
                                std::size_t c) {
  OracleEstimate e;
  e.accuracy = accuracy(preds, truth);
  e.macro_f1 = macro_f1(preds, truth, c);
  e.std_error = std::sqrt(e.accuracy * (1.0 - e.accuracy) / static_cast<double>(preds.size()));
  return e;
}

}  // namespace detail

/// Monte Carlo estimate of the exact-posterior argmax accuracy for each
/// modality alone and for all modalities jointly (independent given the
/// true class). This is the ceiling any trained classifier can approach on
/// data from this config.
inline OracleResult bayes_oracle(const GeneratorConfig& cfg, std::size_t n_mc) {
  detail::validate_generator_config(cfg);
  require(n_mc >= 1000, "bayes_oracle: n_mc must be >= 1000");
  const std::size_t c = cfg.n_classes;
  const std::size_t m = cfg.modalities.size();

  std::vector<detail::ModalityLikelihood> likelihoods;
  likelihoods.reserve(m);
  for (const auto& modality : cfg.modalities) likelihoods.emplace_back(modality, c);

  std::vector<double> log_prior(c);
  for (std::size_t k = 0; k < c; ++k)
    log_prior[k] = cfg.class_priors[k] > 0.0 ? std::log(cfg.class_priors[k])
                                             : -std::numeric_limits<double>::infinity();

  std::vector<int> truth(n_mc);
  std::vector<std::vector<int>> uni_preds(m, std::vector<int>(n_mc));
  std::vector<int> fused_preds(n_mc);

  for (std::size_t i = 0; i < n_mc; ++i) {
    SplitMix64 label_rng(derive_seed(cfg.seed, i, 0x1000));
    auto y = detail::draw_categorical(label_rng, cfg.class_priors);
    truth[i] = static_cast<int>(y);

    std::vector<double> fused_score(log_prior);
    for (std::size_t j = 0; j < m; ++j) {
      const auto& modality = cfg.modalities[j];
      SplitMix64 rng(derive_seed(cfg.seed, i, 0x1001 + j));
      std::size_t z = detail::draw_categorical(rng, modality.confusion.row(y));
      std::vector<double> alphas(c);
      for (std::size_t k = 0; k < c; ++k)
        alphas[k] = modality.alpha0 + modality.kappa * modality.confusion(z, k);
      auto row = rng.dirichlet(alphas);
      std::vector<double> log_row(c);
      for (std::size_t k = 0; k < c; ++k)
        log_row[k] = std::log(std::max(row[k], 1e-300));

      std::vector<double> score(c);
      for (std::size_t cand = 0; cand < c; ++cand) {
        double ll = likelihoods[j].log_likelihood(log_row, cand);
        score[cand] = log_prior[cand] + ll;
        fused_score[cand] += ll;
      }
      uni_preds[j][i] = static_cast<int>(argmax(score));
    }
    fused_preds[i] = static_cast<int>(argmax(fused_score));
  }

  OracleResult result;
  result.n_mc = n_mc;
  for (std::size_t j = 0; j < m; ++j)
    result.unimodal.emplace(cfg.modalities[j].name, detail::summarize(uni_preds[j], truth, c));
  result.fused = detail::summarize(fused_preds, truth, c);
  return result;
}

}  // namespace latefuse

#endif  // LATEFUSE_SYNTH_HPP
