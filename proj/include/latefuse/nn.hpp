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

#ifndef LATEFUSE_NN_HPP
#define LATEFUSE_NN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latefuse/core.hpp"
#include "latefuse/csv.hpp"
#include "latefuse/dataio.hpp"
#include "latefuse/metrics.hpp"
#include "latefuse/rng.hpp"

// Shallow feed-forward classifiers trained from scratch: the decision-level
// fusion policy nets, the base classifier used for noise detection, and the
// feature-fusion head. One optional rectifier hidden layer, softmax output,
// analytic backprop, Adam or SGD.

namespace latefuse {

inline constexpr std::size_t kDefaultHiddenDim = 6;

struct NetworkLayout {
  std::size_t input_dim = 0;
  std::optional<std::size_t> hidden_dim;  // nullopt: single linear-softmax layer
  std::size_t output_dim = 0;

  std::size_t n_layers() const { return hidden_dim ? 2 : 1; }
  friend bool operator==(const NetworkLayout&, const NetworkLayout&) = default;
};

/// Affine layers stored as (out x in) weight matrices plus bias vectors.
struct Network {
  NetworkLayout layout;
  std::uint64_t init_seed = 0;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.rows() * w.cols();
    for (const auto& b : biases) n += b.size();
    return n;
  }
  friend bool operator==(const Network&, const Network&) = default;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

namespace detail {

inline void check_layout(const NetworkLayout& layout) {
  require(layout.input_dim >= 1 && layout.output_dim >= 1,
          "NetworkLayout: dimensions must be >= 1");
  if (layout.hidden_dim) require(*layout.hidden_dim >= 1, "NetworkLayout: hidden_dim must be >= 1");
}

inline std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const NetworkLayout& l) {
  if (l.hidden_dim) return {{*l.hidden_dim, l.input_dim}, {l.output_dim, *l.hidden_dim}};
  return {{l.output_dim, l.input_dim}};
}

// out(i,o) = b[o] + sum_d x(i,d) * w(o,d)
inline Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  Matrix out(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    auto oi = out.row(i);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      auto wo = w.row(o);
      double acc = b[o];
      for (std::size_t d = 0; d < wo.size(); ++d) acc += xi[d] * wo[d];
      oi[o] = acc;
    }
  }
  return out;
}

struct ForwardPass {
  Matrix hidden_pre;  // empty for 1-layer nets
  Matrix hidden;
  Matrix log_probs;  // N x C
};

inline ForwardPass run_forward(const Network& net, const Matrix& inputs) {
  require(inputs.cols() == net.layout.input_dim, "forward: input dimension mismatch");
  for (double v : inputs.data()) require(std::isfinite(v), "forward: non-finite input");

  ForwardPass fp;
  const Matrix* pre_logits = &inputs;
  if (net.layout.hidden_dim) {
    fp.hidden_pre = affine(inputs, net.weights[0], net.biases[0]);
    fp.hidden = fp.hidden_pre;
    for (double& v : fp.hidden.data()) v = v > 0.0 ? v : 0.0;
    pre_logits = &fp.hidden;
  }
  Matrix logits = affine(*pre_logits, net.weights.back(), net.biases.back());
  for (double v : logits.data()) require(std::isfinite(v), "forward: logits overflowed");

  // log-softmax with max subtraction
  fp.log_probs = std::move(logits);
  for (std::size_t i = 0; i < fp.log_probs.rows(); ++i) {
    auto row = fp.log_probs.row(i);
    double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    for (double& v : row) v -= lse;
  }
  return fp;
}

}  // namespace detail

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases,
/// drawn from the seeded portable generator.
inline Network init_network(const NetworkLayout& layout, std::uint64_t seed) {
  detail::check_layout(layout);
  Network net;
  net.layout = layout;
  net.init_seed = seed;
  SplitMix64 rng(seed);
  for (auto [out_dim, in_dim] : detail::layer_shapes(layout)) {
    double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    Matrix w(out_dim, in_dim);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(out_dim, 0.0);
  }
  return net;
}

inline ProbabilityMatrix forward(const Network& net, const Matrix& inputs) {
  auto fp = detail::run_forward(net, inputs);
  Matrix probs = std::move(fp.log_probs);
  for (double& v : probs.data()) v = std::exp(v);
  return ProbabilityMatrix(std::move(probs));
}

inline std::vector<int> predict_classes(const Network& net, const Matrix& inputs) {
  auto fp = detail::run_forward(net, inputs);
  std::vector<int> preds(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i)
    preds[i] = static_cast<int>(argmax(fp.log_probs.row(i)));
  return preds;
}

inline double mean_cross_entropy(const Network& net, const Matrix& inputs,
                                 const std::vector<int>& labels) {
  require(inputs.rows() == labels.size(), "loss: batch size mismatch");
  require(!labels.empty(), "loss: empty batch");
  auto fp = detail::run_forward(net, inputs);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < net.layout.output_dim,
            "loss: label out of range");
    total -= fp.log_probs(i, static_cast<std::size_t>(y));
  }
  return total / static_cast<double>(labels.size());
}

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
  Matrix input_grads;  // filled only when requested
};

/// Mean cross-entropy and exact analytic gradients for every parameter.
/// Set with_input_grads to also get dLoss/dInput (used by the attention
/// fusion head, which backpropagates into its fused features).
inline LossAndGrad loss_and_grad(const Network& net, const Matrix& inputs,
                                 const std::vector<int>& labels,
                                 bool with_input_grads = false) {
  require(inputs.rows() == labels.size(), "loss_and_grad: batch size mismatch");
  require(!labels.empty(), "loss_and_grad: empty batch");
  const auto n = static_cast<double>(labels.size());
  const std::size_t c = net.layout.output_dim;

  auto fp = detail::run_forward(net, inputs);

  LossAndGrad out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < c, "loss_and_grad: label out of range");
    out.loss -= fp.log_probs(i, static_cast<std::size_t>(y));
  }
  out.loss /= n;

  // dLoss/dLogits = (softmax - onehot) / N
  Matrix dlogits(inputs.rows(), c);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (std::size_t k = 0; k < c; ++k)
      dlogits(i, k) = std::exp(fp.log_probs(i, k)) / n;
    dlogits(i, static_cast<std::size_t>(labels[i])) -= 1.0 / n;
  }

  out.grads.weights.resize(net.weights.size());
  out.grads.biases.resize(net.biases.size());

  const Matrix& last_in = net.layout.hidden_dim ? fp.hidden : inputs;
  const std::size_t last = net.weights.size() - 1;
  out.grads.weights[last] = Matrix(c, last_in.cols());
  out.grads.biases[last].assign(c, 0.0);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      double d = dlogits(i, k);
      out.grads.biases[last][k] += d;
      auto grow = out.grads.weights[last].row(k);
      auto in_row = last_in.row(i);
      for (std::size_t j = 0; j < in_row.size(); ++j) grow[j] += d * in_row[j];
    }
  }

  Matrix dinput_of_last;  // dLoss/d(input of last layer)
  bool need_back = net.layout.hidden_dim.has_value() || with_input_grads;
  if (need_back) {
    dinput_of_last = Matrix(inputs.rows(), last_in.cols());
    const Matrix& w_last = net.weights[last];
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      auto di = dinput_of_last.row(i);
      for (std::size_t k = 0; k < c; ++k) {
        double d = dlogits(i, k);
        auto wk = w_last.row(k);
        for (std::size_t j = 0; j < di.size(); ++j) di[j] += d * wk[j];
      }
    }
  }

  if (net.layout.hidden_dim) {
    // through the rectifier
    Matrix dpre = std::move(dinput_of_last);
    for (std::size_t idx = 0; idx < dpre.data().size(); ++idx)
      if (fp.hidden_pre.data()[idx] <= 0.0) dpre.data()[idx] = 0.0;

    const std::size_t h = *net.layout.hidden_dim;
    out.grads.weights[0] = Matrix(h, inputs.cols());
    out.grads.biases[0].assign(h, 0.0);
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      auto in_row = inputs.row(i);
      for (std::size_t u = 0; u < h; ++u) {
        double d = dpre(i, u);
        if (d == 0.0) continue;
        out.grads.biases[0][u] += d;
        auto grow = out.grads.weights[0].row(u);
        for (std::size_t j = 0; j < in_row.size(); ++j) grow[j] += d * in_row[j];
      }
    }
    if (with_input_grads) {
      out.input_grads = Matrix(inputs.rows(), inputs.cols());
      const Matrix& w0 = net.weights[0];
      for (std::size_t i = 0; i < inputs.rows(); ++i) {
        auto gi = out.input_grads.row(i);
        for (std::size_t u = 0; u < h; ++u) {
          double d = dpre(i, u);
          if (d == 0.0) continue;
          auto wu = w0.row(u);
          for (std::size_t j = 0; j < gi.size(); ++j) gi[j] += d * wu[j];
        }
      }
    }
  } else if (with_input_grads) {
    out.input_grads = std::move(dinput_of_last);
  }
  return out;
}

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
  // checkpoint metric is fixed: macro-F1 on the validation slice

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b;
  std::uint64_t step = 0;

  static AdamState like(const Network& net) {
    AdamState s;
    for (const auto& w : net.weights) {
      s.m_w.emplace_back(w.rows(), w.cols());
      s.v_w.emplace_back(w.rows(), w.cols());
    }
    for (const auto& b : net.biases) {
      s.m_b.emplace_back(b.size(), 0.0);
      s.v_b.emplace_back(b.size(), 0.0);
    }
    return s;
  }
};

namespace detail {

inline void adam_update(double& param, double& m, double& v, double g, double lr,
                        double beta1, double beta2, double eps, double bc1, double bc2) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  double m_hat = m / bc1;
  double v_hat = v / bc2;
  param -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace detail

/// One Adam step with bias correction, applied per parameter.
inline void adam_step(AdamState& state, Network& net, const Gradients& grads, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  require(state.m_w.size() == net.weights.size() && grads.weights.size() == net.weights.size(),
          "adam_step: layer count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    require(grads.weights[l].rows() == net.weights[l].rows() &&
                grads.weights[l].cols() == net.weights[l].cols() &&
                grads.biases[l].size() == net.biases[l].size(),
            "adam_step: gradient shape mismatch");
    auto& w = net.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i)
      detail::adam_update(w[i], state.m_w[l].data()[i], state.v_w[l].data()[i],
                          grads.weights[l].data()[i], lr, beta1, beta2, eps, bc1, bc2);
    for (std::size_t i = 0; i < net.biases[l].size(); ++i)
      detail::adam_update(net.biases[l][i], state.m_b[l][i], state.v_b[l][i],
                          grads.biases[l][i], lr, beta1, beta2, eps, bc1, bc2);
  }
}

inline void sgd_step(Network& net, const Gradients& grads, double lr) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto& w = net.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grads.weights[l].data()[i];
    for (std::size_t i = 0; i < net.biases[l].size(); ++i)
      net.biases[l][i] -= lr * grads.biases[l][i];
  }
}

struct EpochStats {
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainedModel {
  Network best_network;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_score = 0.0;
  std::vector<EpochStats> history;
  TrainConfig config;
};

/// Minibatch training with per-epoch validation. Keeps the weights snapshot
/// from the epoch with the highest validation macro-F1; ties go to the
/// earliest epoch. The final incomplete minibatch is trained on, not
/// dropped. Fully deterministic in (net, data, config).
inline TrainedModel train(Network net, const Matrix& train_x, const std::vector<int>& train_y,
                          const Matrix& val_x, const std::vector<int>& val_y,
                          const TrainConfig& config) {
  require(train_x.rows() > 0, "train: empty training set");
  require(val_x.rows() > 0, "train: empty validation set");
  require(train_x.rows() == train_y.size(), "train: train size mismatch");
  require(val_x.rows() == val_y.size(), "train: val size mismatch");
  require(config.epochs >= 1 && config.batch_size >= 1, "train: bad config");
  require(config.learning_rate > 0.0, "train: learning rate must be positive");

  const std::size_t n = train_x.rows();
  const std::size_t c = net.layout.output_dim;
  SplitMix64 shuffle_rng(config.shuffle_seed);
  AdamState adam = AdamState::like(net);

  TrainedModel model;
  model.config = config;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, n - start);
      Matrix bx(bs, train_x.cols());
      std::vector<int> by(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        auto src = train_x.row(order[start + i]);
        std::copy(src.begin(), src.end(), bx.row(i).begin());
        by[i] = train_y[order[start + i]];
      }
      auto lg = loss_and_grad(net, bx, by);
      loss_sum += lg.loss * static_cast<double>(bs);
      if (config.optimizer == Optimizer::kAdam) {
        adam_step(adam, net, lg.grads, config.learning_rate, config.beta1, config.beta2,
                  config.epsilon);
      } else {
        sgd_step(net, lg.grads, config.learning_rate);
      }
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.val_macro_f1 = macro_f1(predict_classes(net, val_x), val_y, c);
    model.history.push_back(stats);

    if (model.best_epoch == 0 || stats.val_macro_f1 > model.best_val_score) {
      model.best_epoch = epoch;
      model.best_val_score = stats.val_macro_f1;
      model.best_network = net;
    }
  }
  return model;
}

/// Compares every analytic gradient entry against a central finite
/// difference of the loss. Returns the maximum error scaled by
/// max(1, |analytic|, |numeric|). Intended for small nets.
inline double finite_diff_check(const Network& net, const Matrix& inputs,
                                const std::vector<int>& labels, double h) {
  auto analytic = loss_and_grad(net, inputs, labels).grads;
  Network probe = net;
  double worst = 0.0;

  auto probe_param = [&](double& slot, double analytic_g) {
    const double saved = slot;
    slot = saved + h;
    double up = mean_cross_entropy(probe, inputs, labels);
    slot = saved - h;
    double down = mean_cross_entropy(probe, inputs, labels);
    slot = saved;
    double numeric = (up - down) / (2.0 * h);
    double err = std::abs(analytic_g - numeric) /
                 std::max({1.0, std::abs(analytic_g), std::abs(numeric)});
    worst = std::max(worst, err);
  };

  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    auto& w = probe.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) probe_param(w[i], analytic.weights[l].data()[i]);
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i)
      probe_param(probe.biases[l][i], analytic.biases[l][i]);
  }
  return worst;
}

// --- checkpoint serialization -------------------------------------------

inline nlohmann::json layout_to_json(const NetworkLayout& l) {
  nlohmann::json j;
  j["input_dim"] = l.input_dim;
  j["hidden_dim"] = l.hidden_dim ? nlohmann::json(*l.hidden_dim) : nlohmann::json(nullptr);
  j["output_dim"] = l.output_dim;
  return j;
}

inline NetworkLayout layout_from_json(const nlohmann::json& j) {
  NetworkLayout l;
  l.input_dim = j.at("input_dim").get<std::size_t>();
  if (!j.at("hidden_dim").is_null()) l.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  l.output_dim = j.at("output_dim").get<std::size_t>();
  return l;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = c.optimizer == Optimizer::kAdam ? "adam" : "sgd";
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["shuffle_seed"] = c.shuffle_seed;
  return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  std::string opt = j.at("optimizer").get<std::string>();
  require(opt == "adam" || opt == "sgd", "checkpoint: unknown optimizer '" + opt + "'");
  c.optimizer = opt == "adam" ? Optimizer::kAdam : Optimizer::kSgd;
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
  return c;
}

/// Self-describing checkpoint: layout, seeds, config echo, row-major
/// weights at full precision, best epoch/score, training history.
/// Doubles are emitted in shortest round-trip form, so load(save(m)) is
/// bit-exact.
inline void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  nlohmann::json j;
  j["format"] = "latefuse-checkpoint-v1";
  j["layout"] = layout_to_json(model.best_network.layout);
  j["init_seed"] = model.best_network.init_seed;
  j["config"] = config_to_json(model.config);
  j["best_epoch"] = model.best_epoch;
  j["best_val_score"] = model.best_val_score;
  j["weights"] = nlohmann::json::array();
  for (const auto& w : model.best_network.weights) j["weights"].push_back(w.data());
  j["biases"] = nlohmann::json::array();
  for (const auto& b : model.best_network.biases) j["biases"].push_back(b);
  j["history"] = nlohmann::json::array();
  for (const auto& e : model.history)
    j["history"].push_back({{"train_loss", e.train_loss}, {"val_macro_f1", e.val_macro_f1}});
  detail::write_file(path, j.dump(2) + "\n");
}

inline TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  require(j.value("format", "") == "latefuse-checkpoint-v1",
          path.string() + ": not a latefuse checkpoint");

  TrainedModel model;
  model.best_network.layout = layout_from_json(j.at("layout"));
  detail::check_layout(model.best_network.layout);
  model.best_network.init_seed = j.at("init_seed").get<std::uint64_t>();
  model.config = config_from_json(j.at("config"));
  model.best_epoch = j.at("best_epoch").get<std::size_t>();
  model.best_val_score = j.at("best_val_score").get<double>();

  auto shapes = detail::layer_shapes(model.best_network.layout);
  const auto& jw = j.at("weights");
  const auto& jb = j.at("biases");
  require(jw.size() == shapes.size() && jb.size() == shapes.size(),
          path.string() + ": layer count mismatch");
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    auto data = jw[l].get<std::vector<double>>();
    require(data.size() == shapes[l].first * shapes[l].second,
            path.string() + ": weight shape mismatch");
    model.best_network.weights.emplace_back(shapes[l].first, shapes[l].second, std::move(data));
    auto bias = jb[l].get<std::vector<double>>();
    require(bias.size() == shapes[l].first, path.string() + ": bias shape mismatch");
    model.best_network.biases.push_back(std::move(bias));
  }
  for (const auto& e : j.at("history")) {
    EpochStats stats;
    stats.train_loss = e.at("train_loss").get<double>();
    stats.val_macro_f1 = e.at("val_macro_f1").get<double>();
    model.history.push_back(stats);
  }
  return model;
}

}  // namespace latefuse

#endif  // LATEFUSE_NN_HPP
