// Desk-scale classifiers trained with plain SGD on a flat parameter vector.
//
// Supported models are multinomial logistic regression (hidden_units == 0) and a
// one-hidden-layer ReLU MLP, both with a softmax output and mean cross-entropy loss.
// All math is double precision and every loop has a fixed order, so training is
// bit-reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedprio/data.hpp"
#include "fedprio/error.hpp"
#include "fedprio/rng.hpp"

namespace fedprio {

enum class Activation { relu };

struct ModelSpec {
  std::size_t input_dim = 1;
  std::size_t num_classes = 2;
  std::size_t hidden_units = 0;  // 0 = logistic regression
  Activation activation = Activation::relu;

  void validate() const {
    if (input_dim < 1) throw ConfigError("model input_dim must be at least 1");
    if (num_classes < 2) throw ConfigError("model num_classes must be at least 2");
  }
};

/// Model state Θ. Its length is fixed by the ModelSpec (see ParameterLayout).
struct Parameters {
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
  friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Placement of each weight matrix / bias vector inside Parameters::values.
/// Matrices are row-major with one row per output unit.
struct ParameterLayout {
  struct Block {
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;  // 1 for biases
    std::size_t fan_in;
  };
  // logistic: {W, b}; MLP: {W1, b1, W2, b2}
  std::vector<Block> blocks;
  std::size_t total = 0;
};

inline ParameterLayout layout_of(const ModelSpec& spec) {
  ParameterLayout layout;
  auto add = [&](std::size_t rows, std::size_t cols, std::size_t fan_in) {
    layout.blocks.push_back({layout.total, rows, cols, fan_in});
    layout.total += rows * cols;
  };
  if (spec.hidden_units == 0) {
    add(spec.num_classes, spec.input_dim, spec.input_dim);
    add(spec.num_classes, 1, spec.input_dim);
  } else {
    add(spec.hidden_units, spec.input_dim, spec.input_dim);
    add(spec.hidden_units, 1, spec.input_dim);
    add(spec.num_classes, spec.hidden_units, spec.hidden_units);
    add(spec.num_classes, 1, spec.hidden_units);
  }
  return layout;
}

inline std::size_t parameter_count(const ModelSpec& spec) { return layout_of(spec).total; }

inline Parameters zero_parameters(const ModelSpec& spec) { return {std::vector<double>(parameter_count(spec), 0.0)}; }

/// Every block uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto layout = layout_of(spec);
  Parameters p{std::vector<double>(layout.total)};
  Rng rng(derive_seed(seed, seed_tags::kInit));
  for (const auto& b : layout.blocks) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
    for (std::size_t i = 0; i < b.rows * b.cols; ++i) p.values[b.offset + i] = rng.uniform(-bound, bound);
  }
  return p;
}

struct TrainerConfig {
  double learning_rate = 0.1;
  std::size_t local_epochs = 5;
  std::optional<std::size_t> batch_size;  // nullopt = full batch

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be a finite nonnegative number");
    if (local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
    if (batch_size && *batch_size == 0) throw ConfigError("batch_size must be positive or \"full\"");
  }
};

namespace detail {

inline void check_shape(const Parameters& params, const ModelSpec& spec, std::size_t x_len) {
  if (params.size() != parameter_count(spec))
    throw ConfigError("parameter vector has length " + std::to_string(params.size()) + ", model expects " +
                      std::to_string(parameter_count(spec)));
  if (x_len != spec.input_dim)
    throw ConfigError("feature vector has length " + std::to_string(x_len) + ", model expects " +
                      std::to_string(spec.input_dim));
}

/// out[r] = bias[r] + sum_c W[r,c] * in[c]
inline void affine(const double* w, const double* bias, std::size_t rows, std::size_t cols,
                   std::span<const double> in, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

/// In-place softmax; returns log(sum(exp(logits))).
inline double softmax_inplace(std::span<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return zmax + std::log(sum);
}

/// Forward pass keeping the intermediate activations needed by backprop.
struct Activations {
  std::vector<double> hidden_pre;  // MLP only
  std::vector<double> hidden;      // MLP only
  std::vector<double> logits;
  std::vector<double> probs;
  double log_normalizer = 0.0;
};

inline void forward_into(const Parameters& params, const ModelSpec& spec, const ParameterLayout& layout,
                         std::span<const double> x, Activations& act) {
  const double* theta = params.values.data();
  act.logits.resize(spec.num_classes);
  if (spec.hidden_units == 0) {
    affine(theta + layout.blocks[0].offset, theta + layout.blocks[1].offset, spec.num_classes, spec.input_dim, x,
           act.logits);
  } else {
    act.hidden_pre.resize(spec.hidden_units);
    act.hidden.resize(spec.hidden_units);
    affine(theta + layout.blocks[0].offset, theta + layout.blocks[1].offset, spec.hidden_units, spec.input_dim, x,
           act.hidden_pre);
    for (std::size_t h = 0; h < spec.hidden_units; ++h) act.hidden[h] = std::max(0.0, act.hidden_pre[h]);
    affine(theta + layout.blocks[2].offset, theta + layout.blocks[3].offset, spec.num_classes, spec.hidden_units,
           act.hidden, act.logits);
  }
  act.probs = act.logits;
  act.log_normalizer = softmax_inplace(act.probs);
}

}  // namespace detail

/// Class probabilities for one feature vector.
inline std::vector<double> forward(const Parameters& params, const ModelSpec& spec, std::span<const double> x) {
  detail::check_shape(params, spec, x.size());
  detail::Activations act;
  detail::forward_into(params, spec, layout_of(spec), x, act);
  return act.probs;
}

/// Argmax of the class probabilities; the lowest index wins ties.
inline std::size_t predict(const Parameters& params, const ModelSpec& spec, std::span<const double> x) {
  const auto probs = forward(params, spec, x);
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Mean cross-entropy over data[indices] and its exact gradient.
inline LossAndGradient loss_and_gradient(const Parameters& params, const ModelSpec& spec,
                                         std::span<const Sample> data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("loss_and_gradient: empty batch");
  const auto layout = layout_of(spec);
  LossAndGradient out;
  out.gradient.assign(layout.total, 0.0);
  double* grad = out.gradient.data();
  const double* theta = params.values.data();
  detail::Activations act;
  std::vector<double> dlogits(spec.num_classes);
  std::vector<double> dhidden(spec.hidden_units);

  for (std::size_t idx : indices) {
    const Sample& s = data[idx];
    detail::check_shape(params, spec, s.features.size());
    if (s.label >= spec.num_classes) throw UsageError("sample label exceeds num_classes");
    detail::forward_into(params, spec, layout, s.features, act);
    out.loss += act.log_normalizer - act.logits[s.label];
    for (std::size_t k = 0; k < spec.num_classes; ++k) dlogits[k] = act.probs[k] - (k == s.label ? 1.0 : 0.0);

    if (spec.hidden_units == 0) {
      const auto& w = layout.blocks[0];
      const auto& b = layout.blocks[1];
      for (std::size_t k = 0; k < spec.num_classes; ++k) {
        double* row = grad + w.offset + k * spec.input_dim;
        for (std::size_t d = 0; d < spec.input_dim; ++d) row[d] += dlogits[k] * s.features[d];
        grad[b.offset + k] += dlogits[k];
      }
    } else {
      const auto& w1 = layout.blocks[0];
      const auto& b1 = layout.blocks[1];
      const auto& w2 = layout.blocks[2];
      const auto& b2 = layout.blocks[3];
      std::fill(dhidden.begin(), dhidden.end(), 0.0);
      for (std::size_t k = 0; k < spec.num_classes; ++k) {
        double* grow = grad + w2.offset + k * spec.hidden_units;
        const double* wrow = theta + w2.offset + k * spec.hidden_units;
        for (std::size_t h = 0; h < spec.hidden_units; ++h) {
          grow[h] += dlogits[k] * act.hidden[h];
          dhidden[h] += wrow[h] * dlogits[k];
        }
        grad[b2.offset + k] += dlogits[k];
      }
      for (std::size_t h = 0; h < spec.hidden_units; ++h) {
        const double dpre = act.hidden_pre[h] > 0.0 ? dhidden[h] : 0.0;
        double* row = grad + w1.offset + h * spec.input_dim;
        for (std::size_t d = 0; d < spec.input_dim; ++d) row[d] += dpre * s.features[d];
        grad[b1.offset + h] += dpre;
      }
    }
  }
  const auto n = static_cast<double>(indices.size());
  out.loss /= n;
  for (double& g : out.gradient) g /= n;
  return out;
}

inline LossAndGradient loss_and_gradient(const Parameters& params, const ModelSpec& spec,
                                         std::span<const Sample> batch) {
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return loss_and_gradient(params, spec, batch, all);
}

/// E epochs of SGD on the shard's training split, starting from a copy of `global`.
/// Full batch keeps stored order; mini-batches use a fresh permutation per epoch.
/// Returns nullopt when the shard has no training data (the client must be skipped).
inline std::optional<Parameters> local_train(const Parameters& global, const ModelSpec& spec,
                                             const ClientShard& shard, const TrainerConfig& cfg,
                                             std::uint64_t seed) {
  cfg.validate();
  if (shard.train.empty()) return std::nullopt;
  Parameters local = global;
  const std::size_t n = shard.train.size();
  const std::size_t batch = cfg.batch_size ? std::min(*cfg.batch_size, n) : n;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    if (batch < n) rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      const auto lg = loss_and_gradient(local, spec, shard.train, std::span(order).subspan(start, len));
      for (std::size_t i = 0; i < local.values.size(); ++i) local.values[i] -= cfg.learning_rate * lg.gradient[i];
    }
  }
  return local;
}

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;
};

inline AccuracyCount count_correct(const Parameters& params, const ModelSpec& spec, std::span<const Sample> set) {
  AccuracyCount c;
  for (const auto& s : set) {
    c.correct += predict(params, spec, s.features) == s.label ? 1 : 0;
    ++c.total;
  }
  return c;
}

/// Fraction of argmax-correct predictions; nullopt for an empty set.
inline std::optional<double> evaluate_accuracy(const Parameters& params, const ModelSpec& spec,
                                               std::span<const Sample> test_set) {
  if (test_set.empty()) return std::nullopt;
  const auto c = count_correct(params, spec, test_set);
  return static_cast<double>(c.correct) / static_cast<double>(c.total);
}

}  // namespace fedprio
