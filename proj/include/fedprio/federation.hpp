// Round orchestration: cohort selection, local training, criteria collection, weighting and
// aggregation, followed by evaluation of the new global model on every client.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedprio/criteria.hpp"
#include "fedprio/data.hpp"
#include "fedprio/error.hpp"
#include "fedprio/learner.hpp"
#include "fedprio/metrics.hpp"
#include "fedprio/rng.hpp"
#include "fedprio/scoring.hpp"

namespace fedprio {

/// model_average: Θ <- Σ w_a Θ_a after local training.
/// gradient: Θ <- Θ - α Σ w_a ∇G_a(Θ), one full-batch gradient per client.
enum class AggregationMode { model_average, gradient };

struct FederationConfig {
  TrainerConfig trainer;
  double client_fraction = 0.1;
  std::size_t max_rounds = 1000;
  CriteriaOrdering ordering{{CriterionId::DS}};
  ScoreKind score_kind = ScoreKind::prioritized;
  AggregationMode aggregation = AggregationMode::model_average;
  bool early_stop = false;
  std::vector<double> targets;    // early-stop grid
  std::vector<double> fractions;
  bool keep_parameters = false;   // store Θ in every RoundRecord
  std::size_t threads = 1;
};

struct FederationState {
  ModelSpec spec;
  Parameters global;
  std::size_t round_index = 0;
  std::vector<ClientShard> clients;  // sorted by id, every train split non-empty
  std::uint64_t seed = 0;
};

/// Drops clients without training data, orders the rest by id and initializes Θ from the seed.
inline FederationState make_federation(const ModelSpec& spec, std::vector<ClientShard> shards, std::uint64_t seed) {
  spec.validate();
  std::erase_if(shards, [](const ClientShard& s) { return s.train.empty(); });
  if (shards.empty()) throw ConfigError("federation has no client with training data");
  std::sort(shards.begin(), shards.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < shards.size(); ++i)
    if (shards[i].id == shards[i - 1].id) throw ConfigError("duplicate client id " + std::to_string(shards[i].id));
  FederationState state;
  state.spec = spec;
  state.global = init_parameters(spec, seed);
  state.clients = std::move(shards);
  state.seed = seed;
  return state;
}

struct RoundPlan {
  std::vector<std::size_t> cohort;  // client ids, ascending
  double client_fraction = 1.0;
};

inline std::size_t cohort_size(double fraction, std::size_t population) {
  // floor with a little slack so that e.g. 0.29 * 100 yields 29
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(population) + 1e-9));
  return std::clamp<std::size_t>(k, 1, population);
}

inline std::uint64_t cohort_seed(std::uint64_t experiment_seed, std::size_t round) {
  return derive_seed(experiment_seed, seed_tags::kCohort, round);
}

inline std::uint64_t training_seed(std::uint64_t experiment_seed, std::size_t round, std::size_t client_id) {
  return derive_seed(experiment_seed, seed_tags::kTrain, round, client_id);
}

/// Uniform sample without replacement of max(1, floor(fraction * |A|)) clients.
inline RoundPlan select_cohort(const FederationState& state, double fraction, std::uint64_t round_seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("client_fraction must lie in (0,1]");
  if (state.clients.empty()) throw ConfigError("select_cohort: no clients");
  const std::size_t n = state.clients.size();
  const std::size_t k = cohort_size(fraction, n);
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  Rng rng(round_seed);
  // partial Fisher-Yates: the first k slots are the sample
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(n - i));
    std::swap(pos[i], pos[j]);
  }
  RoundPlan plan;
  plan.client_fraction = fraction;
  for (std::size_t i = 0; i < k; ++i) plan.cohort.push_back(state.clients[pos[i]].id);
  std::sort(plan.cohort.begin(), plan.cohort.end());
  return plan;
}

namespace detail {

inline const ClientShard& client_by_id(const FederationState& state, std::size_t id) {
  const auto it = std::lower_bound(state.clients.begin(), state.clients.end(), id,
                                   [](const ClientShard& c, std::size_t v) { return c.id < v; });
  if (it == state.clients.end() || it->id != id) throw UsageError("unknown client id " + std::to_string(id));
  return *it;
}

/// Runs task(i) for i in [0, n), on up to `threads` workers. The first exception is rethrown.
template <typename Task>
void parallel_for(std::size_t n, std::size_t threads, Task&& task) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < std::min(threads, n); ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Accuracy of `params` on every client with a non-empty test split, in id order.
inline void evaluate_population(const FederationState& state, const Parameters& params, RoundRecord& record) {
  record.device_ids.clear();
  record.device_accuracy.clear();
  record.device_correct.clear();
  record.device_test_size.clear();
  for (const auto& client : state.clients) {
    if (client.test.empty()) continue;
    const auto c = count_correct(params, state.spec, client.test);
    record.device_ids.push_back(client.id);
    record.device_correct.push_back(c.correct);
    record.device_test_size.push_back(c.total);
    record.device_accuracy.push_back(static_cast<double>(c.correct) / static_cast<double>(c.total));
  }
  record.global_accuracy = global_accuracy(record.device_accuracy, record.device_test_size).value_or(0.0);
}

struct RoundOutcome {
  Parameters global;
  RoundRecord record;
};

/// One communication round over `plan.cohort`. Does not modify `state`.
inline RoundOutcome run_round(const FederationState& state, const RoundPlan& plan, const FederationConfig& cfg) {
  if (plan.cohort.empty()) throw UsageError("run_round: empty cohort");
  cfg.trainer.validate();
  const std::size_t round = state.round_index + 1;
  const std::size_t k = plan.cohort.size();
  const auto ordering = cfg.ordering.ids();

  // Id-keyed slots: scheduling order cannot affect the result.
  std::vector<Parameters> locals(k);
  std::vector<std::vector<double>> gradients(cfg.aggregation == AggregationMode::gradient ? k : 0);
  std::vector<std::vector<double>> raws(ordering.size(), std::vector<double>(k));

  detail::parallel_for(k, cfg.threads, [&](std::size_t slot) {
    const ClientShard& client = detail::client_by_id(state, plan.cohort[slot]);
    Parameters local;
    if (cfg.aggregation == AggregationMode::model_average) {
      auto trained = local_train(state.global, state.spec, client, cfg.trainer,
                                 training_seed(state.seed, round, client.id));
      if (!trained) throw InternalError("client " + std::to_string(client.id) + " has no training data");
      local = std::move(*trained);
    } else {
      auto lg = loss_and_gradient(state.global, state.spec, client.train);
      local = state.global;
      for (std::size_t i = 0; i < local.values.size(); ++i)
        local.values[i] -= cfg.trainer.learning_rate * lg.gradient[i];
      gradients[slot] = std::move(lg.gradient);
    }
    if (!local.all_finite())
      throw RuntimeFailure("round " + std::to_string(round) + ": client " + std::to_string(client.id) +
                           " produced non-finite parameters");
    ClientObservation obs{summarize(client, state.spec.num_classes), &state.global, &local};
    for (std::size_t i = 0; i < ordering.size(); ++i) raws[i][slot] = raw_value(ordering[i], obs);
    locals[slot] = std::move(local);
  });

  RoundOutcome out;
  RoundRecord& rec = out.record;
  rec.round = round;
  rec.cohort = plan.cohort;
  CriteriaColumns columns;
  for (std::size_t i = 0; i < ordering.size(); ++i) {
    auto norm = normalize_cohort(raws[i]);
    columns[ordering[i]] = norm.values;
    rec.criteria.push_back({ordering[i], raws[i], std::move(norm.values), norm.uniform_fallback});
  }

  WeightVector weights;
  if (ordering.size() == 1) {
    // f_1(c) = c under both score kinds and c is already normalized, so w = c.
    const auto& c = rec.criteria.front();
    weights.values = c.normalized;
    weights.scores = c.normalized;
    for (double v : c.normalized) weights.normalizer += v;
    weights.uniform_fallback = c.uniform_fallback;
  } else {
    weights = compute_weights(columns, cfg.ordering, cfg.score_kind);
  }
  double weight_sum = 0.0;
  for (double w : weights.values) weight_sum += w;
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw InternalError("round " + std::to_string(round) + ": weights sum to " + std::to_string(weight_sum));
  rec.scores = weights.scores;
  rec.weights = weights.values;
  rec.normalizer = weights.normalizer;
  rec.weight_fallback = weights.uniform_fallback;

  // Ascending client id, fixed summation order.
  const std::size_t len = state.global.size();
  out.global.values.assign(len, 0.0);
  if (cfg.aggregation == AggregationMode::model_average) {
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t j = 0; j < len; ++j) out.global.values[j] += rec.weights[a] * locals[a].values[j];
  } else {
    std::vector<double> step(len, 0.0);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t j = 0; j < len; ++j) step[j] += rec.weights[a] * gradients[a][j];
    for (std::size_t j = 0; j < len; ++j)
      out.global.values[j] = state.global.values[j] - cfg.trainer.learning_rate * step[j];
  }
  if (!out.global.all_finite())
    throw RuntimeFailure("round " + std::to_string(round) + ": aggregated model is not finite");

  evaluate_population(state, out.global, rec);
  if (cfg.keep_parameters) rec.global_params = out.global;
  return out;
}

struct ExperimentResult {
  std::vector<RoundRecord> records;
  Parameters initial;
  Parameters final_params;
  std::size_t best_round = 0;  // round with the highest global accuracy (earliest on ties), 0 if none
  Parameters best_params;
};

using RoundObserver = std::function<void(const RoundRecord&)>;

/// Runs up to cfg.max_rounds rounds starting from `state`. With early_stop, stops once every
/// (target, fraction) cell has been reached.
inline ExperimentResult run_experiment(FederationState state, const FederationConfig& cfg,
                                       const RoundObserver& observer = {}) {
  ExperimentResult result;
  result.initial = state.global;
  result.best_params = state.global;
  double best_accuracy = -1.0;
  for (std::size_t r = 0; r < cfg.max_rounds; ++r) {
    const auto plan = select_cohort(state, cfg.client_fraction, cohort_seed(state.seed, state.round_index + 1));
    RoundOutcome outcome;
    try {
      outcome = run_round(state, plan, cfg);
    } catch (const RuntimeFailure&) {
      throw;
    } catch (const Error& e) {
      throw RuntimeFailure("round " + std::to_string(state.round_index + 1) + ": " + e.what());
    }
    state.global = std::move(outcome.global);
    state.round_index = outcome.record.round;
    if (outcome.record.global_accuracy > best_accuracy) {
      best_accuracy = outcome.record.global_accuracy;
      result.best_round = outcome.record.round;
      result.best_params = state.global;
    }
    if (observer) observer(outcome.record);
    result.records.push_back(std::move(outcome.record));
    if (cfg.early_stop && !cfg.targets.empty() && !cfg.fractions.empty() &&
        all_reached(make_target_table(result.records, cfg.targets, cfg.fractions)))
      break;
  }
  result.final_params = state.global;
  return result;
}

}  // namespace fedprio
