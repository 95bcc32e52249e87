// Evaluation protocol: weighted global accuracy, rounds-to-target tables, gains against a
// baseline run, and joint-correctness comparison of two predictors.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedprio/criteria.hpp"
#include "fedprio/error.hpp"
#include "fedprio/learner.hpp"

namespace fedprio {

struct CriterionSnapshot {
  CriterionId id{};
  std::vector<double> raw;         // aligned with RoundRecord::cohort
  std::vector<double> normalized;
  bool uniform_fallback = false;
};

/// Everything one communication round produced.
struct RoundRecord {
  std::size_t round = 0;  // 1-based
  std::vector<std::size_t> cohort;
  std::vector<CriterionSnapshot> criteria;  // priority order
  std::vector<double> scores;
  std::vector<double> weights;
  double normalizer = 0.0;
  bool weight_fallback = false;

  // Evaluation of the new global model on every client with a non-empty test split.
  std::vector<std::size_t> device_ids;
  std::vector<double> device_accuracy;
  std::vector<std::size_t> device_correct;
  std::vector<std::size_t> device_test_size;
  double global_accuracy = 0.0;

  std::optional<Parameters> global_params;  // kept only when requested
};

/// sum(acc_a * |test_a|) / sum(|test_a|); nullopt when there is nothing to average.
inline std::optional<double> global_accuracy(std::span<const double> accuracies, std::span<const std::size_t> sizes) {
  if (accuracies.size() != sizes.size()) throw UsageError("global_accuracy: vectors are not aligned");
  double weighted = 0.0;
  std::size_t total = 0;
  for (std::size_t a = 0; a < accuracies.size(); ++a) {
    // acc = correct/n comes back as correct only up to an ulp; snap so the pooled ratio is exact.
    const double product = accuracies[a] * static_cast<double>(sizes[a]);
    const double nearest = std::round(product);
    weighted += std::abs(product - nearest) <= 1e-9 * std::max(1.0, nearest) ? nearest : product;
    total += sizes[a];
  }
  if (total == 0) return std::nullopt;
  return weighted / static_cast<double>(total);
}

/// Smallest device count that satisfies "at least `fraction` of n devices".
inline std::size_t devices_required(double fraction, std::size_t n) {
  // 0.3 * 10 evaluates to 3.0000000000000004; the slack keeps ceil() honest.
  const auto needed = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::max<std::size_t>(needed, 1);
}

/// First 1-based round at which at least ceil(fraction * N) devices have accuracy >= target.
inline std::optional<std::size_t> rounds_to_target(std::span<const RoundRecord> records, double target,
                                                   double fraction) {
  for (const auto& r : records) {
    if (r.device_accuracy.empty()) continue;
    const std::size_t needed = devices_required(fraction, r.device_accuracy.size());
    std::size_t hit = 0;
    for (double acc : r.device_accuracy) hit += acc >= target ? 1 : 0;
    if (hit >= needed) return r.round;
  }
  return std::nullopt;
}

/// Rounds-to-target for every (target, fraction) cell; nullopt = not reached.
struct TargetTable {
  std::vector<double> targets;
  std::vector<double> fractions;
  std::vector<std::vector<std::optional<std::size_t>>> cells;  // [target][fraction]
};

inline TargetTable make_target_table(std::span<const RoundRecord> records, std::span<const double> targets,
                                     std::span<const double> fractions) {
  TargetTable t;
  t.targets.assign(targets.begin(), targets.end());
  t.fractions.assign(fractions.begin(), fractions.end());
  for (double target : targets) {
    auto& row = t.cells.emplace_back();
    for (double f : fractions) row.push_back(rounds_to_target(records, target, f));
  }
  return t;
}

inline bool all_reached(const TargetTable& t) {
  for (const auto& row : t.cells)
    for (const auto& c : row)
      if (!c) return false;
  return true;
}

/// baseline - candidate per cell; positive means the candidate needed fewer rounds.
struct GainTable {
  std::vector<double> targets;
  std::vector<double> fractions;
  std::vector<std::vector<double>> gains;        // [target][fraction]
  std::vector<std::vector<bool>> substituted;    // a NOT-REACHED cell was replaced by max_rounds
  std::vector<double> averages;                  // per target, over fractions
  std::vector<bool> average_flagged;             // any substituted cell in the row
};

inline GainTable gain_table(const TargetTable& baseline, const TargetTable& candidate, std::size_t max_rounds) {
  if (baseline.targets != candidate.targets || baseline.fractions != candidate.fractions)
    throw UsageError("gain_table: target/fraction grids differ");
  GainTable g;
  g.targets = baseline.targets;
  g.fractions = baseline.fractions;
  const auto limit = static_cast<double>(max_rounds);
  for (std::size_t t = 0; t < g.targets.size(); ++t) {
    auto& gains = g.gains.emplace_back();
    auto& subs = g.substituted.emplace_back();
    double sum = 0.0;
    bool flagged = false;
    for (std::size_t f = 0; f < g.fractions.size(); ++f) {
      const auto& b = baseline.cells[t][f];
      const auto& c = candidate.cells[t][f];
      const double bv = b ? static_cast<double>(*b) : limit;
      const double cv = c ? static_cast<double>(*c) : limit;
      const double gain = (!b && !c) ? 0.0 : bv - cv;
      gains.push_back(gain);
      subs.push_back(!b || !c);
      flagged = flagged || !b || !c;
      sum += gain;
    }
    g.averages.push_back(g.fractions.empty() ? 0.0 : sum / static_cast<double>(g.fractions.size()));
    g.average_flagged.push_back(flagged);
  }
  return g;
}

/// Joint correctness counts of two predictors over the same samples.
struct ComparisonMatrix {
  std::size_t bw_cw = 0;  // baseline wrong, candidate wrong
  std::size_t bw_cr = 0;
  std::size_t br_cw = 0;
  std::size_t br_cr = 0;

  [[nodiscard]] std::size_t total() const noexcept { return bw_cw + bw_cr + br_cw + br_cr; }
  friend bool operator==(const ComparisonMatrix&, const ComparisonMatrix&) = default;
};

inline ComparisonMatrix comparison_matrix(std::span<const std::size_t> baseline, std::span<const std::size_t> candidate,
                                          std::span<const std::size_t> labels) {
  if (baseline.size() != labels.size() || candidate.size() != labels.size())
    throw UsageError("comparison_matrix: prediction and label vectors differ in length");
  ComparisonMatrix m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool br = baseline[i] == labels[i];
    const bool cr = candidate[i] == labels[i];
    if (br) {
      ++(cr ? m.br_cr : m.br_cw);
    } else {
      ++(cr ? m.bw_cr : m.bw_cw);
    }
  }
  return m;
}

}  // namespace fedprio
