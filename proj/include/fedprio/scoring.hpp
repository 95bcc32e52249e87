// Score functions over criteria tuples and the aggregation weights derived from them.
#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedprio/criteria.hpp"
#include "fedprio/error.hpp"

namespace fedprio {

/// Criteria listed from highest to lowest priority.
class CriteriaOrdering {
 public:
  CriteriaOrdering() = default;
  explicit CriteriaOrdering(std::vector<CriterionId> ids) : ids_(std::move(ids)) {
    if (ids_.empty()) throw ConfigError("criteria ordering must not be empty");
    for (std::size_t i = 0; i < ids_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (ids_[i] == ids_[j]) throw ConfigError("duplicate criterion '" + std::string(to_string(ids_[i])) + "'");
  }

  [[nodiscard]] std::span<const CriterionId> ids() const noexcept { return ids_; }
  [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
  [[nodiscard]] bool contains(CriterionId id) const noexcept {
    return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
  }

  /// "DS>LD>MW"
  [[nodiscard]] std::string label(std::string_view sep = ">") const {
    std::string out;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (i > 0) out += sep;
      out += to_string(ids_[i]);
    }
    return out;
  }

  friend bool operator==(const CriteriaOrdering&, const CriteriaOrdering&) = default;

 private:
  std::vector<CriterionId> ids_;
};

enum class ScoreKind { prioritized, mean };

constexpr std::string_view to_string(ScoreKind k) noexcept {
  return k == ScoreKind::prioritized ? "prioritized" : "mean";
}

namespace detail {
inline void check_unit_interval(std::span<const double> c) {
  for (double v : c)
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("score input outside [0,1]: " + std::to_string(v));
}
}  // namespace detail

/// sum_{i=1..m} prod_{j<=i} c_j, accumulated left to right.
inline double score_prioritized(std::span<const double> c) {
  detail::check_unit_interval(c);
  double prefix = 1.0;
  double score = 0.0;
  for (double v : c) {
    prefix *= v;
    score += prefix;
  }
  return score;
}

/// Plain sum of the tuple. Dividing by m would not change the normalized weights.
inline double score_mean(std::span<const double> c) {
  detail::check_unit_interval(c);
  double score = 0.0;
  for (double v : c) score += v;
  return score;
}

inline double score(ScoreKind kind, std::span<const double> c) {
  return kind == ScoreKind::prioritized ? score_prioritized(c) : score_mean(c);
}

struct WeightVector {
  std::vector<double> values;
  std::vector<double> scores;
  double normalizer = 0.0;        // Z
  bool uniform_fallback = false;  // Z == 0
};

/// w_a = s_a / sum(s). Uniform when every score is zero.
inline WeightVector weights_from_scores(std::vector<double> scores) {
  if (scores.empty()) throw InternalError("compute_weights: empty cohort");
  WeightVector w;
  w.scores = std::move(scores);
  for (double s : w.scores) w.normalizer += s;
  w.values.resize(w.scores.size());
  if (w.normalizer == 0.0) {
    w.uniform_fallback = true;
    std::fill(w.values.begin(), w.values.end(), 1.0 / static_cast<double>(w.values.size()));
    return w;
  }
  for (std::size_t a = 0; a < w.values.size(); ++a) w.values[a] = w.scores[a] / w.normalizer;
  return w;
}

/// `tuples[a]` holds client a's criteria in priority order.
inline WeightVector compute_weights(std::span<const std::vector<double>> tuples, ScoreKind kind) {
  if (tuples.empty()) throw InternalError("compute_weights: empty cohort");
  const std::size_t m = tuples.front().size();
  std::vector<double> scores;
  scores.reserve(tuples.size());
  for (const auto& t : tuples) {
    if (t.size() != m) throw UsageError("compute_weights: criteria tuples differ in length");
    scores.push_back(score(kind, t));
  }
  return weights_from_scores(std::move(scores));
}

/// Normalized criterion values per client, keyed by criterion.
using CriteriaColumns = std::map<CriterionId, std::vector<double>>;

/// Builds per-client tuples in `ordering` order from criterion columns, then weights them.
inline WeightVector compute_weights(const CriteriaColumns& columns, const CriteriaOrdering& ordering,
                                    ScoreKind kind) {
  std::size_t cohort = 0;
  for (auto id : ordering.ids()) {
    const auto it = columns.find(id);
    if (it == columns.end()) throw UsageError("compute_weights: missing column " + std::string(to_string(id)));
    if (cohort == 0) cohort = it->second.size();
    if (it->second.size() != cohort) throw UsageError("compute_weights: criterion columns differ in length");
  }
  std::vector<std::vector<double>> tuples(cohort, std::vector<double>(ordering.size()));
  for (std::size_t i = 0; i < ordering.size(); ++i) {
    const auto& col = columns.at(ordering.ids()[i]);
    for (std::size_t a = 0; a < cohort; ++a) tuples[a][i] = col[a];
  }
  return compute_weights(tuples, kind);
}

}  // namespace fedprio
