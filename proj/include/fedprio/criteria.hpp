// Per-client criteria: raw measurements and per-round cohort normalization.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedprio/data.hpp"
#include "fedprio/error.hpp"
#include "fedprio/learner.hpp"

namespace fedprio {

/// DS dataset size, LD label diversity, MW model divergence, CB class balance, IS image sharpness.
enum class CriterionId { DS, LD, MW, CB, IS };

inline constexpr std::array<CriterionId, 5> kAllCriteria{CriterionId::DS, CriterionId::LD, CriterionId::MW,
                                                        CriterionId::CB, CriterionId::IS};

constexpr std::string_view to_string(CriterionId id) noexcept {
  switch (id) {
    case CriterionId::DS: return "DS";
    case CriterionId::LD: return "LD";
    case CriterionId::MW: return "MW";
    case CriterionId::CB: return "CB";
    case CriterionId::IS: return "IS";
  }
  return "?";
}

inline std::optional<CriterionId> parse_criterion(std::string_view name) noexcept {
  for (auto id : kAllCriteria)
    if (to_string(id) == name) return id;
  return std::nullopt;
}

/// What a client reveals about its training split.
struct ShardSummary {
  std::size_t train_size = 0;
  std::vector<std::size_t> label_histogram;  // indexed by class
  std::size_t sharp_count = 0;
};

inline ShardSummary summarize(const ClientShard& shard, std::size_t num_classes) {
  ShardSummary s;
  s.train_size = shard.train.size();
  s.label_histogram.assign(num_classes, 0);
  for (const auto& sample : shard.train) {
    if (sample.label >= num_classes) throw UsageError("sample label exceeds num_classes");
    ++s.label_histogram[sample.label];
    s.sharp_count += sample.sharp ? 1 : 0;
  }
  return s;
}

struct ClientObservation {
  ShardSummary summary;
  const Parameters* received_global = nullptr;
  const Parameters* trained_local = nullptr;
};

/// n_a
inline double raw_ds(const ClientObservation& obs) { return static_cast<double>(obs.summary.train_size); }

/// Number of distinct labels in the training split.
inline double raw_ld(const ClientObservation& obs) {
  return static_cast<double>(std::count_if(obs.summary.label_histogram.begin(), obs.summary.label_histogram.end(),
                                           [](std::size_t c) { return c > 0; }));
}

/// 1 / sqrt(||received - trained||_2 + 1)
inline double raw_mw(const ClientObservation& obs) {
  if (obs.received_global == nullptr || obs.trained_local == nullptr)
    throw InternalError("MW needs both the received and the trained model");
  const auto& a = obs.received_global->values;
  const auto& b = obs.trained_local->values;
  if (a.size() != b.size()) throw InternalError("MW: model length mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return 1.0 / std::sqrt(std::sqrt(sq) + 1.0);
}

/// min(#pos, #neg) / max(#pos, #neg); label 1 is positive.
inline double raw_cb(const ClientObservation& obs) {
  const auto& h = obs.summary.label_histogram;
  if (h.size() != 2) throw ConfigError("CB applies to binary tasks only");
  const auto lo = static_cast<double>(std::min(h[0], h[1]));
  const auto hi = static_cast<double>(std::max(h[0], h[1]));
  return hi == 0.0 ? 0.0 : lo / hi;
}

/// Fraction of sharp samples in the training split.
inline double raw_is(const ClientObservation& obs) {
  if (obs.summary.train_size == 0) return 0.0;
  return static_cast<double>(obs.summary.sharp_count) / static_cast<double>(obs.summary.train_size);
}

inline double raw_value(CriterionId id, const ClientObservation& obs) {
  switch (id) {
    case CriterionId::DS: return raw_ds(obs);
    case CriterionId::LD: return raw_ld(obs);
    case CriterionId::MW: return raw_mw(obs);
    case CriterionId::CB: return raw_cb(obs);
    case CriterionId::IS: return raw_is(obs);
  }
  throw InternalError("unknown criterion");
}

struct NormalizedCriterion {
  std::vector<double> values;
  bool uniform_fallback = false;  // every raw was zero
};

/// raw_a / sum(raws); uniform shares when the sum is zero.
inline NormalizedCriterion normalize_cohort(std::span<const double> raws) {
  if (raws.empty()) throw InternalError("normalize_cohort: empty cohort");
  double sum = 0.0;
  for (double r : raws) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw InternalError("normalize_cohort: raw criterion value is negative or non-finite");
    sum += r;
  }
  NormalizedCriterion out;
  out.values.resize(raws.size());
  if (sum == 0.0) {
    out.uniform_fallback = true;
    std::fill(out.values.begin(), out.values.end(), 1.0 / static_cast<double>(raws.size()));
    return out;
  }
  for (std::size_t i = 0; i < raws.size(); ++i) out.values[i] = raws[i] / sum;
  return out;
}

}  // namespace fedprio
