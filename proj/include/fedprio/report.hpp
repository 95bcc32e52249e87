// CSV emission. Floats are printed with six decimals and rows are written in a fixed order so
// that identical runs produce byte-identical files.
#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>

#include "fedprio/metrics.hpp"

namespace fedprio::report {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void trace_header(std::ostream& os) { os << "round,experiment_id,global_accuracy\n"; }
inline void trace_rows(std::ostream& os, const std::string& experiment_id, std::span<const RoundRecord> records) {
  for (const auto& r : records) os << r.round << ',' << experiment_id << ',' << fixed6(r.global_accuracy) << '\n';
}

inline void device_header(std::ostream& os) { os << "round,client_id,accuracy,test_size\n"; }
inline void device_rows(std::ostream& os, std::span<const RoundRecord> records) {
  for (const auto& r : records)
    for (std::size_t i = 0; i < r.device_ids.size(); ++i)
      os << r.round << ',' << r.device_ids[i] << ',' << fixed6(r.device_accuracy[i]) << ',' << r.device_test_size[i]
         << '\n';
}

inline void target_header(std::ostream& os) { os << "experiment_id,target,fraction,rounds\n"; }
inline void target_rows(std::ostream& os, const std::string& experiment_id, const TargetTable& t) {
  for (std::size_t i = 0; i < t.targets.size(); ++i)
    for (std::size_t f = 0; f < t.fractions.size(); ++f) {
      const auto& cell = t.cells[i][f];
      os << experiment_id << ',' << fixed6(t.targets[i]) << ',' << fixed6(t.fractions[f]) << ','
         << (cell ? std::to_string(*cell) : std::string("NR")) << '\n';
    }
}

/// One row per cell, then one row per target with fraction "avg" holding the row average.
/// avg_flag is 1 when a NOT-REACHED cell was replaced by the round limit.
inline void gain_header(std::ostream& os) { os << "candidate_id,target,fraction,gain,avg_flag\n"; }
inline void gain_rows(std::ostream& os, const std::string& candidate_id, const GainTable& g) {
  for (std::size_t i = 0; i < g.targets.size(); ++i) {
    for (std::size_t f = 0; f < g.fractions.size(); ++f)
      os << candidate_id << ',' << fixed6(g.targets[i]) << ',' << fixed6(g.fractions[f]) << ','
         << fixed6(g.gains[i][f]) << ',' << (g.substituted[i][f] ? 1 : 0) << '\n';
    os << candidate_id << ',' << fixed6(g.targets[i]) << ",avg," << fixed6(g.averages[i]) << ','
       << (g.average_flagged[i] ? 1 : 0) << '\n';
  }
}

inline void comparison_header(std::ostream& os) { os << "candidate_id,bw_cw,bw_cr,br_cw,br_cr\n"; }
inline void comparison_row(std::ostream& os, const std::string& candidate_id, const ComparisonMatrix& m) {
  os << candidate_id << ',' << m.bw_cw << ',' << m.bw_cr << ',' << m.br_cw << ',' << m.br_cr << '\n';
}

inline void lr_header(std::ostream& os) { os << "learning_rate,rounds,chosen\n"; }
inline void lr_row(std::ostream& os, double learning_rate, std::optional<std::size_t> rounds, bool chosen) {
  os << fixed6(learning_rate) << ',' << (rounds ? std::to_string(*rounds) : std::string("NR")) << ','
     << (chosen ? 1 : 0) << '\n';
}

}  // namespace fedprio::report
